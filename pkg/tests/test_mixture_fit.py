import math

import numpy as np
import pytest
from scipy import integrate, optimize

from ebfdr.binning import BinnedCounts, BinSpec, bin_count, bin_counts, make_bins
from ebfdr.encoding import QuantizationScheme, p_type_encode, t_type_encode
from ebfdr.mixture_fit import (EmConfig, FitError, MixtureParams, binned_starts,
                               component_bin_prob, e_step, fit_binned_em, fit_normal_ml, fit_raw_em,
                               log_marginal_likelihood, m_step)
from ebfdr.rng_dist import DomainError, NormalParams, RngStream, gen_ar1, norm_sf
from ebfdr.simulation import Scenario, ScenarioSpec, run_fit_study
from ebfdr.transforms import collect_zscores

TRUE = MixtureParams(0.8, 0.0, 1.0, 2.0, 1.0)
BIN_PM1 = 0.6826894921370859  # mpmath


def _phi(z, mu, var):
    return math.exp(-0.5 * (z - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)


def _quad(f, lo, hi, mu):
    """Integral over (lo, hi] split at mu so infinite ranges see the peak."""
    pieces = [lo, hi] if not lo < mu < hi else [lo, mu, hi]
    total = 0.0
    for a, b in zip(pieces[:-1], pieces[1:]):
        total += integrate.quad(f, a, b, epsabs=0, epsrel=1e-13, limit=400)[0]
    return total


def _sample_mixture(theta, n, gen):
    alt = gen.random(n) >= theta.pi0
    z = np.where(alt, theta.mu1 + math.sqrt(theta.var1) * gen.standard_normal(n),
                 theta.mu0 + math.sqrt(theta.var0) * gen.standard_normal(n))
    return z


def _binned(z, m=None):
    zs = collect_zscores(norm_sf(z))
    bins = make_bins(zs.finite, m or bin_count("sturges", zs.finite))
    return bin_counts(zs, bins), bins


def test_component_bin_prob_examples():
    std = NormalParams()
    assert component_bin_prob(std, -np.inf, np.inf) == 1.0
    assert component_bin_prob(NormalParams(1.3, 2.0), -np.inf, 1.3) == 0.5
    assert component_bin_prob(std, -1.0, 1.0) == pytest.approx(BIN_PM1, abs=1e-12)
    with pytest.raises(DomainError):
        component_bin_prob(std, 1.0, 0.0)


def test_loglik_examples():
    bins = BinSpec(np.array([-1.0, 0.5, 2.0]))
    c = BinnedCounts(np.array([3, 10, 7, 2]))
    ll = log_marginal_likelihood(TRUE, c, bins)
    assert log_marginal_likelihood(TRUE, BinnedCounts(2 * c.counts), bins) == pytest.approx(2 * ll, rel=1e-14)
    # a narrow component leaves the outer bins with no mass at double precision
    tight = MixtureParams(0.5, 0.0, 1e-6, 1.0, 1e-6)
    far = BinSpec(np.array([-50.0, 50.0]))
    assert log_marginal_likelihood(tight, BinnedCounts(np.array([1, 5, 0])), far) == -math.inf


def test_loglik_against_quadrature():
    gen = RngStream(11).generator()
    for _ in range(50):
        th = MixtureParams(gen.uniform(0.1, 0.9), gen.uniform(-2, 2), gen.uniform(0.3, 3),
                           gen.uniform(-2, 3), gen.uniform(0.3, 3))
        bins = BinSpec(np.sort(gen.uniform(-4, 5, size=gen.integers(2, 8))))
        counts = gen.integers(0, 50, size=bins.m)
        f = lambda z: th.pi0 * _phi(z, th.mu0, th.var0) + th.pi1 * _phi(z, th.mu1, th.var1)
        e = bins.full_edges
        oracle = sum(c * math.log(_quad(f, e[j], e[j + 1], th.mu0) if e[j] < th.mu0 < e[j + 1]
                                  else _quad(f, e[j], e[j + 1], th.mu1))
                     for j, c in enumerate(counts) if c)
        assert log_marginal_likelihood(th, BinnedCounts(counts), bins) == pytest.approx(oracle, rel=1e-8)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_moment_identities_against_quadrature():
    """delta and kappa equal the bin integrals of z phi and (z - mu_new)^2 phi, 1000 cases."""
    gen = RngStream(12).generator()
    worst = 0.0
    for _ in range(1000):
        th = MixtureParams(gen.uniform(0.1, 0.9), gen.uniform(-3, 3), gen.uniform(0.2, 4),
                           gen.uniform(-3, 3), gen.uniform(0.2, 4))
        lo = gen.uniform(-4, 4)
        bins = BinSpec(np.array([lo, lo + gen.uniform(0.05, 3)]))
        mu_new = np.array([th.mu0, th.mu1]) + gen.uniform(-1, 1, size=2)
        q = e_step(th, bins, mu_new)
        e = bins.full_edges
        for k, (mu, var) in enumerate(((th.mu0, th.var0), (th.mu1, th.var1))):
            for j in range(bins.m):
                d = _quad(lambda z: z * _phi(z, mu, var), e[j], e[j + 1], mu)
                kap = _quad(lambda z: (z - mu_new[k]) ** 2 * _phi(z, mu, var), e[j], e[j + 1], mu)
                # delta may cross zero, so compare on the scale of the absolute first moment
                scale = _quad(lambda z: abs(z) * _phi(z, mu, var), e[j], e[j + 1], mu)
                worst = max(worst, abs(q.delta[j, k] - d) / scale, abs(q.kappa[j, k] - kap) / kap)
    assert worst <= 1e-8


def test_e_step_examples():
    full = BinSpec(np.array([0.0]))
    q = e_step(TRUE, full)
    assert np.allclose(q.alpha.sum(axis=1), 1.0)
    assert q.delta[:, 0].sum() == pytest.approx(TRUE.mu0, abs=1e-15)
    assert q.delta[:, 1].sum() == pytest.approx(TRUE.mu1, rel=1e-14)
    sym = e_step(MixtureParams(0.5, 0.0, 1.0, 0.0, 2.0), BinSpec(np.array([-1.0, 1.0])))
    assert sym.delta[1, 0] == pytest.approx(0.0, abs=1e-16)
    assert (sym.kappa >= 0).all()
    assert ((sym.alpha >= 0) & (sym.alpha <= 1)).all()


def test_m_step_brute_force():
    th = MixtureParams(0.6, -0.5, 1.2, 1.0, 0.8)
    bins = BinSpec(np.array([0.0]))
    counts = np.array([70, 30])
    nxt = m_step(BinnedCounts(counts), th, bins)
    # independent route: quadrature for bin masses and first moments
    comps = [(th.pi0, th.mu0, th.var0), (th.pi1, th.mu1, th.var1)]
    edges = [(-np.inf, 0.0), (0.0, np.inf)]
    mass = [[p * _quad(lambda z: _phi(z, m, v), a, b, m) for (p, m, v) in comps] for a, b in edges]
    first = [[p * _quad(lambda z: z * _phi(z, m, v), a, b, m) for (p, m, v) in comps] for a, b in edges]
    alpha = [[mk / sum(row) for mk in row] for row in mass]
    w0 = sum(counts[j] * alpha[j][0] for j in range(2))
    assert nxt.pi0 == pytest.approx(w0 / 100, rel=1e-12)
    mu0 = sum(counts[j] * first[j][0] / sum(mass[j]) for j in range(2)) / w0
    assert nxt.mu0 == pytest.approx(mu0, rel=1e-10)
    sec = [[comps[k][0] * _quad(lambda z: (z - nxt.mu0 if k == 0 else z - nxt.mu1) ** 2
                                * _phi(z, comps[k][1], comps[k][2]), a, b, comps[k][1])
            for k in range(2)] for a, b in edges]
    var1 = sum(counts[j] * sec[j][1] / sum(mass[j]) for j in range(2)) / (100 - w0)
    assert nxt.var1 == pytest.approx(var1, rel=1e-10)
    assert nxt.pi0 + nxt.pi1 == 1.0


def test_m_step_single_bin_keeps_parameters():
    # two bins where one is empty: the occupied bin covers nearly the whole line
    th = MixtureParams(0.3, 0.0, 1.0, 0.5, 2.0)
    nxt = m_step(BinnedCounts(np.array([100, 0])), th, BinSpec(np.array([60.0])))
    assert nxt.pi0 == pytest.approx(th.pi0, abs=1e-12)
    assert nxt.mu0 == pytest.approx(th.mu0, abs=1e-12)
    assert nxt.mu1 == pytest.approx(th.mu1, abs=1e-12)


def test_em_ascent_200_instances():
    gen = RngStream(13).generator()
    cfg_plain = EmConfig(max_iter=150, n_starts=5, accelerate=False, seed=1)
    cfg_fast = EmConfig(max_iter=150, n_starts=5, accelerate=True, seed=1)
    checked = 0
    for i in range(200):
        th = MixtureParams(gen.uniform(0.3, 0.95), gen.uniform(-1, 1), gen.uniform(0.5, 2),
                           gen.uniform(0, 4), gen.uniform(0.3, 3))
        z = _sample_mixture(th, int(gen.integers(200, 5000)), gen)
        counts, bins = _binned(z, int(gen.integers(5, 30)))
        for start in binned_starts(counts, bins, cfg_plain):
            for cfg in (cfg_plain, cfg_fast):
                try:
                    fit = fit_binned_em(counts, bins, cfg, inits=[start])
                except FitError:
                    continue
                tr = np.array(fit.trace)
                slack = 1e-8 * (np.abs(tr[:-1]) + 1)
                assert (np.diff(tr) >= -slack).all()
                checked += 1
    assert checked > 1500


def _neg_ll(x, counts, bins):
    th = MixtureParams(1 / (1 + math.exp(-x[0])), x[1], math.exp(x[2]), x[3], math.exp(x[4]))
    return -log_marginal_likelihood(th, counts, bins)


def test_fixed_point_matches_direct_maximisation():
    gen = RngStream(14).generator()
    for i in range(20):
        th = MixtureParams(gen.uniform(0.6, 0.9), 0.0, gen.uniform(0.8, 1.2), gen.uniform(2, 3.5),
                           gen.uniform(0.6, 1.5))
        counts, bins = _binned(_sample_mixture(th, 10_000, gen), 15)
        fit = fit_binned_em(counts, bins)
        p = fit.params
        x0 = np.array([math.log(p.pi0 / p.pi1), p.mu0, math.log(p.var0), p.mu1, math.log(p.var1)])
        x0 = x0 + gen.uniform(-0.05, 0.05, size=5)
        res = optimize.minimize(_neg_ll, x0, args=(counts, bins), method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-11, "maxiter": 40000,
                                         "maxfev": 40000, "adaptive": True})
        x = res.x
        direct = np.array([1 / (1 + math.exp(-x[0])), x[1], math.exp(x[2]), x[3], math.exp(x[4])])
        assert fit.loglik >= -res.fun - 1e-6
        assert np.max(np.abs(direct - p.as_array())) <= 1e-3, (i, direct, p)


def test_permutation_invariance():
    gen = RngStream(15).generator()
    counts, bins = _binned(_sample_mixture(TRUE, 20_000, gen))
    for start in binned_starts(counts, bins, EmConfig(seed=3)):
        a = fit_binned_em(counts, bins, inits=[start])
        b = fit_binned_em(counts, bins, inits=[start.swapped()])
        # the stopping rule is on the log-likelihood, so parameters agree to convergence accuracy
        assert a.loglik == pytest.approx(b.loglik, rel=1e-10)
        assert np.allclose(a.params.as_array(), b.params.as_array(), rtol=0, atol=1e-4)
        assert a.params.mu0 <= a.params.mu1


def test_recovers_generating_parameters():
    # single fits scatter more than the reported SEs, so compare the mean of 10 replications
    rows = run_fit_study(ScenarioSpec(Scenario.S1, 10**6, seed=16), [QuantizationScheme.parse("none")], 10)
    est = np.array([r.mean for r in rows])
    tol = 3 * np.array([1.65e-3, 4.44e-3, 3.59e-3, 5.15e-3, 6.63e-3])
    assert np.all(np.abs(est - TRUE.as_array()) <= tol), est


def test_two_spikes():
    gen = RngStream(17).generator()
    z = np.concatenate((-5 + math.sqrt(0.5) * gen.standard_normal(2000),
                        5 + math.sqrt(0.5) * gen.standard_normal(2000)))
    counts, bins = _binned(z)
    p = fit_binned_em(counts, bins).params
    assert p.pi0 == pytest.approx(0.5, abs=0.02)
    assert p.mu0 == pytest.approx(-5, abs=0.1) and p.mu1 == pytest.approx(5, abs=0.1)
    x = np.array([0.0, -5, math.log(0.5), 5, math.log(0.5)])
    res = optimize.minimize(_neg_ll, x, args=(counts, bins), method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-11, "maxiter": 20000, "adaptive": True})
    direct = np.array([1 / (1 + math.exp(-res.x[0])), res.x[1], math.exp(res.x[2]), res.x[3],
                       math.exp(res.x[4])])
    assert np.allclose(direct, p.as_array(), atol=1e-3)


def test_single_component_data_is_not_silent():
    """With one true component the fit either raises or returns a mixture whose density
    matches the single normal (two near-identical components, or one tiny one)."""
    gen = RngStream(18).generator()
    counts, bins = _binned(gen.standard_normal(50_000))
    try:
        fit = fit_binned_em(counts, bins)
    except FitError as exc:
        assert exc.args
        return
    p = fit.params
    grid = np.linspace(-3, 3, 61)
    dens = p.density(grid)
    ref = np.exp(-grid**2 / 2) / math.sqrt(2 * math.pi)
    assert np.max(np.abs(dens - ref)) < 0.01


def test_fit_input_checks():
    bins = BinSpec(np.array([0.0, 1.0]))
    with pytest.raises(DomainError):
        fit_binned_em(BinnedCounts(np.array([3, 3, 2])), bins)
    with pytest.raises(DomainError):
        fit_binned_em(BinnedCounts(np.array([30, 0, 20])), bins)
    with pytest.raises(DomainError):
        fit_binned_em(BinnedCounts(np.array([3, 3, 2, 5])), bins)
    with pytest.raises(DomainError):
        EmConfig(rel_tol=0)
    with pytest.raises(DomainError):
        fit_raw_em(np.array([1.0, np.inf] * 10))


def test_raw_em_symmetric_two_point_data():
    z = np.tile([-1.0, 1.0], 500)
    p = fit_raw_em(z).params
    assert p.mu0 + p.mu1 == pytest.approx(0.0, abs=1e-6)
    assert p.pi0 == pytest.approx(0.5, abs=1e-6)


def test_raw_em_on_8bit_ptype_reproduces_bias():
    """Fitting the finite z-scores of 8-bit p-type data, ignoring truncation."""
    gen = RngStream(19).generator()
    z = _sample_mixture(TRUE, 10**6, gen)
    zs = collect_zscores(p_type_encode(norm_sf(z), 8))
    p = fit_raw_em(zs.finite).params
    assert p.pi0 == pytest.approx(0.924, abs=3 * 4.48e-3)
    assert p.var1 == pytest.approx(0.116, abs=3 * 1.11e-2)


def test_raw_em_agrees_with_binned_on_clean_data():
    gen = RngStream(20).generator()
    z = _sample_mixture(TRUE, 20_000, gen)
    raw = fit_raw_em(z).params.as_array()
    counts, bins = _binned(z, 60)
    binned = fit_binned_em(counts, bins).params.as_array()
    assert np.allclose(raw, binned, atol=0.05)


def test_fit_normal_ml():
    assert fit_normal_ml([-1.0, 1.0]) == (0.0, 1.0)
    with pytest.raises(DomainError):
        fit_normal_ml([1.0])
    t = RngStream(21).generator().standard_normal(10**6)
    p8 = collect_zscores(p_type_encode(norm_sf(t), 8)).finite
    assert fit_normal_ml(p8)[1] == pytest.approx(0.963, abs=3 * 3.95e-3)
    t8 = collect_zscores(norm_sf(t_type_encode(t, 8)[0])).finite
    assert fit_normal_ml(t8)[1] == pytest.approx(1.0, abs=3 * 2.11e-3)


def _max_err(z):
    counts, bins = _binned(z)
    return float(np.max(np.abs(fit_binned_em(counts, bins).params.as_array() - TRUE.as_array())))


def test_consistency_in_n_and_under_dependence():
    errs = {}
    for n in (10**3, 10**4, 10**5, 10**6):
        errs[n] = np.mean([_max_err(_sample_mixture(TRUE, n, RngStream(22, r).generator()))
                           for r in range(20)])
    assert errs[10**3] > errs[10**4] > errs[10**5] > errs[10**6]
    ar = []
    for r in range(20):
        s = RngStream(23, r)
        alt = s.generator(0).random(10**6) >= 0.8
        z = np.where(alt, gen_ar1(s.generator(2), 2.0, 0.5, 10**6), gen_ar1(s.generator(1), 0.0, 0.5, 10**6))
        ar.append(_max_err(z))
    assert np.mean(ar) < errs[10**4]
