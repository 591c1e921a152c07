"""Two-component normal mixture fitting for z-scores.

The main estimator maximises the marginal likelihood of binned counts,

    l(theta) = sum_j n_j log( pi0 P0j + pi1 P1j ),

where ``Pkj`` is the probability that component ``k`` assigns to bin ``j``.
It is computed by an EM algorithm for grouped normal data whose E-step needs
only the normal CDF and density at the bin edges. Two naive estimators that
work on the finite z-scores directly (a single normal fitted by maximum
likelihood, and the ordinary unbinned mixture EM) are included because they
show what goes wrong when encoded data are fitted as if continuous.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numba
import numpy as np
from scipy import special

from .binning import BinnedCounts, BinSpec
from .rng_dist import SQRT_2PI, DomainError, NormalParams, RngStream

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
COLLAPSE_MASS = 1e-10


class FitError(RuntimeError):
    """No EM start produced a usable fit."""

    def __init__(self, message: str, diagnostics: Sequence[str] = ()):
        super().__init__(message if not diagnostics else f"{message}: {'; '.join(diagnostics)}")
        self.diagnostics = list(diagnostics)


class ComponentCollapse(FitError):
    """A component's posterior mass vanished during the M-step."""


@dataclass(frozen=True)
class MixtureParams:
    pi0: float
    mu0: float
    var0: float
    mu1: float
    var1: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.isfinite(vals).all():
            raise DomainError(f"non-finite mixture parameters {vals}")
        if not 0.0 < self.pi0 < 1.0:
            raise DomainError(f"pi0 must lie in (0, 1), got {self.pi0}")
        if self.var0 <= 0 or self.var1 <= 0:
            raise DomainError("component variances must be positive")

    @property
    def pi1(self) -> float:
        return 1.0 - self.pi0

    @property
    def null(self) -> NormalParams:
        return NormalParams(self.mu0, self.var0)

    @property
    def alt(self) -> NormalParams:
        return NormalParams(self.mu1, self.var1)

    def as_array(self) -> np.ndarray:
        return np.array([self.pi0, self.mu0, self.var0, self.mu1, self.var1], dtype=float)

    @classmethod
    def from_array(cls, a) -> "MixtureParams":
        return cls(*(float(v) for v in a))

    def swapped(self) -> "MixtureParams":
        return MixtureParams(1.0 - self.pi0, self.mu1, self.var1, self.mu0, self.var0)

    def relabeled(self) -> "MixtureParams":
        """Canonical labelling with ``mu0 <= mu1``."""
        return self.swapped() if self.mu0 > self.mu1 else self

    def _vectors(self):
        return (
            np.array([self.pi0, 1.0 - self.pi0]),
            np.array([self.mu0, self.mu1]),
            np.array([self.var0, self.var1]),
        )

    def density(self, z):
        """Mixture density f(z; theta)."""
        z = np.asarray(z, dtype=float)
        out = self.pi0 * _pdf(z, self.mu0, self.var0) + self.pi1 * _pdf(z, self.mu1, self.var1)
        return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 10000
    rel_tol: float = 1e-12
    n_starts: int = 5
    variance_floor: float = VARIANCE_FLOOR
    seed: int = 0
    accelerate: bool = True
    screen_iter: int = 0

    def __post_init__(self):
        if self.rel_tol <= 0 or self.max_iter < 1 or self.n_starts < 1 or self.screen_iter < 0:
            raise DomainError("invalid EM configuration")
        if self.variance_floor <= 0:
            raise DomainError("variance floor must be positive")


@dataclass(frozen=True)
class EStepQuantities:
    """Per-bin (rows) and per-component (columns) E-step terms.

    ``delta`` is the first-moment mass and ``kappa`` the squared deviation mass
    about ``mu_new`` of each component over each bin; ``alpha``, ``beta`` and
    ``gamma`` are the same quantities weighted by the posterior share of the
    bin.
    """

    prob: np.ndarray
    mass: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    kappa: np.ndarray
    upsilon: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class FitResult:
    params: MixtureParams
    loglik: float
    n_iter: int
    converged: bool
    bins: BinSpec | None = None
    start_index: int = 0
    trace: tuple = field(default=(), repr=False, compare=False)


def _pdf(x, mu, var):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(-0.5 * (x - mu) ** 2 / var) / (SQRT_2PI * np.sqrt(var))
    return np.where(np.isinf(x), 0.0, out)


def _interval_prob(lo, hi, mu, var):
    """P(lo < Z <= hi) for Z ~ N(mu, var), using the upper tail when the interval lies above mu."""
    sd = np.sqrt(var)
    a = (np.asarray(lo, dtype=float) - mu) / sd
    b = (np.asarray(hi, dtype=float) - mu) / sd
    upper = special.ndtr(-a) - special.ndtr(-b)
    lower = special.ndtr(b) - special.ndtr(a)
    return np.maximum(np.where(a > 0, upper, lower), 0.0)


def component_bin_prob(comp: NormalParams, lo: float, hi: float) -> float:
    """Probability mass of one normal component over ``(lo, hi]``."""
    if not hi >= lo:
        raise DomainError("bin upper edge below lower edge")
    return float(_interval_prob(lo, hi, comp.mu, comp.var))


def _edge_terms(edges, mu, var):
    """Bin probabilities plus the density differences used by the moment identities.

    Columns index the two components. Density and edge*density vanish at
    infinite edges.
    """
    lo = edges[:-1, None]
    hi = edges[1:, None]
    prob = _interval_prob(lo, hi, mu, var)
    dens = _pdf(edges[:, None], mu, var)
    with np.errstate(invalid="ignore"):
        edens = np.where(np.isinf(edges)[:, None], 0.0, edges[:, None] * dens)
    upsilon = dens[1:] - dens[:-1]
    omega = edens[1:] - edens[:-1]
    return prob, upsilon, omega


def _kappa(prob, upsilon, omega, mu, var, mu_new):
    """Integral of (z - mu_new)^2 phi(z; mu, var) over each bin."""
    return var * (prob + (2.0 * mu_new - mu) * upsilon - omega) + (mu_new - mu) ** 2 * prob


def _posterior(pi, prob):
    weighted = pi * prob
    mass = weighted.sum(axis=1)
    safe = np.where(mass > 0, mass, 1.0)
    # bins with no mixture mass fall back to the prior weights
    alpha = np.where(mass[:, None] > 0, weighted / safe[:, None], pi)
    return mass, safe, alpha


def e_step(theta: MixtureParams, bins: BinSpec, mu_new=None) -> EStepQuantities:
    """E-step terms for every bin and component.

    ``mu_new`` (length-2, null first) sets the centre of the second-moment
    term; it defaults to the current component means.
    """
    pi, mu, var = theta._vectors()
    mu_c = mu if mu_new is None else np.asarray(mu_new, dtype=float)
    prob, ups, omg = _edge_terms(bins.full_edges, mu, var)
    delta = mu * prob - var * ups
    kappa = _kappa(prob, ups, omg, mu, var, mu_c)
    mass, safe, alpha = _posterior(pi, prob)
    ok = (mass > 0)[:, None]
    beta = np.where(ok, pi * delta / safe[:, None], 0.0)
    gamma = np.where(ok, pi * kappa / safe[:, None], 0.0)
    return EStepQuantities(prob, mass, alpha, beta, gamma, delta, kappa, ups, omg)


def _loglik_from_mass(counts: np.ndarray, mass: np.ndarray) -> float:
    nz = counts > 0
    if (mass[nz] <= 0).any():
        return -math.inf
    return float(np.dot(counts[nz], np.log(mass[nz])))


def log_marginal_likelihood(theta: MixtureParams, counts: BinnedCounts, bins: BinSpec) -> float:
    """Binned log-likelihood; ``-inf`` when an occupied bin has zero mixture mass."""
    c = np.asarray(counts.counts if isinstance(counts, BinnedCounts) else counts)
    if c.size != bins.m:
        raise DomainError("counts and bins disagree on the number of bins")
    pi, mu, var = theta._vectors()
    prob = _interval_prob(bins.full_edges[:-1, None], bins.full_edges[1:, None], mu, var)
    return _loglik_from_mass(c, (pi * prob).sum(axis=1))


def _binned_update(theta: MixtureParams, counts: np.ndarray, edges: np.ndarray, floor: float):
    """One EM iteration. Returns (loglik at theta, next theta)."""
    pi, mu, var = theta._vectors()
    prob, ups, omg = _edge_terms(edges, mu, var)
    mass, safe, alpha = _posterior(pi, prob)
    ll = _loglik_from_mass(counts, mass)
    n = counts.sum()
    w = counts @ alpha
    if (w < COLLAPSE_MASS).any():
        raise ComponentCollapse(f"component posterior mass {w.min():.3g} below {COLLAPSE_MASS}")
    delta = mu * prob - var * ups
    beta = pi * delta / safe[:, None]
    mu_new = (counts @ beta) / w
    # the variance update needs the second moment about the *new* means
    kappa = _kappa(prob, ups, omg, mu, var, mu_new)
    gamma = pi * kappa / safe[:, None]
    var_new = np.maximum((counts @ gamma) / w, floor)
    pi_new = w / n
    p0 = float(pi_new[0] / pi_new.sum())
    if not 0.0 < p0 < 1.0:
        raise ComponentCollapse(f"mixing proportion left (0, 1): {p0}")
    return ll, MixtureParams(p0, mu_new[0], var_new[0], mu_new[1], var_new[1])


def m_step(counts: BinnedCounts, theta: MixtureParams, bins: BinSpec,
           variance_floor: float = VARIANCE_FLOOR) -> MixtureParams:
    """Parameters after one E/M cycle from ``theta``."""
    c = np.asarray(counts.counts, dtype=float)
    return _binned_update(theta, c, bins.full_edges, variance_floor)[1]


def _to_free(theta: MixtureParams) -> np.ndarray:
    return np.array([math.log(theta.pi0 / theta.pi1), theta.mu0, math.log(theta.var0),
                     theta.mu1, math.log(theta.var1)])


def _from_free(x: np.ndarray, floor: float) -> MixtureParams:
    if not np.isfinite(x).all():
        raise DomainError("non-finite extrapolation")
    pi0 = float(special.expit(x[0]))
    return MixtureParams(pi0, float(x[1]), max(math.exp(x[2]), floor),
                         float(x[3]), max(math.exp(x[4]), floor))


def _run_em(update: Callable, theta0: MixtureParams, cfg: EmConfig):
    """Iterate ``update`` (returning loglik at its input and the next iterate).

    With ``cfg.accelerate`` each iteration is a SQUAREM extrapolation of two
    EM steps, kept only when it beats the plain EM step; the log-likelihood
    therefore never decreases either way.
    """
    tol = cfg.rel_tol
    ll, nxt = update(theta0)
    theta = theta0
    trace = [ll]
    converged = False
    n_iter = 0
    while n_iter < cfg.max_iter:
        n_iter += 1
        ll_em, nxt2 = update(nxt)
        new = (nxt, ll_em, nxt2)
        if cfg.accelerate:
            new = _squarem_candidate(update, theta, nxt, nxt2, ll_em, cfg.variance_floor) or new
        theta, ll_new, nxt = new
        trace.append(ll_new)
        if abs(ll_new - ll) <= tol * (abs(ll) + 1.0):
            ll = ll_new
            converged = True
            break
        ll = ll_new
    return theta, ll, n_iter, converged, tuple(trace)


def _squarem_candidate(update, theta, nxt, nxt2, ll_em, floor):
    x0, x1, x2 = _to_free(theta), _to_free(nxt), _to_free(nxt2)
    r = x1 - x0
    v = x2 - x1 - r
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return None
    alpha = min(-float(np.linalg.norm(r)) / nv, -1.0)
    for _ in range(6):
        try:
            cand = _from_free(x0 - 2.0 * alpha * r + alpha * alpha * v, floor)
            ll_c, cand_next = update(cand)
        except (DomainError, ComponentCollapse, FloatingPointError):
            ll_c = -math.inf
        if ll_c >= ll_em:
            return cand, ll_c, cand_next
        if alpha == -1.0:
            break
        alpha = min((alpha - 1.0) / 2.0, -1.0)
    return None


def _spread_starts(quantile: Callable[[float], float], var: float, cfg: EmConfig) -> list[MixtureParams]:
    """Start 0 puts the means at the quartiles with pi0 = 0.5.

    Extra starts draw pi0 stratified over [0.2, 0.8], place the means at the
    centres of the null and alternative shares of the data (the pi0/2 and
    1 - pi1/2 quantiles) and jitter both by up to half an sd. Without the
    stratification and share-matched means every start can end in a mode
    that splits the null in two.
    """
    sd = math.sqrt(var)

    def at(p0, d0=0.0, d1=0.0):
        lo, hi = quantile(p0 / 2.0), quantile(1.0 - (1.0 - p0) / 2.0)
        if hi - lo < 1e-3 * sd:
            mid = 0.5 * (lo + hi)
            lo, hi = mid - 0.5 * sd, mid + 0.5 * sd
        return MixtureParams(float(p0), lo + float(d0), var, hi + float(d1), var)

    starts = [at(0.5)]
    k = cfg.n_starts - 1
    for i in range(1, cfg.n_starts):
        gen = RngStream(cfg.seed, 0).generator(i)
        p0 = 0.2 + 0.6 * (i - 1 + gen.uniform()) / k
        d0, d1 = gen.uniform(-0.5, 0.5, size=2) * sd
        starts.append(at(p0, d0, d1))
    return starts


def _weighted_quantile(x, w, q):
    order = np.argsort(x)
    x, w = x[order], w[order]
    cw = np.cumsum(w) / w.sum()
    return float(x[min(np.searchsorted(cw, q), x.size - 1)])


def binned_starts(counts: BinnedCounts, bins: BinSpec, cfg: EmConfig) -> list[MixtureParams]:
    """Quantile-based first start plus seeded perturbations of it."""
    e = bins.edges
    width = float(np.median(np.diff(e))) if e.size > 1 else 1.0
    rep = np.concatenate(([e[0] - width / 2], (e[:-1] + e[1:]) / 2, [e[-1] + width / 2]))
    w = counts.counts.astype(float)
    mean = float(np.dot(w, rep) / w.sum())
    var = float(np.dot(w, (rep - mean) ** 2) / w.sum()) + width**2 / 12.0
    return _spread_starts(lambda q: _weighted_quantile(rep, w, q), var, cfg)


def _multi_start(update: Callable, starts, cfg: EmConfig, what: str, bins=None) -> FitResult:
    """Run EM from every start and return the best fit, relabelled.

    With ``cfg.screen_iter > 0`` each start first gets that many iterations;
    only the leader is then run on to convergence.
    """
    screen = cfg.screen_iter if len(starts) > 1 else 0
    first = replace(cfg, max_iter=min(screen, cfg.max_iter)) if screen else cfg
    runs, diagnostics = [], []
    for i, theta0 in enumerate(starts):
        try:
            runs.append((i, _run_em(update, theta0, first)))
        except (ComponentCollapse, DomainError) as exc:
            diagnostics.append(f"start {i}: {exc}")
            log.debug("%s start %d failed: %s", what, i, exc)
    if not runs:
        raise FitError(f"all {what} starts failed", diagnostics)
    idx, (theta, ll, n_iter, conv, trace) = max(runs, key=lambda r: r[1][1])
    if screen and not conv and n_iter < cfg.max_iter:
        try:
            theta, ll, more, conv, tail = _run_em(update, theta, replace(cfg, max_iter=cfg.max_iter - n_iter))
        except (ComponentCollapse, DomainError) as exc:
            raise FitError(f"{what} failed after screening", [f"start {idx}: {exc}"]) from exc
        n_iter += more
        trace = trace + tail[1:]
    return FitResult(theta.relabeled(), ll, n_iter, conv, bins, idx, trace)


def fit_binned_em(counts: BinnedCounts, bins: BinSpec, cfg: EmConfig = EmConfig(),
                  inits: Sequence[MixtureParams] | None = None) -> FitResult:
    """Maximum marginal likelihood fit of the mixture to binned counts.

    Runs EM from several starts (``inits`` or :func:`binned_starts`) and keeps
    the one with the highest final log-likelihood. Estimates are relabelled so
    that ``mu0 <= mu1``.

    Raises
    ------
    DomainError
        Fewer than 10 observations or fewer than 3 occupied bins.
    FitError
        Every start collapsed.
    """
    c = np.asarray(counts.counts, dtype=float)
    if c.size != bins.m:
        raise DomainError("counts and bins disagree on the number of bins")
    if c.sum() < 10:
        raise DomainError("binned EM needs at least 10 observations")
    if (c > 0).sum() < 3:
        raise DomainError("binned EM needs at least 3 occupied bins")
    edges = bins.full_edges
    starts = list(inits) if inits is not None else binned_starts(counts, bins, cfg)

    def update(theta):
        return _binned_update(theta, c, edges, cfg.variance_floor)

    return _multi_start(update, starts, cfg, "binned EM", bins)


@numba.njit(cache=True, fastmath=False)
def _raw_moments(x, w, lc0, mu0, var0, lc1, mu1, var1):
    """One pass over the data: log-likelihood and responsibility-weighted moments.

    Returns ``(ll, sum r1, sum r1 x, sum r1 x^2, sum x, sum x^2)`` with every
    sum weighted by ``w``.
    """
    ll = 0.0
    s_r = 0.0
    s_rx = 0.0
    s_rxx = 0.0
    s_x = 0.0
    s_xx = 0.0
    h0 = 0.5 / var0
    h1 = 0.5 / var1
    for i in range(x.size):
        xi = x[i]
        wi = w[i]
        a = lc0 - h0 * (xi - mu0) ** 2
        b = lc1 - h1 * (xi - mu1) ** 2
        if a > b:
            e = math.exp(b - a)
            lse = a + math.log1p(e)
            r1 = e / (1.0 + e)
        else:
            e = math.exp(a - b)
            lse = b + math.log1p(e)
            r1 = 1.0 / (1.0 + e)
        ll += wi * lse
        wr = wi * r1
        s_r += wr
        s_rx += wr * xi
        s_rxx += wr * xi * xi
        s_x += wi * xi
        s_xx += wi * xi * xi
    return ll, s_r, s_rx, s_rxx, s_x, s_xx


def _raw_update_factory(x: np.ndarray, w: np.ndarray | None, floor: float):
    x = np.ascontiguousarray(x, dtype=float)
    w = np.ones_like(x) if w is None else np.ascontiguousarray(w, dtype=float)
    n = float(w.sum())
    # centring keeps the moment differences below well conditioned
    shift = float(np.dot(w, x) / n)
    xc = x - shift

    def update(theta: MixtureParams):
        lc0 = math.log(theta.pi0) - 0.5 * math.log(2 * math.pi * theta.var0)
        lc1 = math.log(theta.pi1) - 0.5 * math.log(2 * math.pi * theta.var1)
        ll, w1, s1, ss1, sx, sxx = _raw_moments(
            xc, w, lc0, theta.mu0 - shift, theta.var0, lc1, theta.mu1 - shift, theta.var1)
        w0 = n - w1
        if min(w0, w1) < COLLAPSE_MASS:
            raise ComponentCollapse(f"component posterior mass {min(w0, w1):.3g} below {COLLAPSE_MASS}")
        m1 = s1 / w1
        m0 = (sx - s1) / w0
        v1 = ss1 / w1 - m1 * m1
        v0 = (sxx - ss1) / w0 - m0 * m0
        p0 = w0 / n
        if not 0.0 < p0 < 1.0:
            raise ComponentCollapse(f"mixing proportion left (0, 1): {p0}")
        return ll, MixtureParams(p0, m0 + shift, max(v0, floor), m1 + shift, max(v1, floor))

    return update


def raw_starts(z: np.ndarray, cfg: EmConfig) -> list[MixtureParams]:
    return _spread_starts(lambda q: float(np.quantile(z, q)), float(z.var()), cfg)


def fit_raw_em(z_finite, cfg: EmConfig = EmConfig(),
               inits: Sequence[MixtureParams] | None = None) -> FitResult:
    """Ordinary two-component normal mixture EM on finite z-scores.

    Infinite z-scores must be removed by the caller. Repeated values are
    collapsed to (value, count) pairs, which leaves the likelihood unchanged
    and makes coarsely encoded data cheap to fit.
    """
    z = np.asarray(z_finite, dtype=float).ravel()
    if z.size < 10:
        raise DomainError("raw EM needs at least 10 observations")
    if not np.isfinite(z).all():
        raise DomainError("raw EM takes finite z-scores only")
    if np.ptp(z) == 0:
        raise DomainError("all z-scores are identical")
    uniq, cnt = np.unique(z, return_counts=True)
    if uniq.size <= z.size // 2:
        x, w = uniq, cnt.astype(float)
    else:
        x, w = z, None
    update = _raw_update_factory(x, w, cfg.variance_floor)
    starts = list(inits) if inits is not None else raw_starts(z, cfg)
    return _multi_start(update, starts, cfg, "raw EM")


def fit_normal_ml(z_finite) -> tuple[float, float]:
    """Maximum likelihood mean and variance (divisor n) of a single normal."""
    z = np.asarray(z_finite, dtype=float).ravel()
    if z.size < 2:
        raise DomainError("need at least two values")
    mean = float(z.mean())
    return mean, float(np.mean((z - mean) ** 2))
