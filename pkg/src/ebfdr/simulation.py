"""Simulation scenarios, error-rate metrics and the replication harness.

Every replication ``r`` of a study draws from the substream
``RngStream(seed, r)``, so results do not depend on how replications are
scheduled across worker processes. Within a replication every encoding and
method sees the same underlying statistics.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .baselines import Method, bh_reject, by_reject, qvalue_reject, storey_qvalues
from .encoding import Kind, QuantizationScheme, p_type_encode, t_type_encode
from .fdr_eb import decide, fit_zscores
from .mixture_fit import EmConfig, FitError, fit_normal_ml, fit_raw_em
from .rng_dist import DomainError, RngStream, gen_ar1, norm_sf, sample_t_scaled
from .transforms import collect_zscores

T_DF = 25


class Scenario(enum.Enum):
    S1 = "s1"  # independent normals, alternative mean 2
    S2 = "s2"  # AR(1) chains, coefficient 0.5
    S3 = "s3"  # AR(1) chains, coefficient -0.5
    S4 = "s4"  # null mean 1.5, alternative mean 2.5
    S5 = "s5"  # unit-variance t(25), alternative shifted by 2

    @classmethod
    def parse(cls, token: str) -> "Scenario":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise DomainError(f"unknown scenario {token!r}") from None


@dataclass(frozen=True)
class ScenarioSpec:
    id: Scenario
    n: int
    pi0: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if not 0.0 < self.pi0 < 1.0:
            raise DomainError("pi0 must lie in (0, 1)")


@dataclass(frozen=True)
class ExperimentInstance:
    hypotheses: np.ndarray  # True marks an alternative
    pvalues: np.ndarray
    tstats: np.ndarray


def gen_scenario(spec: ScenarioSpec, rep: int = 0) -> ExperimentInstance:
    """One simulated experiment from replication substream ``rep``."""
    stream = RngStream(spec.seed, rep)
    n = spec.n
    alt = stream.generator(0).random(n) >= spec.pi0
    g_null, g_alt = stream.generator(1), stream.generator(2)
    sid = spec.id
    if sid in (Scenario.S1, Scenario.S4):
        m0, m1 = (0.0, 2.0) if sid is Scenario.S1 else (1.5, 2.5)
        t_null = m0 + g_null.standard_normal(n)
        t_alt = m1 + g_alt.standard_normal(n)
    elif sid in (Scenario.S2, Scenario.S3):
        coeff = 0.5 if sid is Scenario.S2 else -0.5
        t_null = gen_ar1(g_null, 0.0, coeff, n)
        t_alt = gen_ar1(g_alt, 2.0, coeff, n)
    else:
        t_null = sample_t_scaled(g_null, 0.0, T_DF, n)
        t_alt = sample_t_scaled(g_alt, 2.0, T_DF, n)
    t = np.where(alt, t_alt, t_null)
    return ExperimentInstance(alt, norm_sf(t), t)


def apply_encoding(inst: ExperimentInstance, scheme: QuantizationScheme) -> np.ndarray:
    """p-values as they would be read back from storage under ``scheme``."""
    if scheme.kind is Kind.PTYPE:
        return p_type_encode(inst.pvalues, scheme.gamma)
    if scheme.kind is Kind.TTYPE:
        return norm_sf(t_type_encode(inst.tstats, scheme.gamma)[0])
    return inst.pvalues


def fdp_tpp(rejected, hypotheses) -> tuple[float, float]:
    """False discovery and true positive proportions, with 0/0 read as 0."""
    r = np.asarray(rejected, dtype=bool)
    h = np.asarray(hypotheses, dtype=bool)
    if r.shape != h.shape:
        raise DomainError("rejection and hypothesis vectors differ in length")
    n_r = int(r.sum())
    n_1 = int(h.sum())
    n01 = int((r & ~h).sum())
    n11 = n_r - n01
    return (n01 / n_r if n_r else 0.0), (n11 / n_1 if n_1 else 0.0)


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    return float(np.sum(a) / a.size), (float(np.std(a, ddof=1)) if a.size > 1 else 0.0)


@dataclass(frozen=True)
class SimRow:
    scenario: str
    encoding: str
    method: str
    beta: float
    mean_fdp: float
    sd_fdp: float
    mean_tpp: float
    sd_tpp: float
    reps: int
    failures: int = 0

    @property
    def se_fdp(self) -> float:
        return self.sd_fdp / math.sqrt(self.reps) if self.reps else math.nan

    @property
    def se_tpp(self) -> float:
        return self.sd_tpp / math.sqrt(self.reps) if self.reps else math.nan


@dataclass
class SimSummary:
    rows: list[SimRow] = field(default_factory=list)

    def cell(self, encoding: str, method: str, beta: float) -> SimRow:
        for r in self.rows:
            if r.encoding == encoding and r.method == method and r.beta == beta:
                return r
        raise KeyError((encoding, method, beta))


def _run_methods(p: np.ndarray, hyp: np.ndarray, methods, betas, cfg, bin_rule, lam, eb_rule):
    """(method, beta) -> (fdp, tpp) on one encoded p-value vector; failed cells are absent."""
    out = {}
    for method in methods:
        if method is Method.EB:
            zs = collect_zscores(p)
            try:
                fit = fit_zscores(zs, bin_rule, cfg)
            except (FitError, DomainError):
                continue
            z = zs.full()
            for beta in betas:
                out[method, beta] = fdp_tpp(decide(z, fit.params, beta, rule=eb_rule).rejected, hyp)
        elif method is Method.QVALUE:
            q = storey_qvalues(p, lam)
            for beta in betas:
                out[method, beta] = fdp_tpp(qvalue_reject(q, beta).rejected, hyp)
        else:
            rule = bh_reject if method is Method.BH else by_reject
            for beta in betas:
                out[method, beta] = fdp_tpp(rule(p, beta).rejected, hyp)
    return out


def _study_rep(rep, spec, schemes, methods, betas, cfg, bin_rule, lam, eb_rule):
    inst = gen_scenario(spec, rep)
    rep_cfg = replace(cfg, seed=cfg.seed + rep)
    return {s.label: _run_methods(apply_encoding(inst, s), inst.hypotheses, methods, betas,
                                  rep_cfg, bin_rule, lam, eb_rule)
            for s in schemes}


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_study(scenario: ScenarioSpec, encodings: Sequence[QuantizationScheme],
              methods: Sequence[Method], betas: Sequence[float], reps: int,
              cfg: EmConfig = EmConfig(), bin_rule: str = "sturges", lam: float = 0.5,
              workers: int = 1, eb_rule: str = "mfdr") -> SimSummary:
    """Average FDP and TPP for every (encoding, method, beta) cell over ``reps`` replications."""
    if reps < 1:
        raise DomainError("reps must be >= 1")
    for b in betas:
        if not 0.0 < b < 1.0:
            raise DomainError("beta must lie in (0, 1)")
    fn = partial(_study_rep, spec=scenario, schemes=tuple(encodings), methods=tuple(methods),
                 betas=tuple(betas), cfg=cfg, bin_rule=bin_rule, lam=lam, eb_rule=eb_rule)
    results = _map(fn, list(range(reps)), workers)
    rows = []
    for s in encodings:
        for method in methods:
            for beta in betas:
                got = [r[s.label][method, beta] for r in results if (method, beta) in r[s.label]]
                fdp_m, fdp_sd = _mean_sd([g[0] for g in got])
                tpp_m, tpp_sd = _mean_sd([g[1] for g in got])
                rows.append(SimRow(scenario.id.value, s.label, method.value, beta, fdp_m, fdp_sd,
                                   tpp_m, tpp_sd, len(got), reps - len(got)))
    return SimSummary(rows)


@dataclass(frozen=True)
class EstimateRow:
    """Mean and SD across replications of one estimated quantity."""

    encoding: str
    name: str
    mean: float
    sd: float
    reps: int

    @property
    def se(self) -> float:
        return self.sd / math.sqrt(self.reps) if self.reps else math.nan


def _null_rep(rep, n, seed, schemes):
    t = RngStream(seed, rep).generator(0).standard_normal(n)
    inst = ExperimentInstance(np.zeros(n, dtype=bool), norm_sf(t), t)
    out = {}
    for s in schemes:
        z = collect_zscores(apply_encoding(inst, s)).finite
        out[s.label] = fit_normal_ml(z)
    return out


def run_null_study(encodings: Sequence[QuantizationScheme], n: int, reps: int, seed: int = 0,
                   workers: int = 1) -> list[EstimateRow]:
    """Single-normal ML fits to all-null z-scores, infinite ones dropped."""
    if reps < 1 or n < 2:
        raise DomainError("need reps >= 1 and n >= 2")
    fn = partial(_null_rep, n=n, seed=seed, schemes=tuple(encodings))
    results = _map(fn, list(range(reps)), workers)
    rows = []
    for s in encodings:
        for k, name in enumerate(("mu0", "var0")):
            m, sd = _mean_sd([r[s.label][k] for r in results])
            rows.append(EstimateRow(s.label, name, m, sd, reps))
    return rows


PARAM_NAMES = ("pi0", "mu0", "var0", "mu1", "var1")


def _fit_rep(rep, spec, schemes, estimator, cfg, bin_rule):
    inst = gen_scenario(spec, rep)
    rep_cfg = replace(cfg, seed=cfg.seed + rep)
    out = {}
    for s in schemes:
        zs = collect_zscores(apply_encoding(inst, s))
        try:
            if estimator == "raw":
                fit = fit_raw_em(zs.finite, rep_cfg)
            else:
                fit = fit_zscores(zs, bin_rule, rep_cfg)
        except (FitError, DomainError):
            continue
        out[s.label] = fit.params.as_array()
    return out


def run_fit_study(spec: ScenarioSpec, encodings: Sequence[QuantizationScheme], reps: int,
                  estimator: str = "binned", cfg: EmConfig = EmConfig(), bin_rule: str = "sturges",
                  workers: int = 1) -> list[EstimateRow]:
    """Mixture estimates across replications, by binned EM or naive raw EM on finite z-scores."""
    if estimator not in ("binned", "raw"):
        raise DomainError(f"unknown estimator {estimator!r}")
    if reps < 1:
        raise DomainError("reps must be >= 1")
    fn = partial(_fit_rep, spec=spec, schemes=tuple(encodings), estimator=estimator,
                 cfg=cfg, bin_rule=bin_rule)
    results = _map(fn, list(range(reps)), workers)
    rows = []
    for s in encodings:
        est = np.array([r[s.label] for r in results if s.label in r]).reshape(-1, 5)
        for k, name in enumerate(PARAM_NAMES):
            m, sd = _mean_sd(est[:, k])
            rows.append(EstimateRow(s.label, name, m, sd, est.shape[0]))
    return rows
