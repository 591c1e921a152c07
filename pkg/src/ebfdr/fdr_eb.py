"""Empirical-Bayes FDR control from a fitted z-score mixture.

Each test gets the posterior probability that it is null,

    tau(z) = pi0 phi(z; mu0, var0) / f(z; theta),

and the tests with ``tau <= c`` are rejected. The plug-in estimate of the
marginal FDR of that rejection set is the mean of its ``tau`` values, and
``c`` is the largest observed ``tau`` for which that mean stays below the
target level.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binning import bin_count, bin_counts, make_bins, snap_edges
from .mixture_fit import EmConfig, FitResult, MixtureParams, fit_binned_em
from .rng_dist import DomainError, norm_logpdf
from .transforms import ZScoreSample, collect_zscores


@dataclass(frozen=True)
class FdrResult:
    """Per-test decisions in input order; ``threshold_c`` is 0 when nothing is rejected."""

    tau: np.ndarray
    threshold_c: float
    mfdr_at_c: float
    rejected: np.ndarray
    n_rejected: int
    model: MixtureParams
    fit: FitResult | None = None


def _tail_tau(sign: float, theta: MixtureParams) -> float:
    """Limit of tau as z goes to ``sign * inf``."""
    if theta.var1 != theta.var0:
        # the wider component dominates both tails
        return 0.0 if theta.var1 > theta.var0 else 1.0
    if theta.mu1 == theta.mu0:
        return theta.pi0
    alt_wins = (theta.mu1 > theta.mu0) if sign > 0 else (theta.mu1 < theta.mu0)
    return 0.0 if alt_wins else 1.0


def tau(z, theta: MixtureParams):
    """Posterior null probability of each z-score, infinities included."""
    z = np.asarray(z, dtype=float)
    if np.isnan(z).any():
        raise DomainError("tau of NaN")
    fin = np.isfinite(z)
    zf = np.where(fin, z, 0.0)
    l0 = np.log(theta.pi0) + norm_logpdf(zf, theta.mu0, theta.var0)
    l1 = np.log(theta.pi1) + norm_logpdf(zf, theta.mu1, theta.var1)
    out = np.exp(l0 - np.logaddexp(l0, l1))
    out = np.where(z == np.inf, _tail_tau(1.0, theta), out)
    out = np.where(z == -np.inf, _tail_tau(-1.0, theta), out)
    out = np.clip(out, 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def mfdr_hat(tau_values, c: float) -> float:
    """Mean ``tau`` over the tests with ``tau <= c``; 0 if there are none."""
    t = np.asarray(tau_values, dtype=float)
    sel = t <= c
    k = int(sel.sum())
    return float(t[sel].sum() / k) if k else 0.0


THRESHOLD_RULES = ("mfdr", "local")


def select_threshold(tau_values, beta: float, rule: str = "mfdr") -> tuple[float, float, int]:
    """Threshold ``c`` on the posterior null probabilities for level ``beta``.

    ``rule="mfdr"`` picks the largest observed ``tau`` whose rejection set has
    estimated mFDR at most ``beta``. ``rule="local"`` picks the largest
    observed ``tau`` that is itself at most ``beta``, a stricter cutoff.

    Returns ``(c, mfdr, n_rejected)``. When no candidate qualifies the
    result is ``(0.0, 0.0, 0)``.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError("beta must lie in (0, 1)")
    if rule not in THRESHOLD_RULES:
        raise DomainError(f"unknown threshold rule {rule!r}")
    t = np.sort(np.asarray(tau_values, dtype=float).ravel())
    if t.size == 0:
        return 0.0, 0.0, 0
    running = np.cumsum(t) / np.arange(1, t.size + 1)
    # last position of each distinct value: the rejection set for that cutoff
    last = np.flatnonzero(np.append(t[1:] != t[:-1], True))
    if rule == "mfdr":
        # mean <= beta as a sum of deviations, exact when tied values equal beta
        ok = last[np.cumsum(t - beta)[last] <= 0.0]
    else:
        ok = last[t[last] <= beta]
    if ok.size == 0:
        return 0.0, 0.0, 0
    k = int(ok[-1])
    return float(t[k]), float(running[k]), k + 1


def decide(z, theta: MixtureParams, beta: float, fit: FitResult | None = None,
           rule: str = "mfdr") -> FdrResult:
    """Threshold the posterior null probabilities of ``z`` at level ``beta``."""
    t = np.atleast_1d(tau(z, theta))
    c, mfdr, n_rej = select_threshold(t, beta, rule)
    rejected = t <= c if n_rej else np.zeros(t.size, dtype=bool)
    return FdrResult(t, c, mfdr, rejected, int(rejected.sum()), theta, fit)


def fit_zscores(z: ZScoreSample, bin_rule: str = "sturges", cfg: EmConfig = EmConfig(),
                snap: bool = True) -> FitResult:
    """Bin the z-scores with ``bin_rule`` and fit the mixture by binned EM.

    With ``snap`` the edges are moved to the rounding boundaries between
    neighbouring observed values, which makes the binned likelihood exact for
    p-type encoded data.
    """
    m = bin_count(bin_rule, z.finite)
    bins = make_bins(z.finite, m)
    if snap:
        bins = snap_edges(bins, z.finite)
    return fit_binned_em(bin_counts(z, bins), bins, cfg)


def eb_control(pvalues, beta: float, bin_rule: str = "sturges", cfg: EmConfig = EmConfig(),
               snap: bool = True, rule: str = "mfdr") -> FdrResult:
    """Fit the mixture to ``pvalues`` and reject at estimated mFDR level ``beta``."""
    if not 0.0 < beta < 1.0:
        raise DomainError("beta must lie in (0, 1)")
    p = np.asarray(pvalues, dtype=float).ravel()
    if p.size == 0:
        raise DomainError("no p-values")
    zs = collect_zscores(p)
    fit = fit_zscores(zs, bin_rule, cfg, snap)
    return decide(zs.full(), fit.params, beta, fit, rule)
