"""Seeded random streams and the normal / Student-t / AR(1) primitives.

Every stochastic routine in the package draws from an :class:`RngStream`, a
``(master_seed, stream_index)`` pair that is expanded through
:class:`numpy.random.SeedSequence` into an independent PCG64 generator. The
same pair always yields the same sequence, whatever process or worker
consumes it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.signal import lfilter

SQRT_2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if self.master_seed < 0 or self.stream_index < 0:
            raise DomainError("seed and stream index must be non-negative")

    def generator(self, *sub: int) -> np.random.Generator:
        """Fresh generator for this stream; ``sub`` selects a nested substream."""
        ss = np.random.SeedSequence([self.master_seed, self.stream_index, *sub])
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class NormalParams:
    mu: float = 0.0
    var: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.var) and self.var > 0):
            raise DomainError(f"invalid normal parameters mu={self.mu}, var={self.var}")

    @property
    def sd(self) -> float:
        return math.sqrt(self.var)


def norm_pdf(x, p: NormalParams = NormalParams()):
    """Normal density. Infinite ``x`` gives 0."""
    x = np.asarray(x, dtype=float)
    z = (x - p.mu) / p.sd
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(-0.5 * z * z) / (SQRT_2PI * p.sd)
    out = np.where(np.isinf(x), 0.0, out)
    return out[()] if out.ndim == 0 else out


def norm_logpdf(x, mu, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mu) ** 2 / var)


def norm_cdf(x):
    """Standard normal CDF, accepting +-inf; NaN raises."""
    x = np.asarray(x, dtype=float)
    if np.isnan(x).any():
        raise DomainError("norm_cdf of NaN")
    out = special.ndtr(x)
    return out[()] if out.ndim == 0 else out


def norm_sf(x):
    """Upper tail ``1 - norm_cdf(x)`` without cancellation."""
    x = np.asarray(x, dtype=float)
    if np.isnan(x).any():
        raise DomainError("norm_sf of NaN")
    out = special.ndtr(-x)
    return out[()] if out.ndim == 0 else out


def norm_quantile(q):
    """Inverse standard normal CDF; ``q=0`` maps to -inf and ``q=1`` to +inf."""
    q = np.asarray(q, dtype=float)
    if np.isnan(q).any() or (q < 0).any() or (q > 1).any():
        raise DomainError("quantile probability outside [0, 1]")
    out = special.ndtri(q)
    return out[()] if out.ndim == 0 else out


def sample_normal(rng: RngStream | np.random.Generator, p: NormalParams, n: int) -> np.ndarray:
    if n < 1:
        raise DomainError("n must be >= 1")
    gen = _as_generator(rng)
    return p.mu + p.sd * gen.standard_normal(n)


def t_scale(df: int) -> float:
    """Factor that rescales a Student-t(df) variate to unit variance."""
    if df <= 2:
        raise DomainError("Student-t variance is undefined for df <= 2")
    return math.sqrt((df - 2) / df)


def sample_t_scaled(rng: RngStream | np.random.Generator, mu: float, df: int, n: int) -> np.ndarray:
    """Unit-variance Student-t draws shifted to ``mu``.

    Built as ``Z / sqrt(chi2_df / df)`` so the distribution is exact.
    """
    scale = t_scale(df)
    if n < 1:
        raise DomainError("n must be >= 1")
    gen = _as_generator(rng)
    z = gen.standard_normal(n)
    chi2 = gen.chisquare(df, n)
    return mu + scale * z / np.sqrt(chi2 / df)


def gen_ar1(rng: RngStream | np.random.Generator, mean: float, coeff: float, n: int) -> np.ndarray:
    """Stationary AR(1) chain with unit marginal variance.

    The chain starts from its stationary law N(mean, 1) and uses innovations
    with variance ``1 - coeff**2``.
    """
    if not abs(coeff) < 1:
        raise DomainError("AR(1) coefficient must satisfy |coeff| < 1")
    if n < 1:
        raise DomainError("n must be >= 1")
    gen = _as_generator(rng)
    eps = gen.standard_normal(n)
    eps[1:] *= math.sqrt(1.0 - coeff * coeff)
    if coeff == 0.0:
        return mean + eps
    # centred chain x_t = coeff * x_{t-1} + eps_t as a linear filter
    return mean + lfilter([1.0], [1.0, -coeff], eps)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
