"""Reduced-precision integer storage of p-values and test statistics.

Two schemes are modelled, both returning reconstructed real values rather
than raw integers:

* **p-type**: p-values on ``[0, 1]`` are rounded to the grid
  ``k / (2**gamma - 1)``; values near 0 or 1 collapse onto the endpoints and
  later probit-transform to infinite z-scores.
* **T-type**: magnitudes of test statistics are rounded to the grid
  ``k * M / (2**gamma - 1)`` where ``M`` is the largest magnitude in the
  vector; the sign is kept separately.

Ties are broken half-to-even (``numpy.rint``).
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass

import numpy as np

from .rng_dist import DomainError, norm_cdf, norm_pdf, norm_quantile

P_TYPE_GAMMAS = (8, 9, 16, 17)
T_TYPE_GAMMAS = (7, 8, 15, 16)


class Kind(enum.Enum):
    NONE = "none"
    PTYPE = "p"
    TTYPE = "t"


@dataclass(frozen=True)
class QuantizationScheme:
    kind: Kind = Kind.NONE
    gamma: int | None = None

    def __post_init__(self):
        if self.kind is Kind.NONE:
            if self.gamma is not None:
                raise DomainError("the 'none' scheme takes no bit count")
        elif self.kind is Kind.PTYPE and self.gamma not in P_TYPE_GAMMAS:
            raise DomainError(f"p-type gamma must be one of {P_TYPE_GAMMAS}, got {self.gamma}")
        elif self.kind is Kind.TTYPE and self.gamma not in T_TYPE_GAMMAS:
            raise DomainError(f"T-type gamma must be one of {T_TYPE_GAMMAS}, got {self.gamma}")

    @classmethod
    def parse(cls, token: str) -> "QuantizationScheme":
        """Parse ``none``, ``p8``, ``t16`` and friends."""
        tok = token.strip().lower()
        if tok == "none":
            return cls()
        m = re.fullmatch(r"([pt])(\d+)", tok)
        if not m:
            raise DomainError(f"unrecognised encoding scheme {token!r}")
        kind = Kind.PTYPE if m.group(1) == "p" else Kind.TTYPE
        return cls(kind, int(m.group(2)))

    @property
    def label(self) -> str:
        return "none" if self.kind is Kind.NONE else f"{self.kind.value}{self.gamma}"

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class TTypeScale:
    max_abs: float


def _levels(gamma: int) -> int:
    return 2**gamma - 1


def p_type_encode(p, gamma: int) -> np.ndarray:
    """Round p-values to the nearest point of ``{k / (2**gamma - 1)}``."""
    QuantizationScheme(Kind.PTYPE, gamma)
    p = np.asarray(p, dtype=float)
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise DomainError("p-values must lie in [0, 1]")
    n_lev = _levels(gamma)
    return np.rint(p * n_lev) / n_lev


def t_type_encode(t, gamma: int) -> tuple[np.ndarray, TTypeScale]:
    """Sign-magnitude quantisation of test statistics scaled by their max magnitude.

    Returns the reconstructed values and the scale ``M``. The element(s)
    attaining ``M`` and any exact zeros are reproduced exactly.
    """
    QuantizationScheme(Kind.TTYPE, gamma)
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        raise DomainError("cannot encode an empty vector")
    if not np.isfinite(t).all():
        raise DomainError("T-type encoding requires finite statistics")
    mag = np.abs(t)
    m = float(mag.max())
    if m == 0.0:
        return np.zeros_like(t), TTypeScale(0.0)
    n_lev = _levels(gamma)
    k = np.rint(mag / m * n_lev)
    # m * (k / n_lev) keeps k == n_lev exact (k / n_lev == 1.0)
    return np.copysign(m * (k / n_lev), t), TTypeScale(m)


def truncation_bound(gamma: int) -> float:
    """z-score bound beyond which gamma-bit p-type storage yields infinities."""
    if gamma < 2:
        raise DomainError("gamma must be >= 2")
    return float(norm_quantile(1.0 - 1.0 / (2.0 ** (gamma + 1) - 1.0)))


def truncated_null_variance(gamma: int) -> float:
    """Variance of a standard normal doubly truncated to ``[-a, a]``, ``a = truncation_bound(gamma)``."""
    a = truncation_bound(gamma)
    mass = float(norm_cdf(a) - norm_cdf(-a))
    return 1.0 - 2.0 * a * float(norm_pdf(a)) / mass


def expected_finite_fraction(gamma: int, pi0: float, mu1: float) -> float:
    """Expected share of z-scores that stay finite after gamma-bit p-type encoding.

    Null z-scores are N(0, 1); alternatives are N(mu1, 1).
    """
    if not 0.0 <= pi0 <= 1.0:
        raise DomainError("pi0 must lie in [0, 1]")
    a = truncation_bound(gamma)
    null_mass = float(norm_cdf(a) - norm_cdf(-a))
    alt_mass = float(norm_cdf(a - mu1) - norm_cdf(-a - mu1))
    return pi0 * null_mass + (1.0 - pi0) * alt_mass
