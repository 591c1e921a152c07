"""Histogram bin-count rules and the open-ended bin system used by the binned EM.

Bins are ``(-inf, b_1], (b_1, b_2], ..., (b_{m-1}, inf)``. Interior edges are
equally spaced over the range of the finite z-scores; infinite z-scores are
placed in the end bins when counting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng_dist import DomainError, norm_quantile, norm_sf
from .transforms import ZScoreSample


class DegenerateDataError(DomainError):
    """Data too concentrated to define a histogram."""


@dataclass(frozen=True)
class BinSpec:
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float).ravel()
        if e.size < 1:
            raise DomainError("need at least one interior edge (m >= 2)")
        if not np.isfinite(e).all():
            raise DomainError("interior edges must be finite")
        if (np.diff(e) <= 0).any():
            raise DomainError("edges must be strictly increasing")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def m(self) -> int:
        return self.edges.size + 1

    @property
    def full_edges(self) -> np.ndarray:
        """``[-inf, b_1, ..., b_{m-1}, inf]``"""
        return np.concatenate(([-np.inf], self.edges, [np.inf]))

    def __eq__(self, other):
        return isinstance(other, BinSpec) and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash(self.edges.tobytes())


@dataclass(frozen=True)
class BinnedCounts:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if (c < 0).any():
            raise DomainError("counts must be non-negative")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def bin_count_sturges(n: int) -> int:
    if n < 2:
        raise DomainError("Sturges rule needs n >= 2")
    # exact integer ceil(log2 n)
    return (n - 1).bit_length() + 1


def _range_and_n(values) -> tuple[np.ndarray, float]:
    x = np.asarray(values, dtype=float).ravel()
    if x.size < 2:
        raise DomainError("need at least two values")
    rng = float(x.max() - x.min())
    if rng <= 0:
        raise DegenerateDataError("all values are equal")
    return x, rng


def _count_from_width(rng: float, h: float) -> int:
    return max(2, math.ceil(rng / h))


def bin_count_scott(values) -> int:
    """``ceil(range / h)`` with ``h = 3.5 s n^{-1/3}``; at least 2."""
    x, rng = _range_and_n(values)
    s = float(np.std(x, ddof=1))
    if s <= 0:
        raise DegenerateDataError("zero sample standard deviation")
    return _count_from_width(rng, 3.5 * s * x.size ** (-1.0 / 3.0))


def bin_count_fd(values) -> int:
    """Freedman-Diaconis: ``ceil(range / h)`` with ``h = 2 IQR n^{-1/3}``; at least 2."""
    x, rng = _range_and_n(values)
    q25, q75 = np.percentile(x, [25.0, 75.0])
    iqr = float(q75 - q25)
    if iqr <= 0:
        raise DegenerateDataError("zero interquartile range")
    return _count_from_width(rng, 2.0 * iqr * x.size ** (-1.0 / 3.0))


BIN_RULES = ("sturges", "scott", "fd")


def bin_count(rule: str, finite_values) -> int:
    rule = rule.lower()
    if rule == "sturges":
        return bin_count_sturges(np.asarray(finite_values).size)
    if rule == "scott":
        return bin_count_scott(finite_values)
    if rule in ("fd", "freedman-diaconis"):
        return bin_count_fd(finite_values)
    raise DomainError(f"unknown bin rule {rule!r}")


def make_bins(finite_values, m: int) -> BinSpec:
    """``m`` bins whose interior edges split ``[min, max]`` evenly."""
    if m < 2:
        raise DomainError("m must be >= 2")
    x = np.asarray(finite_values, dtype=float).ravel()
    if x.size < 2 or x.max() == x.min():
        raise DegenerateDataError("need at least two distinct finite values")
    lo, hi = float(x.min()), float(x.max())
    k = np.arange(1, m)
    return BinSpec(lo + k * (hi - lo) / m)


def snap_edges(bins: BinSpec, finite_values) -> BinSpec:
    """Move each edge to the rounding boundary between its neighbouring observed values.

    With quantised data every edge falls in a gap between two storage levels.
    Placing it at the midpoint of that gap in p-value space (the cut point
    p-type rounding used) lets the bin probabilities describe the unrounded
    statistics. Counts are unchanged because no observation crosses an edge.
    """
    u = np.unique(np.asarray(finite_values, dtype=float))
    idx = np.searchsorted(u, bins.edges, side="right")
    if (idx < 1).any() or (idx >= u.size).any():
        raise DomainError("edges must lie strictly inside the data range")
    lo_p = norm_sf(u[idx - 1])
    hi_p = norm_sf(u[idx])
    snapped = -norm_quantile(0.5 * (lo_p + hi_p))
    # stay inside the gap even where the p-space midpoint underflows
    snapped = np.clip(snapped, u[idx - 1], np.nextafter(u[idx], -np.inf))
    return BinSpec(np.unique(snapped))


def bin_counts(z: ZScoreSample | np.ndarray, bins: BinSpec) -> BinnedCounts:
    """Count z-scores per right-closed bin; +inf goes to bin m, -inf to bin 1."""
    if isinstance(z, ZScoreSample):
        finite, n_pos, n_neg = z.finite, z.n_pos_inf, z.n_neg_inf
    else:
        arr = np.asarray(z, dtype=float).ravel()
        if np.isnan(arr).any():
            raise DomainError("NaN z-score")
        finite = arr[np.isfinite(arr)]
        n_pos = int((arr == np.inf).sum())
        n_neg = int((arr == -np.inf).sum())
    idx = np.searchsorted(bins.edges, finite, side="left")
    counts = np.bincount(idx, minlength=bins.m)
    counts[0] += n_neg
    counts[-1] += n_pos
    return BinnedCounts(counts)


def assign_bins(z, bins: BinSpec) -> np.ndarray:
    """Zero-based bin index of each (possibly infinite) z-score."""
    return np.searchsorted(bins.edges, np.asarray(z, dtype=float), side="left")
