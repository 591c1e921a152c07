"""Probit transform between p-values and z-scores, with infinity bookkeeping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng_dist import DomainError, norm_quantile, norm_sf

# order_map codes for entries that did not land in the finite vector
POS_INF = -1
NEG_INF = -2


@dataclass
class ZScoreSample:
    """Finite z-scores plus counts of +inf (p = 0) and -inf (p = 1).

    ``order_map[i]`` is the position of input ``i`` inside ``finite``, or
    :data:`POS_INF` / :data:`NEG_INF`.
    """

    finite: np.ndarray
    n_pos_inf: int = 0
    n_neg_inf: int = 0
    order_map: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.finite = np.asarray(self.finite, dtype=float)
        if not np.isfinite(self.finite).all():
            raise DomainError("finite z-scores contain non-finite values")

    @property
    def n_total(self) -> int:
        return self.finite.size + self.n_pos_inf + self.n_neg_inf

    def full(self) -> np.ndarray:
        """All z-scores in original input order, infinities included."""
        if self.order_map is None:
            raise ValueError("sample was built without an order map")
        out = np.empty(self.order_map.size)
        fin = self.order_map >= 0
        out[fin] = self.finite[self.order_map[fin]]
        out[self.order_map == POS_INF] = np.inf
        out[self.order_map == NEG_INF] = -np.inf
        return out


def _check_p(p: np.ndarray) -> None:
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise DomainError("p-values must lie in [0, 1]")


def p_to_z(p):
    """z = Phi^{-1}(1 - p), evaluated as -Phi^{-1}(p) for accuracy at small p."""
    p = np.asarray(p, dtype=float)
    _check_p(p)
    out = -norm_quantile(p)
    out = out + 0.0  # -0.0 -> 0.0
    return out[()] if np.ndim(out) == 0 else out


def z_to_p(z):
    """One-sided upper-tail p-value ``1 - Phi(z)``."""
    return norm_sf(z)


def collect_zscores(p) -> ZScoreSample:
    p = np.asarray(p, dtype=float).ravel()
    z = p_to_z(p)
    z = np.atleast_1d(z)
    fin = np.isfinite(z)
    order = np.full(p.size, POS_INF, dtype=np.int64)
    order[fin] = np.arange(int(fin.sum()))
    order[z == -np.inf] = NEG_INF
    return ZScoreSample(
        finite=z[fin],
        n_pos_inf=int((z == np.inf).sum()),
        n_neg_inf=int((z == -np.inf).sum()),
        order_map=order,
    )


def fisher_corr_pvalue(r, n_subjects: int):
    """Two-sided p-value for zero correlation via the Fisher z-transformation."""
    if n_subjects <= 3:
        raise DomainError("Fisher transformation needs more than 3 subjects")
    r = np.asarray(r, dtype=float)
    if np.isnan(r).any() or (np.abs(r) > 1).any():
        raise DomainError("correlation must lie in [-1, 1]")
    with np.errstate(divide="ignore"):
        stat = np.abs(np.arctanh(r)) * math.sqrt(n_subjects - 3)
    out = 2.0 * norm_sf(stat)
    return out[()] if np.ndim(out) == 0 else out
