"""Reference FDR procedures: Benjamini-Hochberg, Benjamini-Yekutieli and Storey q-values."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .rng_dist import DomainError


class Method(enum.Enum):
    BH = "bh"
    BY = "by"
    QVALUE = "qvalue"
    EB = "eb"

    @classmethod
    def parse(cls, token: str) -> "Method":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise DomainError(f"unknown method {token!r}") from None


@dataclass(frozen=True)
class RejectionSet:
    rejected: np.ndarray
    method: Method

    @property
    def n_rejected(self) -> int:
        return int(self.rejected.sum())


def _check(p, beta=None) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise DomainError("p-values must lie in [0, 1]")
    if beta is not None and not 0.0 < beta < 1.0:
        raise DomainError("beta must lie in (0, 1)")
    return p


def _step_up(p: np.ndarray, level: float) -> np.ndarray:
    n = p.size
    if n == 0:
        return np.zeros(0, dtype=bool)
    srt = np.sort(p)
    ok = np.flatnonzero(srt <= level * np.arange(1, n + 1) / n)
    if ok.size == 0:
        return np.zeros(n, dtype=bool)
    return p <= srt[ok[-1]]


def bh_reject(pvalues, beta: float) -> RejectionSet:
    """Benjamini-Hochberg step-up at level ``beta``."""
    p = _check(pvalues, beta)
    return RejectionSet(_step_up(p, beta), Method.BH)


def harmonic(n: int) -> float:
    """``sum_{i<=n} 1/i``."""
    return float(np.sum(1.0 / np.arange(1, n + 1))) if n > 0 else 0.0


def by_reject(pvalues, beta: float) -> RejectionSet:
    """Benjamini-Yekutieli: step-up at ``beta / c_n`` with ``c_n`` the n-th harmonic number."""
    p = _check(pvalues, beta)
    return RejectionSet(_step_up(p, beta / max(harmonic(p.size), 1.0)), Method.BY)


def storey_pi0(pvalues, lam: float = 0.5) -> float:
    """Storey's null-proportion estimate at a single tuning value ``lam``."""
    if not 0.0 < lam < 1.0:
        raise DomainError("lambda must lie in (0, 1)")
    p = _check(pvalues)
    if p.size == 0:
        raise DomainError("no p-values")
    return min(1.0, float((p > lam).sum()) / (p.size * (1.0 - lam)))


def storey_qvalues(pvalues, lam: float = 0.5, pi0: float | None = None) -> np.ndarray:
    """q-values in input order: running minimum of ``pi0 n p_(j) / j`` from the top.

    ``pi0`` defaults to :func:`storey_pi0` at ``lam``.
    """
    p = _check(pvalues)
    if pi0 is None:
        pi0 = storey_pi0(p, lam)
    elif not 0.0 <= pi0 <= 1.0:
        raise DomainError("pi0 must lie in [0, 1]")
    n = p.size
    order = np.argsort(p, kind="stable")
    raw = pi0 * n * p[order] / np.arange(1, n + 1)
    q_sorted = np.minimum.accumulate(raw[::-1])[::-1]
    q = np.empty(n)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def qvalue_reject(qvalues, beta: float) -> RejectionSet:
    q = np.asarray(qvalues, dtype=float).ravel()
    return RejectionSet(q <= beta, Method.QVALUE)
