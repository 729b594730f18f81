"""Rank-revealing linear algebra built on the dense SVD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SvdFailure

GAP_FLOOR = 1e-300


@dataclass(frozen=True)
class TolPolicy:
    """Thresholds for rank decisions.

    A singular value counts as zero when it is at most
    ``max(rank_tol * sigma_max, abs_floor)``.  A kernel is accepted as
    one-dimensional only if, in addition, ``gap_ratio >= gap_min``.
    """

    rank_tol: float = 1e-8
    abs_floor: float = 1e-10
    gap_min: float = 1e4

    def threshold(self, sigma_max: float) -> float:
        return max(self.rank_tol * sigma_max, self.abs_floor)


DEFAULT_TOL = TolPolicy()


@dataclass(frozen=True)
class KernelPair:
    v: np.ndarray
    w_star: np.ndarray
    sigma_min: float
    sigma_next: float
    gap_ratio: float

    def kernel_dim_one(self, policy: TolPolicy = DEFAULT_TOL) -> bool:
        return self.gap_ratio >= policy.gap_min


@dataclass(frozen=True)
class RankReport:
    matrix_shape: tuple[int, int]
    numerical_rank: int
    singular_values: tuple[float, ...]
    surjective: bool
    rank_tolerance_used: float


def _svd(M, compute_uv=True):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(M)):
        raise SvdFailure("matrix has non-finite entries")
    try:
        return np.linalg.svd(M, compute_uv=compute_uv)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc


def orient(vec: np.ndarray, atol: float = 1e-14) -> np.ndarray:
    """Flip ``vec`` so that its first non-negligible component is positive."""
    vec = np.asarray(vec, dtype=float)
    scale = np.max(np.abs(vec)) if vec.size else 0.0
    for c in vec:
        if abs(c) > atol * max(scale, 1.0):
            return vec if c > 0 else -vec
    return vec


def kernel_pair(J, policy: TolPolicy = DEFAULT_TOL) -> KernelPair:
    """Right and left singular vectors of the smallest singular value of square ``J``."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError("kernel_pair expects a square matrix")
    U, s, Vt = _svd(J)
    v = orient(Vt[-1])
    w = orient(U[:, -1])
    sigma_min = float(s[-1])
    sigma_next = float(s[-2]) if s.size > 1 else float("inf")
    gap = sigma_next / max(sigma_min, GAP_FLOOR)
    return KernelPair(v=v, w_star=w, sigma_min=sigma_min, sigma_next=sigma_next, gap_ratio=gap)


def rank_report(M, policy: TolPolicy = DEFAULT_TOL) -> RankReport:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    s = _svd(M, compute_uv=False)
    sigma_max = float(s[0]) if s.size else 0.0
    tol = policy.threshold(sigma_max)
    rank = int(np.sum(s > tol))
    return RankReport(
        matrix_shape=(int(M.shape[0]), int(M.shape[1])),
        numerical_rank=rank,
        singular_values=tuple(float(x) for x in s),
        surjective=rank == M.shape[0],
        rank_tolerance_used=tol,
    )


def is_invertible(J, policy: TolPolicy = DEFAULT_TOL) -> tuple[bool, float]:
    """Return ``(invertible, sigma_max / sigma_min)``."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError("is_invertible expects a square matrix")
    s = _svd(J, compute_uv=False)
    smax, smin = float(s[0]), float(s[-1])
    cond = smax / smin if smin > 0 else float("inf")
    return smin > policy.threshold(smax), cond
