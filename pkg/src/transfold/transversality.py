"""Transversality certificates at singular zeros and the two rank equivalences.

The general certificate checks, at a zero (x0, t0) with singular
``D_x F``: a one-dimensional kernel spanned by ``v`` (T1), a nonzero
pairing of ``d_t F`` with the cokernel vector ``w*`` (T2), and a nonzero
pairing of ``D2_x F[v, v]`` with ``w*`` (T3).  Both vectors are unit
length, so the margins are well defined up to sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousKernel, HessianAsymmetry, NotOnZeroSet, NotOnZeroSetOfG
from .problem import Point, ProblemSpec
from .spectral import DEFAULT_TOL, KernelPair, RankReport, TolPolicy, is_invertible, kernel_pair, rank_report

REGULAR = "Regular"
TRANSVERSAL = "TransversalSingular"
NON_TRANSVERSAL = "NonTransversal"


@dataclass(frozen=True)
class CertTolerances:
    zero_tol: float = 1e-9
    margin_tol: float = 1e-6
    symmetry_tol: float = 1e-8
    spectral: TolPolicy = field(default_factory=TolPolicy)

    def as_dict(self) -> dict:
        return {
            "zero_tol": self.zero_tol,
            "margin_tol": self.margin_tol,
            "symmetry_tol": self.symmetry_tol,
            "rank_tol": self.spectral.rank_tol,
            "abs_floor": self.spectral.abs_floor,
            "gap_min": self.spectral.gap_min,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CertTolerances:
        return cls(
            zero_tol=d["zero_tol"],
            margin_tol=d["margin_tol"],
            symmetry_tol=d["symmetry_tol"],
            spectral=TolPolicy(rank_tol=d["rank_tol"], abs_floor=d["abs_floor"], gap_min=d["gap_min"]),
        )


DEFAULT_CERT_TOL = CertTolerances()


@dataclass(frozen=True)
class TransversalityCertificate:
    point: Point
    classification: str
    kernel: KernelPair | None
    t2_margin: float | None
    t3_margin: float | None
    failures: tuple[str, ...]
    residual_norm: float
    tolerances_used: CertTolerances
    ambiguous_kernel: bool = False

    @property
    def passes_t1_t2(self) -> bool:
        """(T1) and (T2) hold; vacuous at regular points."""
        return self.classification == REGULAR or not ({"T1", "T2"} & set(self.failures))


@dataclass(frozen=True)
class EnergyCertificate:
    point: Point
    classification: str
    kernel: KernelPair | None
    e2_margin: float | None
    e3_margin: float | None
    failures: tuple[str, ...]
    residual_norm: float
    tolerances_used: CertTolerances
    ambiguous_kernel: bool = False
    self_duality_error: float | None = None


@dataclass(frozen=True)
class AugmentedPoint:
    x: np.ndarray
    t: float
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=float).reshape(-1))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "v", np.array(self.v, dtype=float).reshape(-1))
        if not np.any(self.v):
            raise ValueError("the kernel direction v must be nonzero")

    @property
    def point(self) -> Point:
        return Point(self.x, self.t)


def _on_zero_set(problem, x, t, tols):
    r = float(np.linalg.norm(problem.F(x, t)))
    if r > tols.zero_tol * (1 + float(np.linalg.norm(x))):
        raise NotOnZeroSet(f"|F| = {r:.3e} exceeds zero_tol at t={t}", residual=r)
    return r


def certify(
    problem: ProblemSpec, p: Point, tols: CertTolerances = DEFAULT_CERT_TOL, strict: bool = False
) -> TransversalityCertificate:
    """Classify a zero of F as Regular, TransversalSingular or NonTransversal.

    With ``strict=True`` a near rank-2 deficiency raises
    :class:`AmbiguousKernel`; otherwise it is reported as a (T1) failure
    with ``ambiguous_kernel`` set.
    """
    x, t = p.x, p.t
    residual = _on_zero_set(problem, x, t, tols)
    J = problem.jacobian_x(x, t)
    invertible, _ = is_invertible(J, tols.spectral)
    if invertible:
        return TransversalityCertificate(p, REGULAR, None, None, None, (), residual, tols)

    kp = kernel_pair(J, tols.spectral)
    if not kp.kernel_dim_one(tols.spectral):
        if strict:
            raise AmbiguousKernel(f"gap ratio {kp.gap_ratio:.3e} below {tols.spectral.gap_min:.1e}")
        return TransversalityCertificate(p, NON_TRANSVERSAL, kp, None, None, ("T1",), residual, tols, True)

    t2 = abs(float(problem.dt_F(x, t) @ kp.w_star))
    t3 = abs(float(problem.d2x_F_dir(x, t, kp.v) @ kp.w_star))
    failures = tuple(name for name, m in (("T2", t2), ("T3", t3)) if not m > tols.margin_tol)
    cls = NON_TRANSVERSAL if failures else TRANSVERSAL
    return TransversalityCertificate(p, cls, kp, t2, t3, failures, residual, tols)


def certify_energy(energy_problem, p: Point, tols: CertTolerances = DEFAULT_CERT_TOL, strict: bool = False) -> EnergyCertificate:
    """Energy-form certificate (E1)-(E3) for F = D_x E.

    The second-order margin uses ``d_t F`` paired with the kernel vector;
    the third-order margin is ``|D3 E[v,v,v]|`` divided by the quadrature
    weight of the energy so that it is expressed in the same pairing as F.
    """
    problem = energy_problem.problem
    x, t = p.x, p.t
    residual = _on_zero_set(problem, x, t, tols)
    H = problem.jacobian_x(x, t)
    hnorm = float(np.linalg.norm(H))
    if float(np.linalg.norm(H - H.T)) > tols.symmetry_tol * max(hnorm, 1e-300):
        raise HessianAsymmetry(f"|H - H^T| = {np.linalg.norm(H - H.T):.3e}")
    invertible, _ = is_invertible(H, tols.spectral)
    if invertible:
        return EnergyCertificate(p, REGULAR, None, None, None, (), residual, tols)

    kp = kernel_pair(H, tols.spectral)
    duality = float(min(np.linalg.norm(kp.v - kp.w_star), np.linalg.norm(kp.v + kp.w_star)))
    if not kp.kernel_dim_one(tols.spectral):
        if strict:
            raise AmbiguousKernel(f"gap ratio {kp.gap_ratio:.3e} below {tols.spectral.gap_min:.1e}")
        return EnergyCertificate(p, NON_TRANSVERSAL, kp, None, None, ("E1",), residual, tols, True, duality)

    v = kp.v
    e2 = abs(float(problem.dt_F(x, t) @ v))
    e3 = abs(float(energy_problem.d3_dir(x, t, v))) / energy_problem.weight
    failures = tuple(name for name, m in (("E2", e2), ("E3", e3)) if not m > tols.margin_tol)
    cls = NON_TRANSVERSAL if failures else TRANSVERSAL
    return EnergyCertificate(p, cls, kp, e2, e3, failures, residual, tols, False, duality)


def augmented_G(problem: ProblemSpec, q: AugmentedPoint) -> np.ndarray:
    """G(x, t, v) = (F(x, t), D_x F(x, t) v)."""
    return np.concatenate([problem.F(q.x, q.t), problem.jacobian_x(q.x, q.t) @ q.v])


def bilinear_columns(problem: ProblemSpec, x, t, v) -> np.ndarray:
    """Matrix B with B e_j = D2_x F[v, e_j], recovered from the quadratic form.

    Uses polarization, D2[v, e] = (D2[v+e, v+e] - D2[v-e, v-e]) / 4.
    """
    n = problem.dim
    B = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        B[:, j] = (problem.d2x_F_dir(x, t, v + e) - problem.d2x_F_dir(x, t, v - e)) / 4.0
    return B


def dG_total(problem: ProblemSpec, x, t, v) -> np.ndarray:
    """Differential of G as a 2n x (2n+1) matrix, columns ordered (x~, t~, v~).

    ``v`` may be zero here, unlike in :class:`AugmentedPoint`.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = problem.dim
    J = problem.jacobian_x(x, t)
    top = np.hstack([J, problem.dt_F(x, t)[:, None], np.zeros((n, n))])
    bottom = np.hstack([bilinear_columns(problem, x, t, v), problem.dt_dx_F_dir(x, t, v)[:, None], J])
    return np.vstack([top, bottom])


def _g_on_zero_set(problem, q, tols):
    g = float(np.linalg.norm(augmented_G(problem, q)))
    scale = 1 + float(np.linalg.norm(q.x)) + float(np.linalg.norm(q.v))
    if g > tols.zero_tol * scale:
        raise NotOnZeroSetOfG(f"|G| = {g:.3e} exceeds zero_tol", residual=g)


def check_regular_value_G(
    problem: ProblemSpec, q: AugmentedPoint, tols: CertTolerances = DEFAULT_CERT_TOL
) -> tuple[bool, RankReport]:
    _g_on_zero_set(problem, q, tols)
    report = rank_report(dG_total(problem, q.x, q.t, q.v), tols.spectral)
    return report.surjective, report


def check_dF_onto(problem: ProblemSpec, p: Point, tols: CertTolerances = DEFAULT_CERT_TOL) -> tuple[bool, RankReport]:
    _on_zero_set(problem, p.x, p.t, tols)
    report = rank_report(problem.total_differential(p.x, p.t), tols.spectral)
    return report.surjective, report
