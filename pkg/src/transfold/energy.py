"""Energy functionals F = grad E and the finite-difference Allen-Cahn problem.

Gradients are taken with respect to a weighted inner product
``<a, b> = weight * sum(a * b)``: the Euclidean gradient of ``eval_E`` is
``weight * F``.  For plain finite-dimensional models ``weight = 1``; the
Allen-Cahn discretization uses nodal quadrature with ``weight = h`` so that
``F`` approximates the L2 gradient ``-kappa u'' + W'(u) - l(t)``.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .continuation import ScanConfig, StepConfig, detect_folds, refine_fold, trace_branch
from .errors import BadLoadExpression, DomainError, EvaluationError, ExpressionError, NewtonFailure, NotOnZeroSet
from .expr import compile_expression
from .problem import Point, ProblemSpec
from .solve import NewtonConfig, enumerate_section
from .transversality import DEFAULT_CERT_TOL, CertTolerances, EnergyCertificate, certify_energy

# diffusion used by the catalog Allen-Cahn problems; unit diffusion on (0, 1)
# gives a monotone operator (pi^2 > 1) and hence no folds at all
CATALOG_DIFFUSION = 0.05
H_THIRD = 2e-3
# |l*(m) - l*(2m)| <= MESH_STABILITY_C * h(m)^2 for the catalog fold load;
# fitted value 0.19 (m = 16 ... 128), frozen with margin
MESH_STABILITY_C = 0.25


@dataclass(frozen=True)
class EnergyProblem:
    problem: ProblemSpec
    eval_E: Callable
    eval_D3_dir: Callable | None = None
    weight: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def name(self) -> str:
        return self.problem.name

    def energy(self, x, t) -> float:
        x = np.asarray(x, dtype=float)
        if not self.problem.in_domain(t):
            raise DomainError(f"t={t} outside {self.problem.t_range}")
        e = float(self.eval_E(x, t))
        if not math.isfinite(e):
            raise EvaluationError("non-finite energy", x=x, t=t)
        return e

    def d3_dir(self, x, t, v) -> float:
        """D3_x E(x, t)[v, v, v]."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.eval_D3_dir is not None:
            return float(self.eval_D3_dir(x, t, v))
        return self.fd_d3_dir(x, t, v)

    def fd_d3_dir(self, x, t, v, rel_step: float = H_THIRD) -> float:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return 0.0
        u = v / nv
        h = rel_step * max(1.0, float(np.linalg.norm(x)))
        E = lambda s: self.energy(x + s * u, t)  # noqa: E731
        return nv**3 * (E(2 * h) - 2 * E(h) + 2 * E(-h) - E(-2 * h)) / (2 * h**3)

    def dt_DxE(self, x, t) -> np.ndarray:
        return self.problem.dt_F(x, t)


def energy_value(ep: EnergyProblem, x, t) -> float:
    return ep.energy(x, t)


def d3_dir(ep: EnergyProblem, x, t, v) -> float:
    return ep.d3_dir(x, t, v)


# -- scalar models ----------------------------------------------------------


def _scalar_energy(name, E, dE, d2E, d3E, d4E, dtdE, description, t_range=(-4.0, 4.0)):
    problem = ProblemSpec(
        name=name,
        dim=1,
        t_range=t_range,
        eval_F=lambda x, t: np.array([dE(x[0], t)]),
        eval_DxF=lambda x, t: np.array([[d2E(x[0], t)]]),
        eval_dtF=lambda x, t: np.array([dtdE(x[0], t)]),
        eval_D2xF_dir=lambda x, t, v: np.array([d3E(x[0], t) * v[0] ** 2]),
        eval_dtDxF_dir=lambda x, t, v: np.array([0.0]),
        smoothness_order=4,
        description=description,
    )
    return EnergyProblem(
        problem=problem,
        eval_E=lambda x, t: E(x[0], t),
        eval_D3_dir=lambda x, t, v: d3E(x[0], t) * v[0] ** 3,
    )


def energy_fold1d() -> EnergyProblem:
    """E = x^3/3 - t x, so F = x^2 - t."""
    return _scalar_energy(
        "efold1d",
        lambda x, t: x**3 / 3 - t * x,
        lambda x, t: x**2 - t,
        lambda x, t: 2 * x,
        lambda x, t: 2.0,
        lambda x, t: 0.0,
        lambda x, t: -1.0,
        "E = x^3/3 - t*x",
    )


def energy_quartic1d() -> EnergyProblem:
    """E = x^4/4 - t x, so F = x^3 - t (degenerate: D3 E = 6x vanishes at 0)."""
    return _scalar_energy(
        "equartic1d",
        lambda x, t: x**4 / 4 - t * x,
        lambda x, t: x**3 - t,
        lambda x, t: 3 * x**2,
        lambda x, t: 6 * x,
        lambda x, t: 6.0,
        lambda x, t: -1.0,
        "E = x^4/4 - t*x",
    )


def energy_cubicload() -> EnergyProblem:
    """E = x^4/4 - x^2/2 - t x, the double well tilted by the load t."""
    return _scalar_energy(
        "ecubicload",
        lambda x, t: x**4 / 4 - x**2 / 2 - t * x,
        lambda x, t: x**3 - x - t,
        lambda x, t: 3 * x**2 - 1,
        lambda x, t: 6 * x,
        lambda x, t: 6.0,
        lambda x, t: -1.0,
        "E = x^4/4 - x^2/2 - t*x",
    )


# -- Allen-Cahn -------------------------------------------------------------


@dataclass(frozen=True)
class AllenCahnGrid:
    """Uniform 1-D grid on (0, 1) with ``m`` interior nodes, Dirichlet zero at both ends."""

    m: int
    profile: np.ndarray
    y: np.ndarray
    z: np.ndarray
    diffusion: float = 1.0

    def __post_init__(self):
        if self.m < 3:
            raise ValueError("Allen-Cahn grid needs m >= 3 interior nodes")
        for name in ("profile", "y", "z"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape[0] != self.m:
                raise ValueError(f"{name} must have length m={self.m}")
            object.__setattr__(self, name, arr)

    @property
    def h(self) -> float:
        return 1.0 / (self.m + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.m + 1)

    def laplacian(self) -> np.ndarray:
        """Dense A_h = tridiag(-1, 2, -1) / h^2 (approximates -d2/dx2)."""
        m, h = self.m, self.h
        return (2 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)) / h**2


def _field(value, m, nodes, what):
    if value is None:
        return np.zeros(m)
    if isinstance(value, str):
        try:
            fn = compile_expression(value, ["s"])
        except ExpressionError as exc:
            raise BadLoadExpression(f"{what}: {exc}") from None
        return np.array([fn(s) for s in nodes])
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        return np.full(m, float(arr[0]))
    if arr.shape[0] != m:
        raise ValueError(f"{what} must have length {m}")
    return arr


def build_allen_cahn(
    m: int,
    load: str | Callable = "t",
    profile=None,
    y=None,
    z=None,
    diffusion: float = 1.0,
    t_range=(-2.0, 2.0),
    name: str | None = None,
) -> EnergyProblem:
    """Finite-difference Allen-Cahn energy on (0, 1) with load ``l(t) * profile``.

    Args:
        m: number of interior nodes, h = 1/(m+1).
        load: amplitude path l(t), an expression in ``t`` or a callable.
        profile: spatial load profile (default 1); array, scalar, or an
            expression in the spatial coordinate ``s``.
        y, z: additive and multiplicative perturbations (same formats).
        diffusion: coefficient of the Laplacian.
    """
    if m < 3:
        raise ValueError("m must be at least 3")
    if callable(load):
        ell = load
        load_text = getattr(load, "source", repr(load))
    else:
        try:
            ell = compile_expression(load, ["t"])
        except ExpressionError as exc:
            raise BadLoadExpression(str(exc)) from None
        load_text = load
    h = 1.0 / (m + 1)
    nodes = h * np.arange(1, m + 1)
    p = _field(1.0 if profile is None else profile, m, nodes, "profile")
    grid = AllenCahnGrid(m=m, profile=p, y=_field(y, m, nodes, "y"), z=_field(z, m, nodes, "z"), diffusion=diffusion)
    kappa = float(diffusion)
    off = -kappa / h**2
    prof, yy, zz = grid.profile, grid.y, grid.z

    def ell_of(t):
        val = float(ell(t))
        if not math.isfinite(val):
            raise EvaluationError(f"load l(t) is not finite at t={t}", t=t)
        return val

    def dell(t):
        k = 1e-6 * max(1.0, abs(t))
        return (ell_of(t + k) - ell_of(t - k)) / (2 * k)

    def F(u, t):
        return kernels.ac_residual(np.ascontiguousarray(u), kappa, h, ell_of(t) * prof, yy, zz)

    def DxF(u, t):
        J = np.diag(kernels.ac_hessian_diag(np.ascontiguousarray(u), kappa, h, zz))
        idx = np.arange(m - 1)
        J[idx, idx + 1] = off
        J[idx + 1, idx] = off
        return J

    def E(u, t):
        return kernels.ac_energy(np.ascontiguousarray(u), kappa, h, ell_of(t) * prof, yy, zz)

    problem = ProblemSpec(
        name=name or f"allencahn{m}",
        dim=m,
        t_range=t_range,
        eval_F=F,
        eval_DxF=DxF,
        eval_dtF=lambda u, t: -dell(t) * prof,
        eval_D2xF_dir=lambda u, t, v: kernels.ac_d2_dir(np.ascontiguousarray(u), np.ascontiguousarray(v, dtype=float)),
        eval_dtDxF_dir=lambda u, t, v: np.zeros(m),
        smoothness_order=4,
        description=(
            f"Allen-Cahn m={m} kappa={kappa!r} load={load_text} "
            f"profile={prof.tolist()} y={yy.tolist()} z={zz.tolist()}"
        ),
    )
    return EnergyProblem(
        problem=problem,
        eval_E=E,
        eval_D3_dir=lambda u, t, v: kernels.ac_d3(np.ascontiguousarray(u), np.ascontiguousarray(v, dtype=float), h),
        weight=h,
        meta={"grid": grid, "load": load_text},
    )


def catalog_allen_cahn(m: int) -> EnergyProblem:
    return build_allen_cahn(m, load="t", diffusion=CATALOG_DIFFUSION, t_range=(-2.0, 2.0), name=f"allencahn{m}")


# -- sweep --------------------------------------------------------------------


@dataclass(frozen=True)
class PdeFold:
    """A refined fold of an energy problem with its energy certificate."""

    fold: object
    energy_certificate: EnergyCertificate


def constant_starts(m: int, levels=(-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5)) -> list[np.ndarray]:
    return [np.full(m, c) for c in levels]


def sweep_and_certify(
    ep: EnergyProblem,
    amp_range: tuple[float, float],
    step: StepConfig | None = None,
    starts=None,
    tols: CertTolerances = DEFAULT_CERT_TOL,
) -> tuple[list[PdeFold], list]:
    """Multistart at both ends of ``amp_range``, trace across it, refine and certify folds.

    Returns ``(folds, curves)``.
    """
    problem = ep.problem
    lo, hi = amp_range
    step = replace(step or StepConfig(h0=0.02, h_max=0.1), t_bounds=(lo, hi))
    starts = starts if starts is not None else constant_starts(problem.dim)
    folds: list[PdeFold] = []
    curves = []
    seen: list[np.ndarray] = []
    for t in (lo, hi):
        t = min(max(t, step.bounds(problem)[0]), step.bounds(problem)[1])
        section = enumerate_section(problem, t, None, starts=starts, cfg=NewtonConfig())
        for root in section.zeros:
            z0 = np.r_[root, t]
            if any(np.min(np.linalg.norm(np.column_stack([c.x, c.t]) - z0, axis=1)) <= step.h_max for c in curves):
                continue
            direction = 1 if t == step.bounds(problem)[0] else -1
            curve = trace_branch(problem, Point(root, t), direction, step)
            curves.append(curve)
            for bracket in detect_folds(curve):
                try:
                    rec = refine_fold(problem, curve, bracket, step, tols)
                except (NewtonFailure, NotOnZeroSet) as exc:
                    curve.metadata.setdefault("refine_failures", []).append(str(exc))
                    continue
                zf = np.r_[rec.point.x, rec.point.t]
                if any(np.linalg.norm(zf - s) <= 1e-6 * (1 + np.linalg.norm(zf)) for s in seen):
                    continue
                seen.append(zf)
                curve.folds.append(rec)
                folds.append(PdeFold(rec, certify_energy(ep, rec.point, tols)))
    folds.sort(key=lambda f: f.fold.point.t)
    return folds, curves


def scan_config_for(ep: EnergyProblem, amp_range, step: StepConfig | None = None) -> ScanConfig:
    m = ep.problem.dim
    return ScanConfig(
        box=tuple((-1.5, 1.5) for _ in range(m)),
        t_window=tuple(amp_range),
        t_samples=tuple(amp_range),
        step=step or StepConfig(h0=0.02, h_max=0.1),
        starts=tuple(constant_starts(m)),
    )
