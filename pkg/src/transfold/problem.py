"""Parameterized square systems F(x, t) = 0 with uniform derivative access.

A :class:`ProblemSpec` wraps the residual map together with whatever
analytic derivatives the author supplies.  Missing derivatives fall back
to central finite differences with the step sizes below.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, EvaluationError, NonSquareSystem, NotFound
from .expr import compile_expression

# relative finite-difference steps, scaled by max(1, |x|)
H_JAC = 1e-6
H_T = 1e-6
H_SECOND = 1e-4


@dataclass(frozen=True)
class Point:
    """A pair (x, t); ``x`` is stored as a read-only float array."""

    x: np.ndarray
    t: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    def __eq__(self, other):
        if not isinstance(other, Point):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.x, other.x)

    def __hash__(self):
        return hash((self.t, self.x.tobytes()))


@dataclass(frozen=True)
class ProblemSpec:
    """A map F: R^n x (t_lo, t_hi) -> R^n.

    Attributes:
        name: catalog or user name.
        dim: number of unknowns and of equations.
        t_range: open parameter interval.
        eval_F: ``(x, t) -> R^n``.
        eval_DxF: optional ``(x, t) -> (n, n)`` Jacobian.
        eval_dtF: optional ``(x, t) -> R^n``.
        eval_D2xF_dir: optional ``(x, t, v) -> D2_x F[v, v]``.
        eval_dtDxF_dir: optional ``(x, t, v) -> d_t D_x F [v]``.
        smoothness_order: declared order of differentiability (>= 2).
        solutions: closed-form description of the section C(t), used by
            tests only.
        description: free text, part of the problem hash.
    """

    name: str
    dim: int
    t_range: tuple[float, float]
    eval_F: Callable
    eval_DxF: Callable | None = None
    eval_dtF: Callable | None = None
    eval_D2xF_dir: Callable | None = None
    eval_dtDxF_dir: Callable | None = None
    smoothness_order: int = 2
    solutions: Callable | None = field(default=None, compare=False)
    description: str = ""

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be a positive integer")
        lo, hi = (float(v) for v in self.t_range)
        if not lo < hi:
            raise ValueError("t_range must satisfy t_lo < t_hi")
        if int(self.smoothness_order) < 2:
            raise ValueError("smoothness_order must be at least 2")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "t_range", (lo, hi))

    # -- basic checks -------------------------------------------------

    def in_domain(self, t: float) -> bool:
        return self.t_range[0] < t < self.t_range[1]

    def _check(self, x, t):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise NonSquareSystem(f"{self.name}: x has length {x.shape[0]}, expected {self.dim}")
        if not np.all(np.isfinite(x)):
            raise EvaluationError("non-finite state", x=x, t=t)
        if not self.in_domain(t):
            raise DomainError(f"{self.name}: t={t!r} outside {self.t_range}")
        return x, float(t)

    def _vector(self, value, x, t, what):
        out = np.asarray(value, dtype=float).reshape(-1)
        if out.shape[0] != self.dim:
            raise NonSquareSystem(f"{self.name}: {what} has length {out.shape[0]}, expected {self.dim}")
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"{self.name}: non-finite {what} at t={t}", x=x, t=t)
        return out

    # -- evaluation -----------------------------------------------------

    def F(self, x, t) -> np.ndarray:
        x, t = self._check(x, t)
        return self._vector(self.eval_F(x, t), x, t, "F")

    def _F_raw(self, x, t):
        # finite-difference stencils may step slightly outside the checked point
        return self._vector(self.eval_F(x, t), x, t, "F")

    def jacobian_x(self, x, t) -> np.ndarray:
        x, t = self._check(x, t)
        if self.eval_DxF is not None:
            J = np.asarray(self.eval_DxF(x, t), dtype=float).reshape(self.dim, self.dim)
            if not np.all(np.isfinite(J)):
                raise EvaluationError(f"{self.name}: non-finite Jacobian", x=x, t=t)
            return J
        return self.fd_jacobian_x(x, t)

    def fd_jacobian_x(self, x, t, rel_step: float = H_JAC) -> np.ndarray:
        x, t = self._check(x, t)
        h = rel_step * max(1.0, float(np.linalg.norm(x)))
        J = np.empty((self.dim, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = h
            J[:, j] = (self._F_raw(x + e, t) - self._F_raw(x - e, t)) / (2 * h)
        return J

    def dt_F(self, x, t) -> np.ndarray:
        x, t = self._check(x, t)
        if self.eval_dtF is not None:
            return self._vector(self.eval_dtF(x, t), x, t, "dtF")
        return self.fd_dt_F(x, t)

    def fd_dt_F(self, x, t, rel_step: float = H_T) -> np.ndarray:
        x, t = self._check(x, t)
        h = rel_step * max(1.0, float(np.linalg.norm(x)))
        return self._t_difference(lambda s: self._F_raw(x, s), t, h)

    def _t_difference(self, g, t, h):
        lo, hi = self.t_range
        if lo < t - h and t + h < hi:
            return (g(t + h) - g(t - h)) / (2 * h)
        # second-order one-sided stencil next to the domain boundary
        s = 1.0 if t - h <= lo else -1.0
        return s * (-3 * g(t) + 4 * g(t + s * h) - g(t + 2 * s * h)) / (2 * h)

    def d2x_F_dir(self, x, t, v) -> np.ndarray:
        x, t = self._check(x, t)
        v = np.asarray(v, dtype=float).reshape(-1)
        if self.eval_D2xF_dir is not None:
            return self._vector(self.eval_D2xF_dir(x, t, v), x, t, "D2xF[v,v]")
        return self.fd_d2x_F_dir(x, t, v)

    def fd_d2x_F_dir(self, x, t, v, rel_step: float = H_SECOND) -> np.ndarray:
        x, t = self._check(x, t)
        v = np.asarray(v, dtype=float).reshape(-1)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return np.zeros(self.dim)
        u = v / nv
        h = rel_step * max(1.0, float(np.linalg.norm(x)))
        d2 = (self._F_raw(x + h * u, t) - 2 * self._F_raw(x, t) + self._F_raw(x - h * u, t)) / h**2
        return d2 * nv**2

    def dt_dx_F_dir(self, x, t, v) -> np.ndarray:
        """Mixed derivative d_t D_x F(x, t)[v]."""
        x, t = self._check(x, t)
        v = np.asarray(v, dtype=float).reshape(-1)
        if self.eval_dtDxF_dir is not None:
            return self._vector(self.eval_dtDxF_dir(x, t, v), x, t, "dtDxF[v]")
        if self.eval_DxF is not None:
            h = H_T * max(1.0, float(np.linalg.norm(x)))
            return self._t_difference(lambda s: np.asarray(self.eval_DxF(x, s), float) @ v, t, h)
        return self.fd_dt_dx_F_dir(x, t, v)

    def fd_dt_dx_F_dir(self, x, t, v, rel_step: float = H_SECOND) -> np.ndarray:
        x, t = self._check(x, t)
        v = np.asarray(v, dtype=float).reshape(-1)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return np.zeros(self.dim)
        u = v / nv
        k = rel_step * max(1.0, float(np.linalg.norm(x)))
        return nv * self._t_difference(
            lambda s: (self._F_raw(x + k * u, s) - self._F_raw(x - k * u, s)) / (2 * k), t, k
        )

    def total_differential(self, x, t) -> np.ndarray:
        """The n x (n+1) block matrix [D_x F | d_t F]."""
        return np.column_stack([self.jacobian_x(x, t), self.dt_F(x, t)])

    @property
    def has_analytic_derivatives(self) -> bool:
        return self.eval_DxF is not None and self.eval_dtF is not None and self.eval_D2xF_dir is not None

    def digest(self) -> str:
        """Stable short hash identifying the problem in output metadata."""
        payload = json.dumps(
            {"name": self.name, "dim": self.dim, "t_range": list(self.t_range), "description": self.description},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# -- Point-based functional interface ----------------------------------


def evaluate(problem: ProblemSpec, p: Point) -> np.ndarray:
    return problem.F(p.x, p.t)


def jacobian_x(problem: ProblemSpec, p: Point) -> np.ndarray:
    return problem.jacobian_x(p.x, p.t)


def dt_F(problem: ProblemSpec, p: Point) -> np.ndarray:
    return problem.dt_F(p.x, p.t)


def d2x_F_dir(problem: ProblemSpec, p: Point, v) -> np.ndarray:
    return problem.d2x_F_dir(p.x, p.t, v)


def total_differential(problem: ProblemSpec, p: Point) -> np.ndarray:
    return problem.total_differential(p.x, p.t)


# -- catalog -------------------------------------------------------------


def _a(*values):
    return np.array(values, dtype=float)


def fold1d(t_range=(-4.0, 4.0)) -> ProblemSpec:
    return ProblemSpec(
        name="fold1d",
        dim=1,
        t_range=t_range,
        eval_F=lambda x, t: _a(x[0] ** 2 - t),
        eval_DxF=lambda x, t: np.array([[2 * x[0]]]),
        eval_dtF=lambda x, t: _a(-1.0),
        eval_D2xF_dir=lambda x, t, v: _a(2 * v[0] ** 2),
        eval_dtDxF_dir=lambda x, t, v: _a(0.0),
        smoothness_order=3,
        solutions=lambda t: [] if t < 0 else sorted({-math.sqrt(t), math.sqrt(t)}),
        description="x^2 - t",
    )


def pitchfork1d(t_range=(-4.0, 4.0)) -> ProblemSpec:
    def sols(t):
        return [0.0] if t <= 0 else [-math.sqrt(t), 0.0, math.sqrt(t)]

    return ProblemSpec(
        name="pitchfork1d",
        dim=1,
        t_range=t_range,
        eval_F=lambda x, t: _a(x[0] ** 3 - t * x[0]),
        eval_DxF=lambda x, t: np.array([[3 * x[0] ** 2 - t]]),
        eval_dtF=lambda x, t: _a(-x[0]),
        eval_D2xF_dir=lambda x, t, v: _a(6 * x[0] * v[0] ** 2),
        eval_dtDxF_dir=lambda x, t, v: _a(-v[0]),
        smoothness_order=3,
        solutions=sols,
        description="x^3 - t*x",
    )


def cubicload(t_range=(-4.0, 4.0)) -> ProblemSpec:
    def sols(t):
        return sorted(float(r.real) for r in np.roots([1.0, 0.0, -1.0, -t]) if abs(r.imag) < 1e-9)

    return ProblemSpec(
        name="cubicload",
        dim=1,
        t_range=t_range,
        eval_F=lambda x, t: _a(x[0] ** 3 - x[0] - t),
        eval_DxF=lambda x, t: np.array([[3 * x[0] ** 2 - 1]]),
        eval_dtF=lambda x, t: _a(-1.0),
        eval_D2xF_dir=lambda x, t, v: _a(6 * x[0] * v[0] ** 2),
        eval_dtDxF_dir=lambda x, t, v: _a(0.0),
        smoothness_order=3,
        solutions=sols,
        description="x^3 - x - l(t), l(t) = t",
    )


def fold_product(n: int = 2, t_range=(-4.0, 4.0)) -> ProblemSpec:
    """The fold x1^2 - t in the first equation, stable identity block x_k = 0 after it."""

    def F(x, t):
        out = x.copy()
        out[0] = x[0] ** 2 - t
        return out

    def DxF(x, t):
        J = np.eye(n)
        J[0, 0] = 2 * x[0]
        return J

    def dtF(x, t):
        out = np.zeros(n)
        out[0] = -1.0
        return out

    def D2(x, t, v):
        out = np.zeros(n)
        out[0] = 2 * v[0] ** 2
        return out

    def sols(t):
        if t < 0:
            return []
        return [np.r_[s, np.zeros(n - 1)] for s in sorted({-math.sqrt(t), math.sqrt(t)})]

    return ProblemSpec(
        name=f"foldprod{n}",
        dim=n,
        t_range=t_range,
        eval_F=F,
        eval_DxF=DxF,
        eval_dtF=dtF,
        eval_D2xF_dir=D2,
        eval_dtDxF_dir=lambda x, t, v: np.zeros(n),
        smoothness_order=3,
        solutions=sols,
        description=f"(x1^2 - t, x2, ..., x{n})",
    )


def linear1d(t_range=(-4.0, 4.0)) -> ProblemSpec:
    return ProblemSpec(
        name="linear1d",
        dim=1,
        t_range=t_range,
        eval_F=lambda x, t: _a(x[0] - t),
        eval_DxF=lambda x, t: np.array([[1.0]]),
        eval_dtF=lambda x, t: _a(-1.0),
        eval_D2xF_dir=lambda x, t, v: _a(0.0),
        eval_dtDxF_dir=lambda x, t, v: _a(0.0),
        smoothness_order=3,
        solutions=lambda t: [t],
        description="x - t",
    )


def linear3d(t_range=(-4.0, 4.0)) -> ProblemSpec:
    ones = np.ones(3)
    return ProblemSpec(
        name="linear3d",
        dim=3,
        t_range=t_range,
        eval_F=lambda x, t: x - t * ones,
        eval_DxF=lambda x, t: np.eye(3),
        eval_dtF=lambda x, t: -ones,
        eval_D2xF_dir=lambda x, t, v: np.zeros(3),
        eval_dtDxF_dir=lambda x, t, v: np.zeros(3),
        smoothness_order=3,
        solutions=lambda t: [t * ones],
        description="x - t*(1,1,1)",
    )


def sine1d(t_range=(-4.0, 4.0)) -> ProblemSpec:
    # no analytic derivatives: exercises the finite-difference fallbacks
    return ProblemSpec(
        name="sine1d",
        dim=1,
        t_range=t_range,
        eval_F=lambda x, t: _a(x[0] - math.sin(t)),
        smoothness_order=3,
        solutions=lambda t: [math.sin(t)],
        description="x - sin(t)",
    )


def _allen_cahn(m):
    def factory():
        from .energy import catalog_allen_cahn

        return catalog_allen_cahn(m).problem

    return factory


_CATALOG: dict[str, Callable[[], ProblemSpec]] = {
    "fold1d": fold1d,
    "pitchfork1d": pitchfork1d,
    "cubicload": cubicload,
    "foldprod2": lambda: fold_product(2),
    "foldprod4": lambda: fold_product(4),
    "linear1d": linear1d,
    "linear3d": linear3d,
    "sine1d": sine1d,
    "allencahn32": _allen_cahn(32),
    "allencahn64": _allen_cahn(64),
}


def catalog_names() -> list[str]:
    return list(_CATALOG)


def get_problem(name: str) -> ProblemSpec:
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise NotFound(f"unknown problem {name!r}; known: {', '.join(_CATALOG)}") from None
    return factory()


def builtin_catalog() -> list[ProblemSpec]:
    return [factory() for factory in _CATALOG.values()]


# -- user-defined problems ------------------------------------------------

_CONFIG_KEYS = {"name", "dim", "t_range", "F", "smoothness_order"}


def problem_from_expressions(
    expressions: Sequence[str],
    t_range=(-4.0, 4.0),
    name: str = "user",
    smoothness_order: int = 2,
) -> ProblemSpec:
    """Build a problem from one expression string per equation.

    Derivatives are left to the finite-difference fallbacks.
    """
    n = len(expressions)
    if n == 0:
        raise NonSquareSystem("at least one equation is required")
    variables = [f"x{i + 1}" for i in range(n)] + ["t"]
    fns = [compile_expression(e, variables) for e in expressions]

    def F(x, t):
        return np.array([f(*x, t) for f in fns])

    return ProblemSpec(
        name=name,
        dim=n,
        t_range=tuple(t_range),
        eval_F=F,
        smoothness_order=smoothness_order,
        description="; ".join(expressions),
    )


def problem_from_config(config: dict | str | Path) -> ProblemSpec:
    """Load a declarative problem: ``{dim, t_range, F: [...], name?, smoothness_order?}``.

    Accepts a mapping or a path to a JSON/YAML file.  Unknown keys and
    non-square systems (``len(F) != dim``) are rejected.
    """
    if not isinstance(config, dict):
        path = Path(config)
        text = path.read_text()
        if path.suffix in (".yaml", ".yml"):
            import yaml

            config = yaml.safe_load(text)
        else:
            config = json.loads(text)
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown problem config keys: {sorted(unknown)}")
    for key in ("dim", "F"):
        if key not in config:
            raise ValueError(f"problem config is missing {key!r}")
    exprs = list(config["F"])
    if len(exprs) != int(config["dim"]):
        raise NonSquareSystem(f"{len(exprs)} equations for dim={config['dim']}")
    return problem_from_expressions(
        exprs,
        t_range=tuple(config.get("t_range", (-4.0, 4.0))),
        name=config.get("name", "user"),
        smoothness_order=int(config.get("smoothness_order", 2)),
    )
