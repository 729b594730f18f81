"""Newton solvers: fixed-t Newton, multistart section enumeration, bordered Newton."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import Diverged, DomainError, EvaluationError, MaxIterExceeded, NewtonFailure, SingularBorderedSystem, SingularJacobian
from .problem import ProblemSpec
from .transversality import AugmentedPoint, bilinear_columns


@dataclass(frozen=True)
class NewtonConfig:
    """Newton settings.

    Convergence needs ``|F| <= abs_tol * (1 + |x|) * max(1, |J|_inf)`` and a
    Newton correction below ``step_tol * (1 + |x|)``; the second test keeps
    flat residuals (near degenerate zeros) from ending the iteration early.
    """

    max_iter: int = 50
    abs_tol: float = 1e-12
    damping: float = 0.5
    min_step: float = 2.0**-20
    regularization: float | None = None
    trust_radius: float = 1e8
    max_cond: float = 1e14
    step_tol: float = 1e-9

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def tolerance(self, x, J) -> float:
        jscale = float(np.max(np.sum(np.abs(J), axis=1))) if J.size else 1.0
        return self.abs_tol * (1.0 + float(np.linalg.norm(x))) * max(1.0, jscale)


DEFAULT_NEWTON = NewtonConfig()


def _newton_step(J, r, cfg: NewtonConfig):
    try:
        step = np.linalg.solve(J, -r)
    except np.linalg.LinAlgError:
        step = None
    if step is not None and np.all(np.isfinite(step)):
        return step
    if cfg.regularization is None:
        return None
    lam = cfg.regularization
    return np.linalg.solve(J.T @ J + lam * np.eye(J.shape[1]), -J.T @ r)


def damped_newton(residual, jacobian, x0, cfg: NewtonConfig = DEFAULT_NEWTON, singular_exc=SingularJacobian):
    """Generic backtracking Newton on the merit ``|r|^2``.

    Returns ``(x, iterations, history)`` where ``history`` is the list of
    residual norms.  ``singular_exc`` is raised when the linear system
    cannot be solved.
    """
    x = np.array(x0, dtype=float)
    x_start = x.copy()
    r = residual(x)
    rn = float(np.linalg.norm(r))
    history = [rn]
    for it in range(cfg.max_iter + 1):
        J = jacobian(x)
        small = rn <= cfg.tolerance(x, J)
        singular = False
        if cfg.max_cond < np.inf and J.shape[0] <= 512 and cfg.regularization is None:
            s = np.linalg.svd(J, compute_uv=False)
            singular = s[-1] <= s[0] / cfg.max_cond
        step = None if singular else _newton_step(J, r, cfg)
        if small and (step is None or np.linalg.norm(step) <= cfg.step_tol * (1.0 + np.linalg.norm(x))):
            # independent final evaluation
            if float(np.linalg.norm(residual(x))) <= cfg.tolerance(x, J):
                return x, it, history
        if it == cfg.max_iter:
            break
        if step is None:
            raise singular_exc("Newton step not solvable (numerically singular system)", x=x, residual=rn)
        lam = 1.0
        while True:
            trial = x + lam * step
            try:
                r_trial = residual(trial)
                rn_trial = float(np.linalg.norm(r_trial))
            except (DomainError, EvaluationError):
                rn_trial = math.inf
            if rn_trial < rn or rn_trial == 0.0 or (small and rn_trial <= rn):
                break
            lam *= cfg.damping
            if lam < cfg.min_step:
                if small:
                    return x, it, history
                raise MaxIterExceeded("line search failed", x=x, residual=rn)
        x, r, rn = trial, r_trial, rn_trial
        history.append(rn)
        if float(np.linalg.norm(x - x_start)) > cfg.trust_radius:
            raise Diverged("iterates left the trust ball", x=x, residual=rn)
    raise MaxIterExceeded(f"no convergence in {cfg.max_iter} iterations", x=x, residual=rn)


def newton_fixed_t(problem: ProblemSpec, t: float, x_init, cfg: NewtonConfig = DEFAULT_NEWTON) -> np.ndarray:
    """Solve F(x, t) = 0 for x starting at ``x_init``."""
    x, _, _ = damped_newton(lambda x: problem.F(x, t), lambda x: problem.jacobian_x(x, t), x_init, cfg)
    return x


def newton_fixed_t_history(problem: ProblemSpec, t: float, x_init, cfg: NewtonConfig = DEFAULT_NEWTON):
    """Like :func:`newton_fixed_t` but also returns the iterates."""
    iterates = []

    def res(x):
        return problem.F(x, t)

    def jac(x):
        iterates.append(np.array(x))
        return problem.jacobian_x(x, t)

    x, _, history = damped_newton(res, jac, x_init, cfg)
    return x, iterates, history


# -- sections -------------------------------------------------------------


@dataclass(frozen=True)
class ZeroSetSection:
    t: float
    zeros: tuple[np.ndarray, ...]
    residuals: tuple[float, ...]
    min_pairwise_separation: float
    multistart_count: int
    failures: int


def sep_tol(x) -> float:
    return 1e-6 * (1.0 + float(np.linalg.norm(x)))


def deduplicate(roots: list[np.ndarray]) -> list[np.ndarray]:
    """Merge roots closer than :func:`sep_tol`; output in lexicographic order."""
    kept: list[np.ndarray] = []
    for r in sorted(roots, key=lambda a: tuple(a)):
        if not any(np.linalg.norm(r - k) <= sep_tol(k) for k in kept):
            kept.append(r)
    return sorted(kept, key=lambda a: tuple(a))


def _grid(box, density):
    axes = [np.linspace(lo, hi, density) for lo, hi in box]
    return [np.array(p) for p in itertools.product(*axes)]


def enumerate_section(
    problem: ProblemSpec,
    t: float,
    box,
    grid_density: int = 9,
    cfg: NewtonConfig = DEFAULT_NEWTON,
    starts=None,
    workers: int = 1,
) -> ZeroSetSection:
    """Multistart Newton from every node of a tensor grid over ``box``.

    ``box`` is a sequence of ``(lo, hi)`` per coordinate.  Explicit
    ``starts`` replace the grid (useful for discretized PDEs).
    """
    if starts is None:
        if len(box) != problem.dim:
            raise ValueError("box must give one interval per coordinate")
        if grid_density < 2:
            raise ValueError("grid_density must be at least 2")
        starts = _grid(box, grid_density)
    starts = [np.asarray(s, dtype=float) for s in starts]

    def attempt(x0):
        try:
            return newton_fixed_t(problem, t, x0, cfg)
        except NewtonFailure:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(attempt, starts))
    else:
        results = [attempt(s) for s in starts]

    found = [r for r in results if r is not None]
    zeros = deduplicate(found)
    residuals = tuple(float(np.linalg.norm(problem.F(z, t))) for z in zeros)
    if len(zeros) > 1:
        sep = min(float(np.linalg.norm(a - b)) for a, b in itertools.combinations(zeros, 2))
    else:
        sep = math.inf
    return ZeroSetSection(
        t=float(t),
        zeros=tuple(zeros),
        residuals=residuals,
        min_pairwise_separation=sep,
        multistart_count=len(starts),
        failures=len(starts) - len(found),
    )


# -- bordered system --------------------------------------------------------


def bordered_residual(problem: ProblemSpec, z: np.ndarray) -> np.ndarray:
    n = problem.dim
    x, t, v = z[:n], z[n], z[n + 1 :]
    return np.concatenate([problem.F(x, t), problem.jacobian_x(x, t) @ v, [v @ v - 1.0]])


def bordered_jacobian(problem: ProblemSpec, z: np.ndarray) -> np.ndarray:
    n = problem.dim
    x, t, v = z[:n], z[n], z[n + 1 :]
    J = problem.jacobian_x(x, t)
    M = np.zeros((2 * n + 1, 2 * n + 1))
    M[:n, :n] = J
    M[:n, n] = problem.dt_F(x, t)
    M[n : 2 * n, :n] = bilinear_columns(problem, x, t, v)
    M[n : 2 * n, n] = problem.dt_dx_F_dir(x, t, v)
    M[n : 2 * n, n + 1 :] = J
    M[2 * n, n + 1 :] = 2.0 * v
    return M


def newton_augmented(problem: ProblemSpec, q_init: AugmentedPoint, cfg: NewtonConfig = DEFAULT_NEWTON) -> AugmentedPoint:
    """Solve (F, D_x F v, |v|^2 - 1) = 0 for (x, t, v).

    The bordered Jacobian is regular near transversal folds; a
    numerically singular one raises :class:`SingularBorderedSystem`.
    """
    nv = float(np.linalg.norm(q_init.v))
    if not 0.5 <= nv <= 2.0:
        raise ValueError("initial |v| must lie in [0.5, 2]")
    n = problem.dim
    z0 = np.concatenate([q_init.x, [q_init.t], q_init.v])
    z, _, _ = damped_newton(
        lambda z: bordered_residual(problem, z),
        lambda z: bordered_jacobian(problem, z),
        z0,
        cfg,
        singular_exc=SingularBorderedSystem,
    )
    v = z[n + 1 :]
    return AugmentedPoint(z[:n], z[n], v / np.linalg.norm(v))


def write_section_csv(section: ZeroSetSection, path_or_file) -> None:
    """CSV rows ``t, root_index, x1..xn, residual``."""
    from .io import write_section_csv as _write

    _write(section, path_or_file)
