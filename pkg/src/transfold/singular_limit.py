"""The singular perturbation eps x' + f(x, t) = 0 and its eps -> 0 limit.

Trajectories are integrated with implicit Euler and step-doubling error
control.  The limit candidate follows stable equilibrium branches and, at
a fold ending the current branch, jumps along the frozen-time gradient
flow theta' = -f(theta, t_fold) to the next attractor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .continuation import BranchCurve, FoldRecord, StepConfig, detect_folds, refine_fold, trace_branch
from .errors import (
    DomainError,
    EvaluationError,
    NewtonFailure,
    NewtonFailureInStep,
    NoAttractorFound,
    NoConvergence,
    NonTransversalFoldEncountered,
    StepUnderflow,
)
from .problem import Point, ProblemSpec
from .solve import NewtonConfig, damped_newton, newton_fixed_t
from .transversality import DEFAULT_CERT_TOL, TRANSVERSAL, CertTolerances

STABLE = "stable"
UNSTABLE = "unstable"
STABILITY_THRESHOLD = 1e-8


@dataclass(frozen=True)
class ODEConfig:
    """Implicit Euler settings.

    A step is accepted when the step-doubling error estimate is at most
    ``ode_tol * (1 + |x|)``.
    """

    ode_tol: float = 1e-7
    dt0: float | None = None
    dt_min: float = 1e-14
    dt_max: float | None = None
    max_steps: int = 2_000_000
    newton: NewtonConfig = field(default_factory=lambda: NewtonConfig(max_iter=25, step_tol=1e-8))


@dataclass(frozen=True)
class FlowConfig:
    """Settings of the frozen-time gradient flow."""

    het_tol: float = 1e-10
    s_max: float = 1e7
    ds0: float = 1e-2
    ode_tol: float = 1e-6
    escape_radius: float = 1e6
    lyapunov_tol: float = 1e-10
    newton: NewtonConfig = field(default_factory=lambda: NewtonConfig(max_iter=25, step_tol=1e-8))


@dataclass(frozen=True)
class LimitConfig:
    step: StepConfig = field(default_factory=lambda: StepConfig(h0=0.02, h_max=0.05))
    flow: FlowConfig = field(default_factory=FlowConfig)
    tols: CertTolerances = DEFAULT_CERT_TOL
    jump_offset: float = 1e-4
    abs_tol: float = 1e-9
    max_jumps: int = 20
    # jump windows have half-width window_c * eps^(2/3) ("eps_two_thirds", the
    # delay scale of slow passage through a fold) or window_c * eps * log(1/eps)
    # ("eps_log"); the initial layer is always eps * log(1/eps) wide
    window_c: float = 3.0
    window_rule: str = "eps_two_thirds"

    def jump_window(self, eps: float) -> float:
        if self.window_rule == "eps_two_thirds":
            return self.window_c * eps ** (2.0 / 3.0)
        if self.window_rule == "eps_log":
            return exclusion_halfwidth(eps, self.window_c)
        raise ValueError(f"unknown window_rule {self.window_rule!r}")

    def initial_window(self, eps: float) -> float:
        return exclusion_halfwidth(eps, 1.0)


@dataclass
class FlowTrace:
    epsilon: float | None
    times: np.ndarray
    states: np.ndarray
    accepted: int = 0
    rejected: int = 0
    newton_iters: list[int] = field(default_factory=list)
    inner_flow: bool = False
    t_frozen: float | None = None
    max_energy_increase: float = 0.0

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]


def _implicit_euler_step(problem, x, t_new, c, cfg: NewtonConfig):
    """Solve y + c f(y, t_new) = x.  Returns (y, newton iterations)."""
    n = problem.dim
    eye = np.eye(n)
    y, it, _ = damped_newton(
        lambda y: y + c * problem.F(y, t_new) - x,
        lambda y: eye + c * problem.jacobian_x(y, t_new),
        x,
        cfg,
    )
    return y, it


def integrate_eps_flow(problem: ProblemSpec, x0, eps: float, t_span, ode_cfg: ODEConfig | None = None) -> FlowTrace:
    """Integrate eps x' + f(x, t) = 0 over ``t_span = (t0, t1)`` with t0 < t1."""
    cfg = ode_cfg or ODEConfig()
    if not eps > 0:
        raise ValueError("eps must be positive")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t0 < t1:
        raise ValueError("t_span must be increasing")
    if not (problem.in_domain(t0) and problem.in_domain(t1)):
        raise DomainError(f"t_span {t_span} not inside {problem.t_range}")
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape[0] != problem.dim or not np.all(np.isfinite(x)):
        raise ValueError("x0 must be a finite vector of the problem dimension")

    span = t1 - t0
    dt = cfg.dt0 if cfg.dt0 is not None else 1e-2 * min(eps, span)
    dt_max = cfg.dt_max if cfg.dt_max is not None else span / 10
    times, states, iters = [t0], [x.copy()], []
    t = t0
    accepted = rejected = 0
    while t < t1:
        if accepted + rejected >= cfg.max_steps:
            raise NoConvergence(f"max_steps={cfg.max_steps} reached at t={t}")
        dt = min(dt, t1 - t)
        if dt < cfg.dt_min:
            raise StepUnderflow(f"step {dt:.3e} below dt_min at t={t}")
        try:
            full, k1 = _implicit_euler_step(problem, x, t + dt, dt / eps, cfg.newton)
            half, k2 = _implicit_euler_step(problem, x, t + dt / 2, dt / (2 * eps), cfg.newton)
            two, k3 = _implicit_euler_step(problem, half, t + dt, dt / (2 * eps), cfg.newton)
        except (NewtonFailure, EvaluationError) as exc:
            if dt / 2 < cfg.dt_min:
                raise NewtonFailureInStep(f"Newton failed at t={t}, dt={dt:.3e}: {exc}") from exc
            dt /= 2
            rejected += 1
            continue
        err = float(np.linalg.norm(two - full))
        tol = cfg.ode_tol * (1.0 + float(np.linalg.norm(two)))
        if err > tol:
            rejected += 1
            dt *= max(0.2, 0.9 * math.sqrt(tol / err))
            continue
        t = t1 if t1 - (t + dt) <= 1e-14 * max(1.0, abs(t1)) else t + dt
        x = two
        times.append(t)
        states.append(x.copy())
        iters.append(k1 + k2 + k3)
        accepted += 1
        grow = 2.0 if err == 0 else min(2.0, 0.9 * math.sqrt(tol / err))
        dt = min(dt * max(grow, 0.2), dt_max)
    return FlowTrace(eps, np.array(times), np.array(states), accepted, rejected, iters)


def stability(problem: ProblemSpec, x, t) -> str:
    """Stable when every eigenvalue of -D_x f has real part below -threshold."""
    eig = np.linalg.eigvals(-problem.jacobian_x(x, t))
    return STABLE if float(np.max(eig.real)) < -STABILITY_THRESHOLD else UNSTABLE


def inner_gradient_flow(problem: ProblemSpec, t_frozen: float, theta0, flow_cfg: FlowConfig | None = None, energy=None):
    """Integrate theta' = -f(theta, t_frozen) until |f| <= het_tol.

    Args:
        energy: optional ``theta -> E(theta, t_frozen)``; steps raising it by
            more than the Lyapunov tolerance are rejected.

    Returns:
        ``(trace, endpoint, stability)``.
    """
    cfg = flow_cfg or FlowConfig()
    if not problem.in_domain(t_frozen):
        raise DomainError(f"t={t_frozen} outside {problem.t_range}")
    x = np.array(theta0, dtype=float).reshape(-1)
    s, ds = 0.0, cfg.ds0
    svals, states, iters = [0.0], [x.copy()], []
    accepted = rejected = 0
    max_increase = 0.0
    e_old = energy(x) if energy is not None else None

    def trace():
        return FlowTrace(None, np.array(svals), np.array(states), accepted, rejected, iters, True, t_frozen, max_increase)

    while float(np.linalg.norm(problem.F(x, t_frozen))) > cfg.het_tol:
        if s > cfg.s_max:
            raise NoConvergence(f"no equilibrium reached by s={cfg.s_max:g}", trace=trace())
        if float(np.linalg.norm(x)) > cfg.escape_radius:
            raise NoConvergence("trajectory escaped", trace=trace())
        if ds < 1e-14:
            raise NoConvergence(f"step underflow at s={s:g}", trace=trace())
        try:
            full, k1 = _implicit_euler_step(problem, x, t_frozen, ds, cfg.newton)
            half, k2 = _implicit_euler_step(problem, x, t_frozen, ds / 2, cfg.newton)
            two, k3 = _implicit_euler_step(problem, half, t_frozen, ds / 2, cfg.newton)
        except (NewtonFailure, EvaluationError):
            ds /= 2
            rejected += 1
            continue
        err = float(np.linalg.norm(two - full))
        tol = cfg.ode_tol * (1.0 + float(np.linalg.norm(two)))
        if err > tol:
            ds *= max(0.2, 0.9 * math.sqrt(tol / err))
            rejected += 1
            continue
        if energy is not None:
            e_new = energy(two)
            increase = e_new - e_old
            if increase > cfg.lyapunov_tol * (1.0 + abs(e_old)):
                ds /= 2
                rejected += 1
                continue
            max_increase = max(max_increase, increase)
            e_old = e_new
        x = two
        s += ds
        svals.append(s)
        states.append(x.copy())
        iters.append(k1 + k2 + k3)
        accepted += 1
        grow = 2.0 if err == 0 else min(2.0, 0.9 * math.sqrt(tol / err))
        ds *= max(grow, 0.2)
    return trace(), x, stability(problem, x, t_frozen)


# -- limit curve ---------------------------------------------------------------


@dataclass
class LimitSegment:
    branch: BranchCurve
    stability: str


@dataclass
class Jump:
    t_jump: float
    x_minus: np.ndarray
    x_plus: np.ndarray
    inner_trace: FlowTrace
    fold: FoldRecord | None = None
    seed_sign: int = 1


@dataclass
class LimitCurve:
    segments: list[LimitSegment]
    jumps: list[Jump]
    t_span: tuple[float, float]
    hypotheses: dict = field(default_factory=dict)

    @property
    def jump_times(self) -> list[float]:
        return [j.t_jump for j in self.jumps]

    def segment_at(self, t: float) -> LimitSegment:
        """The segment whose t-interval contains ``t`` (later segments win at jump times)."""
        for seg in reversed(self.segments):
            lo, hi = float(np.min(seg.branch.t)), float(np.max(seg.branch.t))
            if lo - 1e-12 <= t <= hi + 1e-12:
                return seg
        raise DomainError(f"t={t} not covered by the limit curve")

    def value_at(self, problem: ProblemSpec, t: float, cfg: NewtonConfig | None = None) -> np.ndarray:
        """Equilibrium of the limit at time ``t``, polished by Newton from the segment nodes."""
        seg = self.segment_at(t)
        order = np.argsort(seg.branch.t)
        ts = seg.branch.t[order]
        guess = np.array([np.interp(t, ts, seg.branch.x[order, k]) for k in range(seg.branch.x.shape[1])])
        try:
            return newton_fixed_t(problem, t, guess, cfg or NewtonConfig())
        except NewtonFailure:
            return guess


def _cut_at(curve: BranchCurve, last: int, extra: np.ndarray | None) -> BranchCurve:
    x, t, tau = curve.x[: last + 1], curve.t[: last + 1], curve.tangents[: last + 1]
    if extra is not None:
        n = curve.x.shape[1]
        x = np.vstack([x, extra[:n]])
        t = np.r_[t, extra[n]]
        tau = np.vstack([tau, tau[-1]])
    Z = np.column_stack([x, t])
    arc = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(Z, axis=0), axis=1))]
    classes = curve.classifications[: last + 1] + (["fold"] if extra is not None else [])
    return BranchCurve(x, t, tau, classes, arc, termination="fold" if extra is not None else curve.termination,
                       metadata=dict(curve.metadata))


def _settle(problem, t, x, cfg: LimitConfig):
    try:
        _, endpoint, stab = inner_gradient_flow(problem, t, x, cfg.flow)
    except NoConvergence as exc:
        raise NoAttractorFound(f"no attractor from the initial state at t={t}: {exc}") from exc
    if stab != STABLE:
        raise NoAttractorFound(f"initial state settles on an unstable equilibrium at t={t}")
    return newton_fixed_t(problem, t, endpoint)


def _jump(problem, fold: FoldRecord, cfg: LimitConfig) -> Jump:
    x_f, t_f = fold.point.x, fold.point.t
    v = fold.kernel_v / np.linalg.norm(fold.kernel_v)
    delta = cfg.jump_offset * (1.0 + float(np.linalg.norm(x_f)))
    landed = []
    for sign in (1, -1):
        try:
            trace, endpoint, stab = inner_gradient_flow(problem, t_f, x_f + sign * delta * v, cfg.flow)
        except NoConvergence:
            continue
        if stab == STABLE and float(np.linalg.norm(endpoint - x_f)) > 10 * delta:
            landed.append((sign, trace, endpoint))
    if not landed:
        raise NoAttractorFound(f"no attractor away from the fold at t={t_f}")
    if len(landed) == 2 and np.linalg.norm(landed[0][2] - landed[1][2]) > 1e-6 * (1 + np.linalg.norm(x_f)):
        raise NoAttractorFound(f"both seeds at the fold t={t_f} reach different attractors (ambiguous jump)")
    sign, trace, endpoint = landed[0]
    x_plus = newton_fixed_t(problem, t_f, endpoint)
    if float(np.linalg.norm(problem.F(x_plus, t_f))) > cfg.abs_tol:
        raise NoAttractorFound("jump endpoint fails the equilibrium re-check")
    return Jump(t_f, x_f.copy(), x_plus, trace, fold, sign)


def _check_hypotheses(problem, fold: FoldRecord) -> dict:
    """Single degenerate direction and semidefinite symmetric part at the fold."""
    J = problem.jacobian_x(fold.point.x, fold.point.t)
    sym = 0.5 * (J + J.T)
    ev = np.linalg.eigvalsh(sym)
    scale = max(1.0, float(np.max(np.abs(ev))))
    return {
        "t": fold.point.t,
        "single_degenerate_direction": bool(fold.certificate.kernel is not None and fold.certificate.kernel.kernel_dim_one()),
        "hessian_psd": bool(ev[0] >= -1e-8 * scale),
    }


def build_limit_curve(problem: ProblemSpec, x_init, t_span, cfg: LimitConfig | None = None) -> LimitCurve:
    """Stable branches of f(., t) = 0 joined by heteroclinic jumps at folds.

    ``t_span`` may be decreasing, in which case branches are followed
    backwards in t.
    """
    cfg = cfg or LimitConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    direction = 1 if t1 > t0 else -1
    step = replace(cfg.step, t_bounds=(min(t0, t1), max(t0, t1)))
    x = _settle(problem, t0, x_init, cfg)
    t = t0
    segments: list[LimitSegment] = []
    jumps: list[Jump] = []
    hypotheses = {"folds": []}
    while True:
        curve = trace_branch(problem, Point(x, t), direction, step)
        brackets = detect_folds(curve)
        if not brackets:
            segments.append(LimitSegment(curve, stability(problem, curve.x[len(curve) // 2], curve.t[len(curve) // 2])))
            break
        fold = refine_fold(problem, curve, brackets[0], step, cfg.tols)
        hypotheses["folds"].append(_check_hypotheses(problem, fold))
        if fold.certificate.classification != TRANSVERSAL:
            raise NonTransversalFoldEncountered(
                f"fold at t={fold.point.t:.10g} is {fold.certificate.classification} {fold.certificate.failures}", fold=fold
            )
        seg_curve = _cut_at(curve, brackets[0][0], np.r_[fold.point.x, fold.point.t])
        mid = len(seg_curve) // 2
        segments.append(LimitSegment(seg_curve, stability(problem, seg_curve.x[mid], seg_curve.t[mid])))
        if len(jumps) >= cfg.max_jumps:
            break
        jump = _jump(problem, fold, cfg)
        jumps.append(jump)
        x, t = jump.x_plus, jump.t_jump
    return LimitCurve(segments, jumps, (t0, t1), hypotheses)


# -- convergence ---------------------------------------------------------------


@dataclass
class ConvergenceTable:
    eps: list[float]
    distances: list[float]
    window_c: float
    window_rule: str
    windows: list[float]
    jump_times: list[float]
    observed_jump_times: list[list[float]]
    traces: list[FlowTrace] = field(default_factory=list, repr=False)


def exclusion_halfwidth(eps: float, c: float) -> float:
    return c * eps * math.log(1.0 / eps) if eps < 1 else 0.0


def observed_jump_time(trace: FlowTrace, jump: Jump) -> float:
    """First trace time after which the state is closer to x_plus than to x_minus."""
    d_plus = np.linalg.norm(trace.states - jump.x_plus, axis=1)
    d_minus = np.linalg.norm(trace.states - jump.x_minus, axis=1)
    idx = np.nonzero(d_plus < d_minus)[0]
    idx = idx[trace.times[idx] >= trace.times[0]]
    return float(trace.times[idx[0]]) if idx.size else math.nan


def sup_distance(problem: ProblemSpec, trace: FlowTrace, limit: LimitCurve, window: float, initial_window: float = 0.0) -> float:
    """sup_t |x_eps(t) - x_0(t)| over trace times away from the initial layer and the jumps.

    Returns NaN when every trace time is excluded.
    """
    t0 = trace.times[0]
    worst = math.nan
    for t, x in zip(trace.times, trace.states):
        if t - t0 <= initial_window or any(abs(t - tj) <= window for tj in limit.jump_times):
            continue
        d = float(np.linalg.norm(x - limit.value_at(problem, t)))
        worst = d if math.isnan(worst) else max(worst, d)
    return worst


def convergence_study(
    problem: ProblemSpec,
    x_init,
    t_span,
    eps_list,
    cfg: LimitConfig | None = None,
    ode_cfg: ODEConfig | None = None,
    workers: int = 1,
    limit: LimitCurve | None = None,
) -> ConvergenceTable:
    """Off-jump sup-distance between eps-trajectories and the limit curve, per eps."""
    cfg = cfg or LimitConfig()
    limit = limit or build_limit_curve(problem, x_init, t_span, cfg)

    def one(eps):
        trace = integrate_eps_flow(problem, x_init, eps, t_span, ode_cfg)
        w = cfg.jump_window(eps)
        return trace, w, sup_distance(problem, trace, limit, w, cfg.initial_window(eps)), [observed_jump_time(trace, j) for j in limit.jumps]

    eps_list = [float(e) for e in eps_list]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, eps_list))
    else:
        rows = [one(e) for e in eps_list]
    return ConvergenceTable(
        eps=eps_list,
        distances=[r[2] for r in rows],
        window_c=cfg.window_c,
        window_rule=cfg.window_rule,
        windows=[r[1] for r in rows],
        jump_times=limit.jump_times,
        observed_jump_times=[r[3] for r in rows],
        traces=[r[0] for r in rows],
    )
