"""Pseudo-arclength continuation of the zero set, fold detection and refinement.

Tangents are unit vectors in the product norm |(dx, dt)|^2 = |dx|^2 + dt^2.
Folds are bracketed by a sign change of the tangent's t-component and then
pinned by the bordered Newton solve of :mod:`transfold.solve`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DomainError,
    EvaluationError,
    InsufficientData,
    NewtonFailure,
    NotOnZeroSet,
    RankDeficientStart,
    StartNotOnCurve,
)
from .problem import Point, ProblemSpec
from .solve import NewtonConfig, damped_newton, deduplicate, enumerate_section, newton_augmented, newton_fixed_t, sep_tol
from .spectral import TolPolicy, rank_report
from .transversality import (
    DEFAULT_CERT_TOL,
    TRANSVERSAL,
    AugmentedPoint,
    CertTolerances,
    TransversalityCertificate,
    certify,
    check_dF_onto,
)

REGULAR_NODE = "Regular"
NEAR_SINGULAR_NODE = "NearSingular"


@dataclass(frozen=True)
class StepConfig:
    h0: float = 0.05
    h_min: float = 1e-7
    h_max: float = 0.1
    grow: float = 1.3
    grow_after: int = 3
    max_nodes: int = 5000
    curve_tol: float = 1e-11
    corrector_iter: int = 15
    min_cos: float = 0.95
    near_singular_tol: float = 1e-3
    step_tol: float = 1e-10
    t_bounds: tuple[float, float] | None = None

    def corrector(self, step_tol: float | None = None) -> NewtonConfig:
        return NewtonConfig(
            max_iter=self.corrector_iter, abs_tol=self.curve_tol, step_tol=step_tol or self.step_tol
        )

    def bounds(self, problem: ProblemSpec) -> tuple[float, float]:
        lo, hi = problem.t_range
        pad = 1e-6 * (hi - lo)
        if self.t_bounds is None:
            return lo + pad, hi - pad
        return max(self.t_bounds[0], lo + pad), min(self.t_bounds[1], hi - pad)


DEFAULT_STEP = StepConfig()


@dataclass(frozen=True)
class FoldRecord:
    point: Point
    certificate: TransversalityCertificate
    tdot: float
    tddot_estimate: float
    side: int
    kernel_v: np.ndarray
    method: str = "augmented"


@dataclass
class BranchCurve:
    x: np.ndarray
    t: np.ndarray
    tangents: np.ndarray
    classifications: list[str]
    arclength: np.ndarray
    folds: list[FoldRecord] = field(default_factory=list)
    termination: str = ""
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def nodes(self) -> list[Point]:
        return [Point(x, t) for x, t in zip(self.x, self.t)]

    def z(self, i: int) -> np.ndarray:
        return np.r_[self.x[i], self.t[i]]


def _scaled_tol(cfg: StepConfig, x, J) -> float:
    return cfg.corrector().tolerance(x, J)


def null_direction(dF: np.ndarray) -> np.ndarray:
    """Unit vector spanning the kernel of an n x (n+1) matrix of rank n."""
    _, _, Vt = np.linalg.svd(dF)
    return Vt[-1]


def _tangent(problem, z, ref):
    n = problem.dim
    dF = problem.total_differential(z[:n], z[n])
    M = np.vstack([dF, ref])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    try:
        tau = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(tau)):
        return None
    return tau / np.linalg.norm(tau)


def _correct(problem, z_pred, normal, cfg: StepConfig, step_tol: float | None = None):
    n = problem.dim

    def res(z):
        return np.r_[problem.F(z[:n], z[n]), normal @ (z - z_pred)]

    def jac(z):
        return np.vstack([problem.total_differential(z[:n], z[n]), normal])

    z, _, _ = damped_newton(res, jac, z_pred, cfg.corrector(step_tol))
    return z


def _on_curve(problem, z, cfg):
    n = problem.dim
    r = float(np.linalg.norm(problem.F(z[:n], z[n])))
    J = problem.jacobian_x(z[:n], z[n])
    return r <= _scaled_tol(cfg, z[:n], J)


def trace_branch(
    problem: ProblemSpec,
    start: Point,
    direction: int = 1,
    step_cfg: StepConfig = DEFAULT_STEP,
) -> BranchCurve:
    """Trace the component of the zero set through ``start``.

    ``direction=+1`` starts towards increasing t (or, at a start with
    vertical tangent, towards the positive first nonzero x-component).
    Tracing stops at the t-bounds, on step underflow, when the curve
    closes on itself, or after ``max_nodes`` nodes.
    """
    cfg = step_cfg
    n = problem.dim
    t_lo, t_hi = cfg.bounds(problem)
    if not t_lo <= start.t <= t_hi:
        raise DomainError(f"start t={start.t} outside tracing bounds {(t_lo, t_hi)}")
    z = np.r_[start.x, start.t]
    if not _on_curve(problem, z, cfg):
        raise StartNotOnCurve(f"|F(start)| = {np.linalg.norm(problem.F(start.x, start.t)):.3e}")
    dF = problem.total_differential(start.x, start.t)
    if rank_report(dF, TolPolicy()).numerical_rank < n:
        raise RankDeficientStart("total differential is not onto at the start point")

    tau = null_direction(dF)
    if abs(tau[n]) > 1e-12:
        tau = tau if tau[n] * direction > 0 else -tau
    else:
        lead = next((c for c in tau if abs(c) > 1e-12), 1.0)
        tau = tau if lead * direction > 0 else -tau

    xs, ts, taus = [z[:n].copy()], [z[n]], [tau]
    z0, tau0 = z.copy(), tau.copy()
    h = cfg.h0
    successes = 0
    termination = "max_nodes"

    while len(ts) < cfg.max_nodes:
        if h < cfg.h_min:
            termination = "step_underflow"
            break
        z_pred = z + h * tau
        if not t_lo <= z_pred[n] <= t_hi:
            # land the last node exactly on the boundary when the branch is not vertical there
            t_b = t_hi if z_pred[n] > t_hi else t_lo
            if abs(tau[n]) > 1e-8:
                frac = (t_b - z[n]) / tau[n]
                if frac <= 1e-14:
                    termination = "boundary"
                    break
                try:
                    xb = newton_fixed_t(problem, t_b, z[:n] + frac * tau[:n], cfg.corrector())
                    zb = np.r_[xb, t_b]
                    tb = _tangent(problem, zb, tau)
                    if tb is not None and np.linalg.norm(zb - z) <= 2 * frac and tb @ tau >= cfg.min_cos:
                        xs.append(xb)
                        ts.append(t_b)
                        taus.append(tb)
                        termination = "boundary"
                        break
                except (NewtonFailure, DomainError, EvaluationError):
                    pass
            h *= 0.5
            successes = 0
            if h < cfg.h_min:
                termination = "boundary"
                break
            continue
        try:
            z_new = _correct(problem, z_pred, tau, cfg)
            tau_new = _tangent(problem, z_new, tau)
        except (NewtonFailure, DomainError, EvaluationError):
            z_new, tau_new = None, None
        ok = (
            tau_new is not None
            and t_lo <= z_new[n] <= t_hi
            and float(tau_new @ tau) >= cfg.min_cos
            and float(np.linalg.norm(z_new - z)) <= 1.5 * h
        )
        if not ok:
            h *= 0.5
            successes = 0
            continue
        z, tau = z_new, tau_new
        xs.append(z[:n].copy())
        ts.append(z[n])
        taus.append(tau)
        successes += 1
        if successes >= cfg.grow_after:
            h = min(h * cfg.grow, cfg.h_max)
            successes = 0
        if len(ts) > 5 and np.linalg.norm(z - z0) < max(h, sep_tol(z0)) and tau @ tau0 > 0:
            termination = "closed_loop"
            break

    X = np.array(xs)
    T = np.array(ts)
    TAU = np.array(taus)
    Z = np.column_stack([X, T])
    arclength = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(Z, axis=0), axis=1))]
    classes = [NEAR_SINGULAR_NODE if abs(tt[n]) <= cfg.near_singular_tol else REGULAR_NODE for tt in TAU]
    return BranchCurve(
        x=X,
        t=T,
        tangents=TAU,
        classifications=classes,
        arclength=arclength,
        termination=termination,
        metadata={"norm": "product |(dx, dt)|^2 = |dx|^2 + dt^2", "direction": int(direction)},
    )


def detect_folds(curve: BranchCurve) -> list[tuple[int, int]]:
    """Index pairs (i, i+1) across which the tangent's t-component changes sign."""
    tt = curve.tangents[:, -1]
    return [(i, i + 1) for i in range(len(tt) - 1) if tt[i] * tt[i + 1] < 0]


def _bisect_fold(problem, za, ta, zb, tb, cfg: StepConfig, max_iter: int = 80):
    """Locate the zero of the tangent's t-component between two curve nodes.

    Robust fallback when the bordered system is singular (non-transversal
    points); returns the best point found.
    """
    best = za if abs(ta[-1]) <= abs(tb[-1]) else zb
    best_tt = min(abs(ta[-1]), abs(tb[-1]))
    for _ in range(max_iter):
        chord = zb - za
        length = float(np.linalg.norm(chord))
        if length < 1e-13:
            break
        normal = chord / length
        zm_pred = 0.5 * (za + zb)
        try:
            # tight step test: near degenerate points the curve lives at scale |x|^2
            zm = _correct(problem, zm_pred, normal, cfg, step_tol=1e-14)
            tm = _tangent(problem, zm, ta)
        except (NewtonFailure, DomainError, EvaluationError):
            break
        if tm is None:
            break
        if abs(tm[-1]) < best_tt:
            best, best_tt = zm, abs(tm[-1])
        if tm[-1] == 0.0:
            break
        if tm[-1] * ta[-1] < 0:
            zb, tb = zm, tm
        else:
            za, ta = zm, tm
    return best


def _curve_t_at(problem, z_fold, tau, s, cfg):
    z = _correct(problem, z_fold + s * tau, tau, cfg, step_tol=1e-14)
    return z[-1]


def refine_fold(
    problem: ProblemSpec,
    curve: BranchCurve,
    bracket: tuple[int, int],
    step_cfg: StepConfig = DEFAULT_STEP,
    tols: CertTolerances = DEFAULT_CERT_TOL,
    newton_cfg: NewtonConfig | None = None,
    tddot_step: float = 1e-3,
) -> FoldRecord:
    """Pin the singular point inside ``bracket`` and certify it.

    The bordered Newton solve is tried first.  If it fails, the tangent
    sign change is bisected along the curve instead, which still yields a
    point of the zero set for the certificate.  ``tddot_estimate`` is the
    second difference of t along the curve and is NaN when the total
    differential is not onto at the point, or (T1)/(T2) fail there.
    """
    n = problem.dim
    i, j = bracket
    za, zb = curve.z(i), curve.z(j)
    ta, tb = curve.tangents[i], curve.tangents[j]
    alpha = ta[-1] / (ta[-1] - tb[-1])
    z_guess = za + alpha * (zb - za)
    tau_guess = ta + alpha * (tb - ta)
    v_guess = tau_guess[:n]
    if np.linalg.norm(v_guess) < 1e-12:
        v_guess = np.ones(n)
    v_guess = v_guess / np.linalg.norm(v_guess)
    span = float(np.linalg.norm(zb - za))

    z_fold = None
    method = "augmented"
    try:
        q = newton_augmented(problem, AugmentedPoint(z_guess[:n], z_guess[n], v_guess), newton_cfg or NewtonConfig())
        zq = np.r_[q.x, q.t]
        if np.linalg.norm(zq - z_guess) <= 2 * span + 1e-8:
            z_fold = zq
    except (NewtonFailure, DomainError, EvaluationError):
        pass
    if z_fold is None:
        method = "bisection"
        z_fold = _bisect_fold(problem, za, ta, zb, tb, step_cfg)

    p = Point(z_fold[:n], z_fold[n])
    cert = certify(problem, p, tols)
    dF = problem.total_differential(p.x, p.t)
    tau_fold = null_direction(dF)
    if tau_fold @ tau_guess < 0:
        tau_fold = -tau_fold
    kernel_v = cert.kernel.v if cert.kernel is not None else v_guess

    # the smooth curve through p exists only where (T1) and (T2) hold (dF onto)
    onto = cert.passes_t1_t2 and check_dF_onto(problem, p, tols)[0]
    tddot = math.nan
    if onto:
        try:
            t_plus = _curve_t_at(problem, z_fold, tau_fold, tddot_step, step_cfg)
            t_minus = _curve_t_at(problem, z_fold, tau_fold, -tddot_step, step_cfg)
            tddot = (t_plus - 2 * p.t + t_minus) / tddot_step**2
        except (NewtonFailure, DomainError, EvaluationError):
            tddot = math.nan
    side = int(np.sign(tddot)) if np.isfinite(tddot) else 0
    return FoldRecord(
        point=p,
        certificate=cert,
        tdot=float(abs(tau_fold[-1])),
        tddot_estimate=float(tddot),
        side=side,
        kernel_v=np.asarray(kernel_v),
        method=method,
    )


def fold_distances(problem: ProblemSpec, fold: FoldRecord, offsets, cfg: NewtonConfig | None = None):
    """Distance between the two zeros near ``fold`` at ``t0 + side * delta``.

    Returns a list of ``(delta, distance)`` for offsets resolving two
    distinct zeros.
    """
    cfg = cfg or NewtonConfig()
    x0, t0 = fold.point.x, fold.point.t
    v = fold.kernel_v / np.linalg.norm(fold.kernel_v)
    curv = abs(fold.tddot_estimate) if np.isfinite(fold.tddot_estimate) and fold.tddot_estimate != 0 else 2.0
    side = fold.side if fold.side != 0 else 1
    out = []
    for delta in offsets:
        t = t0 + side * delta
        if not problem.in_domain(t):
            continue
        s = math.sqrt(2 * delta / curv)
        try:
            a = newton_fixed_t(problem, t, x0 + s * v, cfg)
            b = newton_fixed_t(problem, t, x0 - s * v, cfg)
        except NewtonFailure:
            continue
        d = float(np.linalg.norm(a - b))
        if d > sep_tol(x0):
            out.append((float(delta), d))
    return out


def quadratic_separation_check(problem: ProblemSpec, fold: FoldRecord | None, offsets=(1e-2, 1e-3, 1e-4)) -> float:
    """Fitted exponent p of distance ~ delta^p between the two zeros near a fold."""
    if fold is None:
        raise InsufficientData("no fold given")
    data = fold_distances(problem, fold, offsets)
    if len(data) < 3:
        raise InsufficientData(f"only {len(data)} offsets resolved two distinct zeros")
    logd = np.log([d for _, d in data])
    logt = np.log([o for o, _ in data])
    slope, _ = np.polyfit(logt, logd, 1)
    return float(slope)


# -- scanning for all folds in a window ------------------------------------


@dataclass(frozen=True)
class ScanConfig:
    """Where to look for folds: an x-box and a t-window.

    Sections are enumerated at ``t_samples`` (default: both window ends
    and the midpoint) and every root is traced both ways.
    """

    box: tuple[tuple[float, float], ...]
    t_window: tuple[float, float]
    t_samples: tuple[float, ...] | None = None
    grid_density: int = 9
    step: StepConfig = DEFAULT_STEP
    starts: tuple | None = None

    def samples(self) -> tuple[float, ...]:
        if self.t_samples is not None:
            return tuple(self.t_samples)
        lo, hi = self.t_window
        return (lo, 0.5 * (lo + hi), hi)

    def as_dict(self) -> dict:
        return {
            "box": [list(b) for b in self.box],
            "t_window": list(self.t_window),
            "t_samples": list(self.samples()),
            "grid_density": self.grid_density,
        }


def _near_traced(z, curves, h):
    for c in curves:
        Z = np.column_stack([c.x, c.t])
        if np.min(np.linalg.norm(Z - z, axis=1)) <= h:
            return True
    return False


@dataclass
class ScanResult:
    curves: list[BranchCurve]
    folds: list[FoldRecord]
    failures: list[str]


def scan_folds(problem: ProblemSpec, scan: ScanConfig, tols: CertTolerances = DEFAULT_CERT_TOL) -> ScanResult:
    """Find, refine and certify every fold reachable from the sampled sections."""
    lo, hi = scan.t_window
    step = replace(scan.step, t_bounds=(lo, hi))
    curves: list[BranchCurve] = []
    folds: list[FoldRecord] = []
    failures: list[str] = []
    for t in scan.samples():
        t = min(max(t, step.bounds(problem)[0]), step.bounds(problem)[1])
        section = enumerate_section(problem, t, scan.box, scan.grid_density, starts=scan.starts)
        for root in section.zeros:
            z = np.r_[root, t]
            if _near_traced(z, curves, step.h_max):
                continue
            for direction in (1, -1):
                try:
                    curve = trace_branch(problem, Point(root, t), direction, step)
                except (StartNotOnCurve, RankDeficientStart) as exc:
                    failures.append(f"trace from t={t}: {exc}")
                    continue
                curves.append(curve)
                for bracket in detect_folds(curve):
                    try:
                        rec = refine_fold(problem, curve, bracket, step, tols)
                    except (NewtonFailure, NotOnZeroSet, DomainError, EvaluationError) as exc:
                        failures.append(f"refine near t={curve.t[bracket[0]]:.6g}: {exc}")
                        continue
                    z_rec = np.r_[rec.point.x, rec.point.t]
                    if not any(np.linalg.norm(z_rec - np.r_[f.point.x, f.point.t]) <= 1e-6 * (1 + np.linalg.norm(z_rec)) for f in folds):
                        folds.append(rec)
                        curve.folds.append(rec)
    folds.sort(key=lambda f: (f.point.t, tuple(f.point.x)))
    return ScanResult(curves=curves, folds=folds, failures=failures)


def section_from_curve(curve: BranchCurve, problem: ProblemSpec, t: float, cfg: NewtonConfig | None = None) -> list[np.ndarray]:
    """Zeros of F(., t) read off a traced curve (interpolate, then polish)."""
    out = []
    for i in range(len(curve) - 1):
        a, b = curve.t[i] - t, curve.t[i + 1] - t
        if a == 0.0:
            out.append(curve.x[i])
        elif a * b < 0:
            w = a / (a - b)
            guess = curve.x[i] + w * (curve.x[i + 1] - curve.x[i])
            out.append(newton_fixed_t(problem, t, guess, cfg or NewtonConfig()))
    return deduplicate(out)


def is_transversal(fold: FoldRecord) -> bool:
    return fold.certificate.classification == TRANSVERSAL
