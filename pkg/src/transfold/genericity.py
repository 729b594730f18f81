"""Perturbation families F + y + K x, rescue constructions and Monte-Carlo genericity."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .continuation import ScanConfig, scan_folds
from .errors import DegeneratePairing, DimensionMismatch, TransfoldError, ZeroInput
from .problem import ProblemSpec
from .spectral import RankReport, rank_report
from .transversality import (
    DEFAULT_CERT_TOL,
    NON_TRANSVERSAL,
    AugmentedPoint,
    CertTolerances,
    _g_on_zero_set,
    dG_total,
)

ALL_TRANSVERSAL = "AllFoldsTransversal"
SOME_NON_TRANSVERSAL = "SomeNonTransversal"
INCONCLUSIVE = "InconclusiveNumerics"
OUTCOMES = (ALL_TRANSVERSAL, SOME_NON_TRANSVERSAL, INCONCLUSIVE)

DISTRIBUTION = "iid uniform entries on [-r/sqrt(n+n^2), r/sqrt(n+n^2)], rescaled into the r-ball"
# below this relative size <ell, x> is treated as zero by rescue_symmetric
PAIRING_CUTOFF = 1e-3


@dataclass(frozen=True)
class PerturbationSample:
    y: np.ndarray
    K: np.ndarray
    radius: float
    seed: int | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        K = np.array(self.K, dtype=float)
        if K.shape != (y.size, y.size):
            raise DimensionMismatch(f"K has shape {K.shape}, expected {(y.size, y.size)}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def norm(self) -> float:
        return math.sqrt(float(self.y @ self.y) + float(np.sum(self.K * self.K)))

    def __eq__(self, other):
        if not isinstance(other, PerturbationSample):
            return NotImplemented
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.K, other.K)
            and self.radius == other.radius
            and self.seed == other.seed
        )

    __hash__ = None

    @classmethod
    def zero(cls, n: int, radius: float = 0.0) -> PerturbationSample:
        return cls(np.zeros(n), np.zeros((n, n)), radius)


@dataclass(frozen=True)
class SymmetricPerturbation:
    ell: np.ndarray
    Kform: np.ndarray

    def __post_init__(self):
        ell = np.array(self.ell, dtype=float).reshape(-1)
        K = np.array(self.Kform, dtype=float)
        if K.shape != (ell.size, ell.size):
            raise DimensionMismatch(f"Kform has shape {K.shape}, expected {(ell.size, ell.size)}")
        # store exactly symmetric
        K = 0.5 * (K + K.T)
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "Kform", K)

    def __eq__(self, other):
        if not isinstance(other, SymmetricPerturbation):
            return NotImplemented
        return np.array_equal(self.ell, other.ell) and np.array_equal(self.Kform, other.Kform)

    __hash__ = None


@dataclass(frozen=True)
class SampleOutcome:
    index: int
    seed: int | None
    outcome: str
    n_folds: int
    fold_points: tuple[tuple[float, ...], ...] = ()
    note: str = ""


@dataclass(frozen=True)
class GenericityReport:
    n_samples: int
    radius: float
    outcomes: tuple[SampleOutcome, ...]
    failure_fraction: float
    unperturbed_outcome: str
    scan: dict
    master_seed: int | None = None
    distribution: str = DISTRIBUTION
    problem_name: str = ""

    def count(self, outcome: str) -> int:
        return sum(1 for o in self.outcomes if o.outcome == outcome)

    @property
    def inconclusive_fraction(self) -> float:
        return self.count(INCONCLUSIVE) / self.n_samples if self.n_samples else 0.0

    @property
    def conclusive_failure_fraction(self) -> float:
        conclusive = self.n_samples - self.count(INCONCLUSIVE)
        return self.count(SOME_NON_TRANSVERSAL) / conclusive if conclusive else 0.0


# -- perturbed problems ------------------------------------------------------


def _digits(a: np.ndarray) -> str:
    return ",".join(repr(float(v)) for v in np.ravel(a))


def perturb_problem(problem: ProblemSpec, s: PerturbationSample) -> ProblemSpec:
    """Return F~(x, t) = F(x, t) + y + K x with derivatives composed exactly."""
    if s.n != problem.dim:
        raise DimensionMismatch(f"sample has dimension {s.n}, problem has {problem.dim}")
    y, K = s.y.copy(), s.K.copy()
    base = problem
    return ProblemSpec(
        name=f"{problem.name}+pert",
        dim=problem.dim,
        t_range=problem.t_range,
        eval_F=lambda x, t: base.F(x, t) + y + K @ x,
        eval_DxF=lambda x, t: base.jacobian_x(x, t) + K,
        eval_dtF=base.dt_F,
        eval_D2xF_dir=base.d2x_F_dir,
        eval_dtDxF_dir=base.dt_dx_F_dir,
        smoothness_order=problem.smoothness_order,
        description=f"{problem.description} + y + K x; y=[{_digits(y)}] K=[{_digits(K)}]",
    )


def perturb_energy(energy_problem, sp: SymmetricPerturbation):
    """E~ = E + <ell, x> + K(x, x)/2 in the energy's own inner product.

    The gradient becomes F + ell + Kform x and the Hessian shifts by Kform.
    """
    from .energy import EnergyProblem

    base = energy_problem.problem
    if sp.ell.size != base.dim:
        raise DimensionMismatch(f"perturbation has dimension {sp.ell.size}, problem has {base.dim}")
    s = PerturbationSample(sp.ell, sp.Kform, 0.0)
    problem = perturb_problem(base, s)
    w = energy_problem.weight
    ell, K = sp.ell.copy(), sp.Kform.copy()
    E0 = energy_problem.eval_E

    def E(x, t):
        return E0(x, t) + w * (float(ell @ x) + 0.5 * float(x @ K @ x))

    return EnergyProblem(
        problem=problem,
        eval_E=E,
        eval_D3_dir=energy_problem.eval_D3_dir,
        weight=w,
        meta=dict(energy_problem.meta),
    )


def sample_perturbation(rng: np.random.Generator, n: int, radius: float, seed: int | None = None) -> PerturbationSample:
    """Draw (y, K) with i.i.d. uniform entries, rescaled into the radius ball if needed."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        return PerturbationSample(np.zeros(n), np.zeros((n, n)), 0.0, seed)
    a = radius / math.sqrt(n + n * n)
    y = rng.uniform(-a, a, size=n)
    K = rng.uniform(-a, a, size=(n, n))
    norm = math.sqrt(float(y @ y) + float(np.sum(K * K)))
    if norm > radius:
        y, K = y * (radius / norm), K * (radius / norm)
    return PerturbationSample(y, K, radius, seed)


def sample_seed(master_seed: int, index: int) -> int:
    """Per-sample seed derived from the pair (master_seed, index)."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


def classify_scan(problem: ProblemSpec, scan: ScanConfig, tols: CertTolerances = DEFAULT_CERT_TOL) -> tuple[str, list, str]:
    """Outcome of a fold scan: a certified NonTransversal fold is a failure.

    Refinement failures and ambiguous kernels make the run inconclusive
    rather than failed.
    """
    try:
        result = scan_folds(problem, scan, tols)
    except TransfoldError as exc:
        return INCONCLUSIVE, [], f"{type(exc).__name__}: {exc}"
    folds = result.folds
    if any(f.certificate.ambiguous_kernel for f in folds):
        return INCONCLUSIVE, folds, "ambiguous kernel"
    if any(f.certificate.classification == NON_TRANSVERSAL for f in folds):
        return SOME_NON_TRANSVERSAL, folds, ""
    refine_errors = [m for m in result.failures if m.startswith("refine")]
    if refine_errors:
        return INCONCLUSIVE, folds, refine_errors[0]
    return ALL_TRANSVERSAL, folds, ""


def _fold_points(folds) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in np.r_[f.point.x, f.point.t]) for f in folds)


def genericity_experiment(
    problem: ProblemSpec,
    n_samples: int,
    radius: float,
    scan_cfg: ScanConfig,
    master_seed: int = 0,
    tols: CertTolerances = DEFAULT_CERT_TOL,
    workers: int = 1,
) -> GenericityReport:
    """Scan the unperturbed problem and ``n_samples`` random perturbations of it."""
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    base_outcome, _, _ = classify_scan(problem, scan_cfg, tols)

    def one(index: int) -> SampleOutcome:
        seed = sample_seed(master_seed, index)
        s = sample_perturbation(np.random.default_rng(seed), problem.dim, radius, seed)
        outcome, folds, note = classify_scan(perturb_problem(problem, s), scan_cfg, tols)
        return SampleOutcome(index, seed, outcome, len(folds), _fold_points(folds), note)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, range(n_samples)))
    else:
        outcomes = [one(i) for i in range(n_samples)]
    fails = sum(1 for o in outcomes if o.outcome == SOME_NON_TRANSVERSAL)
    return GenericityReport(
        n_samples=n_samples,
        radius=float(radius),
        outcomes=tuple(outcomes),
        failure_fraction=fails / n_samples if n_samples else 0.0,
        unperturbed_outcome=base_outcome,
        scan=scan_cfg.as_dict(),
        master_seed=master_seed,
        problem_name=problem.name,
    )


# -- rescue constructions ----------------------------------------------------


def rescue_linear(v, w, ell) -> np.ndarray:
    """Rank-one K with K v = w, namely K x = <ell, x> w / <ell, v>."""
    v = np.asarray(v, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    ell = np.asarray(ell, dtype=float).reshape(-1)
    if not v.size == w.size == ell.size:
        raise DimensionMismatch("v, w and ell must have equal length")
    pairing = float(ell @ v)
    if pairing == 0.0:
        raise DegeneratePairing("<ell, v> = 0")
    return np.outer(w, ell / pairing)


def rescue_symmetric(x, ell) -> np.ndarray:
    """Symmetric K with K x = ell.

    Uses ``ell ell^T / <ell, x>`` when the pairing is well away from zero,
    and otherwise ``ell x*^T + x* ell^T - <ell, x> x* x*^T`` with
    ``x* = x / |x|^2`` (which reduces to the two-term form when
    ``<ell, x> = 0``).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    ell = np.asarray(ell, dtype=float).reshape(-1)
    if x.size != ell.size:
        raise DimensionMismatch("x and ell must have equal length")
    nx, nl = float(np.linalg.norm(x)), float(np.linalg.norm(ell))
    if nx == 0.0 or nl == 0.0:
        raise ZeroInput("x and ell must be nonzero")
    pairing = float(ell @ x)
    if abs(pairing) >= PAIRING_CUTOFF * nx * nl:
        K = np.outer(ell, ell) / pairing
    else:
        xs = x / (nx * nx)
        K = np.outer(ell, xs) + np.outer(xs, ell) - pairing * np.outer(xs, xs)
    return 0.5 * (K + K.T)


def extended_differential(problem: ProblemSpec, q: AugmentedPoint) -> np.ndarray:
    """dG augmented by the perturbation directions (y~, K~): 2n x (2n+1+n+n^2)."""
    n = problem.dim
    dG = dG_total(problem, q.x, q.t, q.v)
    Y = np.vstack([np.eye(n), np.zeros((n, n))])
    I = np.eye(n)
    KK = np.vstack([np.kron(I, q.x[None, :]), np.kron(I, q.v[None, :])])
    return np.hstack([dG, Y, KK])


def check_full_regularity(
    problem: ProblemSpec, q: AugmentedPoint, tols: CertTolerances = DEFAULT_CERT_TOL
) -> tuple[bool, RankReport]:
    """Is the differential of G, including the perturbation directions, onto?"""
    _g_on_zero_set(problem, q, tols)
    report = rank_report(extended_differential(problem, q), tols.spectral)
    return report.surjective, report


@dataclass
class EnergyGenericityReport:
    n_samples: int
    radius: float
    outcomes: list[str] = field(default_factory=list)
    fold_counts: list[int] = field(default_factory=list)


def energy_genericity(ep, amp_range, n_samples: int, radius: float, master_seed: int = 0, tols: CertTolerances = DEFAULT_CERT_TOL):
    """Random diagonal (y, z) perturbations of an energy problem, certified with (E1)-(E3)."""
    from .energy import sweep_and_certify

    m = ep.problem.dim
    report = EnergyGenericityReport(n_samples, float(radius))
    for i in range(n_samples):
        rng = np.random.default_rng(sample_seed(master_seed, i))
        a = radius / math.sqrt(2 * m)
        sp = SymmetricPerturbation(rng.uniform(-a, a, m), np.diag(rng.uniform(-a, a, m)))
        try:
            folds, _ = sweep_and_certify(perturb_energy(ep, sp), amp_range, tols=tols)
        except TransfoldError:
            report.outcomes.append(INCONCLUSIVE)
            report.fold_counts.append(0)
            continue
        certs = [f.energy_certificate for f in folds]
        if any(c.ambiguous_kernel for c in certs):
            outcome = INCONCLUSIVE
        elif any(c.classification == NON_TRANSVERSAL for c in certs):
            outcome = SOME_NON_TRANSVERSAL
        else:
            outcome = ALL_TRANSVERSAL
        report.outcomes.append(outcome)
        report.fold_counts.append(len(folds))
    return report
