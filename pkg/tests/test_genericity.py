import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polysys import random_system
from transfold import AugmentedPoint, Point, get_problem
from transfold.continuation import ScanConfig, scan_folds
from transfold.energy import energy_quartic1d
from transfold.errors import DegeneratePairing, DimensionMismatch, NotOnZeroSetOfG, ZeroInput
from transfold.genericity import (
    ALL_TRANSVERSAL,
    DISTRIBUTION,
    SOME_NON_TRANSVERSAL,
    PerturbationSample,
    SymmetricPerturbation,
    check_full_regularity,
    classify_scan,
    extended_differential,
    genericity_experiment,
    perturb_energy,
    perturb_problem,
    rescue_linear,
    rescue_symmetric,
    sample_perturbation,
    sample_seed,
)

SCAN_1D = ScanConfig(box=((-2.0, 2.0),), t_window=(-1.0, 1.0), grid_density=7)
# fitted max |fold drift| / radius on the fold problem is 0.72; frozen with margin
DRIFT_C = 1.0


def _fold_of(problem):
    res = scan_folds(problem, SCAN_1D)
    assert len(res.folds) == 1
    return res.folds[0]


def test_identity_perturbation():
    base = get_problem("cubicload")
    p = perturb_problem(base, PerturbationSample.zero(1))
    rng = np.random.default_rng(0)
    for _ in range(10):
        x, t = rng.uniform(-2, 2, 1), rng.uniform(-1, 1)
        assert np.array_equal(p.F(x, t), base.F(x, t))
        assert np.array_equal(p.jacobian_x(x, t), base.jacobian_x(x, t))


def test_fold_shift_by_y():
    f = _fold_of(perturb_problem(get_problem("fold1d"), PerturbationSample([0.1], [[0.0]], 0.1)))
    assert abs(f.point.x[0]) <= 1e-10 and f.point.t == pytest.approx(0.1, abs=1e-10)


def test_fold_shift_by_K():
    f = _fold_of(perturb_problem(get_problem("fold1d"), PerturbationSample([0.0], [[0.2]], 0.2)))
    assert f.point.x[0] == pytest.approx(-0.1, abs=1e-10)
    assert f.point.t == pytest.approx(-0.01, abs=1e-10)


def test_perturbed_jacobian_composition():
    rng = np.random.default_rng(2)
    for n in range(1, 7):
        s = random_system(rng, n, "transversal")
        sample = sample_perturbation(rng, n, 0.5)
        p = perturb_problem(s.problem, sample)
        for _ in range(5):
            x, t = rng.uniform(-1, 1, n), rng.uniform(-1, 1)
            assert np.max(np.abs(p.jacobian_x(x, t) - (s.problem.jacobian_x(x, t) + sample.K))) <= 1e-14
            assert np.array_equal(p.dt_F(x, t), s.problem.dt_F(x, t))
            v = rng.standard_normal(n)
            assert np.array_equal(p.d2x_F_dir(x, t, v), s.problem.d2x_F_dir(x, t, v))


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        PerturbationSample([0.0, 0.0], [[0.0]], 0.1)
    with pytest.raises(DimensionMismatch):
        perturb_problem(get_problem("fold1d"), PerturbationSample.zero(2))
    with pytest.raises(DimensionMismatch):
        SymmetricPerturbation([0.0], np.zeros((2, 2)))


def test_perturb_energy():
    ep = energy_quartic1d()
    same = perturb_energy(ep, SymmetricPerturbation([0.0], [[0.0]]))
    for x, t in [(0.3, 0.1), (-1.2, 0.5)]:
        assert same.energy([x], t) == ep.energy([x], t)
        assert np.array_equal(same.problem.F([x], t), ep.problem.F([x], t))
    c = 0.7
    shifted = perturb_energy(ep, SymmetricPerturbation([0.2], [[c]]))
    x, t = 0.4, 0.1
    assert shifted.problem.jacobian_x([x], t)[0, 0] == pytest.approx(3 * x**2 + c, abs=1e-15)
    assert shifted.problem.F([x], t)[0] == pytest.approx(x**3 - t + 0.2 + c * x, abs=1e-15)
    assert shifted.energy([x], t) == pytest.approx(x**4 / 4 - t * x + 0.2 * x + 0.5 * c * x * x, abs=1e-15)
    assert shifted.d3_dir([x], t, [1.0]) == ep.d3_dir([x], t, [1.0])
    sp = SymmetricPerturbation([0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])
    assert np.array_equal(sp.Kform, sp.Kform.T)


def test_sampling():
    assert sample_perturbation(np.random.default_rng(0), 3, 0.0) == PerturbationSample.zero(3)
    a = sample_perturbation(np.random.default_rng(5), 3, 0.1)
    b = sample_perturbation(np.random.default_rng(5), 3, 0.1)
    c = sample_perturbation(np.random.default_rng(6), 3, 0.1)
    assert a == b and a != c
    assert a.norm <= 0.1 + 1e-15
    with pytest.raises(ValueError):
        sample_perturbation(np.random.default_rng(0), 3, -1.0)
    assert sample_seed(0, 1) == sample_seed(0, 1) != sample_seed(0, 2)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), n=st.integers(1, 6), radius=st.floats(1e-6, 10.0))
def test_samples_stay_in_ball(seed, n, radius):
    s = sample_perturbation(np.random.default_rng(seed), n, radius)
    assert s.norm <= radius * (1 + 1e-12)
    bound = radius / np.sqrt(n + n * n)
    assert np.all(np.abs(s.y) <= bound) and np.all(np.abs(s.K) <= bound)


def test_classify_scan_outcomes():
    assert classify_scan(get_problem("fold1d"), SCAN_1D)[0] == ALL_TRANSVERSAL
    assert classify_scan(get_problem("pitchfork1d"), SCAN_1D)[0] == SOME_NON_TRANSVERSAL


def test_experiment_on_fold_and_pitchfork():
    rep = genericity_experiment(get_problem("fold1d"), 5, 0.1, SCAN_1D, master_seed=3)
    assert rep.unperturbed_outcome == ALL_TRANSVERSAL
    assert rep.failure_fraction == 0 and rep.count(ALL_TRANSVERSAL) == 5
    assert rep.distribution == DISTRIBUTION and rep.problem_name == "fold1d"
    rep = genericity_experiment(get_problem("pitchfork1d"), 10, 0.1, SCAN_1D, master_seed=3)
    assert rep.unperturbed_outcome == SOME_NON_TRANSVERSAL
    assert rep.failure_fraction == rep.count(SOME_NON_TRANSVERSAL) / rep.n_samples
    assert rep.conclusive_failure_fraction == 0.0 and rep.inconclusive_fraction <= 0.2


def test_zero_radius_reduces_to_unperturbed():
    rep = genericity_experiment(get_problem("pitchfork1d"), 3, 0.0, SCAN_1D)
    assert all(o.outcome == rep.unperturbed_outcome for o in rep.outcomes)


def test_experiment_is_deterministic_and_order_free():
    a = genericity_experiment(get_problem("cubicload"), 4, 0.1, SCAN_1D, master_seed=9)
    b = genericity_experiment(get_problem("cubicload"), 4, 0.1, SCAN_1D, master_seed=9, workers=2)
    assert a == b


def test_fold_drift_is_linear_in_radius():
    p = get_problem("fold1d")
    for radius in (0.1, 0.01, 0.001):
        for i in range(10):
            s = sample_perturbation(np.random.default_rng(sample_seed(1, i)), 1, radius)
            f = _fold_of(perturb_problem(p, s))
            assert np.hypot(f.point.x[0], f.point.t) <= DRIFT_C * radius


def test_rescue_linear_examples():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    K = rescue_linear(e1, e2, e1)
    assert np.array_equal(K, np.outer(e2, e1)) and np.array_equal(K @ e1, e2)
    assert not np.any(rescue_linear(e1, np.zeros(3), e1))
    with pytest.raises(DegeneratePairing):
        rescue_linear(e1, e2, e2)
    with pytest.raises(DimensionMismatch):
        rescue_linear(e1, e2[:2], e1)
    rng = np.random.default_rng(0)
    v, w, ell = rng.standard_normal((3, 5))
    ell = ell / (ell @ v)
    K = rescue_linear(v, w, ell)
    assert np.linalg.norm(K @ v - w) < 1e-14 and np.linalg.matrix_rank(K) == 1


def test_rescue_symmetric_examples():
    e1, e2 = np.eye(2)
    K = rescue_symmetric(e1, e1)
    assert np.array_equal(K, np.outer(e1, e1)) and np.array_equal(K @ e1, e1)
    K = rescue_symmetric(e1, e2)
    assert np.array_equal(K, np.outer(e2, e1) + np.outer(e1, e2)) and np.array_equal(K @ e1, e2)
    with pytest.raises(ZeroInput):
        rescue_symmetric(np.zeros(2), e1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), n=st.integers(1, 6), near_orthogonal=st.booleans())
def test_rescue_symmetric_identity(seed, n, near_orthogonal):
    rng = np.random.default_rng(seed)
    x, ell = rng.standard_normal(n), rng.standard_normal(n)
    if near_orthogonal and n > 1:
        ell = ell - (ell @ x) / (x @ x) * x
    K = rescue_symmetric(x, ell)
    assert np.array_equal(K, K.T)
    assert np.linalg.norm(K @ x - ell) < 1e-13 * max(1.0, np.linalg.norm(ell))


def test_full_regularity_examples():
    q = AugmentedPoint([0.0], 0.0, [1.0])
    onto, rep = check_full_regularity(get_problem("fold1d"), q)
    assert onto and rep.matrix_shape == (2, 2 + 1 + 1 + 1)
    onto, rep = check_full_regularity(get_problem("pitchfork1d"), q)
    assert onto and rep.numerical_rank == 2
    with pytest.raises(NotOnZeroSetOfG):
        check_full_regularity(get_problem("fold1d"), AugmentedPoint([1.0], 1.0, [1.0]))


def test_extended_differential_blocks():
    s = random_system(np.random.default_rng(4), 3, "t2fail")
    q = AugmentedPoint(s.x0, s.t0, s.v)
    M = extended_differential(s.problem, q)
    n = 3
    assert M.shape == (2 * n, 2 * n + 1 + n + n * n)
    assert np.array_equal(M[:n, 2 * n + 1 : 3 * n + 1], np.eye(n))
    Kt = np.random.default_rng(1).standard_normal((n, n))
    col = M[:, 3 * n + 1 :] @ Kt.reshape(-1)
    assert np.allclose(col, np.r_[Kt @ q.x, Kt @ q.v], atol=1e-14)
    assert check_full_regularity(s.problem, q)[0]
