import math

import numpy as np
import pytest

from transfold import AugmentedPoint, get_problem
from transfold.errors import NewtonFailure
from transfold.solve import (
    NewtonConfig,
    deduplicate,
    enumerate_section,
    newton_augmented,
    newton_fixed_t,
    newton_fixed_t_history,
    sep_tol,
)


def test_newton_fold_roots():
    fold = get_problem("fold1d")
    assert abs(newton_fixed_t(fold, 1.0, [2.0])[0] - 1.0) <= 1e-12
    assert abs(newton_fixed_t(fold, 1.0, [-2.0])[0] + 1.0) <= 1e-12
    for x0 in (-3.0, 0.5, 2.0):
        with pytest.raises(NewtonFailure):
            newton_fixed_t(fold, -1.0, [x0])


def test_newton_residual_contract():
    cubic = get_problem("cubicload")
    cfg = NewtonConfig()
    for t, x0 in [(0.3, 2.0), (-0.2, -1.5), (0.0, 0.1)]:
        x = newton_fixed_t(cubic, t, [x0], cfg)
        J = cubic.jacobian_x(x, t)
        assert np.linalg.norm(cubic.F(x, t)) <= cfg.tolerance(x, J)


def test_quadratic_convergence():
    cubic = get_problem("cubicload")
    t = 0.3
    root = max(r.real for r in np.roots([1, 0, -1, -t]) if abs(r.imag) < 1e-12)
    _, iterates, _ = newton_fixed_t_history(cubic, t, [2.0])
    errors = [abs(x[0] - root) for x in iterates]
    errors = [e for e in errors if e > 1e-14]
    tail = errors[-4:]
    ratios = [b / a**2 for a, b in zip(tail, tail[1:])]
    assert len(ratios) == 3
    # Newton on a simple root: e_{k+1} / e_k^2 -> |F''| / (2 |F'|) at the root
    limit = 6 * root / (2 * (3 * root**2 - 1))
    assert max(ratios) <= 2 * limit


def test_enumerate_section_examples():
    cubic, fold = get_problem("cubicload"), get_problem("fold1d")
    sec = enumerate_section(cubic, 0.0, [(-2.0, 2.0)], 9)
    assert [round(float(z[0]), 12) for z in sec.zeros] == [-1.0, 0.0, 1.0]
    assert sec.min_pairwise_separation == pytest.approx(1.0, abs=1e-12)
    assert max(sec.residuals) <= 1e-12
    sec = enumerate_section(fold, 1.0, [(-2.0, 2.0)], 9)
    assert [round(float(z[0]), 12) for z in sec.zeros] == [-1.0, 1.0]
    sec = enumerate_section(fold, -0.5, [(-2.0, 2.0)], 9)
    assert sec.zeros == () and sec.min_pairwise_separation == math.inf
    assert sec.failures == sec.multistart_count == 9


def test_enumerate_section_idempotent():
    p = get_problem("foldprod2")
    a = enumerate_section(p, 0.7, [(-2, 2), (-2, 2)], 7)
    b = enumerate_section(p, 0.7, [(-2, 2), (-2, 2)], 7)
    assert len(a.zeros) == len(b.zeros) == 2
    assert all(np.array_equal(x, y) for x, y in zip(a.zeros, b.zeros))


def test_enumerate_section_workers_agree():
    p = get_problem("cubicload")
    a = enumerate_section(p, 0.1, [(-2, 2)], 21)
    b = enumerate_section(p, 0.1, [(-2, 2)], 21, workers=3)
    assert all(np.array_equal(x, y) for x, y in zip(a.zeros, b.zeros))


@pytest.mark.parametrize("name,t", [("fold1d", 0.25), ("cubicload", 0.1), ("foldprod2", 0.5)])
def test_no_spurious_splitting_under_refinement(name, t):
    p = get_problem(name)
    box = [(-2.0, 2.0)] * p.dim
    seps = [enumerate_section(p, t, box, d).min_pairwise_separation for d in (5, 20)]
    counts = [len(enumerate_section(p, t, box, d).zeros) for d in (5, 20)]
    assert counts[0] == counts[1]
    assert seps[1] >= 0.5 * seps[0] > 0


def test_bad_arguments():
    p = get_problem("fold1d")
    with pytest.raises(ValueError):
        enumerate_section(p, 1.0, [(-1, 1), (-1, 1)], 5)
    with pytest.raises(ValueError):
        enumerate_section(p, 1.0, [(-1, 1)], 1)
    with pytest.raises(ValueError):
        NewtonConfig(abs_tol=0.0)


def test_deduplicate():
    roots = [np.array([1.0]), np.array([1.0 + 1e-9]), np.array([-1.0])]
    out = deduplicate(roots)
    assert [r[0] for r in out] == [-1.0, 1.0]
    assert sep_tol(np.array([3.0])) == pytest.approx(4e-6)


def test_newton_augmented_fold():
    q = newton_augmented(get_problem("fold1d"), AugmentedPoint([0.3], 0.2, [1.0]))
    assert abs(q.x[0]) <= 1e-10 and abs(q.t) <= 1e-10 and abs(abs(q.v[0]) - 1.0) <= 1e-12


def test_newton_augmented_product():
    q = newton_augmented(get_problem("foldprod2"), AugmentedPoint([0.1, -0.05], 0.05, [0.9, 0.1]))
    assert np.linalg.norm(q.x) <= 1e-10 and abs(q.t) <= 1e-10
    assert np.allclose(np.abs(q.v), [1.0, 0.0], atol=1e-10)


def test_newton_augmented_pitchfork_flags_failure():
    # the bordered Jacobian is singular at the pitchfork: the iteration must not report success
    with pytest.raises(NewtonFailure):
        newton_augmented(get_problem("pitchfork1d"), AugmentedPoint([0.05], 0.02, [1.0]))


def test_newton_augmented_rejects_bad_start_norm():
    with pytest.raises(ValueError):
        newton_augmented(get_problem("fold1d"), AugmentedPoint([0.0], 0.0, [5.0]))
