import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transfold import Point, get_problem, problem_from_config, problem_from_expressions
from transfold.errors import DomainError, EvaluationError, ExpressionError, NotFound
from transfold.problem import ProblemSpec, builtin_catalog, catalog_names, dt_F, evaluate, jacobian_x, total_differential


def test_evaluate_examples():
    fold = get_problem("fold1d")
    assert evaluate(fold, Point([0.0], 0.0)).tolist() == [0.0]
    assert evaluate(fold, Point([1.0], 0.0)).tolist() == [1.0]
    lin = get_problem("linear3d")
    assert evaluate(lin, Point([0, 0, 0], 0.5)).tolist() == [-0.5, -0.5, -0.5]


def test_jacobian_examples():
    fold = get_problem("fold1d")
    assert jacobian_x(fold, Point([0.0], 0.0)).tolist() == [[0.0]]
    assert jacobian_x(fold, Point([3.0], 0.0)).tolist() == [[6.0]]
    prod = get_problem("foldprod2")
    assert jacobian_x(prod, Point([1.0, 1.0], 0.0)).tolist() == [[2.0, 0.0], [0.0, 1.0]]


def test_dt_examples():
    assert dt_F(get_problem("fold1d"), Point([0.7], 0.2)).tolist() == [-1.0]
    assert dt_F(get_problem("pitchfork1d"), Point([0.0], 0.0)).tolist() == [0.0]
    # sine1d has no analytic derivatives; the difference of sin at 0 is -cos(0)
    assert dt_F(get_problem("sine1d"), Point([0.0], 0.0))[0] == pytest.approx(-1.0, abs=1e-8)


def test_second_derivative_examples():
    assert get_problem("fold1d").d2x_F_dir([0.3], 0.1, [1.0]).tolist() == [2.0]
    assert get_problem("pitchfork1d").d2x_F_dir([0.0], 0.0, [1.0]).tolist() == [0.0]
    cubic = get_problem("cubicload")
    assert cubic.d2x_F_dir([1.0], 0.0, [1.0])[0] == 6.0
    assert cubic.fd_d2x_F_dir([1.0], 0.0, [1.0])[0] == pytest.approx(6.0, rel=1e-6)


def test_total_differential_examples():
    fold = get_problem("fold1d")
    assert total_differential(fold, Point([0.0], 0.0)).tolist() == [[0.0, -1.0]]
    assert total_differential(fold, Point([1.0], 1.0)).tolist() == [[2.0, -1.0]]
    assert total_differential(get_problem("pitchfork1d"), Point([0.0], 0.0)).tolist() == [[0.0, 0.0]]


def test_catalog_lookup():
    assert get_problem("fold1d").dim == 1
    pf = get_problem("pitchfork1d")
    assert pf.dim == 1 and pf.smoothness_order == 3
    with pytest.raises(NotFound):
        get_problem("no-such-problem")
    assert {p.name for p in builtin_catalog()} == set(catalog_names())


def test_domain_and_shape_errors():
    fold = get_problem("fold1d")
    with pytest.raises(DomainError):
        fold.F([0.0], 10.0)
    with pytest.raises(DomainError):
        fold.F([0.0], 4.0)  # the interval is open
    with pytest.raises(ValueError):
        fold.F([0.0, 1.0], 0.0)


def test_non_finite_output_carries_point():
    bad = ProblemSpec("bad", 1, (-1, 1), eval_F=lambda x, t: np.array([math.inf]))
    with pytest.raises(EvaluationError) as info:
        bad.F([0.25], 0.5)
    assert info.value.t == 0.5
    assert np.array_equal(info.value.x, [0.25])


def test_invalid_specs():
    with pytest.raises(ValueError):
        ProblemSpec("p", 0, (-1, 1), eval_F=lambda x, t: x)
    with pytest.raises(ValueError):
        ProblemSpec("p", 1, (1, -1), eval_F=lambda x, t: x)
    with pytest.raises(ValueError):
        ProblemSpec("p", 1, (-1, 1), eval_F=lambda x, t: x, smoothness_order=1)


def _rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / max(float(np.linalg.norm(a)), 1.0)


ANALYTIC = [name for name in catalog_names() if get_problem(name).has_analytic_derivatives]


@pytest.mark.parametrize("name", ANALYTIC)
def test_analytic_matches_finite_differences(name):
    p = get_problem(name)
    rng = np.random.default_rng(7)
    lo, hi = p.t_range
    count = 100 if p.dim <= 8 else 20
    for _ in range(count):
        x = rng.uniform(-1.5, 1.5, p.dim)
        t = rng.uniform(0.9 * lo, 0.9 * hi)
        v = rng.standard_normal(p.dim)
        assert _rel(p.jacobian_x(x, t), p.fd_jacobian_x(x, t)) < 1e-5
        assert _rel(p.dt_F(x, t), p.fd_dt_F(x, t)) < 1e-5
        assert _rel(p.d2x_F_dir(x, t, v), p.fd_d2x_F_dir(x, t, v)) < 1e-5
        assert _rel(p.dt_dx_F_dir(x, t, v), p.fd_dt_dx_F_dir(x, t, v)) < 1e-5


@pytest.mark.parametrize("name", ANALYTIC)
def test_total_differential_composition(name):
    p = get_problem(name)
    rng = np.random.default_rng(3)
    for _ in range(10):
        x, t = rng.uniform(-1, 1, p.dim), rng.uniform(-1, 1)
        v, tau = rng.standard_normal(p.dim), rng.standard_normal()
        lhs = p.total_differential(x, t) @ np.r_[v, tau]
        rhs = p.jacobian_x(x, t) @ v + tau * p.dt_F(x, t)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))


@settings(max_examples=60, deadline=None)
@given(
    name=st.sampled_from(["fold1d", "pitchfork1d", "cubicload", "foldprod2", "foldprod4", "sine1d"]),
    seed=st.integers(0, 2**32 - 1),
)
def test_second_derivative_homogeneous(name, seed):
    p = get_problem(name)
    rng = np.random.default_rng(seed)
    x, t = rng.uniform(-1, 1, p.dim), rng.uniform(-1, 1)
    v = rng.standard_normal(p.dim)
    one, two = p.d2x_F_dir(x, t, v), p.d2x_F_dir(x, t, 2 * v)
    assert np.linalg.norm(two - 4 * one) <= 1e-8 * max(1.0, np.linalg.norm(two))


def test_expression_problems():
    p = problem_from_expressions(["x1^2 - t", "x2 + sin(x1)"], t_range=(-2, 2))
    assert p.dim == 2 and not p.has_analytic_derivatives
    assert p.F([1.0, 0.0], 1.0) == pytest.approx([0.0, math.sin(1.0)])
    J = p.jacobian_x([1.0, 0.0], 1.0)
    assert J == pytest.approx(np.array([[2.0, 0.0], [math.cos(1.0), 1.0]]), abs=1e-6)
    with pytest.raises(ExpressionError):
        problem_from_expressions(["__import__('os')"])
    with pytest.raises(ExpressionError):
        problem_from_expressions(["x1 + y"])


def test_problem_from_config(tmp_path):
    cfg = {"dim": 1, "t_range": [-1, 1], "F": ["x1^3 - x1 - t"], "name": "mine"}
    p = problem_from_config(cfg)
    assert p.name == "mine" and p.F([1.0], 0.0)[0] == 0.0
    path = tmp_path / "p.yaml"
    path.write_text("dim: 1\nt_range: [-1, 1]\nF: ['x1 - t']\n")
    assert problem_from_config(path).F([0.5], 0.5)[0] == 0.0
    with pytest.raises(ValueError):
        problem_from_config({**cfg, "extra": 1})
    with pytest.raises(ValueError):
        problem_from_config({**cfg, "dim": 2})


def test_digest_is_stable_and_distinguishing():
    assert get_problem("fold1d").digest() == get_problem("fold1d").digest()
    assert get_problem("fold1d").digest() != get_problem("cubicload").digest()


def test_expression_interpreter():
    from transfold.expr import compile_expression

    f = compile_expression("2^3 - x1 * t / 4 + sqrt(exp(0)) + cos(pi)", ["x1", "t"])
    assert f(2.0, 2.0) == pytest.approx(8 - 1 + 1 - 1)
    for text in ("x1 ** 2", "", "open('f')", "x1.real", "[x1]", "sin(x1, t)", "True"):
        with pytest.raises(ExpressionError):
            compile_expression(text, ["x1", "t"])
