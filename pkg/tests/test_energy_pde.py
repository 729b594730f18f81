import math

import numpy as np
import pytest

from transfold import Point, certify, certify_energy
from transfold.energy import (
    CATALOG_DIFFUSION,
    build_allen_cahn,
    catalog_allen_cahn,
    constant_starts,
    d3_dir,
    energy_cubicload,
    energy_quartic1d,
    energy_value,
    sweep_and_certify,
)
from transfold.errors import BadLoadExpression
from transfold.genericity import ALL_TRANSVERSAL, energy_genericity
from transfold.solve import enumerate_section
from transfold.transversality import NON_TRANSVERSAL, TRANSVERSAL


@pytest.fixture(scope="module")
def ac32_folds():
    ep = catalog_allen_cahn(32)
    folds, curves = sweep_and_certify(ep, (-1.0, 1.0))
    return ep, folds, curves


def test_trivial_equilibrium():
    ep = build_allen_cahn(3)
    assert np.array_equal(ep.problem.F(np.zeros(3), 0.0), np.zeros(3))


def test_laplacian_spectrum():
    grid = build_allen_cahn(3).meta["grid"]
    assert grid.h == 0.25
    ev = np.linalg.eigvalsh(grid.laplacian())
    expected = [16 * (2 - math.sqrt(2)), 32.0, 16 * (2 + math.sqrt(2))]
    assert ev == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("m", [3, 8, 33, 100])
def test_hessian_at_zero_is_positive_definite(m):
    ep = build_allen_cahn(m)
    H = ep.problem.jacobian_x(np.zeros(m), 0.0)
    assert np.allclose(H, ep.meta["grid"].laplacian() - np.eye(m), rtol=1e-14, atol=0)
    assert np.array_equal(H, H.T)
    assert np.linalg.eigvalsh(H)[0] > 0


def test_energy_values():
    m = 5
    ep = build_allen_cahn(m)
    assert energy_value(ep, np.zeros(m), 0.0) == pytest.approx(ep.meta["grid"].h * m / 4, rel=1e-15)
    assert energy_value(energy_quartic1d(), [1.0], 0.0) == 0.25


def test_energy_matches_independent_sum():
    m, kappa = 20, 0.3
    ep = build_allen_cahn(m, load="2*t", profile="1 + s", y="0.1*s", z=0.2, diffusion=kappa)
    h = 1.0 / (m + 1)
    s = h * np.arange(1, m + 1)
    u = np.tanh((s - 0.5) / 0.1)
    t = 0.3
    total = 0.0
    values = [0.0] + list(u) + [0.0]
    for i in range(m + 1):
        total += 0.5 * kappa * ((values[i + 1] - values[i]) / h) ** 2 * h
    for i in range(m):
        ui, si = u[i], s[i]
        total += h * (0.25 * (ui * ui - 1) ** 2 - 2 * t * (1 + si) * ui + 0.1 * si * ui + 0.1 * ui * ui)
    assert energy_value(ep, u, t) == pytest.approx(total, abs=1e-10)


def test_third_derivative_examples():
    ep = build_allen_cahn(6)
    v = np.random.default_rng(0).standard_normal(6)
    assert d3_dir(ep, np.zeros(6), 0.0, v) == 0.0
    assert d3_dir(energy_quartic1d(), [1.0], 0.0, [1.0]) == 6.0


def test_third_derivative_against_differences():
    rng = np.random.default_rng(1)
    for kappa in (1.0, CATALOG_DIFFUSION):
        ep = build_allen_cahn(8, diffusion=kappa)
        for _ in range(10):
            u, v = rng.uniform(-1, 1, 8), rng.standard_normal(8)
            exact, fd = ep.d3_dir(u, 0.1, v), ep.fd_d3_dir(u, 0.1, v)
            assert abs(exact - fd) <= 1e-4 * max(1.0, abs(exact))


def _grad_fd(ep, u, t, step=0.1):
    # five-point stencil: exact for the quartic energy up to rounding
    g = np.empty_like(u)
    for i in range(u.size):
        e = np.zeros_like(u)
        e[i] = step
        E = lambda k: ep.energy(u + k * e, t)  # noqa: E731
        g[i] = (E(-2) - 8 * E(-1) + 8 * E(1) - E(2)) / (12 * step)
    return g


@pytest.mark.parametrize("kappa", [1.0, CATALOG_DIFFUSION])
def test_gradient_exactness(kappa):
    m = 8
    ep = build_allen_cahn(m, profile="s", y=0.05, z="0.1*s", diffusion=kappa)
    rng = np.random.default_rng(2)
    for _ in range(20):
        u, t = rng.uniform(-1.5, 1.5, m), rng.uniform(-1, 1)
        F = ep.problem.F(u, t)
        grad = _grad_fd(ep, u, t) / ep.weight
        assert np.linalg.norm(F - grad) <= 1e-10 * (1 + np.linalg.norm(F))


def test_scalar_energy_gradients():
    for ep in (energy_quartic1d(), energy_cubicload()):
        for x, t in [(0.3, 0.2), (-1.1, -0.4)]:
            assert ep.problem.F([x], t)[0] == pytest.approx(_grad_fd(ep, np.array([x]), t)[0], abs=1e-12)


def test_bad_inputs():
    with pytest.raises(BadLoadExpression):
        build_allen_cahn(5, load="t +* 2")
    with pytest.raises(BadLoadExpression):
        build_allen_cahn(5, z="import os")
    with pytest.raises(ValueError):
        build_allen_cahn(2)
    with pytest.raises(ValueError):
        build_allen_cahn(5, y=[1.0, 2.0])


def test_catalog_fold_pair(ac32_folds):
    ep, folds, curves = ac32_folds
    assert len(folds) == 2
    lo, hi = (f.fold.point.t for f in folds)
    assert lo == pytest.approx(-hi, abs=1e-8) and 0.1 < hi < 0.15
    for f in folds:
        cert = f.energy_certificate
        assert cert.classification == TRANSVERSAL
        assert cert.kernel.gap_ratio >= 1e4
        assert cert.self_duality_error <= 1e-8
        assert cert.e2_margin > 1e-6 and cert.e3_margin > 1e-6
        general = certify(ep.problem, f.fold.point)
        assert abs(general.t2_margin - cert.e2_margin) <= 1e-8
    assert all(np.all(np.isfinite(c.x)) for c in curves)


def test_fold_pair_matches_root_count_change(ac32_folds):
    ep, folds, _ = ac32_folds
    m = ep.problem.dim
    nodes = ep.meta["grid"].nodes
    starts = constant_starts(m) + [c * np.sin(np.pi * nodes) for c in np.linspace(-2, 2, 9)]
    for f in folds:
        t_star = f.fold.point.t
        inside = t_star - 0.01 * np.sign(t_star)
        outside = t_star + 0.01 * np.sign(t_star)
        n_in = len(enumerate_section(ep.problem, inside, None, starts=starts).zeros)
        n_out = len(enumerate_section(ep.problem, outside, None, starts=starts).zeros)
        assert (n_in, n_out) == (3, 1)


def test_branch_nodes_polish_independently(ac32_folds):
    from transfold.solve import newton_fixed_t

    ep, _, curves = ac32_folds
    curve = curves[0]
    for i in range(0, len(curve), 7):
        if abs(curve.tangents[i, -1]) > 1e-2:
            x = newton_fixed_t(ep.problem, curve.t[i], curve.x[i])
            assert np.linalg.norm(x - curve.x[i]) <= 1e-8


def test_tuned_symmetric_case_is_not_transversal():
    # z = 1 - kappa * lambda_1 makes the Hessian at u = 0 singular; there D3 E = 0
    m, kappa = 32, CATALOG_DIFFUSION
    lam1 = np.linalg.eigvalsh(build_allen_cahn(m).meta["grid"].laplacian())[0]
    ep = build_allen_cahn(m, z=1.0 - kappa * lam1, diffusion=kappa)
    H = ep.problem.jacobian_x(np.zeros(m), 0.0)
    assert abs(np.linalg.eigvalsh(H)[0]) <= 1e-10
    cert = certify_energy(ep, Point(np.zeros(m), 0.0))
    assert cert.classification == NON_TRANSVERSAL and cert.failures == ("E3",)


def test_random_small_perturbations_stay_transversal():
    report = energy_genericity(catalog_allen_cahn(16), (-1.0, 1.0), n_samples=50, radius=0.05, master_seed=4)
    assert report.outcomes == [ALL_TRANSVERSAL] * 50
    assert all(c >= 2 for c in report.fold_counts)
