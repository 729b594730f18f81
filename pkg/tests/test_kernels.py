import os
import subprocess
import sys

import numpy as np
import pytest

from transfold import _kernels_py as py
from transfold import kernels

cy = pytest.importorskip("transfold._kernels")


@pytest.fixture
def data():
    rng = np.random.default_rng(7)
    m = 37
    return {
        "u": rng.uniform(-1.5, 1.5, m),
        "v": rng.standard_normal(m),
        "load": rng.standard_normal(m),
        "y": rng.standard_normal(m) * 0.1,
        "z": rng.standard_normal(m) * 0.1,
        "h": 1.0 / (m + 1),
        "kappa": 0.05,
    }


def test_backend_parity(data):
    d = data
    args = (d["u"], d["kappa"], d["h"], d["load"], d["y"], d["z"])
    assert np.allclose(cy.ac_residual(*args), py.ac_residual(*args), rtol=1e-13, atol=1e-12)
    assert cy.ac_energy(*args) == pytest.approx(py.ac_energy(*args), rel=1e-13)
    hd = (d["u"], d["kappa"], d["h"], d["z"])
    assert np.allclose(cy.ac_hessian_diag(*hd), py.ac_hessian_diag(*hd), rtol=1e-14)
    assert np.allclose(cy.ac_d2_dir(d["u"], d["v"]), py.ac_d2_dir(d["u"], d["v"]), rtol=1e-14)
    assert cy.ac_d3(d["u"], d["v"], d["h"]) == pytest.approx(py.ac_d3(d["u"], d["v"], d["h"]), rel=1e-12)


def test_default_backend_is_compiled():
    if os.environ.get("TRANSFOLD_PURE_PYTHON", "") in ("", "0"):
        assert kernels.BACKEND == "cython"


def test_pure_python_switch():
    env = dict(os.environ, TRANSFOLD_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from transfold import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
