"""Backend selection for the Allen-Cahn kernels.

The compiled extension is used when importable; set
``TRANSFOLD_PURE_PYTHON=1`` to force the numpy implementation.
"""

import os

from . import _kernels_py

if os.environ.get("TRANSFOLD_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

ac_residual = _impl.ac_residual
ac_energy = _impl.ac_energy
ac_hessian_diag = _impl.ac_hessian_diag
ac_d2_dir = _impl.ac_d2_dir
ac_d3 = _impl.ac_d3

__all__ = ["BACKEND", "ac_residual", "ac_energy", "ac_hessian_diag", "ac_d2_dir", "ac_d3"]
