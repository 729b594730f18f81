"""Pure-numpy Allen-Cahn kernels; same signatures as the compiled ``_kernels``.

Index convention: ``u`` holds the m interior nodal values of a uniform grid
with spacing ``h``; the Dirichlet boundary values are zero and not stored.
"""

import numpy as np


def ac_residual(u, diffusion, h, load, y, z):
    """kappa * A_h u + u^3 - u - load + y + z*u, with A_h the Dirichlet (-d2/dx2) stencil."""
    lap = 2.0 * u
    lap[1:] -= u[:-1]
    lap[:-1] -= u[1:]
    return diffusion * lap / (h * h) + u**3 - u - load + y + z * u


def ac_energy(u, diffusion, h, load, y, z):
    padded = np.concatenate(([0.0], u, [0.0]))
    grad = np.diff(padded) / h
    well = 0.25 * (u * u - 1.0) ** 2
    return h * (0.5 * diffusion * np.dot(grad, grad) + np.sum(well - load * u + y * u + 0.5 * z * u * u))


def ac_hessian_diag(u, diffusion, h, z):
    return 2.0 * diffusion / (h * h) + 3.0 * u * u - 1.0 + z


def ac_d2_dir(u, v):
    return 6.0 * u * v * v


def ac_d3(u, v, h):
    return h * 6.0 * np.dot(u, v * v * v)
