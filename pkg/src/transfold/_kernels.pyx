# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Allen-Cahn kernels (see ``_kernels_py`` for the reference version)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def ac_residual(const double[::1] u, double diffusion, double h, const double[::1] load,
                const double[::1] y, const double[::1] z):
    cdef Py_ssize_t m = u.shape[0], i
    cdef double c = diffusion / (h * h), left, right, ui
    out = np.empty(m)
    cdef double[::1] o = out
    for i in range(m):
        ui = u[i]
        left = u[i - 1] if i > 0 else 0.0
        right = u[i + 1] if i < m - 1 else 0.0
        o[i] = c * (2.0 * ui - left - right) + ui * ui * ui - ui - load[i] + y[i] + z[i] * ui
    return out


def ac_energy(const double[::1] u, double diffusion, double h, const double[::1] load,
              const double[::1] y, const double[::1] z):
    cdef Py_ssize_t m = u.shape[0], i
    cdef double grad_sq = 0.0, rest = 0.0, d, ui, w
    d = u[0]
    grad_sq += d * d
    for i in range(m - 1):
        d = u[i + 1] - u[i]
        grad_sq += d * d
    d = u[m - 1]
    grad_sq += d * d
    for i in range(m):
        ui = u[i]
        w = ui * ui - 1.0
        rest += 0.25 * w * w - load[i] * ui + y[i] * ui + 0.5 * z[i] * ui * ui
    return h * (0.5 * diffusion * grad_sq / (h * h) + rest)


def ac_hessian_diag(const double[::1] u, double diffusion, double h, const double[::1] z):
    cdef Py_ssize_t m = u.shape[0], i
    cdef double c = 2.0 * diffusion / (h * h)
    out = np.empty(m)
    cdef double[::1] o = out
    for i in range(m):
        o[i] = c + 3.0 * u[i] * u[i] - 1.0 + z[i]
    return out


def ac_d2_dir(const double[::1] u, const double[::1] v):
    cdef Py_ssize_t m = u.shape[0], i
    out = np.empty(m)
    cdef double[::1] o = out
    for i in range(m):
        o[i] = 6.0 * u[i] * v[i] * v[i]
    return out


def ac_d3(const double[::1] u, const double[::1] v, double h):
    cdef Py_ssize_t m = u.shape[0], i
    cdef double acc = 0.0
    for i in range(m):
        acc += u[i] * v[i] * v[i] * v[i]
    return h * 6.0 * acc
