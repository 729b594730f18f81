"""Random quadratic systems with a prescribed zero and prescribed singular structure.

Every system has the form, with d = x - x0 and s = t - t0,

    F_i(x, t) = (A d)_i + s b_i + d^T Q_i d + s (C d)_i + s^2 e_i

so all derivatives are exact polynomials and (x0, t0) is a zero.  The
``kind`` controls the linearization at that zero:

* ``regular``: A invertible.
* ``transversal``: corank one with <b, w> != 0 and <Q[v, v], w> != 0.
* ``t2fail``: corank one with b in the range of A.
* ``t3fail``: corank one with <Q[v, v], w> = 0.
* ``rank2``: corank two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from transfold.problem import ProblemSpec

KINDS = ("regular", "transversal", "t2fail", "t3fail", "rank2")


@dataclass
class Constructed:
    problem: ProblemSpec
    x0: np.ndarray
    t0: float
    kind: str
    v: np.ndarray | None
    w: np.ndarray | None


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_system(rng: np.random.Generator, n: int, kind: str) -> Constructed:
    if kind == "rank2" and n < 2:
        kind = "t2fail"
    U, V = _orthogonal(rng, n), _orthogonal(rng, n)
    s = rng.uniform(0.5, 2.0, n)
    corank = {"regular": 0, "rank2": 2}.get(kind, 1)
    if corank:
        s[n - corank :] = 0.0
    A = U @ np.diag(s) @ V.T
    v = V[:, -1] if corank else None
    w = U[:, -1] if corank else None

    Q = rng.standard_normal((n, n, n))
    Q = 0.5 * (Q + Q.transpose(0, 2, 1))
    C = rng.standard_normal((n, n))
    e = rng.standard_normal(n)
    b = rng.standard_normal(n)
    if kind == "t2fail":
        b = A @ rng.standard_normal(n)
    elif corank == 1 and abs(b @ w) < 0.1:
        b = b + (0.5 - b @ w) * w
    if corank == 1:
        qw = np.einsum("i,ijk->jk", w, Q)
        pair = float(v @ qw @ v)
        if kind == "t3fail":
            # remove the w-component of Q[v, v] exactly: sum_i w_i v^T Q_i v = 0
            Q = Q - pair * np.einsum("i,j,k->ijk", w, v, v)
        elif abs(pair) < 0.1:
            Q = Q + (0.5 - pair) * np.einsum("i,j,k->ijk", w, v, v)

    x0 = rng.uniform(-1.0, 1.0, n)
    t0 = float(rng.uniform(-0.5, 0.5))

    def F(x, t):
        d, st = x - x0, t - t0
        return A @ d + st * b + np.einsum("ijk,j,k->i", Q, d, d) + st * (C @ d) + st * st * e

    def DxF(x, t):
        d, st = x - x0, t - t0
        return A + 2.0 * np.einsum("ijk,k->ij", Q, d) + st * C

    def dtF(x, t):
        d, st = x - x0, t - t0
        return b + C @ d + 2.0 * st * e

    def D2(x, t, vv):
        return 2.0 * np.einsum("ijk,j,k->i", Q, vv, vv)

    def dtDx(x, t, vv):
        return C @ vv

    problem = ProblemSpec(
        name=f"poly{n}_{kind}",
        dim=n,
        t_range=(-4.0, 4.0),
        eval_F=F,
        eval_DxF=DxF,
        eval_dtF=dtF,
        eval_D2xF_dir=D2,
        eval_dtDxF_dir=dtDx,
        smoothness_order=3,
        description=f"random quadratic system, kind={kind}",
    )
    return Constructed(problem, x0, t0, kind, v, w)
