"""Smooth radial cutoff with closed-form derivatives up to third order.

phi(y) = g(2|y| - 1), where g is the smooth step that is 1 for t <= 0, 0 for
t >= 1 and 1/(1 + exp(1/(1-t) - 1/t)) in between. phi equals 1 on the ball
of radius 1/2 and vanishes outside the unit ball.
"""

from functools import cached_property

import numpy as np
from scipy.special import expit


def smooth_step(t, order=3):
    """Values and derivatives (g, g', g'', g''') of the smooth step."""
    t = np.asarray(t, dtype=float)
    out = [np.where(t <= 0.0, 1.0, 0.0)] + [np.zeros_like(t) for _ in range(order)]
    mid = (t > 0.0) & (t < 1.0)
    if not np.any(mid):
        return out
    tm = t[mid]
    a, c = 1.0 / tm, 1.0 / (1.0 - tm)
    h = c - a
    h1 = c * c + a * a
    h2 = 2.0 * c**3 - 2.0 * a**3
    h3 = 6.0 * c**4 + 6.0 * a**4
    p = expit(-h)
    pq = p * (1.0 - p)
    L1 = -pq
    L2 = pq * (1.0 - 2.0 * p)
    L3 = -pq * (1.0 - 6.0 * p + 6.0 * p * p)
    with np.errstate(invalid="ignore", over="ignore"):
        vals = [
            p,
            L1 * h1,
            L2 * h1**2 + L1 * h2,
            L3 * h1**3 + 3.0 * L2 * h1 * h2 + L1 * h3,
        ]
    for k in range(order + 1):
        out[k][mid] = np.nan_to_num(vals[k], nan=0.0, posinf=0.0, neginf=0.0)
    return out


def radial_profile(r, order=3):
    """f(r) = g(2r - 1) and its first three r-derivatives."""
    g = smooth_step(2.0 * np.asarray(r, dtype=float) - 1.0, order)
    return [g[k] * 2.0**k for k in range(order + 1)]


def bump_derivatives(y, order=3):
    """Derivative tensors of phi at points ``y`` of shape (n, 3).

    Returns a list [phi (n,), grad (n,3), hess (n,3,3), third (n,3,3,3)]
    truncated to ``order``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n = y.shape[0]
    r = np.linalg.norm(y, axis=1)
    f = radial_profile(r, order)
    out = [f[0]]
    shell = (r > 0.5) & (r < 1.0)
    eye = np.eye(3)
    if order >= 1:
        out.append(np.zeros((n, 3)))
    if order >= 2:
        out.append(np.zeros((n, 3, 3)))
    if order >= 3:
        out.append(np.zeros((n, 3, 3, 3)))
    if order == 0 or not np.any(shell):
        return out
    rs = r[shell]
    nv = y[shell] / rs[:, None]
    f1 = f[1][shell]
    out[1][shell] = f1[:, None] * nv
    if order >= 2:
        f2 = f[2][shell]
        A = f2 - f1 / rs
        nn = nv[:, :, None] * nv[:, None, :]
        out[2][shell] = A[:, None, None] * nn + (f1 / rs)[:, None, None] * eye
    if order >= 3:
        f3 = f[3][shell]
        dA = f3 - f2 / rs + f1 / rs**2
        nnn = nn[:, :, :, None] * nv[:, None, None, :]
        sym = (
            np.einsum("ik,pj->pijk", eye, nv)
            + np.einsum("jk,pi->pijk", eye, nv)
            + np.einsum("ij,pk->pijk", eye, nv)
        )
        out[3][shell] = (dA - 2.0 * A / rs)[:, None, None, None] * nnn + (A / rs)[:, None, None, None] * sym
    return out


class BumpFunction:
    """The cutoff phi together with certified sup-norms of its derivatives.

    Norms are maxima over a dense radial grid, inflated by 2%. The operator
    norm of the Hessian of a radial function is max(|f''|, |f'|/r); for the
    third derivative the Frobenius norm of the tensor is used as a bound.
    """

    inflation = 1.02

    def __call__(self, y):
        return bump_derivatives(y, 0)[0]

    def derivatives(self, y, order=3):
        return bump_derivatives(y, order)

    @cached_property
    def _radial_sup(self):
        r = np.linspace(0.5, 1.0, 200001)[1:-1]
        f = radial_profile(r)
        hess = np.maximum(np.abs(f[2]), np.abs(f[1]) / r)
        return np.abs(f[1]).max(), hess.max()

    @property
    def sup(self):
        return 1.0

    @cached_property
    def c2_norm(self):
        g1, g2 = self._radial_sup
        return self.inflation * max(1.0, g1, g2)

    @cached_property
    def c3_norm(self):
        y = np.zeros((20001, 3))
        y[:, 0] = np.linspace(0.5, 1.0, 20003)[1:-1]
        t = bump_derivatives(y, 3)[3]
        third = np.sqrt(np.sum(t**2, axis=(1, 2, 3))).max()
        return max(self.c2_norm, self.inflation * third)


PHI = BumpFunction()
