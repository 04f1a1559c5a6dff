"""Compiled inner loops for the hull geometry (linear minimisation over K and
the min-norm-point iteration)."""

import numpy as np
from numba import njit

N_GRID = 1024
TWO_PI = 2.0 * np.pi

_GRID = np.arange(N_GRID) * (TWO_PI / N_GRID)
_COS = np.cos(_GRID)
_SIN = np.sin(_GRID)
_COS2 = np.cos(2.0 * _GRID)
_SIN2 = np.sin(2.0 * _GRID)


@njit(cache=True)
def _trig_coeffs(c, s):
    # <c, atom(theta, s)> = a0 + a1 cos + a2 sin + a3 cos2 + a4 sin2
    return (c[0] * s, s * c[1] + c[3], s * c[2] + c[4], 0.5 * c[5], 0.5 * c[6])


@njit(cache=True)
def _f(a, th):
    return (a[0] + a[1] * np.cos(th) + a[2] * np.sin(th)
            + a[3] * np.cos(2.0 * th) + a[4] * np.sin(2.0 * th))


@njit(cache=True)
def _polish(a, th):
    fbest = _f(a, th)
    for _ in range(60):
        d1 = (-a[1] * np.sin(th) + a[2] * np.cos(th)
              - 2.0 * a[3] * np.sin(2.0 * th) + 2.0 * a[4] * np.cos(2.0 * th))
        d2 = (-a[1] * np.cos(th) - a[2] * np.sin(th)
              - 4.0 * a[3] * np.cos(2.0 * th) - 4.0 * a[4] * np.sin(2.0 * th))
        if d2 <= 0.0:
            break
        step = d1 / d2
        h = TWO_PI / N_GRID
        if step > h:
            step = h
        elif step < -h:
            step = -h
        cand = th - step
        fc = _f(a, cand)
        if fc > fbest:
            break
        th, fbest = cand, fc
        if abs(step) < 1e-15:
            break
    th = th % TWO_PI
    return th, _f(a, th)


@njit(cache=True)
def lmo_kernel(c, cosg, sing, cos2g, sin2g):
    """Return (theta, s, value) minimising <c, atom> over K."""
    best_th = 0.0
    best_s = 1
    best_v = np.inf
    cand_th = np.empty(6)
    cand_s = np.empty(6, dtype=np.int64)
    cand_v = np.empty(6)
    nc = 0
    n = cosg.shape[0]
    for si in range(2):
        s = 1 if si == 0 else -1
        a = _trig_coeffs(c, float(s))
        vals = a[0] + a[1] * cosg + a[2] * sing + a[3] * cos2g + a[4] * sin2g
        # three best discrete local minima, circular neighbourhood
        idx = np.empty(3, dtype=np.int64)
        iv = np.full(3, np.inf)
        for j in range(n):
            vj = vals[j]
            if vj <= vals[j - 1] and vj <= vals[(j + 1) % n]:
                for m in range(3):
                    if vj < iv[m]:
                        for r in range(2, m, -1):
                            iv[r] = iv[r - 1]
                            idx[r] = idx[r - 1]
                        iv[m] = vj
                        idx[m] = j
                        break
        for m in range(3):
            if iv[m] == np.inf:
                continue
            th0 = TWO_PI * idx[m] / n
            th, v = _polish(a, th0)
            if vals[idx[m]] <= v:
                th, v = th0, vals[idx[m]]
            cand_th[nc] = th
            cand_s[nc] = s
            cand_v[nc] = v
            nc += 1
    vmin = np.inf
    for i in range(nc):
        if cand_v[i] < vmin:
            vmin = cand_v[i]
    tie = 1e-12 * max(1.0, abs(vmin))
    for i in range(nc):
        if cand_v[i] <= vmin + tie:
            better = False
            if best_v == np.inf:
                better = True
            elif cand_th[i] < best_th - 1e-12:
                better = True
            elif abs(cand_th[i] - best_th) <= 1e-12 and cand_s[i] > best_s:
                better = True
            if better:
                best_th, best_s, best_v = cand_th[i], cand_s[i], cand_v[i]
    return best_th, best_s, vmin


@njit(cache=True)
def atom7(th, s):
    c = np.cos(th)
    sn = np.sin(th)
    out = np.empty(7)
    out[0] = s
    out[1] = s * c
    out[2] = s * sn
    out[3] = c
    out[4] = sn
    out[5] = c * c - 0.5
    out[6] = c * sn
    return out


@njit(cache=True)
def _affine_min(P, m):
    # minimise |sum mu_i P_i| subject to sum mu_i = 1 over the first m rows
    mu = np.empty(m)
    if m == 1:
        mu[0] = 1.0
        return mu
    D = np.empty((7, m - 1))
    for i in range(1, m):
        for k in range(7):
            D[k, i - 1] = P[i, k] - P[0, k]
    rhs = -P[0].copy()
    alpha = np.linalg.lstsq(D, rhs, 1e-13)[0]
    mu[0] = 1.0 - alpha.sum()
    mu[1:] = alpha
    return mu


@njit(cache=True)
def min_norm_point(z, tol, max_iter, cosg, sing, cos2g, sin2g):
    """Min-norm-point iteration for dist(z, conv K).

    Returns (status, thetas, signs, weights, m, x, gap, iterations) where
    status is 1 (inside), -1 (outside with certificate) or 0 (budget hit);
    x is the nearest hull point minus z found so far.
    """
    P = np.zeros((9, 7))
    TH = np.zeros(9)
    SG = np.zeros(9, dtype=np.int64)
    lam = np.zeros(9)
    th, s, _ = lmo_kernel(-z, cosg, sing, cos2g, sin2g)
    P[0] = atom7(th, s) - z
    TH[0] = th
    SG[0] = s
    lam[0] = 1.0
    m = 1
    x = P[0].copy()
    gap = 0.0
    for it in range(max_iter):
        nx = np.sqrt(np.dot(x, x))
        if nx <= tol:
            return 1, TH, SG, lam, m, x, 0.0, it
        th, s, _ = lmo_kernel(x, cosg, sing, cos2g, sin2g)
        p = atom7(th, s) - z
        xp = np.dot(x, p)
        gap = xp / nx
        if gap > 0.0:
            return -1, TH, SG, lam, m, x, gap, it
        if nx * nx - xp <= 1e-15 * max(1.0, nx * nx) or m >= 9:
            # stalled at roundoff without a certificate
            return 0, TH, SG, lam, m, x, gap, it
        P[m] = p
        TH[m] = th
        SG[m] = s
        lam[m] = 0.0
        m += 1
        for _minor in range(50):
            mu = _affine_min(P, m)
            ok = True
            for i in range(m):
                if mu[i] <= 1e-15:
                    ok = False
                    break
            if ok:
                lam[:m] = mu
                break
            t = 1.0
            for i in range(m):
                if mu[i] <= 1e-15:
                    d = lam[i] - mu[i]
                    if d > 0.0:
                        r = lam[i] / d
                        if r < t:
                            t = r
            for i in range(m):
                lam[i] = lam[i] + t * (mu[i] - lam[i])
            # drop vanished weights, keep at least one point
            k = 0
            for i in range(m):
                if lam[i] > 1e-15:
                    P[k] = P[i]
                    TH[k] = TH[i]
                    SG[k] = SG[i]
                    lam[k] = lam[i]
                    k += 1
            m = k
            lam[m:] = 0.0
        tot = lam[:m].sum()
        lam[:m] /= tot
        x = np.zeros(7)
        for i in range(m):
            x += lam[i] * P[i]
    return 0, TH, SG, lam, m, x, gap, max_iter
