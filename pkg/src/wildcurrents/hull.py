"""Geometry of the convex hull of K.

K is a pair of closed curves in the seven-dimensional chart
(b, w1, w2, v1, v2, M11, M12), so its hull has no usable closed form.
Membership is decided by certificates instead: an exact convex
decomposition when the query is inside, a separating direction checked
against the exact linear minimisation oracle when it is outside.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .errors import IterationBudgetExceeded, NumericalDegeneracy
from .states import HULL_DIM, IQ, KAtom, StateZ, atom_z7

MAX_ATOMS = HULL_DIM + 1
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 5000

_TABLES = (_k._COS, _k._SIN, _k._COS2, _k._SIN2)


@dataclass(frozen=True)
class Decomposition:
    atoms: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if len(self.atoms) != len(w):
            raise ValueError("atoms and weights differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be nonnegative and sum to one")
        if len(w) > MAX_ATOMS:
            raise ValueError(f"at most {MAX_ATOMS} atoms allowed")

    @property
    def points(self):
        """Atoms in the seven-dimensional chart, shape (n, 7)."""
        return atom_z7([a.theta for a in self.atoms], [a.s for a in self.atoms])

    def recombine(self):
        return self.weights @ self.points

    def __len__(self):
        return len(self.atoms)


@dataclass(frozen=True)
class MembershipResult:
    """Inside: ``decomposition`` and ``margin`` are set. Outside:
    ``separator`` and ``gap`` certify <sep, z> > max_K <sep, k> + gap."""

    inside: bool
    distance: float
    decomposition: Decomposition = None
    margin: float = 0.0
    separator: np.ndarray = None
    gap: float = 0.0
    iterations: int = 0


def lmo(c):
    """Exact minimiser of <c, k> over K.

    Ties go to the smallest theta and then to s = +1.

    Returns
    -------
    atom : KAtom
    value : float
    """
    c = np.ascontiguousarray(c, dtype=float)
    if c.shape != (HULL_DIM,) or not np.all(np.isfinite(c)):
        raise ValueError("cost must be a finite 7-vector")
    th, s, v = _k.lmo_kernel(c, *_TABLES)
    return KAtom(th, int(s)), float(v)


def support(c):
    """max over K of <c, k>."""
    return -lmo(-np.asarray(c, dtype=float))[1]


def membership(z7, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Decide whether ``z7`` lies in conv K.

    Runs the fully corrective min-norm-point scheme (Wolfe's algorithm with
    the exact LMO as the vertex oracle). Inside means the distance to the
    hull reached ``tol``; the active atoms are returned as a decomposition
    with at most eight atoms. Outside carries the unit normal
    (z7 - x*)/|z7 - x*| and its gap against the exact support function.

    Raises
    ------
    IterationBudgetExceeded
        If neither certificate is obtained within ``max_iter`` iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    z = np.ascontiguousarray(z7, dtype=float)
    if z.shape != (HULL_DIM,) or not np.all(np.isfinite(z)):
        raise ValueError("query must be a finite 7-vector")
    status, TH, SG, lam, m, x, gap, it = _k.min_norm_point(z, tol, max_iter, *_TABLES)
    dist = float(np.linalg.norm(x))
    if status == 1:
        atoms = [KAtom(TH[i], int(SG[i])) for i in range(m)]
        weights = lam[:m] / lam[:m].sum()
        dec = caratheodory_reduce(atoms, weights)
        return MembershipResult(True, dist, dec, margin=float(dec.weights.min()), iterations=int(it))
    if status == -1:
        sep = -x / dist
        return MembershipResult(False, dist, separator=sep, gap=float(gap), iterations=int(it))
    raise IterationBudgetExceeded(
        f"no certificate after {it} iterations (distance {dist:.3e}, tol {tol:.1e})"
    )


def in_hull(z7, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Boolean form of :func:`membership` without building a decomposition."""
    z = np.ascontiguousarray(z7, dtype=float)
    status = _k.min_norm_point(z, tol, max_iter, *_TABLES)[0]
    if status == 0:
        raise IterationBudgetExceeded(f"no certificate after {max_iter} iterations")
    return status == 1


def _merge_duplicates(atoms, weights):
    merged = {}
    order = []
    for a, w in zip(atoms, weights):
        key = (round(a.theta, 12) % round(2 * np.pi, 12), a.s)
        if key in merged:
            merged[key][1] += w
        else:
            merged[key] = [a, float(w)]
            order.append(key)
    return [merged[k][0] for k in order], np.array([merged[k][1] for k in order])


def caratheodory_reduce(atoms, weights, step_tol=1e-10):
    """Shrink a convex combination of atoms to at most eight atoms.

    Duplicate atoms are merged first. While more than eight remain, an affine
    dependency among nine of them is taken from the SVD of the lifted
    points [k_i; 1] and followed until a weight vanishes.

    Raises
    ------
    NumericalDegeneracy
        If an elimination step moves the recombined point by more than
        ``step_tol``.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < -1e-15) or abs(weights.sum() - 1.0) > 1e-10:
        raise ValueError("weights must be nonnegative and sum to one")
    atoms, w = _merge_duplicates(list(atoms), np.clip(weights, 0.0, None))
    keep = w > 0
    atoms = [a for a, k in zip(atoms, keep) if k]
    w = w[keep]
    while len(atoms) > MAX_ATOMS:
        pts = atom_z7([a.theta for a in atoms[: MAX_ATOMS + 1]], [a.s for a in atoms[: MAX_ATOMS + 1]])
        lifted = np.vstack([pts.T, np.ones(MAX_ATOMS + 1)])
        _, sv, vt = np.linalg.svd(lifted)
        alpha = vt[-1]
        if alpha.max() <= 0:
            alpha = -alpha
        residual = np.linalg.norm(lifted @ alpha)
        sub = w[: MAX_ATOMS + 1]
        pos = alpha > 0
        ratios = np.full(alpha.shape, np.inf)
        ratios[pos] = sub[pos] / alpha[pos]
        j = int(np.argmin(ratios))
        t = ratios[j]
        moved = t * residual
        if moved > step_tol:
            raise NumericalDegeneracy(
                f"elimination step moved the point by {moved:.2e}; merge near-duplicate atoms first"
            )
        sub = sub - t * alpha
        sub[j] = 0.0
        w = np.concatenate([np.clip(sub, 0.0, None), w[MAX_ATOMS + 1:]])
        keep = w > 0
        keep[j] = False
        atoms = [a for a, k in zip(atoms, keep) if k]
        w = w[keep]
    return Decomposition(tuple(atoms), w / w.sum())


def interior_U(z, delta, tol=DEFAULT_TOL):
    """Interior test for the relaxed set with margin ``delta``.

    True iff q lies in (-1 + delta, 1 - delta) and all fourteen axis
    perturbations z7 +- delta e_i are in the hull. The cross-polytope of
    radius delta contains the Euclidean ball of radius delta/sqrt(7), which is
    the certified margin.

    Returns
    -------
    ok : bool
    decomposition : Decomposition or None
        Decomposition of z7 itself (None when z7 is outside the hull).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    arr = z.as_array() if isinstance(z, StateZ) else np.asarray(z, dtype=float)
    z7 = arr[:HULL_DIM]
    q = arr[IQ] if arr.shape[0] > HULL_DIM else 0.0
    res = membership(z7, tol)
    dec = res.decomposition if res.inside else None
    if dec is None or not (-1.0 + delta < q < 1.0 - delta):
        return False, dec
    for i in range(HULL_DIM):
        for sign in (1.0, -1.0):
            p = z7.copy()
            p[i] += sign * delta
            if not in_hull(p, tol):
                return False, dec
    return True, dec


def certified_ball_radius(delta):
    return delta / np.sqrt(HULL_DIM)


@dataclass
class SimplexChart:
    """Barycentric coordinates with respect to eight affinely independent
    atoms. A point with all coordinates >= 0 is in the hull; the coordinates
    give a cheap sufficient test for many nearby points at once."""

    decomposition: Decomposition
    _inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = self.decomposition.points
        if len(pts) != MAX_ATOMS:
            raise NumericalDegeneracy("simplex chart needs eight atoms")
        lifted = np.vstack([pts.T, np.ones(MAX_ATOMS)])
        if np.linalg.cond(lifted) > 1e10:
            raise NumericalDegeneracy("atoms are nearly affinely dependent")
        self._inv = np.linalg.inv(lifted)

    def coordinates(self, z7):
        z7 = np.asarray(z7, dtype=float)
        lifted = np.concatenate([z7, np.ones(z7.shape[:-1] + (1,))], axis=-1)
        return lifted @ self._inv.T

    def inradius_at(self, z7):
        """Radius of the largest ball around each point contained in the
        simplex (negative when the point is outside)."""
        lam = self.coordinates(z7)
        grad_norms = np.linalg.norm(self._inv[:, :HULL_DIM], axis=1)
        return np.min(lam / grad_norms, axis=-1)


def interior_margin_at_zero(tol=DEFAULT_TOL, hi=1.0, iters=30):
    """Largest delta (by bisection) for which the 14-point cross-polytope of
    radius delta around the origin stays inside the hull."""
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = all(
            membership(sign * mid * np.eye(HULL_DIM)[i], tol).inside
            for i in range(HULL_DIM)
            for sign in (1.0, -1.0)
        )
        lo, hi = (mid, hi) if ok else (lo, mid)
    return lo
