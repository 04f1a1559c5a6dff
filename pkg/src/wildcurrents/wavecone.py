"""Wave-cone tests and the choice of oscillation direction.

A state U is a wave-cone direction when its 4x3 matrix has a nontrivial
right kernel xi; then U h(y . xi) solves div V = 0 for every profile h.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AllAtomsCoincident, DegenerateDenominator, ZeroMatrix
from .hull import interior_U
from .states import StateZ, assemble_V, materialize

CONE_TOL = 1e-8
LOWER_BOUND_C = 1.0 / (28.0 * np.sqrt(2.0))


@dataclass(frozen=True)
class ConeCertificate:
    xi: np.ndarray
    residual: float

    @property
    def in_cone(self):
        return self.residual <= CONE_TOL


@dataclass(frozen=True)
class Direction:
    zbar: StateZ
    certificate: ConeCertificate
    lower_bound_ok: bool
    pair: tuple = ()
    segment_ok: bool = None


def _canonical_sign(xi):
    nz = np.flatnonzero(np.abs(xi) > 1e-12)
    if nz.size and xi[nz[0]] < 0:
        return -xi
    return xi


def _certificate(V, xi):
    xi = _canonical_sign(np.asarray(xi, dtype=float) / np.linalg.norm(xi))
    return ConeCertificate(xi, float(np.linalg.norm(V @ xi) / np.linalg.norm(V)))


def lambda_residual(z):
    """Smallest-singular-vector certificate for membership of ``z`` in the
    wave cone; membership is declared at residual <= 1e-8."""
    V = assemble_V(z)
    if not np.any(V):
        raise ZeroMatrix("the zero state is a degenerate cone element")
    _, _, vt = np.linalg.svd(V)
    return _certificate(V, vt[-1])


def xi_for_segment(h1, h2):
    """Explicit kernel vector for the difference of two K states.

    With d = v2[0] - v1[0] the vector is
    (-(v2[1] - v1[1])/d, 1, -(v2[0] v1[1] - v1[0] v2[1])/d).
    """
    (a1, a2), (c1, c2) = h1.v, h2.v
    d = c1 - a1
    if abs(d) <= 1e-10:
        raise DegenerateDenominator("first velocity components coincide")
    return np.array([-(c2 - a2) / d, 1.0, -(c1 * a2 - a1 * c2) / d])


def _sorted_atoms(dec):
    order = sorted(range(len(dec.atoms)), key=lambda i: (dec.atoms[i].theta, -dec.atoms[i].s))
    atoms = [dec.atoms[i] for i in order]
    return atoms, dec.weights[order]


def oscillation_direction(z, dec, delta=None, n_mid=5):
    """Segment direction of the Caratheodory argument.

    The heaviest atom h1 is paired with the atom maximising
    lambda_i^2 (|v_i - v_1|^2 + |b_i - b_1|^2); the direction is
    zbar = lambda_{i*} (h_{i*} - h_1) / 2 with zero pressure part. When
    ``delta`` is given the segment z +- zbar is checked with ``interior_U`` at
    margin delta/2 at both endpoints and at ``n_mid`` interior points.
    """
    atoms, lam = _sorted_atoms(dec)
    i1 = int(np.argmax(lam))
    h = [materialize(a) for a in atoms]
    v = np.array([hi.v for hi in h])
    b = np.array([hi.b for hi in h])
    scores = lam**2 * (np.sum((v - v[i1]) ** 2, axis=1) + (b - b[i1]) ** 2)
    istar = int(np.argmax(scores))
    if scores[istar] <= 1e-24:
        raise AllAtomsCoincident("every atom shares (v, b) with the heaviest one")
    zbar = (0.5 * lam[istar]) * (h[istar] - h[i1])
    V = assemble_V(zbar)
    try:
        cert = _certificate(V, xi_for_segment(h[i1], h[istar]))
    except DegenerateDenominator:
        cert = lambda_residual(zbar)

    arr = z.as_array()
    deficit = 2.0 - (arr[3] ** 2 + arr[4] ** 2 + arr[0] ** 2)
    amp = np.hypot(np.hypot(*zbar.v), zbar.b)
    lower_ok = bool(amp >= LOWER_BOUND_C * deficit - 1e-9)

    segment_ok = None
    if delta is not None:
        segment_ok = True
        ts = np.concatenate([[-1.0, 1.0], np.linspace(-1.0, 1.0, n_mid + 2)[1:-1]])
        for t in ts:
            if not interior_U(z + t * zbar, 0.5 * delta)[0]:
                segment_ok = False
                break
    return Direction(zbar, cert, lower_ok, (atoms[i1], atoms[istar]), segment_ok)


def lambda_hull_spot_check(h1, h2):
    """Whether the difference of two K atoms is a wave-cone direction."""
    return lambda_residual(materialize(h1) - materialize(h2)).in_cone
