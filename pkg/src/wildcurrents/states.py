"""State space of the Euler-plus-tracer differential inclusion.

A state is z = (b, w, v, M, q) with b the tracer, w the tracer flux, v the
velocity, M a traceless symmetric 2x2 stress and q the modified pressure.
Vectorised code passes states around as float arrays with a trailing axis of
length 8 in the fixed order

    (b, w1, w2, v1, v2, M11, M12, q)

and the first seven entries form the chart used by every convex-hull
computation. M22 = -M11 is never stored.
"""

from dataclasses import dataclass

import numpy as np

STATE_ORDER = ("b", "w1", "w2", "v1", "v2", "M11", "M12", "q")
HULL_DIM = 7

IB, IW1, IW2, IV1, IV2, IM11, IM12, IQ = range(8)


@dataclass(frozen=True)
class StateZ:
    """One point of R x R^2 x R^2 x S_0^2 x R."""

    b: float = 0.0
    w: tuple = (0.0, 0.0)
    v: tuple = (0.0, 0.0)
    m11: float = 0.0
    m12: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "w", (float(self.w[0]), float(self.w[1])))
        object.__setattr__(self, "v", (float(self.v[0]), float(self.v[1])))
        object.__setattr__(self, "m11", float(self.m11))
        object.__setattr__(self, "m12", float(self.m12))
        object.__setattr__(self, "q", float(self.q))
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("state components must be finite")

    @classmethod
    def from_parts(cls, b=0.0, w=(0.0, 0.0), v=(0.0, 0.0), M=None, q=0.0):
        """Build a state from a full 2x2 ``M``; the trace and the
        antisymmetric part are projected out."""
        if M is None:
            m11 = m12 = 0.0
        else:
            M = np.asarray(M, dtype=float)
            m11 = 0.5 * (M[0, 0] - M[1, 1])
            m12 = 0.5 * (M[0, 1] + M[1, 0])
        return cls(b, w, v, m11, m12, q)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        return cls(a[IB], (a[IW1], a[IW2]), (a[IV1], a[IV2]), a[IM11], a[IM12], a[IQ])

    @property
    def M(self):
        return np.array([[self.m11, self.m12], [self.m12, -self.m11]])

    @property
    def z7(self):
        return self.as_array()[:HULL_DIM]

    def as_array(self):
        return np.array([self.b, *self.w, *self.v, self.m11, self.m12, self.q])

    def with_q(self, q):
        return StateZ(self.b, self.w, self.v, self.m11, self.m12, q)

    def __add__(self, other):
        return StateZ.from_array(self.as_array() + other.as_array())

    def __sub__(self, other):
        return StateZ.from_array(self.as_array() - other.as_array())

    def __mul__(self, c):
        return StateZ.from_array(float(c) * self.as_array())

    __rmul__ = __mul__

    def __neg__(self):
        return StateZ.from_array(-self.as_array())


ZERO_STATE = StateZ()


@dataclass(frozen=True)
class KAtom:
    """Point of K: v = (cos theta, sin theta), b = s."""

    theta: float
    s: int

    def __post_init__(self):
        if self.s not in (-1, 1):
            raise ValueError(f"sign must be +1 or -1, got {self.s}")
        object.__setattr__(self, "theta", float(self.theta) % (2 * np.pi))


def atom_z7(theta, s):
    """Seven-vector chart of K atoms; broadcasts over ``theta`` and ``s``."""
    theta = np.asarray(theta, dtype=float)
    s = np.asarray(s, dtype=float)
    c, sn = np.cos(theta), np.sin(theta)
    c, sn, s = np.broadcast_arrays(c, sn, s)
    return np.stack([s, s * c, s * sn, c, sn, c * c - 0.5, c * sn], axis=-1)


def materialize(k, q=0.0):
    """Exact state of the atom ``k`` with pressure ``q`` adjoined."""
    c, sn = np.cos(k.theta), np.sin(k.theta)
    s = float(k.s)
    return StateZ(s, (s * c, s * sn), (c, sn), c * c - 0.5, c * sn, q)


def assemble_V(z):
    """4x3 matrix [[M + qI, v], [v^t, 0], [w^t, b]] of a single state."""
    return assemble_V_array(z.as_array())


def assemble_V_array(states):
    """Vectorised ``assemble_V`` for arrays of shape (..., 8)."""
    s = np.asarray(states, dtype=float)
    V = np.zeros(s.shape[:-1] + (4, 3))
    V[..., 0, 0] = s[..., IM11] + s[..., IQ]
    V[..., 0, 1] = s[..., IM12]
    V[..., 1, 0] = s[..., IM12]
    V[..., 1, 1] = -s[..., IM11] + s[..., IQ]
    V[..., 0, 2] = V[..., 2, 0] = s[..., IV1]
    V[..., 1, 2] = V[..., 2, 1] = s[..., IV2]
    V[..., 3, 0] = s[..., IW1]
    V[..., 3, 1] = s[..., IW2]
    V[..., 3, 2] = s[..., IB]
    return V


def disassemble_V(V):
    """Inverse of ``assemble_V_array`` on the admissible matrices.

    The symmetric part of the off-diagonal velocity entries is used and the
    (3, 3) entry is ignored; see ``linear_defect`` for how far a general
    matrix is from admissibility.
    """
    V = np.asarray(V, dtype=float)
    s = np.empty(V.shape[:-2] + (8,))
    s[..., IB] = V[..., 3, 2]
    s[..., IW1] = V[..., 3, 0]
    s[..., IW2] = V[..., 3, 1]
    s[..., IV1] = 0.5 * (V[..., 0, 2] + V[..., 2, 0])
    s[..., IV2] = 0.5 * (V[..., 1, 2] + V[..., 2, 1])
    s[..., IM11] = 0.5 * (V[..., 0, 0] - V[..., 1, 1])
    s[..., IM12] = 0.5 * (V[..., 0, 1] + V[..., 1, 0])
    s[..., IQ] = 0.5 * (V[..., 0, 0] + V[..., 1, 1])
    return s


def linear_defect(V):
    """Distance of a 4x3 matrix from the admissible subspace: the (3,3)
    entry plus the asymmetry of the upper 3x3 block."""
    V = np.asarray(V, dtype=float)
    U = V[..., :3, :]
    asym = U - np.swapaxes(U, -1, -2)
    return np.sqrt(V[..., 2, 2] ** 2 + 0.5 * np.sum(asym**2, axis=(-1, -2)))


def constitutive_residual_array(states):
    """Pointwise (stress defect, flux defect, shell deficit) for (..., 8)."""
    s = np.asarray(states, dtype=float)
    v1, v2 = s[..., IV1], s[..., IV2]
    b = s[..., IB]
    # v (x) v - |v|^2/2 I is traceless with entries (v1^2-v2^2)/2 and v1 v2
    d11 = s[..., IM11] - 0.5 * (v1 * v1 - v2 * v2)
    d12 = s[..., IM12] - v1 * v2
    stress = np.sqrt(2.0 * (d11 * d11 + d12 * d12))
    flux = np.hypot(s[..., IW1] - b * v1, s[..., IW2] - b * v2)
    shell = np.abs(v1 * v1 + v2 * v2 + b * b - 2.0)
    return stress, flux, shell


def constitutive_residual(z):
    """(||M - (v(x)v - |v|^2 I/2)||_F, |w - b v|, | |v|^2 + |b|^2 - 2 |)."""
    return tuple(float(x) for x in constitutive_residual_array(z.as_array()))


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box or ball in (x1, x2, t)."""

    shape: str
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    half_widths: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.shape not in ("ball", "box"):
            raise ValueError(f"unknown domain shape {self.shape!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "half_widths", tuple(float(h) for h in self.half_widths))
        if not (self.measure > 0 and np.isfinite(self.measure)):
            raise ValueError("domain must have positive finite measure")

    @classmethod
    def ball(cls, radius=1.0, center=(0.0, 0.0, 0.0)):
        return cls("ball", center=center, radius=float(radius))

    @classmethod
    def box(cls, half_widths, center=(0.0, 0.0, 0.0)):
        return cls("box", center=center, half_widths=half_widths)

    @property
    def measure(self):
        if self.shape == "ball":
            return 4.0 / 3.0 * np.pi * self.radius**3
        return float(np.prod(2.0 * np.asarray(self.half_widths)))

    @property
    def bounds(self):
        c = np.asarray(self.center)
        h = np.full(3, self.radius) if self.shape == "ball" else np.asarray(self.half_widths)
        return c - h, c + h

    def contains(self, points):
        p = np.asarray(points, dtype=float) - np.asarray(self.center)
        if self.shape == "ball":
            return np.einsum("...i,...i->...", p, p) < self.radius**2
        return np.all(np.abs(p) < np.asarray(self.half_widths), axis=-1)

    def contains_ball(self, center, r):
        """Whether the closed ball B_r(center) lies inside the domain."""
        p = np.asarray(center, dtype=float) - np.asarray(self.center)
        if self.shape == "ball":
            return np.linalg.norm(p, axis=-1) + r <= self.radius
        return np.all(np.abs(p) + r <= np.asarray(self.half_widths), axis=-1)
