"""Compactly supported, exactly divergence-free localized plane waves.

Every wave is generated by derivatives of the scalar potential
Psi(u) = phi(u) sin(N u_1), with phi the cutoff from ``bump``:

* the tracer row comes from the explicit second-derivative potential
  W = N^-2 (d1(w d2 + b d3) Psi, -w d11 Psi, -b d11 Psi), which is
  divergence free for every Psi, and is carried to a general direction xi
  by the linear change of variables W(y) = A^-t B(A^t y / rho);
* the symmetric 3x3 Euler block is the double curl
  S_il = eps_iab eps_lcd d_a d_c Phi_bd of Phi = Q Psi(F^t y) / N^2, which
  is symmetric and divergence free for every potential; Q solves the
  leading-order symbol equation so that S = Ubar sin(N y.xi) wherever the
  cutoff equals one. The (3,3) entry is only zero there; elsewhere it is an
  O(1/N) residual that callers must report.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .bump import PHI, bump_derivatives
from .errors import SymbolRankDeficient, XiParallelE3, ZeroTracer
from .states import StateZ, assemble_V

TRACER_ALIGNED = "TracerAligned"
TRACER_TRANSPORTED = "TracerTransported"
EULER_BLOCK = "EulerBlock"

_EPS = np.zeros((3, 3, 3))
_EPS[0, 1, 2] = _EPS[1, 2, 0] = _EPS[2, 0, 1] = 1.0
_EPS[0, 2, 1] = _EPS[2, 1, 0] = _EPS[1, 0, 2] = -1.0


def potential_derivatives(u, N, order=3):
    """Derivatives of Psi(u) = phi(u) sin(N u_1) at points (n, 3).

    Returns [Psi, grad, hess, third] up to ``order``.
    """
    d = bump_derivatives(u, order)
    ph = u[:, 0] * N
    s, c = np.sin(ph), np.cos(ph)
    # derivatives of sin(N u_1) only act along the first axis
    out = [d[0] * s]
    if order >= 1:
        g = d[1] * s[:, None]
        g[:, 0] += d[0] * N * c
        out.append(g)
    if order >= 2:
        H = d[2] * s[:, None, None]
        H[:, 0, :] += N * c[:, None] * d[1]
        H[:, :, 0] += N * c[:, None] * d[1]
        H[:, 0, 0] -= N * N * s * d[0]
        out.append(H)
    if order >= 3:
        T = d[3] * s[:, None, None, None]
        nc = (N * c)[:, None, None]
        T[:, 0, :, :] += nc * d[2]
        T[:, :, 0, :] += nc * d[2]
        T[:, :, :, 0] += nc * d[2]
        ns = (N * N * s)[:, None]
        T[:, 0, 0, :] -= ns * d[1]
        T[:, 0, :, 0] -= ns * d[1]
        T[:, :, 0, 0] -= ns * d[1]
        T[:, 0, 0, 0] -= N**3 * c * d[0]
        out.append(T)
    return out


def _tracer_row(D, N, w2, b, jac):
    """Aligned tracer field (and its u-jacobian) from potential derivatives."""
    H = D[2]
    inv = 1.0 / (N * N)
    W = np.stack([w2 * H[:, 0, 1] + b * H[:, 0, 2], -w2 * H[:, 0, 0], -b * H[:, 0, 0]], axis=1) * inv
    if not jac:
        return W, None
    T = D[3]
    dW = np.stack([w2 * T[:, 0, 1, :] + b * T[:, 0, 2, :], -w2 * T[:, 0, 0, :], -b * T[:, 0, 0, :]], axis=1) * inv
    return W, dW


@dataclass(frozen=True)
class WaveTerm:
    """One localized wave, supported in the closed ball (center, radius).

    Attributes
    ----------
    kind : str
        TracerAligned, TracerTransported or EulerBlock.
    zbar : StateZ
        Target wave-cone state; only the tracer row (w, b) or the Euler block
        (v, M, q) is used depending on ``kind``.
    xi : ndarray
        Unit kernel direction.
    N : float
        Frequency of the unit-frame potential.
    A : ndarray
        Frame matrix; the cutoff and phase are evaluated at u = A^t y / rho.
    rho : float
        Pre-shrink making the transported support fit the unit ball.
    center, radius : placement of the unit frame.
    """

    kind: str
    zbar: StateZ
    xi: np.ndarray
    N: float
    A: np.ndarray = field(default_factory=lambda: np.eye(3))
    rho: float = 1.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 1.0
    coeffs: np.ndarray = None
    symbol_residual: float = 0.0
    jacobian_factor: float = 1.0

    @property
    def amplitude_V(self):
        """The 4x3 wave-cone matrix this term oscillates along."""
        V = assemble_V(self.zbar)
        if self.kind == EULER_BLOCK:
            V[3] = 0.0
        else:
            V[:3] = 0.0
        return V

    @property
    def frame(self):
        return self.A / self.rho

    def local_coordinates(self, y):
        return (np.atleast_2d(y) - self.center) / self.radius

    def evaluate(self, y, jacobian=False):
        """V-field contribution at points ``y`` (n, 3).

        Returns V of shape (n, 4, 3) and, with ``jacobian``, dV of shape
        (n, 4, 3, 3) where dV[p, i, j, m] = d V_ij / d y_m.
        """
        x = self.local_coordinates(y)
        n = x.shape[0]
        V = np.zeros((n, 4, 3))
        dV = np.zeros((n, 4, 3, 3)) if jacobian else None
        F = self.frame
        u_all = x @ F
        inside = np.einsum("ij,ij->i", u_all, u_all) < 1.0
        if not np.any(inside):
            return (V, dV) if jacobian else V
        u = u_all[inside]
        order = 3 if jacobian else 2
        D = potential_derivatives(u, self.N, order)
        if self.kind == EULER_BLOCK:
            G = self.coeffs
            inv = 1.0 / self.N**2
            Hy = np.einsum("ai,pij,cj->pac", F, D[2], F) * inv
            S = np.einsum("ilac,pac->pil", G, Hy)
            V[inside, :3, :] = S
            if jacobian:
                Ty = np.einsum("ai,cj,mk,pijk->pacm", F, F, F, D[3]) * inv
                dV[inside, :3, :, :] = np.einsum("ilac,pacm->pilm", G, Ty) / self.radius
        else:
            w2, b = self.coeffs
            W, dW = _tracer_row(D, self.N, w2, b, jacobian)
            if self.kind == TRACER_TRANSPORTED:
                Ait = np.linalg.inv(self.A).T
                W = W @ Ait.T
                if jacobian:
                    dW = np.einsum("ij,pjk,mk->pim", Ait, dW, F)
            V[inside, 3, :] = W
            if jacobian:
                dV[inside, 3, :, :] = dW / self.radius
        return (V, dV) if jacobian else V

    def divergence(self, y):
        """Row divergences div_y V of shape (n, 4)."""
        _, dV = self.evaluate(y, jacobian=True)
        return np.einsum("pijj->pi", dV)


def _aligned_frame(xi):
    """Orthonormal frame with first column xi/|xi|."""
    xi = np.asarray(xi, dtype=float) / np.linalg.norm(xi)
    q, _ = np.linalg.qr(np.column_stack([xi, np.eye(3)]))
    q = q[:, :3]
    if q[:, 0] @ xi < 0:
        q = -q
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    return q


def build_tracer_wave(w2bar, bbar, N):
    """Tracer wave for Wbar = (0, w2bar, bbar) oscillating along e_1."""
    if bbar == 0:
        raise ZeroTracer("aligned tracer wave needs a nonzero tracer amplitude")
    if N < 1:
        raise ValueError("N must be at least 1")
    z = StateZ(b=bbar, w=(0.0, w2bar))
    return WaveTerm(TRACER_ALIGNED, z, np.array([1.0, 0.0, 0.0]), float(N), coeffs=np.array([w2bar, bbar]))


def transport_basis(xi):
    """A with columns (xi, eta, e_3), eta = xi x e_3 normalised, and the
    shrink factor 1/|A^-t|_op that maps the transported support into B_1."""
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    eta = np.cross(xi, [0.0, 0.0, 1.0])
    if np.linalg.norm(eta) < 1e-8:
        raise XiParallelE3("xi must not be parallel to e_3")
    eta /= np.linalg.norm(eta)
    A = np.column_stack([xi, eta, [0.0, 0.0, 1.0]])
    rho = 1.0 / np.linalg.norm(np.linalg.inv(A).T, 2)
    return A, rho


def build_transported_wave(wbar, bbar, xi, N, tol=1e-10, require_tracer=True):
    """Tracer wave for Wbar = (wbar, bbar) with Wbar . xi = 0.

    The support of y -> A^-t B(A^t y) is the ellipsoid A^-t B_1; the term is
    shrunk by rho = 1/|A^-t|_op so that it fits in B_1. The mass constant
    therefore picks up the factor rho^3 / |det A|, stored as
    ``jacobian_factor``.
    """
    if require_tracer and bbar == 0:
        raise ZeroTracer("transported tracer wave needs a nonzero tracer amplitude")
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    Wbar = np.array([wbar[0], wbar[1], bbar], dtype=float)
    if abs(Wbar @ xi) > tol * max(1.0, np.linalg.norm(Wbar)):
        raise ValueError("Wbar must be orthogonal to xi")
    A, rho = transport_basis(xi)
    Bbar = A.T @ Wbar
    z = StateZ(b=bbar, w=tuple(wbar))
    return WaveTerm(
        TRACER_TRANSPORTED, z, xi, float(N), A=A, rho=rho,
        coeffs=np.array([Bbar[1], Bbar[2]]),
        jacobian_factor=rho**3 / abs(np.linalg.det(A)),
    )


def _symbol_matrix(zeta):
    """Linear map Q (6 symmetric dof) -> -X Q X^t (9 entries), X = [zeta]_x."""
    X = np.einsum("iab,a->ib", _EPS, zeta)
    cols = []
    for b, d in [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]:
        Q = np.zeros((3, 3))
        Q[b, d] = Q[d, b] = 1.0
        cols.append((-X @ Q @ X.T).ravel())
    return np.array(cols).T


def _unpack_sym(q6):
    Q = np.zeros((3, 3))
    for k, (b, d) in enumerate([(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]):
        Q[b, d] = Q[d, b] = q6[k]
    return Q


def euler_block(vbar, Mbar, q=0.0):
    Mbar = np.asarray(Mbar, dtype=float)
    U = np.zeros((3, 3))
    U[:2, :2] = Mbar + q * np.eye(2)
    U[:2, 2] = U[2, :2] = vbar
    return U


def build_euler_wave(vbar, Mbar, xi, N, frame=None, tol=1e-8):
    """Double-curl wave for the symmetric block Ubar = [[M, v], [v^t, 0]].

    ``frame`` is an optional pair (A, rho) sharing cutoff and phase with a
    transported tracer wave; by default an orthonormal frame with first
    column xi is used, so the cutoff is phi(y) itself.

    Raises
    ------
    SymbolRankDeficient
        If Ubar xi != 0 so the symbol equation has no exact solution.
    """
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    Ubar = euler_block(vbar, Mbar)
    if frame is None:
        A, rho = _aligned_frame(xi), 1.0
    else:
        A, rho = frame
    zeta = A[:, 0] / rho
    L = _symbol_matrix(zeta)
    q6, *_ = np.linalg.lstsq(L, Ubar.ravel(), rcond=None)
    resid = float(np.linalg.norm(L @ q6 - Ubar.ravel()))
    scale = max(1.0, np.linalg.norm(Ubar))
    if resid > tol * scale:
        raise SymbolRankDeficient(f"symbol residual {resid:.2e}: Ubar xi != 0")
    G = np.einsum("iab,lcd,bd->ilac", _EPS, _EPS, _unpack_sym(q6))
    Mbar = np.asarray(Mbar, dtype=float)
    z = StateZ(v=tuple(vbar), m11=0.5 * (Mbar[0, 0] - Mbar[1, 1]), m12=Mbar[0, 1])
    return WaveTerm(EULER_BLOCK, z, xi, float(N), A=A, rho=rho, coeffs=G, symbol_residual=resid)


def rescale_to_ball(term, center, r):
    """y -> term((y - center)/r): support moves to B_r(center)."""
    if r <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float)
    return replace(term, center=center + r * term.center, radius=r * term.radius)


def plane_wave_value(term, y):
    """The pure plane wave Vbar sin(N u_1) the term equals where the
    cutoff is one."""
    u = term.local_coordinates(y) @ term.frame
    return np.sin(term.N * u[:, 0])[:, None, None] * term.amplitude_V


def tube_distance(term, y):
    """Distance of the term's values to the segment [-Vbar, Vbar]."""
    V = term.evaluate(y).reshape(len(np.atleast_2d(y)), -1)
    a = term.amplitude_V.ravel()
    t = np.clip(V @ a / (a @ a), -1.0, 1.0)
    return np.linalg.norm(V - t[:, None] * a, axis=1)


def sphere_integral_of_abs_sine(N, radius=0.5):
    """int over B_radius of |sin(N y_1)| dy.

    The disc cross-section is pi (radius^2 - t^2); between consecutive zeros
    of sin(N t) the integrand has the closed-form antiderivative
    G(t) = pi [(t^2 - a) cos(N t)/N - 2 t sin(N t)/N^2 - 2 cos(N t)/N^3],
    a = radius^2, so the integral is a sum of |G(t_{i+1}) - G(t_i)|.
    """
    a = radius * radius
    zeros = np.arange(1, np.floor(radius * N / np.pi) + 1) * np.pi / N
    edges = np.concatenate([[0.0], zeros[zeros < radius], [radius]])
    c, s = np.cos(N * edges), np.sin(N * edges)
    G = np.pi * ((edges**2 - a) * c / N - 2.0 * edges * s / N**2 - 2.0 * c / N**3)
    return 2.0 * float(np.sum(np.abs(np.diff(G))))


def calibrate_alpha(N_min, N_max=4096, safety=0.95):
    """Mass constant: min over integer N in [N_min, N_max] of
    int_{B_1/2} |sin(N y_1)| dy, times a 5% safety factor."""
    if N_min < 8:
        raise ValueError("N_min must be at least 8")
    vals = [sphere_integral_of_abs_sine(N) for N in range(int(N_min), int(N_max) + 1)]
    return safety * min(vals)


def ball_qmc_points(n, radius=1.0, center=(0.0, 0.0, 0.0), seed=0):
    """Scrambled Sobol points mapped uniformly into a ball (rejection from
    the cube, deterministic for a fixed seed)."""
    out = []
    got = 0
    sampler = stats.qmc.Sobol(3, scramble=True, seed=seed)
    while got < n:
        m = int(2 ** np.ceil(np.log2(max(2 * (n - got), 2))))
        p = 2.0 * sampler.random(m) - 1.0
        p = p[np.einsum("ij,ij->i", p, p) < 1.0]
        out.append(p)
        got += len(p)
    p = np.concatenate(out)[:n]
    return np.asarray(center) + radius * p


def wave_mass(term, component, n=1 << 16, seed=0):
    """Quadrature of |b| (component 'b') or |v| ('v') over the support."""
    pts = ball_qmc_points(n, term.radius, term.center, seed)
    V = term.evaluate(pts)
    if component == "b":
        vals = np.abs(V[:, 3, 2])
    else:
        vals = np.hypot(V[:, 0, 2], V[:, 1, 2])
    return vals.mean() * 4.0 / 3.0 * np.pi * term.radius**3


def limit_alpha():
    """N -> infinity value (2/pi) |B_1/2| of the mass integral."""
    return 2.0 / np.pi * (4.0 / 3.0 * np.pi * 0.125)

