"""Sampling rules on the domain and the mollifying kernel."""

from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.stats import qmc

from .bump import radial_profile
from .errors import GridTooCoarse


def sobol_unit_cube(n, seed, dim=3):
    """``n`` scrambled Sobol points in [0, 1)^dim (n rounded up to a power of 2)."""
    m = max(int(np.ceil(np.log2(max(n, 2)))), 1)
    return qmc.Sobol(dim, scramble=True, seed=seed).random_base2(m)


def domain_points(omega, n, seed):
    """Quasi-random points filling ``omega`` and the weight |omega|/len.

    For a ball, Sobol points in the bounding cube are kept when they fall
    inside, oversampling until at least ``n`` points remain.
    """
    lo, hi = omega.bounds
    k = n if omega.shape == "box" else int(np.ceil(n * 8.0 / (4.0 * np.pi / 3.0) * 1.1))
    while True:
        u = sobol_unit_cube(k, seed)
        pts = lo + u * (hi - lo)
        pts = pts[omega.contains(pts)]
        if len(pts) >= n:
            pts = pts[:n]
            return pts, omega.measure / len(pts)
        k *= 2


@lru_cache(maxsize=None)
def _profile_mass():
    f = lambda r: 4.0 * np.pi * r * r * radial_profile(np.array([r]), 0)[0][0]
    a, _ = quad(f, 0.0, 0.5, epsabs=1e-14, epsrel=1e-13)
    b, _ = quad(f, 0.5, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return a + b


def kernel_fourier(kappa):
    """Fourier transform of the unit mollifier at wavenumber ``kappa``."""
    def f(r):
        return 4.0 * np.pi * r * r * radial_profile(np.array([r]), 0)[0][0] * np.sinc(kappa * r / np.pi)
    a, _ = quad(f, 0.0, 0.5, epsabs=1e-14, limit=400)
    b, _ = quad(f, 0.5, 1.0, epsabs=1e-14, limit=400)
    return (a + b) / _profile_mass()


class MollifierKernel:
    """rho_eta(s) = phi(s/eta) / (eta^3 |phi|_1), supported in the ball of
    radius eta, where phi is the radial cutoff of :mod:`wildcurrents.bump`."""

    def __init__(self, eta):
        if not eta > 0:
            raise ValueError("eta must be positive")
        self.eta = float(eta)
        self.norm = _profile_mass()

    def __call__(self, s):
        r = np.linalg.norm(np.atleast_2d(s), axis=1) / self.eta
        return radial_profile(r, 0)[0] / (self.norm * self.eta**3)

    def total_mass(self):
        """Integral of the kernel by adaptive radial quadrature."""
        f = lambda r: 4.0 * np.pi * r * r * self(np.array([[r, 0.0, 0.0]]))[0]
        a, _ = quad(f, 0.0, 0.5 * self.eta, epsabs=1e-14, epsrel=1e-13)
        b, _ = quad(f, 0.5 * self.eta, self.eta, epsabs=1e-14, epsrel=1e-13, limit=200)
        return a + b

    def grid_rule(self, pitch):
        """Midpoint rule on a cubic grid of spacing ``pitch`` covering the
        support; weights are normalised to sum to one.

        Raises
        ------
        GridTooCoarse
            If ``pitch`` exceeds eta/4.
        """
        if pitch > self.eta / 4.0 * (1.0 + 1e-12):
            raise GridTooCoarse(f"pitch {pitch:.3e} exceeds eta/4 = {self.eta / 4:.3e}")
        n = int(np.ceil(2.0 * self.eta / pitch))
        ax = (np.arange(n) + 0.5) * (2.0 * self.eta / n) - self.eta
        s = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3)
        w = self(s)
        keep = w > 0
        s, w = s[keep], w[keep]
        return s, w / w.sum()

    def sampled_rule(self, m, seed):
        """Scrambled Sobol points in the support ball, weighted by the kernel."""
        u = sobol_unit_cube(int(m * 2.2), seed)
        s = (2.0 * u - 1.0) * self.eta
        s = s[np.einsum("ij,ij->i", s, s) < self.eta**2][:m]
        w = self(s)
        return s, w / w.sum()


def mollified_l2(func, points, weight, kernel, rule):
    """L2 norm over the sample points of (func * rho)(y).

    ``func`` maps (n, 3) points to (n, d) values; ``rule`` is a pair of
    offsets and weights from :class:`MollifierKernel`.
    """
    s, w = rule
    total = 0.0
    chunk = max(1, 400000 // len(s))
    for i in range(0, len(points), chunk):
        y = points[i:i + chunk]
        vals = func((y[:, None, :] - s[None, :, :]).reshape(-1, 3))
        vals = vals.reshape(len(y), len(s), -1)
        conv = np.einsum("pkd,k->pd", vals, w)
        total += float(np.sum(conv**2))
    return np.sqrt(weight * total)


def kernel_rule(kernel, wavenumber=0.0, max_points=40000, seed=0):
    """Inner rule for a convolution against ``kernel``.

    A midpoint grid with pitch min(eta/4, 2 pi/(8 k)) resolves oscillations
    of wavenumber ``k``; when that grid would exceed ``max_points`` a
    kernel-weighted Sobol rule with ``max_points`` nodes is used instead.

    Returns
    -------
    rule : tuple of (offsets, weights)
    method : str
        ``"grid"`` or ``"sampled"``.
    """
    pitch = kernel.eta / 4.0
    if wavenumber > 0:
        pitch = min(pitch, 2.0 * np.pi / (8.0 * wavenumber))
    n_axis = int(np.ceil(2.0 * kernel.eta / pitch))
    if 0.53 * n_axis**3 <= max_points:
        return kernel.grid_rule(pitch), "grid"
    return kernel.sampled_rule(max_points, seed), "sampled"
