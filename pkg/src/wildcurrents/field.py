"""Finite sums of localized waves, evaluated pointwise with exact derivatives."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .states import disassemble_V, linear_defect


@dataclass(frozen=True)
class WaveGroup:
    """Waves sharing one support ball, inserted at iteration ``level``."""

    center: np.ndarray
    radius: float
    terms: tuple
    level: int = 0


class AnalyticField:
    """Sum of wave groups; outside every support ball the value is exactly
    the zero state."""

    def __init__(self, groups=()):
        self.groups = tuple(groups)
        self._tree = None
        self._rmax = max((g.radius for g in self.groups), default=0.0)

    def __len__(self):
        return len(self.groups)

    @property
    def terms(self):
        return [t for g in self.groups for t in g.terms]

    def with_groups(self, groups):
        return AnalyticField(self.groups + tuple(groups))

    def restricted_to_level(self, level):
        return AnalyticField([g for g in self.groups if g.level == level])

    def _hits(self, y):
        if not self.groups:
            return
        if len(self.groups) < 8:
            for g in self.groups:
                d = y - g.center
                idx = np.flatnonzero(np.einsum("ij,ij->i", d, d) < g.radius**2)
                if idx.size:
                    yield g, idx
            return
        if len(y) <= 4 * len(self.groups):
            if self._tree is None:
                self._tree = cKDTree(np.array([g.center for g in self.groups]))
            near = self._tree.query_ball_point(y, self._rmax)
            pairs = [(j, i) for i, js in enumerate(near) for j in js]
            if not pairs:
                return
            pairs.sort()
            gj = np.array([p[0] for p in pairs])
            pi = np.array([p[1] for p in pairs])
            cuts = np.flatnonzero(np.diff(gj)) + 1
            for block in np.split(np.arange(len(gj)), cuts):
                g = self.groups[gj[block[0]]]
                idx = pi[block]
                d = y[idx] - g.center
                idx = idx[np.einsum("ij,ij->i", d, d) < g.radius**2]
                if idx.size:
                    yield g, idx
            return
        tree = cKDTree(y)
        for g in self.groups:
            idx = tree.query_ball_point(g.center, g.radius)
            if idx:
                idx = np.sort(np.asarray(idx))
                d = y[idx] - g.center
                idx = idx[np.einsum("ij,ij->i", d, d) < g.radius**2]
                if idx.size:
                    yield g, idx

    def evaluate_V(self, y, jacobian=False):
        """Summed 4x3 matrix field (and its jacobian) at points (n, 3)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        V = np.zeros((len(y), 4, 3))
        dV = np.zeros((len(y), 4, 3, 3)) if jacobian else None
        for g, idx in self._hits(y):
            for t in g.terms:
                if jacobian:
                    a, da = t.evaluate(y[idx], jacobian=True)
                    V[idx] += a
                    dV[idx] += da
                else:
                    V[idx] += t.evaluate(y[idx])
        return (V, dV) if jacobian else V

    def evaluate(self, y):
        """States (n, 8) in the canonical order."""
        return disassemble_V(self.evaluate_V(y))

    def divergence(self, y):
        _, dV = self.evaluate_V(y, jacobian=True)
        return np.einsum("pijj->pi", dV)

    def linear_defect(self, y):
        return linear_defect(self.evaluate_V(y))
