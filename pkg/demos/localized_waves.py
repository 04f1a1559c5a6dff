"""Build the two localized waves and look at their exactness and decay.

    python demos/localized_waves.py
"""

import numpy as np

from wildcurrents.states import KAtom, materialize
from wildcurrents.waves import build_euler_wave, build_tracer_wave, plane_wave_value, tube_distance

rng = np.random.default_rng(0)
y = rng.uniform(-1, 1, size=(40000, 3))
y = y[np.linalg.norm(y, axis=1) < 1]
inner = np.linalg.norm(y, axis=1) < 0.5

zbar = 0.5 * (materialize(KAtom(np.pi / 2, -1)) - materialize(KAtom(0.0, 1)))
xi = np.array([1.0, 1.0, -1.0]) / np.sqrt(3)

print(" N   tracer div   tube dist   euler div    sup|s33|")
for N in (8, 16, 32, 64):
    t = build_tracer_wave(0.3, 1.0, N)
    e = build_euler_wave(zbar.v, zbar.M, xi, N)
    _, dt = t.evaluate(y, jacobian=True)
    Ve, de = e.evaluate(y, jacobian=True)
    print(f"{N:3d}  {np.abs(np.einsum('pijj->pi', dt)).max():.1e}     {tube_distance(t, y).max():.3f}"
          f"      {np.abs(np.einsum('pijj->pi', de)).max():.1e}     {np.abs(Ve[:, 2, 2]).max():.4f}")

# On the plateau both waves are exact plane waves.
err = np.abs(e.evaluate(y[inner]) - plane_wave_value(e, y[inner])).max()
print("Euler wave minus plane wave on the inner ball:", err)
