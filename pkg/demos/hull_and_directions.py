"""Decide hull membership for a few states and pick oscillation directions.

    python demos/hull_and_directions.py
"""

import numpy as np

from wildcurrents.hull import interior_U, membership
from wildcurrents.states import ZERO_STATE, KAtom, StateZ, materialize
from wildcurrents.wavecone import oscillation_direction

# The zero state sits deep inside the relaxed set.
ok, dec = interior_U(ZERO_STATE, 0.1)
print("zero state interior at margin 0.1:", ok, "with", len(dec), "atoms")

# Push an atom outward: membership returns a separating functional instead.
z = materialize(KAtom(0.3, 1)).z7.copy()
z[[0, 3, 4]] *= 1.2
res = membership(z)
print("scaled atom inside?", res.inside, " certified gap:", f"{res.gap:.3e}")

# A state halfway to the shell, and the segment the next wave will follow.
state = StateZ(b=0.4, w=(0.1, 0.2), v=(0.3, -0.2))
ok, dec = interior_U(state, 0.02)
d = oscillation_direction(state, dec, delta=0.02)
print("direction zbar:", np.round(d.zbar.as_array(), 4))
print("wave-cone residual:", f"{d.certificate.residual:.1e}", " kernel xi:", np.round(d.certificate.xi, 4))
print("segment stays interior:", d.segment_ok, " amplitude bound met:", d.lower_bound_ok)
