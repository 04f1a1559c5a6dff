"""Numerical convex integration for the 2D Euler equations with a passive
tracer, and the vertical-field MHD solutions it induces.

Modules
-------
states
    State vectors, the constraint set K and the linear system.
hull
    Certified membership in the convex hull of K.
wavecone
    Wave-cone certificates and oscillation directions.
waves
    Localized divergence-free plane waves.
scheme
    The iteration, its metrics and the MHD lift.
io
    Configuration, output files and the command line.
"""

__version__ = "0.1.0"

from .errors import WildCurrentsError
from .states import Domain, KAtom, StateZ, ZERO_STATE

__all__ = ["Domain", "KAtom", "StateZ", "ZERO_STATE", "WildCurrentsError", "__version__"]
