"""Ladder-climbing control synthesis and verification for a bilinear quantum system.

The model is ``i dpsi/dt = -Delta^alpha psi - u(t) cos(theta) psi`` on the odd
functions of the circle, written in the sine basis.  Submodules:

``model``      spectra, couplings, states, Galerkin compressions
``engine``     exact piecewise-constant propagation and truncation control
``pulse``      resonant two-level pulses with averaging certificates
``ladder``     level-by-level steering inside a window [N0, P]
``disperse``   dispersal of low modes by ``exp(K B)``
``pipeline``   small-time steering between arbitrary unit states
``findim``     finite-dimensional Lie-rank and orbit diagnostics
``cli``        experiment harness
"""

from .errors import (BudgetError, DegenerateTransitionError, DomainError, NotFoundError,
                     QSteerError, StageError, TruncationError)
from .model import ModelSpec, QuantumState, galerkin

__all__ = [
    "BudgetError", "DegenerateTransitionError", "DomainError", "NotFoundError", "QSteerError",
    "StageError", "TruncationError", "ModelSpec", "QuantumState", "galerkin",
]
