"""Pseudo-spectral simulator for the 2D simplified Ericksen-Leslie system on a torus."""

from .forcing import ForcingSpec, ForcingTerm
from .integrator import PicardConfig, State, StepperConfig, make_state, picard_solve, run, step
from .potential import PotentialSpec
from .spectral import TorusGrid

__all__ = [
    "ForcingSpec",
    "ForcingTerm",
    "PicardConfig",
    "PotentialSpec",
    "State",
    "StepperConfig",
    "TorusGrid",
    "make_state",
    "picard_solve",
    "run",
    "step",
]

__version__ = "0.1.0"
