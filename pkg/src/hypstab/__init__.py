"""Boundary feedback stabilization toolkit for 1-D quasilinear
hyperbolic balance laws with partially dissipative sources.

Subpackages/modules:

* matrixcore -- small dense spectral kernels
* structure  -- symmetrizer / partial-dissipativity checks
* feedback   -- boundary gain admissibility conditions
* simulator  -- closed-loop method-of-lines solver
* lyapunov   -- weighted Lyapunov functionals and decay-rate fits
* sve        -- Saint-Venant-Exner river model instance
* custom     -- user-defined affine/rational models from JSON
* cli        -- command line entry points
"""

from . import errors
from .matrixcore import Spectrum, spectral_decompose, is_positive_definite, invert
from .structure import SystemModel, StructureReport, check_partial_dissipativity
from .feedback import FeedbackGain, GainReport, check_gain

__all__ = [
    "errors",
    "Spectrum", "spectral_decompose", "is_positive_definite", "invert",
    "SystemModel", "StructureReport", "check_partial_dissipativity",
    "FeedbackGain", "GainReport", "check_gain",
]

__version__ = "0.1.0"
