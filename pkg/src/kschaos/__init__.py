"""Regularized Keller-Segel particle systems on bounded convex domains.

Submodules: ``geometry`` (domains, projection), ``kernel`` (Newtonian and
mollified forces), ``particles`` (the N-particle reflected system),
``meanfield`` (finite-volume PDE and mean-field SDE), ``metrics``
(Wasserstein distances, coupling gaps), ``experiments`` (numerical studies),
``io`` (file formats) and ``cli``.
"""

from .errors import (BlowupDetected, CflViolation, ConfigError, KSError, NonConvergent,
                     NotOnBoundary, NumericalFailure, SingularAtOrigin, SizeMismatch)
from .geometry import ConvexPolygon, Disk, Rectangle, domain_from_config
from .kernel import Mollifier, NewtonianKernel, RegularizedKernel, omega
from .meanfield import DensityGrid, PDEConfig, solve_pde
from .particles import SimConfig, simulate

__version__ = "0.1.0"

__all__ = [
    "BlowupDetected", "CflViolation", "ConfigError", "KSError", "NonConvergent", "NotOnBoundary",
    "NumericalFailure", "SingularAtOrigin", "SizeMismatch", "ConvexPolygon", "Disk", "Rectangle",
    "domain_from_config", "Mollifier", "NewtonianKernel", "RegularizedKernel", "omega",
    "DensityGrid", "PDEConfig", "solve_pde", "SimConfig", "simulate", "__version__",
]
