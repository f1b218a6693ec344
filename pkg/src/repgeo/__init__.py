"""Coordinate-aware geometry for parameter spaces.

Transformation rules for the objects that appear when training and analysing
models (gradients, metrics, Hessians, densities), and tools to check which
derived quantities survive a change of parametrization.
"""

from . import calculus, charts, curvature, dynamics, measures, metrics
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"

__all__ = ["calculus", "charts", "curvature", "dynamics", "measures", "metrics"]
