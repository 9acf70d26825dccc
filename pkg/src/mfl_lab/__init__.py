"""Numerical laboratory for entropy-regularized gradient flows of densities.

Subpackages by concern: :mod:`grid` (torus grids, quadrature, kernels),
:mod:`functionals` (objective components and the fixed-point minimizer),
:mod:`spectrum` (kernel Fourier analysis and convexity thresholds),
:mod:`eot` (entropic transport and the approximate-Fisher regularizer),
:mod:`flow` (finite-volume integrator), :mod:`particles` (SDE simulators),
:mod:`bounds` (closed-form constants and rate certificates),
:mod:`trajectory` (snapshot-based trajectory estimation),
:mod:`experiments` / :mod:`cli` (configuration-driven pipelines).
"""

from . import bounds, eot, flow, functionals, grid, particles, reporting, spectrum, trajectory
from .errors import MflLabError
from .grid import GridDensity, GridFunction, TorusGrid

__version__ = "0.1.0"

__all__ = [
    "GridDensity",
    "GridFunction",
    "MflLabError",
    "TorusGrid",
    "bounds",
    "eot",
    "flow",
    "functionals",
    "grid",
    "particles",
    "reporting",
    "spectrum",
    "trajectory",
]
