"""Sharp and regularized Sinkhorn distances, their gradients, barycenters and learning."""

from .barycenter import (
    BarycenterConfig,
    BarycenterProblem,
    SolverTrace,
    barycenter_functional,
    barycenter_gd,
    regularized_barycenter_ibp,
    sharp_barycenter_gd,
)
from .core import clip_to_interior, cost_from_points, grid_cost, simplex_project
from .exact import exact_wasserstein, wasserstein_1d
from .exceptions import (
    DegenerateInstanceError,
    InvalidInputError,
    InvalidParameterError,
    NonConvergenceError,
    NumericalOverflowError,
    OutOfScaleError,
    SharpOTError,
    StallError,
)
from .grad import dual_hessian, regularized_gradient, sharp_gradient
from .learning import SinkhornRegressor, WeightModel, cross_validate, gaussian_kernel
from .sinkhorn import SinkhornConfig, distances, regularized_distance, sharp_distance, sinkhorn_solve

__version__ = "0.1.0"

__all__ = [
    "BarycenterConfig",
    "BarycenterProblem",
    "DegenerateInstanceError",
    "InvalidInputError",
    "InvalidParameterError",
    "NonConvergenceError",
    "NumericalOverflowError",
    "OutOfScaleError",
    "SharpOTError",
    "SinkhornConfig",
    "SinkhornRegressor",
    "SolverTrace",
    "StallError",
    "WeightModel",
    "barycenter_functional",
    "barycenter_gd",
    "clip_to_interior",
    "cost_from_points",
    "cross_validate",
    "distances",
    "dual_hessian",
    "exact_wasserstein",
    "gaussian_kernel",
    "grid_cost",
    "regularized_barycenter_ibp",
    "regularized_distance",
    "regularized_gradient",
    "sharp_barycenter_gd",
    "sharp_distance",
    "sharp_gradient",
    "simplex_project",
    "sinkhorn_solve",
    "wasserstein_1d",
]
