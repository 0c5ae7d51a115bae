"""Fast evaluation of variable-order Caputo derivatives by exponential-sum
kernel compression, with L1 reference solvers for subdiffusion problems."""

from .diffusion import (
    DiffusionProblem,
    Solution,
    SpatialGrid,
    solve_by_coefficients,
    solve_fast_esa,
    solve_l1,
    stability_check,
)
from .esa_kernel import ESAParams, VOFunction, approx_kernel, kernel_weights, select_parameters
from .verification import (
    ConvergenceTable,
    ManufacturedProblem,
    example1,
    example2,
    max_error,
    refinement_study,
    solve_ode,
)
from .vo_caputo import TimeGrid, caputo_oracle, fast_derivative_series, l1_derivative

__version__ = "0.1.0"
