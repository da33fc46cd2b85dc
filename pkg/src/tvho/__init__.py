"""High-order total-variation tools and a boundary-aware ADMM video solver."""

from .bcdiff import BoundaryCondition, build_derivative_matrix
from .diffkernel import KernelSpec, design_nr_kernel, frequency_response
from .solver import SolverConfig, build_operators, solve
from .transforms import make_measurement, make_sampling_plan, make_wavelet

__version__ = "0.1.0"

__all__ = [
    "BoundaryCondition",
    "KernelSpec",
    "SolverConfig",
    "build_derivative_matrix",
    "build_operators",
    "design_nr_kernel",
    "frequency_response",
    "make_measurement",
    "make_sampling_plan",
    "make_wavelet",
    "solve",
]
