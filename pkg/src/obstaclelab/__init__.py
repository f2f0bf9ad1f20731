"""Grid solver and free-boundary analysis for the variable-coefficient obstacle problem."""

__version__ = "0.1.0"

from .coeffs import CoefficientField, DomainError, ValidationError, make_test_family  # noqa: E402
from .solver import GridSolution, SolverOptions, solve_obstacle  # noqa: E402
from .geometry import free_boundary, normalization_map  # noqa: E402
from .energies import monneau_trace, weiss_trace  # noqa: E402
from .classify import AnalysisConfig, classify_point  # noqa: E402

__all__ = [
    "__version__", "CoefficientField", "DomainError", "ValidationError", "make_test_family", "GridSolution",
    "SolverOptions", "solve_obstacle", "free_boundary", "normalization_map", "weiss_trace", "monneau_trace",
    "AnalysisConfig", "classify_point",
]
