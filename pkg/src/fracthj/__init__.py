"""Solvers for time-fractional Hamilton-Jacobi and Fokker-Planck equations on the torus."""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, SolverError, StabilityError  # noqa: E402
from .frac_calc import TimeGrid, TimeSeries  # noqa: E402
from .mittag_leffler import ml, ml_values  # noqa: E402
from .torus import TorusGrid  # noqa: E402

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "SolverError",
    "StabilityError",
    "TimeGrid",
    "TimeSeries",
    "TorusGrid",
    "ml",
    "ml_values",
]
