"""Exception types shared by the solvers and the command line."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class SolverError(RuntimeError):
    """Base class for numerical failures."""


class StabilityError(SolverError):
    """A time-stepper produced a runaway solution or violated a step restriction."""

    def __init__(self, message: str, *, t_reached: float | None = None, admissible_dt: float | None = None):
        super().__init__(message)
        self.t_reached = t_reached
        self.admissible_dt = admissible_dt


class ConvergenceError(SolverError):
    """The Picard iteration failed to contract."""

    def __init__(self, message: str, *, trace=None, t_reached: float = 0.0):
        super().__init__(message)
        self.trace = trace
        self.t_reached = t_reached
