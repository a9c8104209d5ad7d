"""Transfer protocols for a dissipative r-theta manipulator.

Polynomial inverse-engineered inputs, constraint-limited and minimum-time
planners, feedback tracking, a one-shot mid-course correction and the
robustness studies that compare them.
"""
from .dynamics import GenInput, KinPoint, State, SystemParams
from .errors import (
    ConvergenceError,
    DomainError,
    InfeasibleError,
    NonMonotoneError,
    SimulationAbort,
    UndefinedCorrectionError,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "GenInput",
    "InfeasibleError",
    "KinPoint",
    "NonMonotoneError",
    "SimulationAbort",
    "State",
    "SystemParams",
    "UndefinedCorrectionError",
    "__version__",
]
