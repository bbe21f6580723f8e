"""Planning, flight control and on-wall stability analysis for a two-rope
wall-climbing robot."""

__version__ = "0.1.0"

from .model import (
    ControlInput,
    Ellipsoid,
    KinematicsError,
    ReducedState,
    Scenario,
    SingularityError,
)

__all__ = [
    "ControlInput",
    "Ellipsoid",
    "KinematicsError",
    "ReducedState",
    "Scenario",
    "SingularityError",
    "__version__",
]
