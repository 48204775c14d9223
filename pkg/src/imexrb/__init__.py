"""Reduced-basis implicit-explicit time integration and benchmark harness."""

from .integrators import (
    BasisState,
    IntegratorConfig,
    StepRecord,
    Trajectory,
    be_step,
    fe_step,
    imexrb_step,
    integrate,
    reduced_implicit_solve,
)
from .problems import (
    Grid,
    SemidiscreteSystem,
    build_advdiff,
    build_burgers,
    lift_join,
    lift_split,
)

__version__ = "0.1.0"

__all__ = [
    "BasisState",
    "Grid",
    "IntegratorConfig",
    "SemidiscreteSystem",
    "StepRecord",
    "Trajectory",
    "be_step",
    "build_advdiff",
    "build_burgers",
    "fe_step",
    "imexrb_step",
    "integrate",
    "lift_join",
    "lift_split",
    "reduced_implicit_solve",
    "__version__",
]
