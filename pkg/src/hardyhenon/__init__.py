"""Compactly supported radial solutions of the Hardy-Henon equation with
sublinear absorption: two independent solvers (radial shooting and
constrained variational minimization), identity certificates, and the
rescaled porous-medium simulator built on the same profile."""

__version__ = "0.1.0"

from .errors import (
    BracketInvalid,
    ConsistencyFailure,
    DegenerateProfile,
    GridTooShort,
    HardyHenonError,
    IntegratorStall,
    NonConvergence,
    NonIntegrable,
    NoTailRadius,
    StabilityViolation,
    WrongRegime,
)
from .params import (
    DerivedConstants,
    InvalidParameter,
    ProblemParams,
    Regime,
    derive,
    pohozaev_ratio,
    validate,
)
from .radial import (
    RadialProfile,
    graded_grid,
    read_profile_csv,
    resample,
    uniform_grid,
    write_profile_csv,
)

__all__ = [
    "BracketInvalid",
    "ConsistencyFailure",
    "DegenerateProfile",
    "DerivedConstants",
    "GridTooShort",
    "HardyHenonError",
    "IntegratorStall",
    "InvalidParameter",
    "NonConvergence",
    "NonIntegrable",
    "NoTailRadius",
    "ProblemParams",
    "RadialProfile",
    "Regime",
    "StabilityViolation",
    "WrongRegime",
    "derive",
    "graded_grid",
    "pohozaev_ratio",
    "read_profile_csv",
    "resample",
    "uniform_grid",
    "validate",
    "write_profile_csv",
    "__version__",
]
