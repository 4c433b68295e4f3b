"""Numerical toolkit for the one-dimensional dissipative Boltzmann equation.

A discontinuous Galerkin solver for the self-similar equation, a particle
simulation of the original equation and moment-theory checks.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DGField,
    Grid,
    ModelParams,
    MomentRecord,
    QuadratureRule,
    eval_field,
    field_moments,
    gauss_legendre,
    project_initial,
)
from .errors import (  # noqa: E402
    ConfigError,
    InsufficientDataError,
    InvalidArgumentError,
    MaxStepsExceededError,
    NumericalBlowupError,
    OutOfDomainError,
)

__all__ = [
    "__version__",
    "DGField",
    "Grid",
    "ModelParams",
    "MomentRecord",
    "QuadratureRule",
    "eval_field",
    "field_moments",
    "gauss_legendre",
    "project_initial",
    "ConfigError",
    "InsufficientDataError",
    "InvalidArgumentError",
    "MaxStepsExceededError",
    "NumericalBlowupError",
    "OutOfDomainError",
]
