"""Mutual-information estimators, exact oracles and adversarial simulations."""

from . import distributions, estimators, experiments, numerics, oracles
from .errors import InfiniteDivergenceError, NumericError, UsageError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "InfiniteDivergenceError",
    "NumericError",
    "UsageError",
    "distributions",
    "estimators",
    "experiments",
    "numerics",
    "oracles",
]
