"""Quantile predictive regression with persistent predictors.

Inference combines a two-step instrumented quantile regression with the
ordinary quantile fit; forecasting selects predictors per quantile level and
scores the resulting quantile paths with weighted CRPS.
"""

from .errors import (
    ContractError,
    ConvergenceError,
    DegenerateEstimateError,
    DegenerateSplitError,
    ParameterError,
    SingularDesignError,
    WeakInstrumentError,
)
from .solver import QuantileFit, fit_ols, fit_quantile

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "ConvergenceError",
    "DegenerateEstimateError",
    "DegenerateSplitError",
    "ParameterError",
    "SingularDesignError",
    "WeakInstrumentError",
    "QuantileFit",
    "fit_ols",
    "fit_quantile",
    "__version__",
]
