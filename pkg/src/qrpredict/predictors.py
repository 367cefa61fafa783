"""Predictor construction for the bond-premium application."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .solver import add_intercept, fit_ols

__all__ = ["construct_trend", "trend_direct", "CpFactor", "construct_cp", "ar1_coefficient"]


def construct_trend(series, w=0.9):
    """Exponentially weighted backward sum ``(1-w) sum_{i>=1} w^i s_{t-i}``.

    Uses the recursion ``trend_t = w (trend_{t-1} + (1-w) s_{t-1})``.  The
    first entry has no past and is ``nan``.
    """
    if not 0.0 < w < 1.0:
        raise ParameterError(f"smoothing weight must lie in (0, 1), got {w}")
    s = np.asarray(series, dtype=float)
    out = np.empty_like(s)
    if s.size == 0:
        return out
    out[0] = np.nan
    acc = 0.0
    for t in range(1, len(s)):
        acc = w * (acc + (1.0 - w) * s[t - 1])
        out[t] = acc
    return out


def trend_direct(series, w=0.9):
    """Quadratic-time direct sum; reference for ``construct_trend``."""
    s = np.asarray(series, dtype=float)
    out = np.full(s.shape, np.nan)
    for t in range(1, len(s)):
        i = np.arange(1, t + 1)
        out[t] = (1.0 - w) * np.sum(w**i * s[t - i])
    return out


@dataclass(frozen=True)
class CpFactor:
    """Fitted CP factor and its forward-rate loadings (intercept first)."""

    values: np.ndarray
    coefficients: np.ndarray


def construct_cp(forward_rates, avg_rx):
    """Fitted values of ``avg_rx`` regressed on ``(1, forward rates)``.

    Rows must already be aligned: row ``t`` of ``forward_rates`` holds the
    forwards dated ``t - 1`` that predict ``avg_rx`` at row ``t``.
    """
    F = np.asarray(forward_rates, dtype=float)
    r = np.asarray(avg_rx, dtype=float)
    if F.ndim != 2 or F.shape[0] != r.shape[0]:
        raise ParameterError(f"forwards {F.shape} and average return {r.shape} are not aligned")
    fit = fit_ols(add_intercept(F), r)
    return CpFactor(fit.fitted, fit.coefficients)


def ar1_coefficient(series):
    """Least-squares slope of ``s_t`` on ``(1, s_{t-1})``."""
    s = np.asarray(series, dtype=float)
    if s.ndim != 1 or len(s) < 3:
        raise ParameterError("AR(1) fit needs a 1-D series with at least 3 points")
    fit = fit_ols(add_intercept(s[:-1]), s[1:])
    return float(fit.coefficients[1])
