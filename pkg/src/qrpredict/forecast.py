"""Quantile-grid forecasting, quantile-weighted CRPS and tail-risk indicators.

Throughout, ``y`` and ``x`` are aligned on the regression rows: row ``t``
holds ``y_t`` and the predictors dated ``t - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError
from .solver import add_intercept, fit_quantile

__all__ = [
    "QuantileGrid",
    "WeightScheme",
    "SCHEMES",
    "SelectionMap",
    "select_predictors",
    "InsampleFit",
    "fit_insample",
    "OosForecast",
    "predict_oos",
    "ForecastEvaluation",
    "qw_crps",
    "tail_indicator",
    "count_crossings",
    "min_window",
]


@dataclass(frozen=True)
class QuantileGrid:
    """Strictly increasing quantile levels in (0, 1)."""

    taus: tuple

    def __post_init__(self):
        t = np.asarray(self.taus, dtype=float).ravel()
        if t.size == 0:
            raise ParameterError("quantile grid is empty")
        if np.any(t <= 0) or np.any(t >= 1):
            raise ParameterError("quantile levels must lie in (0, 1)")
        if np.any(np.diff(t) <= 0):
            raise ParameterError("quantile levels must be strictly increasing")
        object.__setattr__(self, "taus", tuple(float(v) for v in t))

    @classmethod
    def default(cls):
        return cls(tuple(j / 100 for j in range(1, 100)))

    @classmethod
    def parse(cls, text):
        """Parse ``"start:stop:step"`` (inclusive) or a comma-separated list."""
        text = text.strip()
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ParameterError(f"grid spec must be start:stop:step, got {text!r}")
            start, stop, step = parts
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return cls(tuple(round(start + i * step, 12) for i in range(n)))
        return cls(tuple(float(p) for p in text.split(",") if p.strip()))

    @property
    def array(self):
        return np.array(self.taus)

    def __len__(self):
        return len(self.taus)


class WeightScheme:
    """Quantile weights ``W(tau)`` for scoring and indicators."""

    CENTER = "Center"
    LEFT = "LeftTail"
    RIGHT = "RightTail"
    BOTH = "BothTails"
    NORM_RIGHT = "NormalizedRight"
    NORM_LEFT = "NormalizedLeft"

    _raw = {
        CENTER: lambda t: t * (1 - t),
        LEFT: lambda t: (1 - t) ** 2,
        RIGHT: lambda t: t**2,
        BOTH: lambda t: (2 * t - 1) ** 2,
    }

    def __init__(self, kind):
        if kind not in self._raw and kind not in (self.NORM_RIGHT, self.NORM_LEFT):
            raise ParameterError(f"unknown weight scheme {kind!r}")
        self.kind = kind

    def __repr__(self):
        return f"WeightScheme({self.kind!r})"

    def __eq__(self, other):
        return isinstance(other, WeightScheme) and other.kind == self.kind

    def __hash__(self):
        return hash(self.kind)

    def weights(self, taus):
        t = np.asarray(taus, dtype=float)
        if self.kind == self.NORM_RIGHT:
            w = t**2
            return w / w.sum()
        if self.kind == self.NORM_LEFT:
            w = (1 - t) ** 2
            return -w / w.sum()
        return self._raw[self.kind](t)


SCHEMES = (WeightScheme.CENTER, WeightScheme.LEFT, WeightScheme.RIGHT, WeightScheme.BOTH)


@dataclass(frozen=True)
class SelectionMap:
    """Boolean ``mask[j, i]``: predictor ``i`` is used at level ``taus[j]``."""

    taus: tuple
    mask: np.ndarray

    def selected(self, j):
        return np.flatnonzero(self.mask[j])

    def as_dict(self):
        return {tau: tuple(int(i) for i in self.selected(j)) for j, tau in enumerate(self.taus)}

    @property
    def max_size(self):
        return int(self.mask.sum(axis=1).max(initial=0))


def select_predictors(pvalues, grid, threshold=0.01):
    """Keep predictor ``i`` at ``tau_j`` when its p-value is strictly below ``threshold``.

    Parameters
    ----------
    pvalues : (J, K) array
        Marginal p-values per grid level and predictor.
    grid : QuantileGrid
    threshold : float
    """
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 2 or p.shape[0] != len(grid):
        raise ContractError(f"p-value table must be {len(grid)} x K, got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ContractError("p-value table has missing cells")
    if not 0 < threshold < 1:
        raise ParameterError(f"threshold must lie in (0, 1), got {threshold}")
    return SelectionMap(grid.taus, p < threshold)


def min_window(sel):
    """Smallest admissible training length: ``10 * (largest selection + 1)``."""
    return 10 * (sel.max_size + 1)


def _check_panel(y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ContractError(f"y ({y.shape}) and x ({x.shape}) are not aligned")
    return y, x


def _fit_one(y, x, cols, tau):
    design = add_intercept(x[:, cols], n=len(y))
    return fit_quantile(design, y, tau)


@dataclass(frozen=True)
class InsampleFit:
    taus: tuple
    coefficients: list
    predictions: np.ndarray
    residuals: np.ndarray


def fit_insample(y, x, sel, grid):
    """Full-sample quantile fits on the selected predictors at every level.

    Returns predictions and residuals as ``(T, J)`` arrays.
    """
    y, x = _check_panel(y, x)
    if sel.taus != grid.taus or sel.mask.shape[1] != x.shape[1]:
        raise ContractError("selection map does not match the grid or predictor count")
    T, J = len(y), len(grid)
    pred = np.empty((T, J))
    coefs = []
    for j, tau in enumerate(grid.taus):
        cols = sel.selected(j)
        fit = _fit_one(y, x, cols, tau)
        coefs.append(fit.coefficients)
        pred[:, j] = y - fit.residuals
    return InsampleFit(grid.taus, coefs, pred, y[:, None] - pred)


@dataclass(frozen=True)
class OosForecast:
    """Expanding-window forecasts; ``periods`` are 1-based row numbers."""

    taus: tuple
    periods: np.ndarray
    predictions: np.ndarray
    errors: np.ndarray


def predict_oos(y, x, sel, grid, T_m, *, reselect=None):
    """Expanding-window quantile forecasts for periods ``T_m..T``.

    For period ``T~`` the model is fit on periods ``1..T~-1`` and evaluated at
    the predictors dated ``T~ - 1`` (row ``T~`` of ``x``).

    Parameters
    ----------
    y, x : arrays
        Aligned regression rows.
    sel : SelectionMap
        Fixed selection, used unless ``reselect`` is given.
    grid : QuantileGrid
    T_m : int
        First forecast period (1-based).
    reselect : callable, optional
        ``reselect(y_train, x_train) -> SelectionMap`` run on every window.
    """
    y, x = _check_panel(y, x)
    T = len(y)
    T_m = int(T_m)
    if not 2 <= T_m <= T:
        raise ContractError(f"first forecast period must lie in 2..{T}, got {T_m}")
    if reselect is None and T_m - 1 < min_window(sel):
        raise ContractError(
            f"training window {T_m - 1} is below the minimum {min_window(sel)} for this selection"
        )
    periods = np.arange(T_m, T + 1)
    J = len(grid)
    pred = np.empty((len(periods), J))
    for n, period in enumerate(periods):
        ytr, xtr = y[: period - 1], x[: period - 1]
        cur = sel if reselect is None else reselect(ytr, xtr)
        if len(ytr) < min_window(cur):
            raise ContractError(f"training window {len(ytr)} is below the minimum {min_window(cur)}")
        xnew = x[period - 1]
        for j, tau in enumerate(grid.taus):
            cols = cur.selected(j)
            coef = _fit_one(ytr, xtr, cols, tau).coefficients
            pred[n, j] = coef[0] + xnew[cols] @ coef[1:]
    errors = y[periods - 1][:, None] - pred
    return OosForecast(grid.taus, periods, pred, errors)


@dataclass(frozen=True)
class ForecastEvaluation:
    scheme: str
    scores: np.ndarray
    qw_c: float


def qw_crps(errors, scheme, grid):
    """Quantile-weighted CRPS per period and its average.

    ``qw-CRPS_t = 2/(J-1) * sum_{j<J} W(tau_j) rho_{tau_j}(u_{t,j})``; the top
    grid level is not scored.
    """
    if not isinstance(scheme, WeightScheme):
        scheme = WeightScheme(scheme)
    u = np.asarray(errors, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    J = len(grid)
    if J < 2:
        raise ParameterError("qw-CRPS needs at least two quantile levels")
    if u.shape[1] != J:
        raise ContractError(f"errors have {u.shape[1]} columns, grid has {J} levels")
    taus = grid.array[:-1]
    w = scheme.weights(taus)
    loss = u[:, :-1] * (taus - (u[:, :-1] < 0))
    scores = 2.0 / (J - 1) * (loss @ w)
    return ForecastEvaluation(scheme.kind, scores, float(scores.mean()) if len(scores) else float("nan"))


def tail_indicator(predictions, side, grid):
    """Normalized tail-weighted sum of quantile predictions per period.

    ``side="right"`` uses ``tau^2 / sum tau^2``; ``side="left"`` uses
    ``-(1-tau)^2 / sum (1-tau)^2``.
    """
    p = np.asarray(predictions, dtype=float)
    if p.ndim == 1:
        p = p[None, :]
    if p.shape[1] != len(grid):
        raise ContractError(f"predictions have {p.shape[1]} columns, grid has {len(grid)} levels")
    side = side.lower()
    if side == "right":
        w = WeightScheme(WeightScheme.NORM_RIGHT).weights(grid.array)
    elif side == "left":
        w = WeightScheme(WeightScheme.NORM_LEFT).weights(grid.array)
    else:
        raise ParameterError(f"side must be 'left' or 'right', got {side!r}")
    return p @ w


def count_crossings(predictions):
    """Number of periods whose predictions decrease somewhere along the grid."""
    p = np.asarray(predictions, dtype=float)
    return int(np.any(np.diff(p, axis=1) < 0, axis=1).sum())

