"""CSV ingestion and run configuration for the command-line pipeline.

A data file has one row per month.  Row ``t`` holds the response observed at
``t`` and the predictors dated ``t``; regressions pair the response at ``t``
with predictors at ``t - 1``, so one row is lost to the lag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .density import DensityConfig
from .errors import ContractError, ParameterError
from .forecast import QuantileGrid
from .ivx import InstrumentConfig
from .predictors import construct_cp, construct_trend

__all__ = ["RunConfig", "Panel", "load_run_config", "load_panel", "read_data"]

_TOP_KEYS = {
    "columns", "construct", "tau_grid", "instrument", "density", "threshold", "seed", "forecast",
    "simulate",
}


@dataclass(frozen=True)
class RunConfig:
    """Settings for ``test``, ``forecast``, ``indicator`` and ``ar1``."""

    date: str = "date"
    response: str = "y"
    predictors: tuple = ()
    construct: dict = field(default_factory=dict)
    grid: QuantileGrid = field(default_factory=QuantileGrid.default)
    instrument: InstrumentConfig = field(default_factory=InstrumentConfig)
    M1: int = 100
    M2: int = 50
    threshold: float = 0.01
    seed: int = 0
    T_m: int | None = None
    reselect: bool = False
    baseline: tuple = ()

    def density(self, *key):
        return DensityConfig(self.M1, self.M2, self.seed, key)


def _expect_keys(section, data, allowed):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ParameterError(f"unknown key(s) in '{section}': {', '.join(unknown)}")


def load_run_config(path=None, **overrides):
    """Read a YAML (or JSON) run configuration; ``None`` gives the defaults.

    Keyword overrides (``grid``, ``threshold``, ``seed``) win over the file.
    """
    data = {}
    if path is not None:
        import yaml

        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ParameterError("configuration must be a key-value mapping")
    _expect_keys("top level", data, _TOP_KEYS)
    cols = data.get("columns", {}) or {}
    _expect_keys("columns", cols, {"date", "response", "predictors"})
    inst = data.get("instrument", {}) or {}
    _expect_keys("instrument", inst, {"c_z", "delta", "lam"})
    dens = data.get("density", {}) or {}
    _expect_keys("density", dens, {"M1", "M2"})
    fc = data.get("forecast", {}) or {}
    _expect_keys("forecast", fc, {"T_m", "reselect", "baseline"})
    construct = data.get("construct", {}) or {}
    for name, spec in construct.items():
        if not isinstance(spec, dict):
            raise ParameterError(f"construct.{name} must be a mapping")
        _expect_keys(f"construct.{name}", spec, {"trend_of", "w", "forwards", "avg_rx"})
    grid = data.get("tau_grid")
    kw = dict(
        date=cols.get("date", "date"),
        response=cols.get("response", "y"),
        predictors=tuple(cols.get("predictors", ()) or ()),
        construct=dict(construct),
        grid=QuantileGrid.parse(str(grid)) if grid is not None else QuantileGrid.default(),
        instrument=InstrumentConfig(**inst),
        M1=int(dens.get("M1", 100)),
        M2=int(dens.get("M2", 50)),
        threshold=float(data.get("threshold", 0.01)),
        seed=int(data.get("seed", 0)),
        T_m=fc.get("T_m"),
        reselect=bool(fc.get("reselect", False)),
        baseline=tuple(fc.get("baseline", ()) or ()),
    )
    kw.update({k: v for k, v in overrides.items() if v is not None})
    if not 0 < kw["threshold"] < 1:
        raise ParameterError(f"threshold must lie in (0, 1), got {kw['threshold']}")
    return RunConfig(**kw)


def read_data(path, date_col="date"):
    """Load a monthly CSV and check its date column."""
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ContractError(f"cannot read data file {path}: {exc}") from exc
    if date_col not in df.columns:
        raise ContractError(f"data file has no date column '{date_col}'")
    try:
        months = pd.PeriodIndex(pd.to_datetime(df[date_col].astype(str), format="%Y-%m"), freq="M")
    except (ValueError, TypeError) as exc:
        raise ContractError(f"column '{date_col}' must hold yyyy-mm dates: {exc}") from exc
    steps = np.diff(months.asi8)
    if len(steps) and not np.all(steps == 1):
        bad = int(np.flatnonzero(steps != 1)[0]) + 1
        raise ContractError(f"column '{date_col}' is not strictly increasing monthly at row {bad + 1}")
    df[date_col] = months.strftime("%Y-%m")
    return df


def _numeric(df, col):
    if col not in df.columns:
        raise ContractError(f"data file has no column '{col}'")
    s = pd.to_numeric(df[col], errors="coerce")
    if s.isna().any():
        raise ContractError(f"column '{col}' has missing or non-numeric values")
    v = s.to_numpy(dtype=float)
    if not np.all(np.isfinite(v)):
        raise ContractError(f"column '{col}' has non-finite values")
    return v


def _construct(df, name, spec):
    if "trend_of" in spec:
        return construct_trend(_numeric(df, spec["trend_of"]), float(spec.get("w", 0.9)))
    if "forwards" in spec:
        F = np.column_stack([_numeric(df, c) for c in spec["forwards"]])
        rx_cols = spec.get("avg_rx")
        if not rx_cols:
            raise ParameterError(f"construct.{name} needs 'avg_rx'")
        rx_cols = [rx_cols] if isinstance(rx_cols, str) else list(rx_cols)
        avg = np.column_stack([_numeric(df, c) for c in rx_cols]).mean(axis=1)
        # loadings from avg_rx_t on forwards_{t-1}; the factor is dated with its forwards
        cp = construct_cp(F[:-1], avg[1:])
        return cp.coefficients[0] + F @ cp.coefficients[1:]
    raise ParameterError(f"construct.{name} needs 'trend_of' or 'forwards'")


@dataclass(frozen=True)
class Panel:
    """Regression-aligned data: ``y[t]`` with predictors dated one month earlier."""

    periods: np.ndarray
    y: np.ndarray
    x: np.ndarray
    names: tuple
    frame: pd.DataFrame


def load_panel(path, cfg, predictors=None):
    """Read, construct and align the columns named in ``cfg``.

    Rows whose constructed predictors are undefined (the first row of a
    trend) are dropped before lagging.
    """
    df = read_data(path, cfg.date)
    for name, spec in cfg.construct.items():
        df[name] = _construct(df, name, spec)
    names = tuple(predictors if predictors is not None else cfg.predictors)
    if not names:
        raise ParameterError("no predictors configured (columns.predictors)")
    used = [cfg.response, *names]
    for c in used:
        if c not in df.columns:
            raise ContractError(f"data file has no column '{c}'")
    first = 0
    for name in cfg.construct:
        if name in names:
            nan_rows = np.flatnonzero(np.isnan(df[name].to_numpy(dtype=float)))
            if len(nan_rows):
                first = max(first, int(nan_rows.max()) + 1)
    df = df.iloc[first:].reset_index(drop=True)
    y = _numeric(df, cfg.response)
    X = np.column_stack([_numeric(df, c) for c in names])
    if len(df) < 3:
        raise ContractError("data file has fewer than 3 usable rows")
    return Panel(df[cfg.date].to_numpy()[1:], y[1:], X[:-1], names, df)
