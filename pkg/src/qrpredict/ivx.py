"""Mildly integrated instruments and the two-step IV quantile estimator.

All matrices here are aligned on the regression's lagged rows: row ``t`` of
``x`` is the predictor vector that explains ``y`` at row ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSplitError, ParameterError
from .solver import add_intercept, fit_ols, fit_quantile

__all__ = [
    "InstrumentConfig",
    "InstrumentSet",
    "TwoStepFit",
    "instrument_root",
    "build_instrument",
    "split_demean",
    "two_step_estimate",
]

# reciprocal condition below which a block-mean projection is rejected
_SPLIT_RCOND = 1e-12


@dataclass(frozen=True)
class InstrumentConfig:
    """Instrument tuning: ``rho_z = 1 + c_z / T**delta`` and split fraction ``lam``.

    ``c_z=None`` selects the default ``-8 - 2K`` once ``K`` is known.
    """

    c_z: float | None = None
    delta: float = 0.95
    lam: float = 0.5

    def __post_init__(self):
        if self.c_z is not None and not self.c_z < 0:
            raise ParameterError(f"c_z must be negative, got {self.c_z}")
        if not 0.5 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (1/2, 1), got {self.delta}")
        if not 0.0 < self.lam < 1.0:
            raise ParameterError(f"split fraction must lie in (0, 1), got {self.lam}")

    def resolve_cz(self, K):
        return -8.0 - 2.0 * K if self.c_z is None else float(self.c_z)


@dataclass(frozen=True)
class InstrumentSet:
    z: np.ndarray
    z_tilde: np.ndarray
    T0: int
    S_a: np.ndarray
    S_b: np.ndarray


@dataclass(frozen=True)
class TwoStepFit:
    """Second-step quantile fit on ``(1, x_fitted, v_resid)``.

    Columns of ``v_resid`` that vanish identically (instrument equal to the
    predictor) are dropped from the second step and get ``gamma_hat = nan``.
    """

    tau: float
    mu_hat: float
    beta_hat: np.ndarray
    gamma_hat: np.ndarray
    x_fitted: np.ndarray
    v_resid: np.ndarray
    first_stage: np.ndarray
    quantile_fit: object


def _as_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ParameterError(f"{name} must be 1-D or 2-D")
    return a


def instrument_root(T, c_z, delta):
    return 1.0 + c_z / float(T) ** delta


def build_instrument(x, cfg=None, *, c_z=None, delta=None):
    """Instrument ``z_t = rho_z z_{t-1} + (x_t - x_{t-1})`` with ``z_0 = 0``.

    Parameters
    ----------
    x : (T, K) array
    cfg : InstrumentConfig, optional
    c_z, delta : float, optional
        Override the configuration values.

    Returns
    -------
    z : (T, K) array
    """
    x = _as_matrix(x, "x")
    T, K = x.shape
    cfg = cfg or InstrumentConfig()
    c_z = cfg.resolve_cz(K) if c_z is None else float(c_z)
    delta = cfg.delta if delta is None else float(delta)
    InstrumentConfig(c_z=c_z, delta=delta)
    rho_z = instrument_root(T, c_z, delta)
    dx = np.diff(x, axis=0)
    z = np.zeros_like(x)
    for t in range(1, T):
        z[t] = rho_z * z[t - 1] + dx[t - 1]
    return z


def _block_projection(m_all, m_blk):
    denom = float(m_blk @ m_blk)
    scale = max(float(np.abs(m_blk).max(initial=0.0)), 1e-300)
    if not denom > _SPLIT_RCOND * scale**2:
        raise DegenerateSplitError("instrument block mean is numerically zero")
    return np.outer(m_all, m_blk) / denom


def split_demean(z, lam=0.5):
    """Block-projected instrument whose column sums vanish.

    With block means ``m_a`` (rows ``< T0``), ``m_b`` and full mean ``m``,
    ``S_a = m m_a' / (m_a' m_a)`` and likewise ``S_b``; each block is mapped
    by ``(I - S)``.  Summing gives ``T0 (m_a - m) + (T - T0)(m_b - m) = 0``.
    """
    z = _as_matrix(z, "z")
    T, K = z.shape
    if not 0.0 < lam < 1.0:
        raise ParameterError(f"split fraction must lie in (0, 1), got {lam}")
    T0 = int(np.floor(lam * T))
    if T0 < K + 1 or T - T0 < K + 1:
        raise ParameterError(f"split point {T0} leaves a block with fewer than K + 1 = {K + 1} rows")
    m_all = z.mean(axis=0)
    S_a = _block_projection(m_all, z[:T0].mean(axis=0))
    S_b = _block_projection(m_all, z[T0:].mean(axis=0))
    zt = np.empty_like(z)
    zt[:T0] = z[:T0] - z[:T0] @ S_a.T
    zt[T0:] = z[T0:] - z[T0:] @ S_b.T
    return InstrumentSet(z, zt, T0, S_a, S_b)


def two_step_estimate(y, x, instrument, tau, **solver_kw):
    """Two-step IV quantile regression.

    Step one regresses each predictor on ``(1, instrument)`` by least squares,
    splitting ``x`` into ``x_fitted + v_resid``.  Step two is the quantile
    regression of ``y`` on ``(1, x_fitted, v_resid)``; the block on
    ``x_fitted`` is the IV estimate.

    Parameters
    ----------
    y : (T,) array
    x : (T, K) array
    instrument : (T, K) array or InstrumentSet
        ``InstrumentSet`` selects its split-demeaned instrument.
    tau : float

    Returns
    -------
    TwoStepFit
    """
    if isinstance(instrument, InstrumentSet):
        instrument = instrument.z_tilde
    x = _as_matrix(x, "x")
    w = _as_matrix(instrument, "instrument")
    y = np.asarray(y, dtype=float)
    T, K = x.shape
    if w.shape != x.shape:
        raise ParameterError(f"instrument shape {w.shape} does not match x shape {x.shape}")
    first = fit_ols(add_intercept(w), x)
    x_fitted = first.fitted
    v_resid = x - x_fitted
    scale = np.abs(x).max(axis=0) + 1.0
    keep = np.abs(v_resid).max(axis=0) > 1e-10 * scale
    design = add_intercept(x_fitted, v_resid[:, keep])
    qfit = fit_quantile(design, y, tau, **solver_kw)
    coef = qfit.coefficients
    gamma = np.full(K, np.nan)
    gamma[keep] = coef[1 + K:]
    return TwoStepFit(
        tau=float(tau),
        mu_hat=float(coef[0]),
        beta_hat=coef[1:1 + K].copy(),
        gamma_hat=gamma,
        x_fitted=x_fitted,
        v_resid=v_resid,
        first_stage=first.coefficients,
        quantile_fit=qfit,
    )
