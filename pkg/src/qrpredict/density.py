"""Simulation-based estimate of the quantile-error density at zero.

Irrelevant standard-normal regressors ``xi`` are appended to the quantile
regression of ``y`` on ``(1, x)``.  Their estimated coefficients ``l`` are
asymptotically ``N(0, tau(1-tau) / (T f(0)^2))``, so the average of
``(sqrt(T) l)^2`` over many draws recovers ``f(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dgp import rng_stream
from .errors import ConvergenceError, DegenerateEstimateError, ParameterError, SingularDesignError
from .solver import _check_tau, add_intercept, fit_quantile

__all__ = ["DensityConfig", "DensityEstimate", "estimate_density_at_zero", "density_moment"]


@dataclass(frozen=True)
class DensityConfig:
    """``M1`` regressions with ``M2`` auxiliary regressors each.

    Replication ``i`` draws from the stream keyed ``(seed, *key, i)``, so the
    estimate does not depend on evaluation order.
    """

    M1: int = 100
    M2: int = 50
    seed: int = 0
    key: tuple = ()

    def __post_init__(self):
        if int(self.M1) < 1 or int(self.M2) < 1:
            raise ParameterError(f"M1 and M2 must be >= 1, got {self.M1}, {self.M2}")
        object.__setattr__(self, "key", tuple(int(k) for k in self.key))

    @property
    def M(self):
        return self.M1 * self.M2


@dataclass(frozen=True)
class DensityEstimate:
    value: float
    moment: float
    retries: int


def _aux_fit(base, y, tau, xi):
    fit = fit_quantile(np.column_stack([base, xi]), y, tau)
    return fit.coefficients[base.shape[1]:]


def density_moment(y, x, tau, cfg=DensityConfig()):
    """Average of ``(sqrt(T) l_j)^2`` over all auxiliary coefficients.

    Returns ``(moment, retries)``.
    """
    tau = _check_tau(tau)
    y = np.asarray(y, dtype=float)
    T = y.shape[0]
    base = add_intercept(x, n=T) if x is not None else np.ones((T, 1))
    if base.shape[1] + cfg.M2 >= T:
        raise ParameterError(f"T = {T} too small for {base.shape[1]} regressors plus M2 = {cfg.M2}")
    sums = np.empty(cfg.M1)
    retries = 0
    for i in range(cfg.M1):
        xi = rng_stream(cfg.seed, *cfg.key, i).standard_normal((T, cfg.M2))
        try:
            l_hat = _aux_fit(base, y, tau, xi)
        except (ConvergenceError, SingularDesignError):
            retries += 1
            xi = rng_stream(cfg.seed, *cfg.key, i, 1).standard_normal((T, cfg.M2))
            try:
                l_hat = _aux_fit(base, y, tau, xi)
            except (ConvergenceError, SingularDesignError) as exc:
                raise type(exc)(f"density replication {i} failed twice: {exc}") from exc
        sums[i] = l_hat @ l_hat
    # fixed summation order keeps the result bit-reproducible
    moment = T * float(np.sum(sums)) / cfg.M
    return moment, retries


def estimate_density_at_zero(y, x, tau, cfg=DensityConfig(), *, full=False):
    """Estimate ``f_u(0)`` for the quantile regression of ``y`` on ``(1, x)``.

    Parameters
    ----------
    y : (T,) array
    x : (T, K) array or None
        ``None`` (or an empty array) gives the intercept-only model.
    tau : float
    cfg : DensityConfig
    full : bool
        Return a ``DensityEstimate`` with the raw moment and retry count.

    Returns
    -------
    float or DensityEstimate
    """
    if x is not None and np.asarray(x).size == 0:
        x = None
    moment, retries = density_moment(y, x, tau, cfg)
    if not np.isfinite(moment) or moment <= 0.0:
        raise DegenerateEstimateError(f"auxiliary coefficient moment is {moment}")
    value = float(np.sqrt(tau * (1.0 - tau) / moment))
    return DensityEstimate(value, moment, retries) if full else value
