"""Synthetic panels for the Monte Carlo designs.

Predictors are AR(1) with local-to-unity or fixed roots, driven by innovations
that load on the same standard-normal shock as the response error.  The
response is built so that its conditional ``tau``-quantile given the lagged
predictors is exactly ``mu + x'beta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import ParameterError

__all__ = [
    "A2_RHO",
    "A2_GAMMA",
    "PersistenceSpec",
    "InnovationSpec",
    "ErrorSpec",
    "rng_stream",
    "gen_innovations",
    "gen_predictors",
    "gen_response",
]

# Experiment A2 persistence and common-shock loadings, truncated to the first K
A2_RHO = (0.996, 0.993, 1.0, 0.987, 0.967, 0.95, 0.9, 0.98)
A2_GAMMA = (-3.0, 2.0, 1.0, 3.0, 1.0, -0.833, 0.667, 0.5)


def rng_stream(seed, *key):
    """Independent generator for ``(seed, key...)``.

    Distinct keys give statistically independent streams, so replications can
    be generated in any order (or in parallel) with identical results.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class PersistenceSpec:
    """Autoregressive roots of the predictors.

    ``kind`` is ``"SD"`` (``rho = 1 + c/T``), ``"WD"`` (``rho = 1 + c``) or
    ``"RHO"`` (roots given directly in ``rho``).
    """

    kind: str
    c: tuple = ()
    rho: tuple = ()

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "c", tuple(float(v) for v in np.atleast_1d(self.c)))
        object.__setattr__(self, "rho", tuple(float(v) for v in np.atleast_1d(self.rho)))
        if kind == "SD":
            if not self.c or any(not v <= 0.0 for v in self.c):
                raise ParameterError(f"SD persistence needs c <= 0, got {self.c}")
        elif kind == "WD":
            if not self.c or any(not abs(1.0 + v) < 1.0 for v in self.c):
                raise ParameterError(f"WD persistence needs |1 + c| < 1, got {self.c}")
        elif kind == "RHO":
            if not self.rho or any(not 0.0 < v <= 1.0 for v in self.rho):
                raise ParameterError(f"direct roots must lie in (0, 1], got {self.rho}")
        else:
            raise ParameterError(f"unknown persistence kind {self.kind!r}")

    @classmethod
    def strong(cls, c, K=1):
        return cls("SD", tuple(np.broadcast_to(np.asarray(c, float), (K,))))

    @classmethod
    def weak(cls, c, K=1):
        return cls("WD", tuple(np.broadcast_to(np.asarray(c, float), (K,))))

    @classmethod
    def direct(cls, rho):
        return cls("RHO", rho=tuple(rho))

    @property
    def alpha(self):
        return {"SD": 1.0, "WD": 0.0}.get(self.kind)

    @property
    def K(self):
        return len(self.rho) if self.kind == "RHO" else len(self.c)

    def rho_vector(self, T):
        if self.kind == "RHO":
            return np.array(self.rho)
        rho = 1.0 + np.array(self.c) / float(T) ** self.alpha
        if np.any(rho <= -1.0):
            raise ParameterError(f"c = {self.c} gives a root outside (-1, 1] at T = {T}")
        return rho

    def truncate(self, K):
        if self.kind == "RHO":
            return PersistenceSpec("RHO", rho=self.rho[:K])
        return PersistenceSpec(self.kind, self.c[:K])

    @property
    def label(self):
        if self.kind == "RHO":
            return "RHO(" + ";".join(f"{v:g}" for v in self.rho) + ")"
        vals = sorted(set(self.c))
        cs = ";".join(f"{v:g}" for v in vals) if len(vals) > 1 else f"{vals[0]:g}"
        return f"{self.kind}(c={cs})"


@dataclass(frozen=True)
class InnovationSpec:
    """Common-shock loadings ``gamma``: ``v_i = gamma_i * zeta + e_i``."""

    gamma: tuple
    seed: int = 0

    def __post_init__(self):
        g = tuple(float(v) for v in np.atleast_1d(self.gamma))
        if not g or not all(np.isfinite(g)):
            raise ParameterError("gamma must be a non-empty finite vector")
        object.__setattr__(self, "gamma", g)

    @property
    def correlation(self):
        g = np.array(self.gamma)
        return g / np.sqrt(1.0 + g**2)


@dataclass(frozen=True)
class ErrorSpec:
    """Response error law.

    For ``IID`` the scale is one.  For ``GARCH`` the scale follows
    ``s2_t = mu_sigma + sum_i a_i u_{t-i}^2 + sum_j b_j s2_{t-j}`` where
    ``u_t = s_t zeta_t``.
    """

    kind: str = "IID"
    tau_anchor: float = 0.5
    mu_sigma: float = 1.0
    a: tuple = field(default_factory=tuple)
    b: tuple = field(default_factory=tuple)

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if not 0.0 < self.tau_anchor < 1.0:
            raise ParameterError(f"tau_anchor must lie in (0, 1), got {self.tau_anchor}")
        if kind == "GARCH":
            if self.mu_sigma <= 0 or any(v < 0 for v in self.a + self.b):
                raise ParameterError("GARCH coefficients must be nonnegative, mu_sigma > 0")
            if sum(self.a) + sum(self.b) >= 1.0:
                raise ParameterError("GARCH parameters are not covariance stationary")
        elif kind != "IID":
            raise ParameterError(f"unknown error kind {self.kind!r}")


def gen_innovations(spec, T, K=None, rng=None):
    """Draw the common shock ``zeta`` (T,) and predictor innovations ``v`` (T, K).

    ``rng`` overrides the generator derived from ``spec.seed``.
    """
    gamma = np.array(spec.gamma)
    if K is None:
        K = len(gamma)
    if K != len(gamma):
        raise ParameterError(f"gamma has {len(gamma)} entries, K = {K}")
    if rng is None:
        rng = rng_stream(spec.seed)
    e = rng.standard_normal((int(T), K + 1))
    zeta = e[:, 0].copy()
    v = zeta[:, None] * gamma + e[:, 1:]
    return zeta, v


def gen_predictors(spec, v):
    """Run ``x_t = rho * x_{t-1} + v_t`` from ``x_0 = 0`` column by column.

    Row ``t - 1`` of the result is ``x_t`` for ``t = 1..T``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    T, K = v.shape
    rho = spec.rho_vector(T)
    if len(rho) != K:
        raise ParameterError(f"persistence spec has {len(rho)} roots, v has {K} columns")
    x = np.empty_like(v)
    prev = np.zeros(K)
    for t in range(T):
        prev = rho * prev + v[t]
        x[t] = prev
    return x


def _garch_scale(zeta, err):
    a, b = np.array(err.a), np.array(err.b)
    p, q = len(a), len(b)
    T = len(zeta)
    s2_bar = err.mu_sigma / (1.0 - a.sum() - b.sum())
    s2 = np.empty(T)
    u2_hist = np.full(p, s2_bar)
    s2_hist = np.full(q, s2_bar)
    for t in range(T):
        s2[t] = err.mu_sigma + a @ u2_hist + b @ s2_hist
        u2 = s2[t] * zeta[t] ** 2
        if p:
            u2_hist = np.concatenate(([u2], u2_hist[:-1]))
        if q:
            s2_hist = np.concatenate(([s2[t]], s2_hist[:-1]))
    return np.sqrt(s2)


def gen_response(x_lag, beta, mu, zeta, err):
    """Response ``y_t = mu + x_{t-1}'beta + s_t (zeta_t - Phi^{-1}(tau))``.

    Parameters
    ----------
    x_lag : (T, K) array
        Row ``t`` holds the predictors dated ``t - 1``.
    beta : (K,) array
    mu : float
    zeta : (T,) array
        Standard-normal shocks dated ``t``.
    err : ErrorSpec

    Returns
    -------
    y : (T,) array
    """
    x_lag = np.asarray(x_lag, dtype=float)
    if x_lag.ndim == 1:
        x_lag = x_lag[:, None]
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    zeta = np.asarray(zeta, dtype=float)
    if beta.shape[0] != x_lag.shape[1]:
        raise ParameterError(f"beta has {beta.shape[0]} entries, x has {x_lag.shape[1]} columns")
    if zeta.shape[0] != x_lag.shape[0]:
        raise ParameterError("zeta and x must have the same number of rows")
    sigma = 1.0 if err.kind == "IID" else _garch_scale(zeta, err)
    u = sigma * (zeta - ndtri(err.tau_anchor))
    return mu + x_lag @ beta + u
