"""Test statistics for predictive quantile regression.

Four families share one Wald / t machinery and differ only in the estimate
and covariance they plug in:

``Qo``
    Conventional quantile regression of ``y`` on ``(1, x)``.
``Qivx``
    Two-step estimate with the raw mildly integrated instrument.
``Ql``
    Two-step estimate with the split-demeaned instrument.
``Qm``
    ``Ql`` plus a vanishing power-restoring transform of ``Qo``.

Each has a Wald form (chi-square reference) and, for single restrictions, a
t form (standard-normal reference).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import chdtrc, chdtri, ndtr, ndtri

from .errors import ContractError, ParameterError, SingularDesignError, WeakInstrumentError
from .ivx import InstrumentSet, two_step_estimate
from .solver import _check_tau, add_intercept, fit_quantile

__all__ = [
    "Hypothesis",
    "TestResult",
    "norm_quantile",
    "chi2_quantile",
    "avar_split",
    "avar_ivx",
    "avar_conventional",
    "wald_or_t",
    "q_o",
    "q_l",
    "q_ivx",
    "q_m",
    "higher_order_diag",
    "HigherOrderTerms",
]

SIDES = ("two-sided", "right", "left")
_COND_MAX = 1e12
_LOG_MAX = math.log(np.finfo(float).max)


def norm_quantile(p):
    return float(ndtri(p))


def chi2_quantile(p, df):
    """Upper-tail inversion; ``chi2_quantile(0.999, 1)`` is about 10.828."""
    return float(chdtri(df, 1.0 - p))


@dataclass(frozen=True)
class Hypothesis:
    """Linear restriction ``R beta = r``.

    One-sided alternatives (``side`` ``"right"`` or ``"left"``) need a single
    restriction.
    """

    R: np.ndarray
    r: np.ndarray
    side: str = "two-sided"
    name: str = ""

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        if R.shape[0] != r.shape[0]:
            raise ParameterError(f"R has {R.shape[0]} rows but r has {r.shape[0]} entries")
        if np.linalg.matrix_rank(R) != R.shape[0]:
            raise ParameterError("R must have full row rank")
        side = self.side.lower()
        if side not in SIDES:
            raise ParameterError(f"side must be one of {SIDES}, got {self.side!r}")
        if side != "two-sided" and R.shape[0] != 1:
            raise ParameterError("one-sided alternatives need a single restriction")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "side", side)

    @property
    def J(self):
        return self.R.shape[0]

    @property
    def K(self):
        return self.R.shape[1]

    @property
    def label(self):
        if self.name:
            return self.name
        return f"J={self.J}"

    @classmethod
    def joint(cls, K):
        """All ``K`` slopes are zero."""
        return cls(np.eye(K), np.zeros(K), "two-sided", "joint")

    @classmethod
    def marginal(cls, i, K, side="two-sided"):
        """Slope ``i`` (zero-based) is zero."""
        if not 0 <= i < K:
            raise ParameterError(f"coefficient index {i} outside 0..{K - 1}")
        R = np.zeros((1, K))
        R[0, i] = 1.0
        suffix = {"two-sided": "", "right": ">0", "left": "<0"}[side.lower()]
        return cls(R, np.zeros(1), side, f"beta{i + 1}{suffix}")


@dataclass(frozen=True)
class TestResult:
    """One statistic.

    ``kind`` is ``Qo``, ``Qivx``, ``Ql`` or ``Qm`` for Wald forms and the same
    with a ``t`` prefix for t forms.  ``overflowed`` flags a clamped add-on.
    """

    __test__ = False

    kind: str
    statistic: float
    df: int
    p_value: float
    side: str
    beta_used: np.ndarray = field(repr=False)
    avar_used: np.ndarray = field(repr=False)
    hypothesis: str = ""
    overflowed: bool = False

    @property
    def is_t(self):
        return self.kind.startswith("t")

    def rejects(self, level):
        return self.p_value < level


def _sym(A):
    return 0.5 * (A + A.T)


def _checked_inverse(A, err, what):
    try:
        cond = np.linalg.cond(A)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > _COND_MAX:
        raise err(f"{what} is singular (condition number {cond:.3e})")
    return np.linalg.inv(A)


def _as_matrix(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _sandwich(w, x, f_hat, tau, err, what):
    if not f_hat > 0 or not np.isfinite(f_hat):
        raise ParameterError(f"density estimate must be positive and finite, got {f_hat}")
    tau = _check_tau(tau)
    w, x = _as_matrix(w), _as_matrix(x)
    A_inv = _checked_inverse(w.T @ x, err, what)
    meat = tau * (1.0 - tau) * (w.T @ w)
    return _sym(A_inv @ meat @ A_inv.T) / f_hat**2


def avar_split(z_tilde, x, f_hat, tau):
    """``f^-2 (Z'X)^-1 [tau(1-tau) Z'Z] (X'Z)^-1`` with the split instrument ``Z``."""
    return _sandwich(z_tilde, x, f_hat, tau, WeakInstrumentError, "instrument cross-moment")


def avar_ivx(z, x, f_hat, tau):
    """Sandwich with the demeaned raw instrument."""
    z = _as_matrix(z)
    return _sandwich(z - z.mean(axis=0), x, f_hat, tau, WeakInstrumentError, "instrument cross-moment")


def avar_conventional(x, f_hat, tau):
    """``tau(1-tau) f^-2 (Xbar'Xbar)^-1`` with demeaned predictors."""
    if not f_hat > 0 or not np.isfinite(f_hat):
        raise ParameterError(f"density estimate must be positive and finite, got {f_hat}")
    x = _as_matrix(x)
    xb = x - x.mean(axis=0)
    inv = _checked_inverse(xb.T @ xb, SingularDesignError, "demeaned predictor Gram matrix")
    return _sym(inv) * tau * (1.0 - tau) / f_hat**2


def wald_or_t(kind, beta, avar, hyp, form="auto"):
    """Wald or t statistic for ``hyp`` from an estimate and its covariance.

    ``form="auto"`` gives the t form for one-sided alternatives and the Wald
    form otherwise.  A two-sided t form uses both normal tails.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if hyp.K != beta.shape[0]:
        raise ContractError(f"hypothesis has {hyp.K} columns, estimate has {beta.shape[0]} entries")
    if form == "auto":
        form = "wald" if hyp.side == "two-sided" else "t"
    d = hyp.R @ beta - hyp.r
    V = _sym(hyp.R @ avar @ hyp.R.T)
    if form == "wald":
        if hyp.side != "two-sided":
            raise ContractError("the Wald form only tests two-sided alternatives")
        stat = float(d @ np.linalg.solve(V, d))
        stat = max(stat, 0.0)
        p = float(chdtrc(hyp.J, stat))
        return TestResult(kind, stat, hyp.J, p, hyp.side, beta, avar, hyp.label)
    if form != "t":
        raise ParameterError(f"form must be 'auto', 'wald' or 't', got {form!r}")
    if hyp.J != 1:
        raise ContractError("the t form needs a single restriction")
    stat = float(d[0] / math.sqrt(V[0, 0]))
    return TestResult("t" + kind, stat, 1, _normal_p(stat, hyp.side), hyp.side, beta, avar, hyp.label)


def _normal_p(stat, side):
    if side == "right":
        return float(ndtr(-stat))
    if side == "left":
        return float(ndtr(stat))
    return float(min(1.0, 2.0 * ndtr(-abs(stat))))


def q_o(y, x, tau, hyp, f_hat, *, form="auto", fit=None):
    """Conventional statistic from the quantile regression of ``y`` on ``(1, x)``.

    ``fit`` may pass a precomputed ``QuantileFit`` of that regression.
    """
    x = _as_matrix(x)
    if fit is None:
        fit = fit_quantile(add_intercept(x), y, tau)
    beta = fit.coefficients[1:]
    return wald_or_t("Qo", beta, avar_conventional(x, f_hat, tau), hyp, form)


def q_l(y, x, iv_set, tau, hyp, f_hat, *, form="auto", fit=None):
    """Split-instrument IV statistic.

    Parameters
    ----------
    iv_set : InstrumentSet
        From ``split_demean``.
    fit : TwoStepFit, optional
        Precomputed two-step fit with ``iv_set.z_tilde``.
    """
    x = _as_matrix(x)
    if not isinstance(iv_set, InstrumentSet):
        raise ContractError("q_l needs an InstrumentSet from split_demean")
    if fit is None:
        fit = two_step_estimate(y, x, iv_set.z_tilde, tau)
    avar = avar_split(iv_set.z_tilde, x, f_hat, tau)
    return wald_or_t("Ql", fit.beta_hat, avar, hyp, form)


def q_ivx(y, x, z_raw, tau, hyp, f_hat, *, form="auto", fit=None):
    """Raw-instrument IV statistic, kept as a diagnostic baseline."""
    x = _as_matrix(x)
    z_raw = _as_matrix(z_raw)
    if fit is None:
        fit = two_step_estimate(y, x, z_raw, tau)
    avar = avar_ivx(z_raw, x, f_hat, tau)
    return wald_or_t("Qivx", fit.beta_hat, avar, hyp, form)


def _addon(base, T, exponent):
    """``|base|**exponent / sqrt(T)`` evaluated in log space, clamped on overflow."""
    a = abs(base)
    if a == 0.0:
        return 0.0, False
    log_val = exponent * math.log(a) - 0.5 * math.log(T)
    if log_val >= _LOG_MAX:
        return float(np.finfo(float).max), True
    return math.exp(log_val), False


def q_m(ql, qo, T, delta=0.95):
    """Combine ``Ql`` with a transform of ``Qo``.

    t form: ``Ql + T^-1/2 |Qo / q|^(1/(1-delta)) sign(Qo)`` with ``q`` the
    standard-normal 0.999 quantile.  Wald form: ``Ql + T^-1/2 (Qo / q)^(1/(1-delta))``
    with ``q`` the chi-square(J) 0.999 quantile.
    """
    if ql.side != qo.side or ql.df != qo.df or ql.is_t != qo.is_t or ql.hypothesis != qo.hypothesis:
        raise ContractError("Ql and Qo were computed for different hypotheses or forms")
    if not ql.kind.endswith("Ql") or not qo.kind.endswith("Qo"):
        raise ContractError(f"expected an Ql and a Qo result, got {ql.kind} and {qo.kind}")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    exponent = 1.0 / (1.0 - delta)
    if ql.is_t:
        q = norm_quantile(0.999)
        add, flag = _addon(qo.statistic / q, T, exponent)
        stat = ql.statistic + math.copysign(add, qo.statistic) if add else ql.statistic
        p = _normal_p(stat, ql.side)
        kind = "tQm"
    else:
        q = chi2_quantile(0.999, ql.df)
        add, flag = _addon(qo.statistic / q, T, exponent)
        stat = ql.statistic + add
        p = float(chdtrc(ql.df, stat))
        kind = "Qm"
    return TestResult(kind, stat, ql.df, p, ql.side, ql.beta_used, ql.avar_used, ql.hypothesis, flag)


@dataclass(frozen=True)
class HigherOrderTerms:
    """Finite-sample expansion terms of the IV t statistic.

    ``Z_T`` is the leading normal term, ``B_T = varpi_b Z_T`` the
    numerator/denominator correlation term and ``C_T`` the instrument-mean
    term, which vanishes for a zero-sum instrument.
    """

    Z_T: np.ndarray
    B_T: np.ndarray
    C_T: np.ndarray
    varpi_b: np.ndarray
    omega_zz: np.ndarray


def _inv_sqrt(A):
    w, V = np.linalg.eigh(_sym(A))
    if np.any(w <= 0):
        raise SingularDesignError("matrix is not positive definite")
    return (V / np.sqrt(w)) @ V.T


def higher_order_diag(z, psi, tau, c_z, delta, *, omega_vv=None):
    """Higher-order terms of the IV statistic under the null.

    Parameters
    ----------
    z : (T, K) array
        Raw or split-demeaned instrument.
    psi : (T,) array
        Quantile scores ``tau - 1{u < 0}`` of the null residuals.
    tau, c_z, delta : float
    omega_vv : (K, K) array, optional
        Innovation covariance; estimated from ``z_t - rho_z z_{t-1}`` when
        omitted.  ``Omega_zz = tau(1-tau) Omega_vv / (-2 c_z)``.

    Returns
    -------
    HigherOrderTerms
    """
    tau = _check_tau(tau)
    z = _as_matrix(z)
    psi = np.asarray(psi, dtype=float)
    T, K = z.shape
    if omega_vv is None:
        rho_z = 1.0 + c_z / T**delta
        v = z[1:] - rho_z * z[:-1]
        omega_vv = v.T @ v / (T - 1)
    omega_zz = tau * (1.0 - tau) * np.atleast_2d(omega_vv) / (-2.0 * c_z)
    Om = _inv_sqrt(omega_zz)
    gram = z.T @ z / T ** (1.0 + delta)
    varpi = -0.5 * (tau * (1.0 - tau) * Om @ gram @ Om - np.eye(K))
    score = z.T @ psi / T ** (0.5 + 0.5 * delta)
    Z_T = Om @ score
    B_T = varpi @ Z_T
    zsum = z.sum(axis=0)
    if np.all(zsum == 0.0) or np.max(np.abs(zsum)) <= 1e-9 * np.abs(z).sum(axis=0).max():
        C_T = np.zeros(K)
    else:
        G = _inv_sqrt(tau * (1.0 - tau) * gram)
        scaled = G @ zsum / T ** (0.5 + delta) * (psi.sum() / math.sqrt(T))
        C_T = scaled / T ** ((1.0 - delta) / 2.0)
    return HigherOrderTerms(Z_T, B_T, C_T, varpi, omega_zz)
