"""Linear quantile regression and least squares.

The quantile fit is a Frisch-Newton primal-dual interior point method applied
to the bounded dual linear program

    max_a  y'a   s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1,

followed by a purification step that moves the approximate interior solution
to an exactly interpolating vertex whenever that vertex passes the
subgradient optimality check.  ``fit_quantile_lp`` solves the primal LP with
HiGHS and is kept as an independent reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import lapack
from scipy.optimize import linprog

from .errors import ConvergenceError, ParameterError, SingularDesignError

__all__ = [
    "QuantileFit",
    "OlsFit",
    "check_loss",
    "quantile_score",
    "add_intercept",
    "fit_quantile",
    "fit_quantile_lp",
    "fit_ols",
]

# reciprocal condition number (of the column-equilibrated Gram matrix) below
# which a design is treated as rank deficient
RCOND_MIN = 1e-13
_STEP_SHRINK = 0.99995
# relative duality gap below which vertex purification is attempted
_PURIFY_GAP = 1e-3
# consecutive iterations without a 10% gap reduction that count as a stall
_STALL_ITERS = 8


def _check_tau(tau):
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"tau must lie in (0, 1), got {tau}")
    return tau


def check_loss(u, tau):
    """Quantile check function ``u * (tau - 1{u < 0})``.

    Works elementwise on arrays; the result is always nonnegative.
    """
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return out if out.ndim else float(out)


def quantile_score(u, tau):
    """Quantile score ``tau - 1{u < 0}``."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    return tau - (u < 0)


def add_intercept(*blocks, n=None):
    """Stack a leading column of ones with the given regressor blocks.

    Blocks may be 1-D (one regressor) or 2-D; empty blocks are skipped so an
    intercept-only design comes out as a single column.
    """
    cols = []
    for b in blocks:
        b = np.asarray(b, dtype=float)
        if b.size == 0:
            continue
        cols.append(b.reshape(len(b), -1))
    if n is None:
        if not cols:
            raise ParameterError("n is required when no regressor block is given")
        n = cols[0].shape[0]
    return np.column_stack([np.ones(n)] + cols)


@dataclass(frozen=True)
class QuantileFit:
    """Result of a linear quantile regression at one level ``tau``."""

    tau: float
    coefficients: np.ndarray
    residuals: np.ndarray
    objective: float
    iterations: int = 0
    vertex: bool = False


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray


def _as_design(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ParameterError("design must be a 2-D array")
    n, p = X.shape
    if p == 0 or n <= p:
        raise ParameterError(f"need more rows than columns, got {n}x{p}")
    if not np.all(np.isfinite(X)):
        raise ParameterError("design contains non-finite values")
    if y is not None:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != n:
            raise ParameterError(f"response has {y.shape[0]} rows, design has {n}")
        if not np.all(np.isfinite(y)):
            raise ParameterError("response contains non-finite values")
    return X, y


def _gram_cholesky(G):
    """Upper Cholesky factor of a Gram matrix with a scale-free rank check."""
    d = np.sqrt(np.diag(G))
    if np.any(d == 0):
        raise SingularDesignError("design has an all-zero column")
    Gs = G / np.outer(d, d)
    c, info = lapack.dpotrf(Gs, lower=0, clean=1)
    if info != 0:
        raise SingularDesignError("design matrix is rank deficient")
    anorm = np.abs(Gs).sum(axis=0).max()
    rcond, _ = lapack.dpocon(c, anorm)
    if rcond < RCOND_MIN:
        raise SingularDesignError(f"design matrix is rank deficient (rcond={rcond:.2e})")
    return c, d


def _objective(r, tau):
    return float(np.sum(r * (tau - (r < 0))))


@njit(cache=True)
def _lu_factor(A):
    n = A.shape[0]
    lu = A.copy()
    piv = np.arange(n)
    amax = np.max(np.abs(A))
    for k in range(n):
        m = k
        best = abs(lu[k, k])
        for i in range(k + 1, n):
            v = abs(lu[i, k])
            if v > best:
                best = v
                m = i
        if best <= 1e-12 * amax:
            return lu, piv, False
        if m != k:
            for j in range(n):
                tmp = lu[k, j]
                lu[k, j] = lu[m, j]
                lu[m, j] = tmp
            tmp_i = piv[k]
            piv[k] = piv[m]
            piv[m] = tmp_i
        inv = 1.0 / lu[k, k]
        for i in range(k + 1, n):
            f = lu[i, k] * inv
            lu[i, k] = f
            if f != 0.0:
                for j in range(k + 1, n):
                    lu[i, j] -= f * lu[k, j]
    return lu, piv, True


@njit(cache=True)
def _lu_solve(lu, piv, b):
    n = lu.shape[0]
    x = np.empty(n)
    for i in range(n):
        x[i] = b[piv[i]]
    for i in range(n):
        acc = x[i]
        for j in range(i):
            acc -= lu[i, j] * x[j]
        x[i] = acc
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(i + 1, n):
            acc -= lu[i, j] * x[j]
        x[i] = acc / lu[i, i]
    return x


@njit(cache=True)
def _lu_solve_transposed(lu, piv, b):
    # A' x = b with P A = L U
    n = lu.shape[0]
    t = b.copy()
    for i in range(n):
        acc = t[i]
        for j in range(i):
            acc -= lu[j, i] * t[j]
        t[i] = acc / lu[i, i]
    for i in range(n - 1, -1, -1):
        acc = t[i]
        for j in range(i + 1, n):
            acc -= lu[j, i] * t[j]
        t[i] = acc
    x = np.empty(n)
    for i in range(n):
        x[piv[i]] = t[i]
    return x


@njit(cache=True)
def _purify_kernel(X, Xt, y, tau, beta):
    """Move ``beta`` to an interpolating vertex if that vertex is optimal.

    The ``p`` observations with the smallest absolute residuals form the
    candidate basis.  The vertex is accepted only when the basic dual weights
    lie in ``[tau - 1, tau]``, which certifies exact optimality.
    """
    n, p = X.shape
    r = y - np.dot(X, beta)
    h = np.argsort(np.abs(r))[:p]
    Xh = np.empty((p, p))
    yh = np.empty(p)
    for i in range(p):
        Xh[i, :] = X[h[i], :]
        yh[i] = y[h[i]]
    lu, piv, ok = _lu_factor(Xh)
    if not ok:
        return beta, False
    b = _lu_solve(lu, piv, yh)
    rv = y - np.dot(X, b)
    psi = np.empty(n)
    for i in range(n):
        psi[i] = tau - 1.0 if rv[i] < 0 else tau
    for i in range(p):
        psi[h[i]] = 0.0
    g = np.dot(Xt, psi)
    lam = _lu_solve_transposed(lu, piv, -g)
    for j in range(p):
        if lam[j] < tau - 1.0 - 1e-10 or lam[j] > tau + 1e-10:
            return beta, False
    return b, True


@njit(cache=True)
def _max_step(v, dv):
    f = np.inf
    for i in range(v.shape[0]):
        if dv[i] < 0:
            t = -v[i] / dv[i]
            if t < f:
                f = t
    return f


@njit(cache=True)
def _chol_solve(L, b):
    n = L.shape[0]
    t = np.empty(n)
    for i in range(n):
        acc = b[i]
        for j in range(i):
            acc -= L[i, j] * t[j]
        t[i] = acc / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        acc = t[i]
        for j in range(i + 1, n):
            acc -= L[j, i] * x[j]
        x[i] = acc / L[i, i]
    return x


@njit(cache=True)
def _fn_kernel(X, Xt, y, tau, beta0, tol, purify_gap, max_iter, purify):
    """Frisch-Newton iterations on the bounded dual LP.

    Returns ``(beta, iterations, status)``: status 0 means the gap tolerance
    was met, 1 the iteration cap was hit, 2 an exact vertex was certified,
    3 the gap stalled or the normal matrix lost definiteness, which happens
    at some degenerate optima.
    """
    n, p = X.shape
    a = np.full(n, 1.0 - tau)
    s = 1.0 - a
    rhs_b = np.dot(Xt, a)
    yy = -beta0
    r = np.dot(X, beta0) - y
    z = np.empty(n)
    w = np.empty(n)
    for i in range(n):
        if r[i] == 0.0:
            r[i] = 0.001
        z[i] = r[i] if r[i] > 0 else 0.0
        w[i] = z[i] - r[i]
    q = np.empty(n)
    Xq = np.empty_like(Xt)
    dx = np.empty(n)
    ds = np.empty(n)
    dz = np.empty(n)
    dw = np.empty(n)
    it = 0
    best_gap = np.inf
    stall = 0
    prev = yy.copy()
    while True:
        gap = -np.dot(y, a) - np.dot(yy, rhs_b) + np.sum(w)
        if not np.isfinite(gap) or not np.all(np.isfinite(yy)):
            return -prev, it, 3
        if gap < 0.9 * best_gap:
            best_gap = gap
            stall = 0
        else:
            stall += 1
            if stall >= _STALL_ITERS:
                return -yy, it, 3
        prev[:] = yy
        res = y + np.dot(X, yy)
        obj = 0.0
        for i in range(n):
            obj += res[i] * (tau - 1.0) if res[i] < 0 else res[i] * tau
        scale = max(1.0, abs(obj))
        if gap <= tol * scale:
            return -yy, it, 0
        if purify and gap <= purify_gap * scale:
            b, ok = _purify_kernel(X, Xt, y, tau, -yy)
            if ok:
                return b, it, 2
        if it >= max_iter:
            return -yy, it, 1
        it += 1
        for i in range(n):
            q[i] = 1.0 / (z[i] / a[i] + w[i] / s[i])
            r[i] = z[i] - w[i]
        for k in range(p):
            for i in range(n):
                Xq[k, i] = Xt[k, i] * q[i]
        try:
            L = np.linalg.cholesky(np.dot(Xq, X))
        except Exception:
            # extreme weights near the optimum make the normal matrix indefinite
            return -yy, it, 3
        rhs = np.dot(Xt, q * r)
        dy = _chol_solve(L, rhs)
        Xdy = np.dot(X, dy)
        for i in range(n):
            dx[i] = q[i] * (Xdy[i] - r[i])
            ds[i] = -dx[i]
            dz[i] = -z[i] * (dx[i] / a[i] + 1.0)
            dw[i] = -w[i] * (ds[i] / s[i] + 1.0)
        fp = min(_STEP_SHRINK * min(_max_step(a, dx), _max_step(s, ds)), 1.0)
        fd = min(_STEP_SHRINK * min(_max_step(w, dw), _max_step(z, dz)), 1.0)
        if min(fp, fd) < 1.0:
            # Mehrotra predictor-corrector
            mu = np.dot(z, a) + np.dot(w, s)
            g = 0.0
            for i in range(n):
                g += (z[i] + fd * dz[i]) * (a[i] + fp * dx[i])
                g += (w[i] + fd * dw[i]) * (s[i] + fp * ds[i])
            mu = mu * (g / mu) ** 3 / (2 * n)
            dxdz = dx * dz
            dsdw = ds * dw
            ainv = 1.0 / a
            sinv = 1.0 / s
            xi = mu * (ainv - sinv)
            rhs = rhs + np.dot(Xt, q * (dxdz - dsdw - xi))
            dy = _chol_solve(L, rhs)
            Xdy = np.dot(X, dy)
            for i in range(n):
                dx[i] = q[i] * (Xdy[i] + xi[i] - r[i] - dxdz[i] + dsdw[i])
                ds[i] = -dx[i]
                dz[i] = mu * ainv[i] - z[i] - ainv[i] * z[i] * dx[i] - dxdz[i]
                dw[i] = mu * sinv[i] - w[i] - sinv[i] * w[i] * ds[i] - dsdw[i]
            fp = min(_STEP_SHRINK * min(_max_step(a, dx), _max_step(s, ds)), 1.0)
            fd = min(_STEP_SHRINK * min(_max_step(w, dw), _max_step(z, dz)), 1.0)
        for i in range(n):
            a[i] += fp * dx[i]
            s[i] += fp * ds[i]
            w[i] += fd * dw[i]
            z[i] += fd * dz[i]
        yy = yy + fd * dy


def fit_quantile(X, y, tau, *, tol=1e-8, max_iter=200, purify=True):
    """Minimize ``sum_t check_loss(y_t - X_t b, tau)`` over ``b``.

    The caller is responsible for including an intercept column.

    Parameters
    ----------
    X : (T, p) array
        Full column rank design.
    y : (T,) array
    tau : float
        Quantile level in (0, 1).
    tol : float
        Relative duality gap at which the interior point iteration stops.
    max_iter : int
        Iteration cap; exceeding it raises ``ConvergenceError`` carrying the
        last iterate as a ``QuantileFit``.
    purify : bool
        Attempt to return an exact optimal vertex.

    Returns
    -------
    QuantileFit
    """
    tau = _check_tau(tau)
    X, y = _as_design(X, y)
    X = np.ascontiguousarray(X)
    Xt = np.ascontiguousarray(X.T)
    chol, d = _gram_cholesky(Xt @ X)
    sol, _ = lapack.dpotrs(chol, (Xt @ y) / d)
    beta, it, status = _fn_kernel(
        X, Xt, y, tau, sol / d, float(tol), _PURIFY_GAP, int(max_iter), bool(purify)
    )
    if status in (0, 3) and purify:
        b, ok = _purify_kernel(X, Xt, y, tau, beta)
        if ok:
            beta, status = b, 2
    if status == 3:
        # degenerate optimum where the dual iterate stalls: defer to simplex
        beta = fit_quantile_lp(X, y, tau).coefficients
    resid = y - X @ beta
    vertex = status == 2
    if vertex:
        # basic observations interpolate up to round-off
        resid[np.abs(resid) <= 1e-12 * (1.0 + np.abs(y))] = 0.0
    fit = QuantileFit(tau, beta, resid, _objective(resid, tau), int(it), vertex)
    if status == 1:
        raise ConvergenceError(
            f"quantile regression did not converge in {max_iter} iterations", best=fit
        )
    return fit


def fit_quantile_lp(X, y, tau):
    """Reference quantile fit: the primal LP solved by HiGHS.

    ``min tau 1'u+ + (1-tau) 1'u-  s.t.  X b + u+ - u- = y,  u+, u- >= 0``.
    """
    tau = _check_tau(tau)
    X, y = _as_design(X, y)
    n, p = X.shape
    cost = np.concatenate([np.zeros(p), np.full(n, tau), np.full(n, 1.0 - tau)])
    eye = np.eye(n)
    A_eq = np.hstack([X, eye, -eye])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:
        raise ConvergenceError(f"LP reference solver failed: {res.message}")
    b = res.x[:p]
    resid = y - X @ b
    return QuantileFit(tau, b, resid, _objective(resid, tau), int(res.nit), False)


def fit_ols(X, Y):
    """Least squares of each column of ``Y`` on ``X``.

    ``Y`` may be a vector or a (T, m) matrix; coefficients come back with
    shape (p,) or (p, m) accordingly.
    """
    X, _ = _as_design(X)
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != X.shape[0]:
        raise ParameterError(f"response has {Y.shape[0]} rows, design has {X.shape[0]}")
    chol, d = _gram_cholesky(X.T @ X)
    rhs = X.T @ Y
    rhs = rhs / (d[:, None] if rhs.ndim == 2 else d)
    sol, info = lapack.dpotrs(chol, rhs)
    coef = sol / (d[:, None] if sol.ndim == 2 else d)
    # one step of iterative refinement against round-off
    fitted = X @ coef
    resid = Y - fitted
    corr = X.T @ resid
    corr = corr / (d[:, None] if corr.ndim == 2 else d)
    delta, _ = lapack.dpotrs(chol, corr)
    coef = coef + delta / (d[:, None] if delta.ndim == 2 else d)
    fitted = X @ coef
    return OlsFit(coef, fitted, Y - fitted)
