"""End-to-end inference for one sample and one quantile level."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .density import DensityConfig, estimate_density_at_zero
from .errors import ParameterError
from .ivx import InstrumentConfig, build_instrument, split_demean, two_step_estimate
from .solver import add_intercept, fit_quantile
from .stats import Hypothesis, q_l, q_m, q_o

__all__ = ["InferenceConfig", "InferenceResult", "run_inference"]


@dataclass(frozen=True)
class InferenceConfig:
    instrument: InstrumentConfig = field(default_factory=InstrumentConfig)
    density: DensityConfig = field(default_factory=DensityConfig)


@dataclass(frozen=True)
class InferenceResult:
    """Statistics keyed by hypothesis label, then by statistic kind."""

    tau: float
    f_hat: float
    beta_l: np.ndarray
    beta_o: np.ndarray
    results: dict

    def get(self, hypothesis, kind):
        return self.results[hypothesis][kind]


def run_inference(y, x, tau, hypotheses, cfg=InferenceConfig(), *, f_hat=None, t_forms=True):
    """Compute ``Qo``, ``Ql`` and ``Qm`` for every hypothesis.

    Two-sided hypotheses get Wald forms, plus t forms when ``t_forms`` is set
    and the hypothesis has a single restriction.  One-sided hypotheses get t
    forms only.  The density estimate is shared by all statistics; pass
    ``f_hat`` to reuse an existing one.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    T, K = x.shape
    if y.shape[0] != T:
        raise ParameterError(f"y has {y.shape[0]} rows, x has {T}")
    z = build_instrument(x, cfg.instrument)
    iv = split_demean(z, cfg.instrument.lam)
    fit_l = two_step_estimate(y, x, iv.z_tilde, tau)
    fit_o = fit_quantile(add_intercept(x), y, tau)
    if f_hat is None:
        f_hat = estimate_density_at_zero(y, x, tau, cfg.density)
    delta = cfg.instrument.delta
    out = {}
    for hyp in hypotheses:
        if hyp.K != K:
            raise ParameterError(f"hypothesis {hyp.label} has {hyp.K} columns, x has {K}")
        forms = ["wald"] if hyp.side == "two-sided" else ["t"]
        if t_forms and hyp.side == "two-sided" and hyp.J == 1:
            forms.append("t")
        res = {}
        for form in forms:
            ql = q_l(y, x, iv, tau, hyp, f_hat, form=form, fit=fit_l)
            qo = q_o(y, x, tau, hyp, f_hat, form=form, fit=fit_o)
            res[ql.kind] = ql
            res[qo.kind] = qo
            qm = q_m(ql, qo, T, delta)
            res[qm.kind] = qm
        out[hyp.label] = res
    return InferenceResult(float(tau), float(f_hat), fit_l.beta_hat, fit_o.coefficients[1:], out)


def default_hypotheses(K, sides=("two-sided",), joint=True):
    """Joint test plus every marginal test for each requested side."""
    hyps = [Hypothesis.joint(K)] if joint else []
    for side in sides:
        hyps.extend(Hypothesis.marginal(i, K, side) for i in range(K))
    return hyps
