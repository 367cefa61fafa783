"""Synthetic monthly panel with predictability confined to the tails.

The response is

    y_t = mu + zeta_t + s_t * max(floor, shift + b * x1_{t-1})

where ``x1`` is a bounded persistent series and ``s_t`` is ``+1`` when
``zeta_t`` is above its 0.9 quantile, ``-1`` below its 0.1 quantile and ``0``
otherwise.  With the defaults the shift never falls below 0.1, so the
conditional ``tau``-quantile of ``y_t`` is ``mu + Phi^{-1}(tau)`` on the
central levels and moves with ``x1`` at slope ``+b`` above 0.9 and ``-b``
below 0.1.  The panel also carries a random-walk noise predictor, an
inflation series for a trend predictor and forward rates with bond returns
for a CP factor; none of those enter ``y``.
"""

from __future__ import annotations

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .dgp import rng_stream

__all__ = ["tail_panel", "TAIL_PANEL_CONFIG"]

# run configuration matching the columns of ``tail_panel``
TAIL_PANEL_CONFIG = {
    "columns": {"date": "date", "response": "y", "predictors": ["CP", "TI", "X1", "X2"]},
    "construct": {
        "TI": {"trend_of": "infl", "w": 0.9},
        "CP": {"forwards": ["F1", "F2", "F3", "F4", "F5"], "avg_rx": ["rx2", "rx3", "rx4", "rx5"]},
    },
    "threshold": 0.01,
    "forecast": {"baseline": ["CP"]},
}


def _ar1(rng, T, rho, scale=1.0):
    v = scale * rng.standard_normal(T)
    x = np.empty(T)
    prev = 0.0
    for t in range(T):
        prev = rho * prev + v[t]
        x[t] = prev
    return x


def tail_panel(T=750, seed=0, *, b=0.5, shift=1.6, bound=3.0, mu=1.0, rho=0.95, floor=0.05, start="1960-01"):
    """Monthly panel of ``T + 1`` rows (one is lost to the predictor lag).

    Returns
    -------
    pandas.DataFrame
        Columns ``date, y, X1, X2, infl, F1..F5, rx2..rx5``.
    """
    rng = rng_stream(seed, 7)
    n = T + 1
    # bounded so that the tail shift stays positive with a small gap
    x1 = bound * np.tanh(_ar1(rng, n, rho) / bound)
    x2 = _ar1(rng, n, 1.0)
    zeta = rng.standard_normal(n)
    hi, lo = ndtri(0.9), ndtri(0.1)
    sign = np.where(zeta > hi, 1.0, np.where(zeta < lo, -1.0, 0.0))
    y = np.empty(n)
    y[0] = mu + zeta[0]
    y[1:] = mu + zeta[1:] + sign[1:] * np.maximum(floor, shift + b * x1[:-1])
    infl = 3.0 + _ar1(rng, n, 0.9, 0.5)
    level = _ar1(rng, n, 0.98, 0.2)
    F = np.column_stack([4.0 + 0.3 * k + level + 0.1 * _ar1(rng, n, 0.9) for k in range(5)])
    rx = np.empty((n, 4))
    rx[0] = rng.standard_normal(4)
    signal = 0.5 * (F[:-1, 4] - F[:-1, 0]) - 0.2 * level[:-1]
    for k in range(4):
        rx[1:, k] = (k + 1) * signal + rng.standard_normal(T)
    dates = pd.period_range(start=start, periods=n, freq="M").strftime("%Y-%m")
    frame = {"date": dates, "y": y, "X1": x1, "X2": x2, "infl": infl}
    frame.update({f"F{k + 1}": F[:, k] for k in range(5)})
    frame.update({f"rx{k + 2}": rx[:, k] for k in range(4)})
    return pd.DataFrame(frame)
