"""Named Monte Carlo designs and their published rejection rates.

Published values are percentages at 5% nominal size.
"""

from __future__ import annotations

from .montecarlo import McConfig

__all__ = ["DESIGNS", "design", "TAUS", "A1_REGIMES"]

TAUS = (0.05, 0.25, 0.5, 0.75, 0.95)
A1_REGIMES = ("SD:0", "SD:-5", "SD:-15", "WD:-0.05")
POWER_BETAS = (0.0, 0.004, 0.008, 0.012, 0.016, 0.02, 0.024)

# univariate size of the two-sided combined Wald test, columns follow A1_REGIMES
SIZE_UNIVARIATE = {
    0.05: (5.1, 4.7, 5.0, 4.6),
    0.25: (4.5, 3.9, 4.6, 4.4),
    0.5: (5.1, 4.5, 4.8, 4.0),
    0.75: (5.1, 4.2, 4.7, 4.1),
    0.95: (5.2, 4.2, 5.3, 4.7),
}

# right-sided combined t test, tau = 0.5, SD(c=0), keyed by beta
POWER_RIGHT = {0.0: 6.7, 0.004: 74.1, 0.008: 99.7, 0.012: 100.0, 0.016: 100.0, 0.02: 100.0, 0.024: 100.0}

# K = 8: (joint, beta1..beta8) two-sided combined Wald test
SIZE_K8 = {
    0.05: (4.4, 4.8, 4.8, 5.2, 5.1, 4.7, 4.6, 4.8, 4.5),
    0.25: (4.2, 4.9, 5.2, 4.6, 6.0, 5.5, 4.8, 4.5, 4.7),
    0.5: (5.0, 5.7, 5.3, 5.5, 6.4, 5.4, 4.9, 4.9, 4.9),
    0.75: (4.4, 5.4, 5.0, 5.5, 6.0, 5.0, 4.9, 4.5, 4.7),
    0.95: (4.8, 5.3, 4.9, 5.0, 5.6, 4.9, 4.7, 4.4, 4.8),
}

# joint two-sided combined Wald test for K = 2..8
SIZE_JOINT_BY_K = {
    0.05: (4.3, 4.6, 4.6, 5.4, 5.2, 4.9, 4.6),
    0.25: (4.7, 5.1, 5.3, 5.2, 5.0, 4.0, 5.2),
    0.5: (4.9, 4.8, 5.1, 5.5, 5.3, 5.0, 5.1),
    0.75: (4.7, 4.8, 4.4, 4.5, 4.5, 5.0, 4.9),
    0.95: (4.8, 5.0, 4.8, 4.5, 4.2, 4.8, 4.7),
}

# every univariate design carries the same hypothesis menu so that runs
# sharing a (regime, beta, tau) cell reuse cached replications
_A1_MENU = ("joint", "right")


def _a1(**kw):
    base = dict(T=750, K=1, gamma=(-3.0,), hypotheses=_A1_MENU)
    base.update(kw)
    return McConfig(**base)


def _a2(K, **kw):
    base = dict(T=750, K=K, gamma="A2", regimes=("A2",), taus=TAUS, hypotheses=("joint",))
    base.update(kw)
    return McConfig(**base)


DESIGNS = {
    "size-univariate": lambda reps=1000: _a1(reps=reps, taus=TAUS, regimes=A1_REGIMES, stats=("Qm",)),
    "power-right": lambda reps=1000: _a1(
        reps=reps, taus=(0.5,), regimes=("SD:0",), betas=POWER_BETAS, stats=("tQm",)
    ),
    "null-calibration": lambda reps=2000: _a1(
        reps=reps, taus=(0.5,), regimes=("SD:0", "WD:-0.05"), stats=("tQl", "Qm")
    ),
    "size-k8": lambda reps=1000: _a2(8, reps=reps, hypotheses=("joint", "marginal")),
}
for _K in range(2, 8):
    DESIGNS[f"size-joint-k{_K}"] = (lambda K: lambda reps=1000: _a2(K, reps=reps))(_K)


def design(name, reps=None):
    """Return the ``McConfig`` for a named design."""
    try:
        factory = DESIGNS[name]
    except KeyError:
        raise KeyError(f"unknown design {name!r}; known: {', '.join(sorted(DESIGNS))}") from None
    return factory() if reps is None else factory(reps)
