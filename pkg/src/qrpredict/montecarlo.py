"""Monte Carlo size and power experiments.

A run is split into units, one per (regime, beta, tau) cell.  Every unit
replays the same replications: replication ``r`` always draws its shocks from
the stream keyed ``(seed, r)``, so cells share common random numbers and any
subset of replications can be recomputed independently.

Units are evaluated in chunks that can be memoized on disk.  The cache key
covers the unit's full configuration and the source of every module that
feeds the computation, so a stale result is never reused after a code change.
"""

from __future__ import annotations

import ast
import hashlib
import inspect
import io
import json
import logging
import math
import os
import textwrap
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from . import density, dgp, ivx, pipeline, solver, stats
from .density import DensityConfig
from .dgp import A2_GAMMA, A2_RHO, ErrorSpec, InnovationSpec, PersistenceSpec
from .errors import (
    ContractError,
    ConvergenceError,
    DegenerateEstimateError,
    ParameterError,
    SingularDesignError,
)
from .ivx import InstrumentConfig
from .pipeline import InferenceConfig, run_inference
from .stats import Hypothesis

__all__ = [
    "McConfig",
    "McRow",
    "McReport",
    "CSV_HEADER",
    "parse_regime",
    "run_experiment",
    "emit_tables",
    "load_config",
]

log = logging.getLogger(__name__)

CSV_HEADER = ["stat", "tau", "regime", "beta", "hypothesis", "reject_pct", "mc_se", "reps"]
MENU = ("joint", "marginal", "right", "left")
KINDS = ("Qo", "Ql", "Qm", "tQo", "tQl", "tQm")
_CHUNK = 50
_MAX_FAIL_RATE = 0.01
_NUMERICAL_FAILURES = (
    SingularDesignError,
    ConvergenceError,
    DegenerateEstimateError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


def parse_regime(text, K=1):
    """Parse ``SD:c``, ``WD:c``, ``RHO:r1,r2,...`` or ``A2`` into a ``PersistenceSpec``.

    Labels produced by ``PersistenceSpec.label`` (``SD(c=0)``) are accepted too.
    """
    if isinstance(text, PersistenceSpec):
        return text
    s = str(text).strip()
    if s.upper() == "A2":
        if K > len(A2_RHO):
            raise ParameterError(f"A2 roots are defined for K <= {len(A2_RHO)}")
        return PersistenceSpec.direct(A2_RHO[:K])
    if "(" in s and s.endswith(")"):
        kind, inner = s[:-1].split("(", 1)
        inner = inner.split("=", 1)[-1]
        s = f"{kind}:{inner.replace(';', ',')}"
    if ":" not in s:
        raise ParameterError(f"cannot parse persistence regime {text!r}")
    kind, vals = s.split(":", 1)
    nums = tuple(float(v) for v in vals.split(",") if v.strip())
    kind = kind.strip().upper()
    if kind == "RHO":
        return PersistenceSpec.direct(nums)
    if len(nums) == 1:
        nums = nums * K
    if len(nums) != K:
        raise ParameterError(f"regime {text!r} has {len(nums)} values for K = {K}")
    return PersistenceSpec(kind, nums)


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo design.

    ``hypotheses`` picks from ``joint`` (all slopes zero), ``marginal``
    (each slope, two-sided), ``right`` and ``left`` (each slope, one-sided).
    ``stats`` selects which statistic kinds are reported.  ``gamma`` may be a
    vector of length ``K`` or the string ``"A2"``.
    """

    T: int = 750
    reps: int = 1000
    taus: tuple = (0.05, 0.25, 0.5, 0.75, 0.95)
    regimes: tuple = ("SD:0", "SD:-5", "SD:-15", "WD:-0.05")
    betas: tuple = (0.0,)
    K: int = 1
    gamma: tuple = (-3.0,)
    error: str = "IID"
    garch_a: tuple = ()
    garch_b: tuple = ()
    mu_sigma: float = 1.0
    mu: float = 1.0
    nominal: float = 0.05
    hypotheses: tuple = ("joint",)
    stats: tuple = ("Qm",)
    seed: int = 20240601
    M1: int = 100
    M2: int = 50
    c_z: float | None = None
    delta: float = 0.95
    lam: float = 0.5

    def __post_init__(self):
        norm = lambda v: tuple(v) if isinstance(v, (list, tuple)) else (v,)
        for name in ("taus", "regimes", "betas", "hypotheses", "stats", "garch_a", "garch_b"):
            object.__setattr__(self, name, norm(getattr(self, name)))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if isinstance(self.gamma, str):
            if self.gamma.upper() != "A2":
                raise ParameterError(f"gamma must be a vector or 'A2', got {self.gamma!r}")
            object.__setattr__(self, "gamma", A2_GAMMA[: self.K])
        object.__setattr__(self, "gamma", tuple(float(g) for g in norm(self.gamma)))
        specs = tuple(parse_regime(r, self.K).label for r in self.regimes)
        object.__setattr__(self, "regimes", specs)
        if int(self.reps) < 1:
            raise ParameterError("reps must be >= 1")
        if not 0.0 < self.nominal < 1.0:
            raise ParameterError("nominal size must lie in (0, 1)")
        if len(self.gamma) != self.K:
            raise ParameterError(f"gamma has {len(self.gamma)} entries, K = {self.K}")
        for r in self.regimes:
            if parse_regime(r, self.K).K != self.K:
                raise ParameterError(f"regime {r} does not have K = {self.K} roots")
        bad = [h for h in self.hypotheses if h not in MENU]
        if bad:
            raise ParameterError(f"unknown hypothesis menu entries {bad}; choose from {MENU}")
        bad = [k for k in self.stats if k not in KINDS]
        if bad:
            raise ParameterError(f"unknown statistic kinds {bad}; choose from {KINDS}")
        if any(not 0 < t < 1 for t in self.taus):
            raise ParameterError("quantile levels must lie in (0, 1)")
        ErrorSpec(self.error, 0.5, self.mu_sigma, self.garch_a, self.garch_b)
        InstrumentConfig(self.c_z, self.delta, self.lam)
        DensityConfig(self.M1, self.M2)

    def hypothesis_list(self):
        hyps = []
        if "joint" in self.hypotheses:
            hyps.append(Hypothesis.joint(self.K))
        for side, key in (("two-sided", "marginal"), ("right", "right"), ("left", "left")):
            if key in self.hypotheses:
                hyps.extend(Hypothesis.marginal(i, self.K, side) for i in range(self.K))
        return hyps

    def to_dict(self):
        return asdict(self)


def load_config(path_or_mapping):
    """Build an ``McConfig`` from a YAML/JSON file or a mapping.

    Unknown keys raise ``ParameterError`` naming the key.
    """
    if isinstance(path_or_mapping, (str, os.PathLike)):
        import yaml

        text = Path(path_or_mapping).read_text()
        data = yaml.safe_load(text) or {}
    else:
        data = dict(path_or_mapping)
    if not isinstance(data, dict):
        raise ParameterError("configuration must be a key-value mapping")
    data = data.get("simulate", data)
    known = {f.name for f in fields(McConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ParameterError(f"unknown configuration key(s): {', '.join(unknown)}")
    return McConfig(**data)


@dataclass(frozen=True)
class McRow:
    stat: str
    tau: float
    regime: str
    beta: float
    hypothesis: str
    reject_pct: float
    mc_se: float
    reps: int
    failures: int = 0


@dataclass
class McReport:
    """Rejection rates per cell plus run metadata.

    ``draws`` maps ``(stat, tau, regime, beta, hypothesis)`` to the
    ``(statistics, p_values)`` arrays over successful replications.
    """

    config: dict
    rows: list
    failures: int = 0
    elapsed: float = 0.0
    draws: dict = field(default_factory=dict, repr=False)

    def frame(self):
        return pd.DataFrame([asdict(r) for r in self.rows], columns=CSV_HEADER + ["failures"])

    def rate(self, stat, tau, regime, beta=0.0, hypothesis="joint"):
        for r in self.rows:
            if (r.stat, r.tau, r.regime, r.beta, r.hypothesis) == (stat, tau, regime, beta, hypothesis):
                return r.reject_pct
        raise KeyError((stat, tau, regime, beta, hypothesis))


def _cells(cfg):
    out = []
    for hyp in cfg.hypothesis_list():
        if hyp.side == "two-sided":
            kinds = ["Qo", "Ql", "Qm"] + (["tQo", "tQl", "tQm"] if hyp.J == 1 else [])
        else:
            kinds = ["tQo", "tQl", "tQm"]
        out.extend((hyp.label, k) for k in kinds)
    return out


def _regime_code(label):
    return zlib.crc32(label.encode())


def _tau_code(tau):
    return int(round(tau * 1e6))


def _one_replication(cfg, regime, beta, tau, rep, hyps, cells):
    rng = dgp.rng_stream(cfg.seed, rep)
    zeta, v = dgp.gen_innovations(InnovationSpec(cfg.gamma), cfg.T, cfg.K, rng=rng)
    spec = parse_regime(regime, cfg.K)
    x = dgp.gen_predictors(spec, v)
    x_lag = np.vstack([np.zeros((1, cfg.K)), x[:-1]])
    err = ErrorSpec(cfg.error, tau, cfg.mu_sigma, cfg.garch_a, cfg.garch_b)
    y = dgp.gen_response(x_lag, np.full(cfg.K, beta), cfg.mu, zeta, err)
    dens = DensityConfig(cfg.M1, cfg.M2, cfg.seed, (rep, _regime_code(regime), _tau_code(tau), 1))
    icfg = InstrumentConfig(cfg.c_z, cfg.delta, cfg.lam)
    res = run_inference(y, x_lag, tau, hyps, InferenceConfig(icfg, dens))
    stat = np.array([res.results[h][k].statistic for h, k in cells])
    pval = np.array([res.results[h][k].p_value for h, k in cells])
    return stat, pval


def _strip_docstrings(tree):
    for node in ast.walk(tree):
        body = getattr(node, "body", None)
        if (
            isinstance(body, list)
            and body
            and isinstance(body[0], ast.Expr)
            and isinstance(body[0].value, ast.Constant)
            and isinstance(body[0].value.value, str)
        ):
            node.body = body[1:] or [ast.Pass()]
    return tree


def _code_fingerprint():
    """Hash of the computational source, insensitive to comments and docstrings."""
    h = hashlib.sha256()
    sources = [inspect.getsource(m) for m in (solver, dgp, ivx, density, stats, pipeline)]
    sources += [
        textwrap.dedent(inspect.getsource(f))
        for f in (_one_replication, _cells, parse_regime, _regime_code, _tau_code)
    ]
    for src in sources:
        h.update(ast.dump(_strip_docstrings(ast.parse(src))).encode())
    return h.hexdigest()


def _unit_key(cfg, regime, beta, tau):
    base = asdict(cfg)
    for name in ("reps", "taus", "regimes", "betas", "nominal", "stats"):
        base.pop(name)
    base.update(regime=regime, beta=beta, tau=tau, chunk=_CHUNK)
    return base


def _run_chunk(args):
    cfg, regime, beta, tau, start, stop, path = args
    if path is not None and Path(path).exists():
        with np.load(path) as d:
            return d["stat"], d["pval"], d["failed"]
    hyps = cfg.hypothesis_list()
    cells = _cells(cfg)
    n = stop - start
    stat = np.full((n, len(cells)), np.nan)
    pval = np.full((n, len(cells)), np.nan)
    failed = np.zeros(n, dtype=bool)
    for i, rep in enumerate(range(start, stop)):
        try:
            stat[i], pval[i] = _one_replication(cfg, regime, beta, tau, rep, hyps, cells)
        except _NUMERICAL_FAILURES as exc:
            log.warning("replication %d (%s, beta=%g, tau=%g) failed: %s", rep, regime, beta, tau, exc)
            failed[i] = True
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(str(path) + ".tmp.npz")
        np.savez(tmp, stat=stat, pval=pval, failed=failed)
        os.replace(tmp, path)
    return stat, pval, failed


def _chunk_path(cache_dir, fingerprint, key, start, stop):
    if cache_dir is None:
        return None
    digest = hashlib.sha256((fingerprint + json.dumps(key, sort_keys=True)).encode()).hexdigest()[:24]
    return Path(cache_dir) / digest / f"reps_{start:06d}_{stop:06d}.npz"


def run_experiment(cfg, *, cache_dir=None, workers=1, keep_draws=False):
    """Run every (regime, beta, tau) cell of ``cfg`` and tally rejections.

    Parameters
    ----------
    cfg : McConfig
    cache_dir : path, optional
        Directory for memoized replication chunks.
    workers : int
        Worker processes; results do not depend on this.
    keep_draws : bool
        Keep per-replication statistics and p-values on the report.

    Returns
    -------
    McReport
    """
    t0 = time.perf_counter()
    cells = _cells(cfg)
    fingerprint = _code_fingerprint() if cache_dir is not None else ""
    jobs, index = [], []
    for regime in cfg.regimes:
        for beta in cfg.betas:
            for tau in cfg.taus:
                key = _unit_key(cfg, regime, beta, tau)
                for start in range(0, cfg.reps, _CHUNK):
                    # fixed chunk boundaries let runs with more reps reuse earlier chunks
                    stop = min(start + _CHUNK, cfg.reps)
                    path = _chunk_path(cache_dir, fingerprint, key, start, stop)
                    jobs.append((cfg, regime, beta, tau, start, stop, path))
                    index.append((regime, beta, tau))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, jobs))
    else:
        results = []
        for n, job in enumerate(jobs):
            results.append(_run_chunk(job))
            log.info("chunk %d/%d done (%s, beta=%g, tau=%g)", n + 1, len(jobs), *job[1:4])
    acc = {}
    for unit, (stat, pval, failed) in zip(index, results):
        s, p, f = acc.setdefault(unit, ([], [], []))
        s.append(stat)
        p.append(pval)
        f.append(failed)
    rows, draws, total_fail = [], {}, 0
    wanted = set(cfg.stats)
    for regime in cfg.regimes:
        for beta in cfg.betas:
            for tau in cfg.taus:
                s, p, f = (np.concatenate(a) for a in acc[(regime, beta, tau)])
                nfail = int(f.sum())
                total_fail += nfail
                if nfail > _MAX_FAIL_RATE * cfg.reps:
                    raise ContractError(
                        f"{nfail} of {cfg.reps} replications failed in cell {regime}, beta={beta}, tau={tau}"
                    )
                ok = ~f
                for c, (hyp, kind) in enumerate(cells):
                    if kind not in wanted:
                        continue
                    pv = p[ok, c]
                    n = len(pv)
                    rate = float(np.mean(pv < cfg.nominal)) if n else float("nan")
                    se = 100.0 * math.sqrt(rate * (1.0 - rate) / n) if n else float("nan")
                    rows.append(McRow(kind, tau, regime, beta, hyp, 100.0 * rate, se, n, nfail))
                    if keep_draws:
                        draws[(kind, tau, regime, beta, hyp)] = (s[ok, c].copy(), pv.copy())
    return McReport(cfg.to_dict(), rows, total_fail, time.perf_counter() - t0, draws)


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_tables(report, fmt="csv"):
    """Render a report as CSV (``fmt="csv"``) or aligned text (``fmt="text"``).

    The text layout has one block per (statistic, hypothesis, beta), with
    quantile levels as rows and persistence regimes as columns.
    """
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for r in report.rows:
            vals = [r.stat, _fmt(r.tau), r.regime, _fmt(r.beta), r.hypothesis,
                    f"{r.reject_pct:.6f}", f"{r.mc_se:.6f}", str(r.reps)]
            buf.write(",".join(vals) + "\n")
        return buf.getvalue()
    if fmt != "text":
        raise ParameterError(f"unknown table format {fmt!r}")
    df = report.frame()
    if df.empty:
        return "  ".join(CSV_HEADER) + "\n"
    blocks = []
    for (stat, hyp, beta), g in df.groupby(["stat", "hypothesis", "beta"], sort=False):
        tab = g.pivot(index="tau", columns="regime", values="reject_pct")
        tab = tab[list(dict.fromkeys(g["regime"]))]
        reps = int(g["reps"].min())
        head = f"{stat}  hypothesis={hyp}  beta={beta:g}  reps>={reps}  (rejection %)"
        blocks.append(head + "\n" + tab.to_string(float_format=lambda v: f"{v:6.1f}"))
    return "\n\n".join(blocks) + "\n"

