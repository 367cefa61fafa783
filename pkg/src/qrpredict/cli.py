"""Command-line front end.

Subcommands
-----------
simulate   Monte Carlo rejection tables.
test       Marginal and joint tests on a data file, one p-value row per (tau, hypothesis).
forecast   In-sample and out-of-sample quantile forecasts with qw-CRPS summaries.
indicator  Left and right tail-risk indicators from out-of-sample forecasts.
ar1        AR(1) slopes of the configured predictors.

Every subcommand writes CSV files into ``--out`` and exits nonzero on bad
input.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data import load_panel, load_run_config
from .errors import ContractError, ParameterError
from .forecast import (
    SCHEMES,
    QuantileGrid,
    SelectionMap,
    count_crossings,
    fit_insample,
    predict_oos,
    qw_crps,
    select_predictors,
    tail_indicator,
)
from .montecarlo import emit_tables, load_config, run_experiment
from .pipeline import InferenceConfig, run_inference
from .predictors import ar1_coefficient
from .stats import Hypothesis

__all__ = ["main", "build_parser", "run_tests", "PVALUE_HEADER", "PREDICTION_HEADER"]

log = logging.getLogger("qrpredict")

PVALUE_HEADER = ["tau", "hypothesis", "predictor", "stat", "statistic", "p_value", "log_p"]
PREDICTION_HEADER = ["period", "tau", "prediction", "error"]
INDICATOR_HEADER = ["period", "indicator_left", "indicator_right"]
EVALUATION_HEADER = ["scheme", "sample", "model", "qw_c"]
_LOG_P_FLOOR = 0.001


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, rows):
    """Write rows with repr-formatted floats so reruns are byte-identical."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    log.info("wrote %s", path)


def _tau_key(tau):
    return int(round(tau * 1e6))


# ---------------------------------------------------------------- test


def run_tests(panel, cfg):
    """Two-sided combined tests of every predictor and of all jointly, per level.

    Returns a frame with one row per (tau, hypothesis) in ``PVALUE_HEADER``
    order; marginal rows come before the joint row at each level.
    """
    K = panel.x.shape[1]
    hyps = [Hypothesis.marginal(i, K) for i in range(K)] + [Hypothesis.joint(K)]
    rows = []
    for tau in cfg.grid.taus:
        icfg = InferenceConfig(cfg.instrument, cfg.density(_tau_key(tau)))
        res = run_inference(panel.y, panel.x, tau, hyps, icfg, t_forms=False)
        for i, hyp in enumerate(hyps):
            r = res.get(hyp.label, "Qm")
            name = panel.names[i] if i < K else "joint"
            rows.append((tau, hyp.label, name, r.kind, float(r.statistic), float(r.p_value),
                         float(np.log(max(_LOG_P_FLOOR, r.p_value)))))
    return pd.DataFrame(rows, columns=PVALUE_HEADER)


def _pvalue_matrix(frame, names, grid):
    """Reshape marginal rows of a p-value table into a ``(J, K)`` array."""
    missing = [c for c in ("tau", "predictor", "p_value") if c not in frame.columns]
    if missing:
        raise ContractError(f"p-value file lacks column(s) {', '.join(missing)}")
    marg = frame[frame["predictor"] != "joint"]
    table = marg.pivot_table(index="tau", columns="predictor", values="p_value", aggfunc="first")
    out = np.full((len(grid), len(names)), np.nan)
    for j, tau in enumerate(grid.taus):
        hit = np.flatnonzero(np.isclose(table.index.to_numpy(dtype=float), tau, atol=1e-9))
        for i, name in enumerate(names):
            if len(hit) and name in table.columns:
                out[j, i] = table.iloc[hit[0]][name]
    if np.isnan(out).any():
        raise ContractError("p-value file does not cover every (tau, predictor) in the grid")
    return out


def _cmd_test(args, cfg, out):
    panel = load_panel(args.data, cfg)
    frame = run_tests(panel, cfg)
    _write_csv(out / "pvalues.csv", PVALUE_HEADER, frame.itertuples(index=False))
    if args.figures:
        from .report import plot_log_pvalues

        plot_log_pvalues(frame[frame["predictor"] != "joint"], out / "pvalues.png", cfg.threshold)
    return 0


# ---------------------------------------------------------------- forecast


def _selection(args, cfg, panel, out):
    if args.pvalues:
        frame = pd.read_csv(args.pvalues)
    else:
        frame = run_tests(panel, cfg)
        _write_csv(out / "pvalues.csv", PVALUE_HEADER, frame.itertuples(index=False))
    sel = select_predictors(_pvalue_matrix(frame, panel.names, cfg.grid), cfg.grid, cfg.threshold)
    rows = [(tau, ";".join(panel.names[i] for i in sel.selected(j)))
            for j, tau in enumerate(cfg.grid.taus)]
    _write_csv(out / "selection.csv", ["tau", "selected"], rows)
    return sel


def _reselector(cfg, names):
    def reselect(y, x):
        from .data import Panel

        frame = run_tests(Panel(None, y, x, names, None), cfg)
        return select_predictors(_pvalue_matrix(frame, names, cfg.grid), cfg.grid, cfg.threshold)

    return reselect


def _prediction_rows(periods, grid, pred, err):
    for n, period in enumerate(periods):
        for j, tau in enumerate(grid.taus):
            yield period, tau, float(pred[n, j]), float(err[n, j])


def _first_period(cfg, T):
    T_m = cfg.T_m if cfg.T_m is not None else T // 2 + 1
    if not 2 <= T_m <= T:
        raise ParameterError(f"forecast.T_m must lie in 2..{T}, got {T_m}")
    return int(T_m)


def _oos(cfg, panel, sel):
    T_m = _first_period(cfg, len(panel.y))
    reselect = _reselector(cfg, panel.names) if cfg.reselect else None
    return predict_oos(panel.y, panel.x, sel, cfg.grid, T_m, reselect=reselect)


def _cmd_forecast(args, cfg, out):
    panel = load_panel(args.data, cfg)
    sel = _selection(args, cfg, panel, out)
    models = [("selected", panel, sel)]
    if cfg.baseline:
        base = load_panel(args.data, cfg, predictors=cfg.baseline)
        mask = np.ones((len(cfg.grid), len(base.names)), dtype=bool)
        models.append(("baseline", base, SelectionMap(cfg.grid.taus, mask)))
    evals, diag = [], []
    for model, p, s in models:
        ins = fit_insample(p.y, p.x, s, cfg.grid)
        if model == "selected":
            oos = _oos(cfg, p, s)
        else:
            oos = predict_oos(p.y, p.x, s, cfg.grid, _first_period(cfg, len(p.y)))
        suffix = "" if model == "selected" else "_baseline"
        _write_csv(out / f"insample{suffix}.csv", PREDICTION_HEADER,
                   _prediction_rows(p.periods, cfg.grid, ins.predictions, ins.residuals))
        _write_csv(out / f"oos{suffix}.csv", PREDICTION_HEADER,
                   _prediction_rows(p.periods[oos.periods - 1], cfg.grid, oos.predictions, oos.errors))
        for scheme in SCHEMES:
            evals.append((scheme, "insample", model, qw_crps(ins.residuals, scheme, cfg.grid).qw_c))
            evals.append((scheme, "oos", model, qw_crps(oos.errors, scheme, cfg.grid).qw_c))
        diag.append(("insample", model, count_crossings(ins.predictions)))
        diag.append(("oos", model, count_crossings(oos.predictions)))
        if model == "selected":
            _write_indicator(out, p.periods[oos.periods - 1], oos.predictions, cfg.grid, args.figures)
    _write_csv(out / "evaluation.csv", EVALUATION_HEADER, evals)
    _write_csv(out / "crossings.csv", ["sample", "model", "periods_with_crossings"], diag)
    return 0


# ---------------------------------------------------------------- indicator


def _write_indicator(out, periods, predictions, grid, figures=False):
    left = tail_indicator(predictions, "left", grid)
    right = tail_indicator(predictions, "right", grid)
    rows = list(zip(periods, left.tolist(), right.tolist()))
    _write_csv(out / "indicator.csv", INDICATOR_HEADER, rows)
    if figures:
        from .report import plot_indicator

        plot_indicator(pd.DataFrame(rows, columns=INDICATOR_HEADER), out / "indicator.png")


def _cmd_indicator(args, cfg, out):
    if args.predictions:
        frame = pd.read_csv(args.predictions)
        missing = [c for c in PREDICTION_HEADER[:3] if c not in frame.columns]
        if missing:
            raise ContractError(f"predictions file lacks column(s) {', '.join(missing)}")
        wide = frame.pivot_table(index="period", columns="tau", values="prediction", aggfunc="first")
        taus = wide.columns.to_numpy(dtype=float)
        if len(taus) != len(cfg.grid) or not np.allclose(taus, cfg.grid.array, atol=1e-9):
            raise ContractError("predictions file does not cover the configured quantile grid")
        if wide.isna().any().any():
            raise ContractError("predictions file has missing (period, tau) cells")
        _write_indicator(out, wide.index.astype(str).to_numpy(), wide.to_numpy(), cfg.grid, args.figures)
        return 0
    panel = load_panel(args.data, cfg)
    sel = _selection(args, cfg, panel, out)
    oos = _oos(cfg, panel, sel)
    _write_indicator(out, panel.periods[oos.periods - 1], oos.predictions, cfg.grid, args.figures)
    return 0


# ---------------------------------------------------------------- ar1 and simulate


def _cmd_ar1(args, cfg, out):
    panel = load_panel(args.data, cfg)
    names = args.columns.split(",") if args.columns else panel.names
    rows = []
    for name in names:
        if name not in panel.frame.columns:
            raise ContractError(f"data file has no column '{name}'")
        series = pd.to_numeric(panel.frame[name], errors="coerce").to_numpy(dtype=float)
        if not np.all(np.isfinite(series)):
            raise ContractError(f"column '{name}' has missing or non-finite values")
        rows.append((name, ar1_coefficient(series)))
    _write_csv(out / "ar1.csv", ["column", "ar1"], rows)
    for name, rho in rows:
        print(f"{name:>8s}  {rho:.3f}")
    return 0


def _cmd_simulate(args, out):
    if bool(args.config) == bool(args.design):
        raise ParameterError("simulate needs exactly one of --config or --design")
    if args.design:
        from .designs import design

        try:
            mc = design(args.design, args.reps)
        except KeyError as exc:
            raise ParameterError(exc.args[0]) from None
    else:
        mc = load_config(args.config)
        if args.reps is not None:
            mc = dataclasses.replace(mc, reps=args.reps)
    if args.seed is not None:
        mc = dataclasses.replace(mc, seed=args.seed)
    if args.tau_grid:
        mc = dataclasses.replace(mc, taus=QuantileGrid.parse(args.tau_grid).taus)
    report = run_experiment(mc, cache_dir=args.cache, workers=args.workers)
    (out / "mc_report.csv").write_text(emit_tables(report, "csv"))
    (out / "mc_report.txt").write_text(emit_tables(report, "text"))
    print(emit_tables(report, "text"), end="")
    if report.failures:
        print(f"{report.failures} replication(s) failed numerically and were dropped", file=sys.stderr)
    if args.figures:
        from .report import plot_rejection_rates

        plot_rejection_rates(report.frame(), out / "mc_report.png", mc.nominal)
    return 0


# ---------------------------------------------------------------- entry point


def build_parser():
    p = argparse.ArgumentParser(prog="qrpredict", description="Quantile predictive regression toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="YAML configuration file")
        if data:
            sp.add_argument("--data", required=True, help="monthly CSV data file")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--tau-grid", help="quantile grid, 'start:stop:step' or comma list")
        sp.add_argument("--figures", action="store_true", help="also write PNG figures")
        sp.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("simulate", help="Monte Carlo rejection tables")
    common(s, data=False)
    s.add_argument("--design", help="named design, e.g. size-univariate")
    s.add_argument("--reps", type=int, help="override the replication count")
    s.add_argument("--cache", help="directory for memoized replications")
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("test", help="per-tau p-values for each predictor and jointly")
    common(s)
    s.add_argument("--threshold", type=float)

    for name, text in (("forecast", "in-sample and out-of-sample forecasts"),
                       ("indicator", "tail-risk indicators")):
        s = sub.add_parser(name, help=text)
        common(s, data=False)
        s.add_argument("--data", required=(name == "forecast"), help="monthly CSV data file")
        s.add_argument("--threshold", type=float)
        s.add_argument("--pvalues", help="reuse a pvalues.csv from 'test' instead of recomputing")
        if name == "indicator":
            s.add_argument("--predictions", help="out-of-sample predictions CSV to summarize")

    s = sub.add_parser("ar1", help="AR(1) slopes of predictors")
    common(s)
    s.add_argument("--columns", help="comma-separated columns (default: configured predictors)")
    return p


def main(argv=None):
    """Run one subcommand; returns the process exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            return _cmd_simulate(args, out)
        if args.command == "indicator" and not (args.data or args.predictions):
            raise ParameterError("indicator needs --data or --predictions")
        grid = QuantileGrid.parse(args.tau_grid) if args.tau_grid else None
        cfg = load_run_config(args.config, grid=grid, seed=args.seed,
                              threshold=getattr(args, "threshold", None))
        handler = {"test": _cmd_test, "forecast": _cmd_forecast,
                   "indicator": _cmd_indicator, "ar1": _cmd_ar1}[args.command]
        return handler(args, cfg, out)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
