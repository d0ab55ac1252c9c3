"""Command-line entry points: run, importance, report, forecast.

Exit codes: 0 success, 2 data error, 3 no successful evaluation,
4 insufficient history.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .data import Frequency, load_csv, load_tsf_subset, seasonal_period, split
from .ensemble import forecast as ensemble_forecast
from .ensemble import load_ensemble, refit, save_ensemble, select
from .errors import DataError, NoCandidates, TooFewRuns, TsforgeError, ZeroVariance
from .evaluate import append_history, dummy_val_loss, evaluate, load_history
from .fidelity import BUDGET_TOKENS, default_ladder, vanilla_ladder
from .importance import fanova, pooled_summary
from .metrics import aggregate, incumbent_auc, incumbent_auc_raw, incumbent_curve
from .optimizer import Clock, run_optimization
from .space import default_space

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NO_RESULT = 3
EXIT_NO_HISTORY = 4


@dataclass
class RunConfig:
    data: str
    budget: str = "epochs"
    walltime: float = 600.0
    seed: int = 0
    out: str = "tsforge-out"
    ensemble_size: int = 20
    max_epochs: int = 50
    proxy_threshold: int = 1000
    proxy_min: int = 1000
    workers: int = 1
    horizon: int = 0
    frequency: str = ""
    overrides: dict = field(default_factory=dict)


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _load_dataset(cfg: RunConfig):
    if not os.path.exists(cfg.data):
        raise DataError(f"dataset file not found: {cfg.data}")
    if cfg.data.endswith(".csv"):
        if cfg.horizon < 1 or not cfg.frequency:
            raise DataError("CSV input needs --horizon and --frequency")
        return load_csv(cfg.data, horizon=cfg.horizon, frequency=Frequency.parse(cfg.frequency))
    return load_tsf_subset(cfg.data)


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise DataError(f"--set expects key=value, got '{pair}'")
        k, v = pair.split("=", 1)
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def cmd_run(cfg: RunConfig) -> int:
    try:
        dataset = _load_dataset(cfg)
        split_view = split(dataset)
    except (TsforgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if cfg.budget not in BUDGET_TOKENS:
        print(f"error: unknown budget token '{cfg.budget}'", file=sys.stderr)
        return EXIT_DATA
    if cfg.workers != 1:
        print("note: only 1 worker is implemented; running serially", file=sys.stderr)

    os.makedirs(cfg.out, exist_ok=True)
    space = default_space()
    space.save(os.path.join(cfg.out, "space.txt"))
    m = seasonal_period(dataset.frequency)
    budget_type = BUDGET_TOKENS[cfg.budget]
    vanilla = budget_type == "vanilla"
    ladder = vanilla_ladder() if vanilla else default_ladder()
    penalty = dummy_val_loss(dataset, split_view, m)

    def evaluator(config, budget, seed):
        return evaluate(config, budget, dataset, split_view, seed,
                        max_epochs=cfg.max_epochs,
                        proxy_threshold=cfg.proxy_threshold,
                        proxy_min=cfg.proxy_min, space=space)

    history_path = os.path.join(cfg.out, "history.jsonl")
    open(history_path, "w").close()
    clock = Clock(virtual=bool(cfg.overrides.get("virtual_clock", 0)))
    max_evals = cfg.overrides.get("max_evals")
    cohort = int(cfg.overrides.get("cohort_size", 9))

    result = run_optimization(
        space, evaluator, ladder=ladder,
        budget_type="vanilla" if vanilla else budget_type,
        wall_clock_limit=cfg.walltime, seed=cfg.seed, cohort_size=cohort,
        penalty_loss=penalty, max_evals=max_evals, clock=clock,
        on_record=lambda r: append_history(history_path, r))
    records = result.records

    ok_records = [r for r in records if r.status == "ok" and r.forecasts]
    if not ok_records:
        print("error: no successful evaluation", file=sys.stderr)
        return EXIT_NO_RESULT

    # select from the highest rung that has usable records
    rungs_done = sorted({r.budget_value for r in ok_records})
    top = rungs_done[-1]
    try:
        ens = select([r for r in ok_records if r.budget_value == top],
                     dataset, split_view, size=cfg.ensemble_size, m=m)
    except NoCandidates:
        print("error: no ensemble candidates", file=sys.stderr)
        return EXIT_NO_RESULT
    ens = refit(ens, dataset, run_seed=cfg.seed, max_epochs=cfg.max_epochs)
    save_ensemble(ens, cfg.out, run_seed=cfg.seed)

    test_forecasts = ensemble_forecast(ens, dataset)
    _write_forecasts(os.path.join(cfg.out, "forecasts.csv"), dataset, test_forecasts)
    reports = _write_metrics(os.path.join(cfg.out, "metrics.csv"), dataset, split_view,
                             test_forecasts, m)
    _write_summary(os.path.join(cfg.out, "summary.txt"), cfg, dataset, records,
                   result.incumbent, ens, reports)
    return EXIT_OK


def _write_forecasts(path, dataset, forecasts) -> None:
    lines = ["series_id,step,value"]
    for s in dataset.series:
        for step, v in enumerate(forecasts[s.id], start=1):
            lines.append(f"{s.id},{step},{v!r}")
    _write_atomic(path, "\n".join(lines) + "\n")


def _write_metrics(path, dataset, split_view, forecasts, m) -> dict:
    reports = {}
    for metric in ("mase", "smape", "mae"):
        reports[metric] = aggregate(dataset, split_view, forecasts, metric=metric,
                                    m=m, segment="test")
    lines = ["series_id,mase,smape,mae"]
    for s in dataset.series:
        cells = [s.id]
        for metric in ("mase", "smape", "mae"):
            v = reports[metric].per_series.get(s.id)
            cells.append("" if v is None else repr(v))
        lines.append(",".join(cells))
    lines.append("aggregate," + ",".join(repr(reports[x].aggregate) for x in ("mase", "smape", "mae")))
    _write_atomic(path, "\n".join(lines) + "\n")
    return reports


def _trajectory(records) -> list:
    pts = [(r.wall_clock, r.val_loss) for r in records if np.isfinite(r.val_loss)]
    return incumbent_curve(pts) if pts else []


def _write_summary(path, cfg, dataset, records, incumbent, ens, reports) -> None:
    ok = sum(1 for r in records if r.status == "ok")
    lines = [
        f"dataset: {dataset.name}  N={len(dataset)}  H={dataset.horizon}  freq={dataset.frequency}",
        f"budget: {cfg.budget}  walltime: {cfg.walltime}  seed: {cfg.seed}",
        f"evaluations: {len(records)} (ok {ok}, other {len(records) - ok})",
    ]
    if incumbent is not None:
        lines.append(f"incumbent: config_id={incumbent.config_id} "
                     f"val_loss={incumbent.loss!r} budget={incumbent.budget_value!r}")
    lines.append(f"ensemble: {len(ens.members)} members  val MASE={ens.val_loss!r}")
    lines.append("test: " + "  ".join(f"{k}={reports[k].aggregate!r}" for k in reports))
    lines.append("")
    lines.append("incumbent trajectory (wall_clock,incumbent_loss):")
    curve = _trajectory(records)
    for t, v in curve:
        lines.append(f"{t!r},{v!r}")
    if curve:
        pts = [(r.wall_clock, r.val_loss) for r in records if np.isfinite(r.val_loss)]
        horizon = max(cfg.walltime, curve[-1][0])
        lines.append(f"auc_raw={incumbent_auc_raw(pts, horizon)!r}")
        lines.append(f"auc_normalized={incumbent_auc(pts, horizon)!r}")
        lines.append(f"auc_horizon={horizon!r}")
    _write_atomic(path, "\n".join(lines) + "\n")


def cmd_importance(paths, out_dir: str) -> int:
    space = default_space()
    os.makedirs(out_dir, exist_ok=True)
    reports = {}
    for path in paths:
        try:
            records = load_history(path)
        except (TsforgeError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        if not records:
            print(f"error: {path}: empty history", file=sys.stderr)
            return EXIT_NO_HISTORY
        top = max(r.budget_value for r in records)
        rung_records = [r for r in records if r.budget_value == top]
        try:
            reports[os.path.basename(path)] = fanova(rung_records, space)
        except (TooFewRuns, ZeroVariance) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return EXIT_NO_HISTORY
    lines = ["hyperparameter,dataset,importance"]
    for name, rep in reports.items():
        for hp, v in rep.per_hyperparameter.items():
            lines.append(f"{hp},{name},{v!r}")
        lines.append(f"_residual,{name},{rep.residual!r}")
    _write_atomic(os.path.join(out_dir, "importance.csv"), "\n".join(lines) + "\n")
    pooled = pooled_summary(reports)
    lines = ["hyperparameter,median,q1,q3"]
    for hp, med, q1, q3 in pooled:
        lines.append(f"{hp},{med!r},{q1!r},{q3!r}")
    _write_atomic(os.path.join(out_dir, "importance_pooled.csv"), "\n".join(lines) + "\n")
    print(f"wrote importance tables for {len(reports)} histories to {out_dir}")
    return EXIT_OK


def cmd_report(paths, out_dir: str, horizon: float = 0.0) -> int:
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for path in paths:
        try:
            records = load_history(path)
        except (TsforgeError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        pts = [(r.wall_clock, r.val_loss) for r in records if np.isfinite(r.val_loss)]
        if not pts:
            print(f"error: {path}: empty history", file=sys.stderr)
            return EXIT_NO_HISTORY
        h = horizon if horizon > 0 else pts[-1][0]
        curve = incumbent_curve(pts)
        stem = os.path.splitext(os.path.basename(path))[0]
        lines = ["wall_clock,incumbent_loss"] + [f"{t!r},{v!r}" for t, v in curve]
        _write_atomic(os.path.join(out_dir, f"trajectory_{stem}.csv"),
                      "\n".join(lines) + "\n")
        rows.append((path, incumbent_auc_raw(pts, h), incumbent_auc(pts, h), h))
    print(f"{'history':40s} {'auc_raw':>12s} {'auc_norm':>12s} {'horizon':>10s}")
    for path, raw, norm, h in rows:
        print(f"{path:40s} {raw:12.6g} {norm:12.6g} {h:10.4g}")
    return EXIT_OK


def cmd_forecast(manifest: str, data: str, out_dir: str, horizon: int = 0,
                 frequency: str = "") -> int:
    space = default_space()
    try:
        cfg = RunConfig(data=data, horizon=horizon, frequency=frequency)
        dataset = _load_dataset(cfg)
        ens = load_ensemble(manifest, space)
    except (TsforgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    os.makedirs(out_dir, exist_ok=True)
    forecasts = ensemble_forecast(ens, dataset)
    _write_forecasts(os.path.join(out_dir, "forecasts.csv"), dataset, forecasts)
    print(f"wrote forecasts for {len(dataset)} series to {out_dir}/forecasts.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsforge",
                                description="AutoML for time-series forecasting")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="search, ensemble, refit, forecast")
    run.add_argument("--data", required=True)
    run.add_argument("--budget", default="epochs",
                     choices=sorted(BUDGET_TOKENS))
    run.add_argument("--walltime", type=float, default=600.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True)
    run.add_argument("--ensemble-size", type=int, default=20)
    run.add_argument("--max-epochs", type=int, default=50)
    run.add_argument("--proxy-threshold", type=int, default=1000)
    run.add_argument("--proxy-min", type=int, default=1000)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--horizon", type=int, default=0, help="required for CSV input")
    run.add_argument("--frequency", default="", help="required for CSV input")
    run.add_argument("--set", action="append", dest="overrides", metavar="KEY=VALUE",
                     help="optimizer constants, e.g. max_evals=40, virtual_clock=1")

    imp = sub.add_parser("importance", help="fANOVA importance from run histories")
    imp.add_argument("histories", nargs="+")
    imp.add_argument("--out", default=".")

    rep = sub.add_parser("report", help="incumbent trajectory and AUC")
    rep.add_argument("histories", nargs="+")
    rep.add_argument("--out", default=".")
    rep.add_argument("--horizon", type=float, default=0.0)

    fc = sub.add_parser("forecast", help="forecast a dataset with a saved ensemble")
    fc.add_argument("manifest")
    fc.add_argument("--data", required=True)
    fc.add_argument("--out", default=".")
    fc.add_argument("--horizon", type=int, default=0)
    fc.add_argument("--frequency", default="")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = RunConfig(data=args.data, budget=args.budget, walltime=args.walltime,
                            seed=args.seed, out=args.out,
                            ensemble_size=args.ensemble_size, max_epochs=args.max_epochs,
                            proxy_threshold=args.proxy_threshold, proxy_min=args.proxy_min,
                            workers=args.workers, horizon=args.horizon,
                            frequency=args.frequency,
                            overrides=_parse_overrides(args.overrides))
            return cmd_run(cfg)
        if args.command == "importance":
            return cmd_importance(args.histories, args.out)
        if args.command == "report":
            return cmd_report(args.histories, args.out, args.horizon)
        if args.command == "forecast":
            return cmd_forecast(args.manifest, args.data, args.out,
                                horizon=args.horizon, frequency=args.frequency)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
