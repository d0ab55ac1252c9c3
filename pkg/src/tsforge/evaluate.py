"""End-to-end evaluation of one (configuration, budget) pair.

The pipeline applies the budget transform to the training side, trains a model
from the configuration, forecasts the validation tail of a deterministic proxy
subset of series (everything else falls to the dummy forecaster), and scores
mean MASE over all series. Failures never propagate: a failed evaluation gets
the all-dummy loss so the optimizer learns to avoid the region.

The run history is an append-only JSONL file; loading tolerates a truncated
trailing line so a killed run stays usable.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import TimeSeriesDataset, SplitView, seasonal_period, split as split_dataset
from .errors import AllUndefined, CorruptRecord, TsforgeError
from .fidelity import (
    FidelityBudget,
    apply_resolution,
    effective_batches,
    effective_epochs,
    subsample_series,
)
from .metrics import aggregate
from .space import Configuration, SearchSpace, to_architecture, to_optimizer_config, to_sampler_config
from .zoo import InputDims, build, predict, resolve_window, train


@dataclass
class ProxyPlan:
    evaluated_indices: np.ndarray
    covered_fraction: float


@dataclass
class EvalResult:
    val_loss: float
    train_seconds: float
    eval_seconds: float
    status: str = "ok"  # ok | failed | timeout
    forecasts: Optional[dict] = None


@dataclass
class RunRecord:
    config_id: int
    config: dict
    space_hash: str
    budget_type: str
    budget_value: float
    val_loss: float
    train_seconds: float
    eval_seconds: float
    status: str
    wall_clock: float
    seed: int
    forecasts: Optional[dict] = field(default=None, repr=False, compare=False)


JSONL_FIELDS = ("config_id", "config", "space_hash", "budget_type", "budget_value",
                "val_loss", "train_seconds", "eval_seconds", "status", "wall_clock", "seed")


def dummy_forecast(y_last: float, horizon: int) -> np.ndarray:
    """Repeat the last training target for every horizon step."""
    return np.full(horizon, float(y_last))


def proxy_plan(n_series: int, budget_value: float, min_proxy: int = 1000,
               threshold: int = 1000) -> ProxyPlan:
    """Grid-selected validation subset, identical for every configuration at a
    given budget. Small datasets and full budget always use every series."""
    if n_series <= threshold or budget_value >= 1.0:
        idx = np.arange(n_series)
    else:
        m = min(n_series, max(min_proxy, int(round(budget_value * n_series))))
        idx = np.unique((np.arange(m) * n_series) // m)
    return ProxyPlan(evaluated_indices=idx, covered_fraction=len(idx) / n_series)


def dummy_val_forecasts(dataset: TimeSeriesDataset, split_view: SplitView) -> dict:
    out = {}
    for i, s in enumerate(dataset.series):
        te = split_view.train_end(i)
        out[s.id] = dummy_forecast(s.targets[te - 1], dataset.horizon)
    return out


def dummy_val_loss(dataset: TimeSeriesDataset, split_view: SplitView, m: int) -> float:
    """All-dummy validation MASE; the natural no-information penalty."""
    forecasts = dummy_val_forecasts(dataset, split_view)
    try:
        return aggregate(dataset, split_view, forecasts, metric="mase", m=m,
                         segment="val").aggregate
    except AllUndefined:
        return 0.0


def evaluate(config: Configuration, budget: FidelityBudget, dataset: TimeSeriesDataset,
             split_view: SplitView, seed: int, max_epochs: int = 50,
             proxy_threshold: int = 1000, proxy_min: int = 1000,
             space: Optional[SearchSpace] = None) -> EvalResult:
    """Train under the budget, forecast the validation tails, score mean MASE."""
    if space is not None:
        space.validate(config)
    m = seasonal_period(dataset.frequency)
    try:
        return _evaluate_inner(config, budget, dataset, split_view, seed, max_epochs,
                               proxy_threshold, proxy_min, m)
    except (TsforgeError, ValueError, FloatingPointError, ArithmeticError) as exc:
        warnings.warn(f"evaluation failed ({exc}); recording dummy penalty")
        loss = dummy_val_loss(dataset, split_view, m)
        return EvalResult(val_loss=loss, train_seconds=0.0, eval_seconds=0.0,
                          status="failed", forecasts=None)


def _evaluate_inner(config, budget, dataset, split_view, seed, max_epochs,
                    proxy_threshold, proxy_min, m) -> EvalResult:
    arch = to_architecture(config)
    sampler = to_sampler_config(config, seed=seed)
    opt = to_optimizer_config(config)
    b = budget.value

    epochs = max_epochs
    num_batches = sampler.num_batches_per_epoch
    train_ds, train_split = dataset, split_view
    val_ds, val_split = dataset, split_view
    m_eff = m

    if budget.budget_type == "num_epochs":
        epochs = effective_epochs(max_epochs, b)
    elif budget.budget_type == "samples_per_series":
        num_batches = effective_batches(num_batches, b)
    elif budget.budget_type == "num_series":
        train_ds = subsample_series(dataset, b)
        train_split = split_dataset(train_ds)
    elif budget.budget_type == "resolution" and b < 1.0:
        h_eff = max(1, int(round(b * dataset.horizon)))
        coarse = TimeSeriesDataset(
            series=[apply_resolution(s, b) for s in dataset.series],
            frequency=dataset.frequency, horizon=h_eff, name=dataset.name)
        train_ds = val_ds = coarse
        train_split = val_split = split_dataset(coarse)
        m_eff = max(1, int(round(b * m)))

    window = resolve_window(arch, dataset, sampler,
                            budget if budget.budget_type == "resolution" else None)
    P = dataset.series[0].past_covariates.shape[1] if dataset.series[0].past_covariates is not None else 0
    F = dataset.series[0].future_covariates.shape[1] if dataset.series[0].future_covariates is not None else 0
    dims = InputDims(window=window, horizon=val_ds.horizon, past_cov=P, future_cov=F)
    state = build(arch, dims, seed=seed, scaler_method=config["target_scaler"])

    t0 = time.perf_counter()
    state, _curve = train(state, train_ds, train_split, sampler, opt, epochs,
                          seasonal_m=m_eff, num_batches=num_batches)
    train_seconds = time.perf_counter() - t0

    t1 = time.perf_counter()
    plan = proxy_plan(len(val_ds), b, min_proxy=proxy_min, threshold=proxy_threshold)
    proxy_idx = plan.evaluated_indices
    origins = [val_split.train_end(i) for i in proxy_idx]
    outputs = predict(state, val_ds, origins, series_indices=proxy_idx,
                      sample_rng=np.random.default_rng((seed, 0xE)))
    forecasts = {o.series_id: o.point for o in outputs}
    in_proxy = set(int(i) for i in proxy_idx)
    for i, s in enumerate(val_ds.series):
        if i not in in_proxy:
            te = val_split.train_end(i)
            forecasts[s.id] = dummy_forecast(s.targets[te - 1], val_ds.horizon)
    try:
        val_loss = aggregate(val_ds, val_split, forecasts, metric="mase", m=m_eff,
                             segment="val").aggregate
    except AllUndefined:
        val_loss = 0.0  # scaled error carries no ranking signal on constant data
    eval_seconds = time.perf_counter() - t1
    return EvalResult(val_loss=float(val_loss), train_seconds=train_seconds,
                      eval_seconds=eval_seconds, status="ok", forecasts=forecasts)


# ---------------------------------------------------------------------------
# run history persistence


def record_to_json(record: RunRecord) -> str:
    obj = {k: getattr(record, k) for k in JSONL_FIELDS}
    return json.dumps(obj, sort_keys=False)


def append_history(path, record: RunRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record_to_json(record) + "\n")
        fh.flush()


def load_history(path, expected_space_hash: Optional[str] = None) -> list:
    """Load a JSONL run history, dropping a trailing partial line with a warning."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
        trailing_complete = True
    else:
        trailing_complete = False
    space_hash = expected_space_hash
    for line_no, line in enumerate(lines, start=1):
        last = line_no == len(lines)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            if last and not trailing_complete:
                warnings.warn(f"dropping truncated trailing history line {line_no}")
                break
            raise CorruptRecord(line_no, f"bad JSON: {exc}") from exc
        missing = [k for k in JSONL_FIELDS if k not in obj]
        if missing:
            if last and not trailing_complete:
                warnings.warn(f"dropping truncated trailing history line {line_no}")
                break
            raise CorruptRecord(line_no, f"missing fields {missing}")
        if space_hash is None:
            space_hash = obj["space_hash"]
        elif obj["space_hash"] != space_hash:
            raise CorruptRecord(line_no, "space hash mismatch")
        records.append(RunRecord(**{k: obj[k] for k in JSONL_FIELDS}))
    return records
