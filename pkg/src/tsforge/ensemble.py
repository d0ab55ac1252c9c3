"""Greedy ensemble selection, refit on train+val, and final forecasting.

Selection is forward greedy with replacement over validation point forecasts
cached at evaluation time; weights are selection counts over total selections.
The returned ensemble is the best prefix of the greedy sequence, so its
validation MASE never exceeds the best single candidate's. Members are
retrained from scratch on the union of training and validation ranges before
test forecasting.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import TimeSeriesDataset, SplitView, seasonal_period
from .errors import NoCandidates, TsforgeError
from .evaluate import dummy_forecast
from .metrics import DENOM_FLOOR
from .space import Configuration, SearchSpace, to_architecture, to_optimizer_config, to_sampler_config
from .zoo import InputDims, ModelState, build, load_model, predict, resolve_window, save_model, train

MANIFEST_VERSION = 1


@dataclass
class EnsembleMember:
    config_id: int
    config: Configuration
    weight: float
    state: Optional[ModelState] = None
    checkpoint: Optional[str] = None


@dataclass
class Ensemble:
    members: list
    size: int
    val_loss: float
    space_hash: str
    fallback_dummy: bool = False


def _val_truth(dataset: TimeSeriesDataset, split_view: SplitView, m: int):
    """(truth matrix, per-series MASE denominators, defined mask) on the val tails."""
    N, H = len(dataset), dataset.horizon
    Y = np.zeros((N, H))
    denom = np.zeros(N)
    for i, s in enumerate(dataset.series):
        lo, hi = split_view.val[i]
        Y[i] = s.targets[lo:hi]
        hist = s.targets[:lo]
        m_eff = m if len(hist) > m else 1
        denom[i] = np.mean(np.abs(hist[m_eff:] - hist[:-m_eff])) if len(hist) > m_eff else 0.0
    defined = denom >= DENOM_FLOOR
    return Y, denom, defined


def _mase_of(paths: np.ndarray, Y: np.ndarray, denom: np.ndarray, defined: np.ndarray) -> float:
    if not defined.any():
        return float("inf")
    per = np.mean(np.abs(paths[defined] - Y[defined]), axis=1) / denom[defined]
    return float(per.mean())


def select(records: list, dataset: TimeSeriesDataset, split_view: SplitView,
           size: int = 20, m: Optional[int] = None) -> Ensemble:
    """Greedy-with-replacement selection over cached validation forecasts."""
    m = m if m is not None else seasonal_period(dataset.frequency)
    candidates = [r for r in records if r.status == "ok" and r.forecasts]
    by_id = {}
    for r in sorted(candidates, key=lambda r: (r.config_id, r.val_loss)):
        by_id.setdefault(r.config_id, r)
    candidates = [by_id[cid] for cid in sorted(by_id)]
    if not candidates:
        raise NoCandidates("no successful evaluations with stored validation forecasts")

    Y, denom, defined = _val_truth(dataset, split_view, m)
    ids = [s.id for s in dataset.series]
    paths = np.stack([
        np.stack([np.asarray(r.forecasts[sid], dtype=np.float64) for sid in ids])
        for r in candidates
    ])  # (C, N, H)

    counts = np.zeros(len(candidates), dtype=np.int64)
    running = np.zeros_like(Y)
    best_counts, best_loss = None, np.inf
    for step in range(1, size + 1):
        step_best, step_loss = None, np.inf
        for j in range(len(candidates)):
            trial = (running + paths[j]) / step
            loss = _mase_of(trial, Y, denom, defined)
            if loss < step_loss:
                step_best, step_loss = j, loss
        counts[step_best] += 1
        running += paths[step_best]
        if step_loss < best_loss:
            best_loss, best_counts = step_loss, counts.copy()

    total = best_counts.sum()
    members = [
        EnsembleMember(config_id=candidates[j].config_id,
                       config=Configuration(candidates[j].config, candidates[j].space_hash),
                       weight=best_counts[j] / total)
        for j in np.flatnonzero(best_counts)
    ]
    return Ensemble(members=members, size=size, val_loss=float(best_loss),
                    space_hash=candidates[0].space_hash)


def refit(ensemble: Ensemble, dataset: TimeSeriesDataset, run_seed: int,
          max_epochs: int = 50) -> Ensemble:
    """Retrain every member from scratch on train+val with a fresh seed.

    Failing members are dropped and weights renormalized; if every member
    fails the ensemble falls back to the dummy forecaster.
    """
    H = dataset.horizon
    train_ends = [len(s) - H for s in dataset.series]
    P = dataset.series[0].past_covariates.shape[1] if dataset.series[0].past_covariates is not None else 0
    F = dataset.series[0].future_covariates.shape[1] if dataset.series[0].future_covariates is not None else 0
    m = seasonal_period(dataset.frequency)
    survivors = []
    for idx, member in enumerate(ensemble.members):
        seed = (run_seed + 100003 * (idx + 1)) % (2 ** 31)
        try:
            arch = to_architecture(member.config)
            sampler = to_sampler_config(member.config, seed=seed)
            window = resolve_window(arch, dataset, sampler)
            dims = InputDims(window=window, horizon=H, past_cov=P, future_cov=F)
            state = build(arch, dims, seed=seed,
                          scaler_method=member.config["target_scaler"])
            state, _ = train(state, dataset, train_ends, sampler,
                             to_optimizer_config(member.config), max_epochs, seasonal_m=m)
            survivors.append(EnsembleMember(config_id=member.config_id,
                                            config=member.config,
                                            weight=member.weight, state=state))
        except (TsforgeError, ValueError) as exc:
            warnings.warn(f"refit of member {member.config_id} failed ({exc}); dropping")
    if not survivors:
        return Ensemble(members=[], size=ensemble.size, val_loss=ensemble.val_loss,
                        space_hash=ensemble.space_hash, fallback_dummy=True)
    total = sum(mb.weight for mb in survivors)
    for mb in survivors:
        mb.weight /= total
    return Ensemble(members=survivors, size=ensemble.size, val_loss=ensemble.val_loss,
                    space_hash=ensemble.space_hash)


def forecast(ensemble: Ensemble, dataset: TimeSeriesDataset) -> dict:
    """Weighted mean of member point paths over the test tails."""
    H = dataset.horizon
    origins = [len(s) - H for s in dataset.series]
    if ensemble.fallback_dummy or not ensemble.members:
        return {s.id: dummy_forecast(s.targets[len(s) - H - 1], H) for s in dataset.series}
    combined = {s.id: np.zeros(H) for s in dataset.series}
    for member in ensemble.members:
        if member.state is None:
            raise TsforgeError(f"member {member.config_id} has no trained state")
        outputs = predict(member.state, dataset, origins)
        for o in outputs:
            combined[o.series_id] += member.weight * o.point
    return combined


# ---------------------------------------------------------------------------
# manifest + checkpoints


def save_ensemble(ensemble: Ensemble, out_dir, run_seed: int) -> str:
    os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
    manifest = {
        "version": MANIFEST_VERSION,
        "space_hash": ensemble.space_hash,
        "run_seed": run_seed,
        "size": ensemble.size,
        "val_loss": ensemble.val_loss,
        "fallback_dummy": ensemble.fallback_dummy,
        "members": [],
    }
    for member in ensemble.members:
        rel = os.path.join("checkpoints", f"member_{member.config_id}.npz")
        save_model(member.state, os.path.join(out_dir, rel))
        manifest["members"].append({
            "config_id": member.config_id,
            "weight": member.weight,
            "config": member.config.values,
            "checkpoint": rel,
        })
    path = os.path.join(out_dir, "ensemble.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    os.replace(tmp, path)
    return path


def load_ensemble(manifest_path, space: SearchSpace) -> Ensemble:
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest["space_hash"] != space.hash:
        raise TsforgeError("manifest space hash does not match this space version")
    base = os.path.dirname(os.path.abspath(manifest_path))
    members = []
    for m in manifest["members"]:
        state = load_model(os.path.join(base, m["checkpoint"]))
        config = space.make_config(m["config"])
        members.append(EnsembleMember(config_id=m["config_id"], config=config,
                                      weight=m["weight"], state=state,
                                      checkpoint=m["checkpoint"]))
    return Ensemble(members=members, size=manifest["size"],
                    val_loss=manifest["val_loss"], space_hash=manifest["space_hash"],
                    fallback_dummy=manifest["fallback_dummy"])
