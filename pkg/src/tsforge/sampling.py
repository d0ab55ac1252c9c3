"""Sliding-window instance generation, epoch sampling plans, per-instance scaling.

Training instances are (past window, future horizon) pairs cut from the
training range of each series. Short histories are left-padded with zeros and
carry a mask; no window index ever reaches the forecast origin, so padding can
never leak future information.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import TimeSeriesDataset
from .errors import NoAdmissibleOrigins

SCALE_FLOOR = 1e-10
SCALER_METHODS = ("none", "mean_abs", "standard", "min_max")


@dataclass
class WindowInstance:
    past_targets: np.ndarray      # (window,)
    past_mask: np.ndarray         # (window,) False = padding
    future_targets: np.ndarray    # (H,)
    series_index: int
    origin: int
    past_covariates: Optional[np.ndarray] = None    # (window, P)
    future_covariates: Optional[np.ndarray] = None  # (H, F)


@dataclass
class SamplerConfig:
    window_multiplier: float = 1.0
    batch_size: int = 32
    num_batches_per_epoch: int = 20
    strategy: str = "uniform"  # or "per_series"
    seed: int = 0


def window_size_for(cfg: SamplerConfig, base_window: int) -> int:
    return max(1, int(round(cfg.window_multiplier * base_window)))


def _train_ends(split_or_ends, n: int) -> list:
    """Accept either a SplitView or an explicit per-series train-end list."""
    if hasattr(split_or_ends, "train_end"):
        return [split_or_ends.train_end(i) for i in range(n)]
    return [int(t) for t in split_or_ends]


def admissible_origin_counts(dataset: TimeSeriesDataset, split_or_ends, horizon: int) -> np.ndarray:
    """Origins per series: o in [1, train_end - H], needing one observed past
    point and a full horizon of training targets."""
    ends = _train_ends(split_or_ends, len(dataset))
    return np.array([max(0, te - horizon) for te in ends], dtype=np.int64)


def epoch_plan(dataset: TimeSeriesDataset, split_or_ends, cfg: SamplerConfig, epoch: int) -> list:
    """Deterministic (series_index, origin) pairs for one epoch.

    Exactly ``batch_size * num_batches_per_epoch`` pairs. ``per_series``
    allocates the same quota to every series (round-robin truncated);
    ``uniform`` draws each pair uniformly over all admissible origins across
    the dataset. The RNG is seeded from (cfg.seed, epoch).
    """
    H = dataset.horizon
    counts = admissible_origin_counts(dataset, split_or_ends, H)
    total = int(counts.sum())
    if total == 0:
        raise NoAdmissibleOrigins("no series offers a trainable window")
    want = cfg.batch_size * cfg.num_batches_per_epoch
    rng = np.random.default_rng((cfg.seed, epoch))

    if cfg.strategy == "per_series":
        live = np.flatnonzero(counts > 0)
        quota = -(-want // len(live))  # ceil
        per_series = [
            [(int(i), int(o)) for o in rng.integers(1, counts[i] + 1, size=quota)]
            for i in live
        ]
        plan = []
        for round_idx in range(quota):
            for draws in per_series:
                plan.append(draws[round_idx])
                if len(plan) == want:
                    return plan
        return plan
    if cfg.strategy == "uniform":
        cum = np.concatenate([[0], np.cumsum(counts)])
        flat = rng.integers(0, total, size=want)
        series_idx = np.searchsorted(cum, flat, side="right") - 1
        origins = flat - cum[series_idx] + 1
        return [(int(s), int(o)) for s, o in zip(series_idx, origins)]
    raise ValueError(f"unknown sampling strategy '{cfg.strategy}'")


def materialize(dataset: TimeSeriesDataset, pair, window_size: int, horizon: int) -> WindowInstance:
    """Cut one instance: past = targets[origin-w, origin) left-padded, future =
    targets[origin, origin+H)."""
    series_index, origin = pair
    s = dataset.series[series_index]
    assert 1 <= origin and origin + horizon <= len(s), "inadmissible origin"
    lo = origin - window_size
    pad = max(0, -lo)
    lo = max(0, lo)
    past = np.zeros(window_size, dtype=np.float64)
    mask = np.zeros(window_size, dtype=bool)
    past[pad:] = s.targets[lo:origin]
    mask[pad:] = True
    past_cov = None
    if s.past_covariates is not None:
        past_cov = np.zeros((window_size, s.past_covariates.shape[1]), dtype=np.float64)
        past_cov[pad:] = s.past_covariates[lo:origin]
    future_cov = None
    if s.future_covariates is not None:
        future_cov = s.future_covariates[origin:origin + horizon].copy()
    return WindowInstance(
        past_targets=past,
        past_mask=mask,
        future_targets=s.targets[origin:origin + horizon].copy(),
        series_index=series_index,
        origin=origin,
        past_covariates=past_cov,
        future_covariates=future_cov,
    )


def scaler_stats(past: np.ndarray, mask: np.ndarray, method: str):
    """(loc, scale) per instance from observed past targets only."""
    obs = past[mask] if mask.any() else np.zeros(1)
    if method == "none":
        return 0.0, 1.0
    if method == "mean_abs":
        return 0.0, max(float(np.mean(np.abs(obs))), SCALE_FLOOR)
    if method == "standard":
        return float(np.mean(obs)), max(float(np.std(obs)), SCALE_FLOOR)
    if method == "min_max":
        lo, hi = float(np.min(obs)), float(np.max(obs))
        return lo, max(hi - lo, SCALE_FLOOR)
    raise ValueError(f"unknown scaler method '{method}'")


def fit_apply_scaler(batch: list, method: str):
    """Scale past and future targets of each instance in place-safe copies.

    Returns (scaled instances, [(loc, scale)] aligned with the batch). Padded
    past positions are re-zeroed after scaling so padding stays neutral.
    """
    assert batch, "batch must be nonempty"
    scaled = []
    stats = []
    for inst in batch:
        loc, scale = scaler_stats(inst.past_targets, inst.past_mask, method)
        past = (inst.past_targets - loc) / scale
        past[~inst.past_mask] = 0.0
        future = None
        if inst.future_targets is not None:
            future = (inst.future_targets - loc) / scale
        scaled.append(
            WindowInstance(
                past_targets=past,
                past_mask=inst.past_mask,
                future_targets=future,
                series_index=inst.series_index,
                origin=inst.origin,
                past_covariates=inst.past_covariates,
                future_covariates=inst.future_covariates,
            )
        )
        stats.append((loc, scale))
    return scaled, stats


def inverse_scale(values: np.ndarray, loc: float, scale: float) -> np.ndarray:
    return values * scale + loc
