"""Budget types as deterministic data/schedule transforms, plus the fidelity ladder.

A budget is a fraction in (0, 1]. Four budget types realize it: fewer training
epochs, coarser series resolution, fewer series, or fewer samples per series.
Every transform is a pure function of its inputs: identical inputs give
bit-identical outputs regardless of run or thread count, and value 1.0 is the
identity for all types.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Series, TimeSeriesDataset
from .errors import ResolutionTooCoarse

BUDGET_TYPES = ("num_epochs", "resolution", "num_series", "samples_per_series")

# CLI tokens; "vanilla" means single-rung full-fidelity optimization.
BUDGET_TOKENS = {
    "epochs": "num_epochs",
    "resolution": "resolution",
    "series": "num_series",
    "samples": "samples_per_series",
    "vanilla": "vanilla",
}


@dataclass(frozen=True)
class FidelityBudget:
    budget_type: str
    value: float

    def __post_init__(self):
        if self.budget_type not in BUDGET_TYPES:
            raise ValueError(f"unknown budget type '{self.budget_type}'")
        if not 0.0 < self.value <= 1.0:
            raise ValueError("budget value must lie in (0, 1]")


@dataclass(frozen=True)
class FidelityLadder:
    """Ascending geometric budget rungs ending at 1.0 with promotion ratio eta."""

    rungs: tuple
    eta: float

    def __post_init__(self):
        if not self.rungs or self.rungs[-1] != 1.0:
            raise ValueError("ladder must end at budget 1.0")
        for lo, hi in zip(self.rungs, self.rungs[1:]):
            if not lo < hi:
                raise ValueError("rungs must be strictly increasing")

    @classmethod
    def geometric(cls, min_value: float, eta: float) -> "FidelityLadder":
        """Rungs 1, 1/eta, 1/eta^2, ... down to (and including) min_value."""
        rungs = [1.0]
        while rungs[-1] / eta >= min_value - 1e-12:
            rungs.append(rungs[-1] / eta)
        return cls(rungs=tuple(reversed(rungs)), eta=eta)


def default_ladder() -> FidelityLadder:
    """The 1/9 -> 1/3 -> 1 schedule with promotion ratio 3."""
    return FidelityLadder(rungs=(1.0 / 9.0, 1.0 / 3.0, 1.0), eta=3.0)


def vanilla_ladder() -> FidelityLadder:
    return FidelityLadder(rungs=(1.0,), eta=1.0)


def apply_resolution(series: Series, value: float) -> Series:
    """Keep every k-th point, k = round(1/value), anchored so the last point survives.

    Covariate rows are subsampled identically. Raises
    :class:`ResolutionTooCoarse` when fewer than 3 points would remain.
    """
    if not 0.0 < value <= 1.0:
        raise ValueError("budget value must lie in (0, 1]")
    k = int(round(1.0 / value))
    if k <= 1:
        return series
    L = len(series)
    idx = np.arange(L - 1, -1, -k)[::-1]
    if len(idx) < 3:
        raise ResolutionTooCoarse(series.id, len(idx))
    return Series(
        id=series.id,
        targets=series.targets[idx],
        past_covariates=None if series.past_covariates is None else series.past_covariates[idx],
        future_covariates=None
        if series.future_covariates is None
        else series.future_covariates[idx],
        start_index=series.start_index,
    )


def subsample_series(dataset: TimeSeriesDataset, value: float) -> TimeSeriesDataset:
    """Keep m = max(1, round(value*N)) series on an even grid over sorted ids."""
    if not 0.0 < value <= 1.0:
        raise ValueError("budget value must lie in (0, 1]")
    N = len(dataset)
    m = min(N, max(1, int(round(value * N))))
    if m == N:
        return dataset
    by_id = sorted(dataset.series, key=lambda s: s.id)
    picked = [by_id[(j * N) // m] for j in range(m)]
    return TimeSeriesDataset(
        series=picked, frequency=dataset.frequency, horizon=dataset.horizon, name=dataset.name
    )


def effective_epochs(max_epochs: int, value: float) -> int:
    if not 0.0 < value <= 1.0:
        raise ValueError("budget value must lie in (0, 1]")
    return max(1, int(round(value * max_epochs)))


def effective_batches(num_batches: int, value: float) -> int:
    if not 0.0 < value <= 1.0:
        raise ValueError("budget value must lie in (0, 1]")
    return max(1, int(round(value * num_batches)))


def shrink_window(window: int, value: float, budget_type: str) -> int:
    """Only the resolution budget shrinks the sliding window."""
    if budget_type != "resolution":
        return window
    return max(1, int(round(value * window)))
