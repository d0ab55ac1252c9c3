"""Synthetic corpora and benchmark functions used by demos and the test suite."""

from __future__ import annotations

import numpy as np

from .data import Frequency, Series, TimeSeriesDataset
from .space import HyperparameterDef, SearchSpace


def seasonal_corpus(n_series: int = 30, length: int = 144, horizon: int = 12,
                    period: int = 12, seed: int = 0, noise: float = 0.05,
                    frequency: str = "monthly", second_period: int = 0,
                    ar_rho: float = 0.0, level_spread: float = 1.0) -> TimeSeriesDataset:
    """Sinusoidal seasonal series with per-series level, amplitude, phase, trend.

    The optional knobs make the corpus harder: a second seasonal component,
    AR(1)-correlated noise (recent history becomes informative beyond the
    season), and a wider log-uniform spread of series levels (scaling choices
    start to matter).
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    series = []
    for i in range(n_series):
        level = rng.uniform(5.0, 20.0) * 10.0 ** rng.uniform(0.0, level_spread - 1.0)
        amp = level * rng.uniform(0.2, 0.5)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        trend = rng.uniform(-0.01, 0.02) * level
        y = (level + amp * np.sin(2.0 * np.pi * t / period + phase)
             + trend * t)
        if second_period:
            amp2 = level * rng.uniform(0.1, 0.35)
            y = y + amp2 * np.sin(2.0 * np.pi * t / second_period
                                  + rng.uniform(0.0, 2.0 * np.pi))
        eps = rng.standard_normal(length)
        if ar_rho > 0.0:
            for k in range(1, length):
                eps[k] = ar_rho * eps[k - 1] + np.sqrt(1.0 - ar_rho ** 2) * eps[k]
        y = y + noise * level * eps
        series.append(Series(id=f"s{i:04d}", targets=y))
    return TimeSeriesDataset(series=series, frequency=Frequency(frequency),
                             horizon=horizon, name=f"seasonal{n_series}")


def random_walk_corpus(n_series: int = 20, length: int = 60, horizon: int = 6,
                       seed: int = 0, frequency: str = "daily") -> TimeSeriesDataset:
    """Driftless random walks; the last-value dummy is the optimal forecaster."""
    rng = np.random.default_rng(seed)
    series = []
    for i in range(n_series):
        y = 100.0 + np.cumsum(rng.standard_normal(length))
        series.append(Series(id=f"w{i:04d}", targets=y))
    return TimeSeriesDataset(series=series, frequency=Frequency(frequency),
                             horizon=horizon, name=f"walk{n_series}")


def branin(x1: float, x2: float) -> float:
    """The 2-D Branin function; global minimum ~0.397887."""
    a = 1.0
    b = 5.1 / (4.0 * np.pi ** 2)
    c = 5.0 / np.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8.0 * np.pi)
    return float(a * (x2 - b * x1 ** 2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s)


def branin_space() -> SearchSpace:
    return SearchSpace([
        HyperparameterDef("x1", "real", 2.5, lo=-5.0, hi=10.0),
        HyperparameterDef("x2", "real", 7.5, lo=0.0, hi=15.0),
    ])


def branin_evaluator(config, budget, seed) -> float:
    return branin(config["x1"], config["x2"])
