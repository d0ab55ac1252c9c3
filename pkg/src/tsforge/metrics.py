"""Forecast accuracy metrics and optimizer-trajectory metrics.

Per-series metrics may be undefined (constant training series for MASE, all
zeros for MAPE); undefined series are excluded from aggregates and counted,
so a single degenerate series never poisons a benchmark run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllUndefined,
    EmptyHistory,
    LengthMismatch,
    MissingForecast,
    TrainTooShort,
)

DENOM_FLOOR = 1e-10


@dataclass
class MetricReport:
    per_series: dict
    aggregate: float
    undefined_count: int


def mase(y_true, y_pred, y_train, m: int = 1):
    """Mean absolute scaled error against the in-sample m-seasonal naive forecast.

    Returns ``None`` when the scaling denominator vanishes (constant training
    series). Raises :class:`TrainTooShort` when ``len(y_train) <= m``.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch("y_true and y_pred lengths differ")
    if len(y_train) <= m:
        raise TrainTooShort(f"need more than m={m} training points")
    denom = np.mean(np.abs(y_train[m:] - y_train[:-m]))
    if denom < DENOM_FLOOR:
        return None
    return float(np.mean(np.abs(y_true - y_pred)) / denom)


def seasonal_naive_denominator(y_train, m: int = 1) -> float:
    """The MASE denominator: in-sample MAE of the m-seasonal naive forecast."""
    y_train = np.asarray(y_train, dtype=np.float64)
    if len(y_train) <= m:
        raise TrainTooShort(f"need more than m={m} training points")
    return float(np.mean(np.abs(y_train[m:] - y_train[:-m])))


def smape(y_true, y_pred) -> float:
    """Symmetric MAPE in percent; terms with |y|+|yhat| = 0 contribute 0."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch("y_true and y_pred lengths differ")
    denom = np.abs(y_true) + np.abs(y_pred)
    terms = np.zeros_like(denom)
    nz = denom > 0
    terms[nz] = np.abs(y_pred[nz] - y_true[nz]) / denom[nz]
    return float(200.0 * np.mean(terms))


def mae(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch("y_true and y_pred lengths differ")
    return float(np.mean(np.abs(y_true - y_pred)))


def mape(y_true, y_pred):
    """Mean absolute percentage error over nonzero targets; None if all zero."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch("y_true and y_pred lengths differ")
    nz = y_true != 0
    if not nz.any():
        return None
    return float(100.0 * np.mean(np.abs((y_pred[nz] - y_true[nz]) / y_true[nz])))


def aggregate(dataset, split_view, forecasts: dict, metric: str = "mase", m: int = 1,
              segment: str = "test") -> MetricReport:
    """Per-series metric over a split segment plus the arithmetic mean.

    ``forecasts`` maps series id to an H-step point path. Every series must
    have a forecast. The MASE training history is everything before the
    segment; if it is too short for ``m``, the non-seasonal m=1 scaling is
    used for that series.
    """
    ranges = getattr(split_view, segment)
    per_series: dict = {}
    undefined = 0
    for i, s in enumerate(dataset.series):
        if s.id not in forecasts:
            raise MissingForecast(s.id)
        lo, hi = ranges[i]
        y_true = s.targets[lo:hi]
        y_pred = np.asarray(forecasts[s.id], dtype=np.float64)
        if metric == "mase":
            y_train = s.targets[:lo]
            m_eff = m if len(y_train) > m else 1
            value = mase(y_true, y_pred, y_train, m_eff)
        elif metric == "smape":
            value = smape(y_true, y_pred)
        elif metric == "mae":
            value = mae(y_true, y_pred)
        elif metric == "mape":
            value = mape(y_true, y_pred)
        else:
            raise ValueError(f"unknown metric '{metric}'")
        if value is None:
            undefined += 1
        else:
            per_series[s.id] = value
    if not per_series:
        raise AllUndefined(f"metric '{metric}' undefined for every series")
    agg = float(np.mean(list(per_series.values())))
    return MetricReport(per_series=per_series, aggregate=agg, undefined_count=undefined)


def incumbent_curve(history) -> list:
    """Running minimum of (wall_clock, loss) pairs, collapsing non-improvements."""
    if not history:
        raise EmptyHistory("no evaluations")
    curve = []
    best = np.inf
    for t, loss in history:
        if loss < best:
            best = loss
            curve.append((t, best))
    if not curve:
        # nothing finite improved; keep the first point so the curve is nonempty
        curve.append((history[0][0], history[0][1]))
    return curve


def incumbent_auc_raw(history, horizon_seconds: float) -> float:
    """Step-function integral of the running-minimum loss from t_first to horizon."""
    if not history:
        raise EmptyHistory("no evaluations")
    curve = incumbent_curve(history)
    t_first = curve[0][0]
    if horizon_seconds <= t_first:
        return 0.0
    area = 0.0
    for (t, loss), nxt in zip(curve, curve[1:] + [(horizon_seconds, None)]):
        t_end = min(nxt[0], horizon_seconds)
        if t_end > t:
            area += loss * (t_end - t)
    return float(area)


def incumbent_auc(history, horizon_seconds: float) -> float:
    """Raw AUC normalized by the elapsed span (horizon - t_first)."""
    if not history:
        raise EmptyHistory("no evaluations")
    t_first = history[0][0]
    span = horizon_seconds - t_first
    if span <= 0:
        raise EmptyHistory("horizon precedes the first evaluation")
    return incumbent_auc_raw(history, horizon_seconds) / span
