"""Multi-series forecasting datasets: loading, validation, tail splits, seasonality.

A dataset is a collection of univariate-target series sharing one forecasting
horizon H. Each series stores its full observed history, including the H
validation points and the H test points at the tail. Splits are index ranges
into that history, never copies, so datasets stay immutable and cheap to share
across evaluation workers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AllMissingSeries,
    DataError,
    EmptyDataset,
    MalformedLine,
    MalformedRow,
    MissingDirective,
    SeriesTooShort,
)

FREQUENCY_NAMES = ("yearly", "quarterly", "monthly", "weekly", "daily", "hourly")

# Candidate seasonal periods per sampling frequency, smallest first.
SEASONALITY_TABLE = {
    "yearly": [1],
    "quarterly": [4],
    "monthly": [12],
    "weekly": [52],
    "daily": [7, 365],
    "hourly": [24, 168],
}


@dataclass(frozen=True)
class Frequency:
    """Sampling frequency; ``other`` carries an explicit seasonal period."""

    name: str
    custom_period: Optional[int] = None

    def __post_init__(self):
        if self.name == "other":
            if not isinstance(self.custom_period, int) or self.custom_period < 1:
                raise ValueError("other frequency requires a positive integer period")
        elif self.name not in FREQUENCY_NAMES:
            raise ValueError(f"unknown frequency '{self.name}'")

    def __str__(self) -> str:
        if self.name == "other":
            return f"other({self.custom_period})"
        return self.name

    @classmethod
    def parse(cls, token: str) -> "Frequency":
        token = token.strip().lower()
        m = re.fullmatch(r"other\((\d+)\)", token)
        if m:
            return cls("other", int(m.group(1)))
        return cls(token)


@dataclass
class Series:
    """One univariate target series with optional covariates.

    ``targets`` holds the full history including the validation and test
    tails. Covariate matrices, when present, have one row per target value.
    """

    id: str
    targets: np.ndarray
    past_covariates: Optional[np.ndarray] = None
    future_covariates: Optional[np.ndarray] = None
    start_index: int = 0

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.targets.ndim != 1:
            raise DataError(f"series '{self.id}': targets must be 1-D")
        if np.isnan(self.targets).any():
            raise DataError(f"series '{self.id}': NaN targets after load")
        for label in ("past_covariates", "future_covariates"):
            cov = getattr(self, label)
            if cov is None:
                continue
            cov = np.asarray(cov, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != len(self.targets):
                raise DataError(
                    f"series '{self.id}': {label} must have one row per target value"
                )
            setattr(self, label, cov)

    def __len__(self) -> int:
        return len(self.targets)


@dataclass
class TimeSeriesDataset:
    series: list
    frequency: Frequency
    horizon: int
    name: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise DataError("horizon must be a positive integer")
        if len(self.series) < 1:
            raise EmptyDataset("dataset contains no series")

    def __len__(self) -> int:
        return len(self.series)

    def ids(self) -> list:
        return [s.id for s in self.series]


@dataclass(frozen=True)
class SplitView:
    """Per-series (start, stop) index ranges into ``Series.targets``.

    ``train[i]``, ``val[i]`` and ``test[i]`` partition series ``i`` into
    contiguous, ordered segments; the validation and test segments each span
    exactly one horizon.
    """

    train: tuple
    val: tuple
    test: tuple

    def __post_init__(self):
        for tr, va, te in zip(self.train, self.val, self.test):
            if not (tr[1] == va[0] and va[1] == te[0] and tr[0] == 0):
                raise DataError("split ranges must be contiguous and ordered")
            if va[1] - va[0] != te[1] - te[0]:
                raise DataError("validation and test ranges must have equal length")

    def train_end(self, i: int) -> int:
        return self.train[i][1]

    def __len__(self) -> int:
        return len(self.train)


def load_tsf_subset(path) -> TimeSeriesDataset:
    """Parse the tsf-subset text format.

    Lines starting with ``#`` are comments. Directives ``@frequency`` and
    ``@horizon`` must appear before ``@data``; payload lines look like
    ``id:v1,v2,...``. ``?`` marks a missing value, imputed by the last
    observed value (leading gaps take the first observed value).
    """
    frequency = None
    horizon = None
    in_data = False
    series: list = []

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data and line.startswith("@"):
                token = line.split(None, 1)
                directive = token[0][1:].lower()
                arg = token[1].strip() if len(token) > 1 else ""
                if directive == "frequency":
                    try:
                        frequency = Frequency.parse(arg)
                    except ValueError as exc:
                        raise MalformedLine(line_no, str(exc)) from exc
                elif directive == "horizon":
                    try:
                        horizon = int(arg)
                    except ValueError as exc:
                        raise MalformedLine(line_no, f"bad horizon '{arg}'") from exc
                elif directive == "missing":
                    pass  # token is always '?', accepted for compatibility
                elif directive == "data":
                    if frequency is None:
                        raise MissingDirective("frequency")
                    if horizon is None:
                        raise MissingDirective("horizon")
                    in_data = True
                else:
                    raise MalformedLine(line_no, f"unknown directive '@{directive}'")
                continue
            if not in_data:
                raise MalformedLine(line_no, "payload before @data")
            if ":" not in line:
                raise MalformedLine(line_no, "expected 'id:v1,v2,...'")
            sid, _, payload = line.partition(":")
            sid = sid.strip()
            if not sid:
                raise MalformedLine(line_no, "empty series id")
            values = _parse_values(payload, sid, line_no)
            series.append(Series(id=sid, targets=values))

    if not in_data:
        if frequency is None:
            raise MissingDirective("frequency")
        if horizon is None:
            raise MissingDirective("horizon")
        raise MissingDirective("data")
    if not series:
        raise EmptyDataset(f"{path}: no data lines")
    return TimeSeriesDataset(series=series, frequency=frequency, horizon=horizon, name=str(path))


def _parse_values(payload: str, sid: str, line_no: int) -> np.ndarray:
    tokens = [t.strip() for t in payload.split(",")]
    if tokens == [""]:
        raise MalformedLine(line_no, "empty value list")
    values = np.empty(len(tokens), dtype=np.float64)
    missing = np.zeros(len(tokens), dtype=bool)
    for i, tok in enumerate(tokens):
        if tok == "?":
            missing[i] = True
            continue
        try:
            values[i] = float(tok)
        except ValueError as exc:
            raise MalformedLine(line_no, f"bad value '{tok}'") from exc
    if missing.all():
        raise AllMissingSeries(sid)
    if missing.any():
        values = _impute_locf(values, missing)
    return values


def _impute_locf(values: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Last observation carried forward; leading gaps take the first observed value."""
    out = values.copy()
    first = int(np.argmax(~missing))
    out[:first] = values[first]
    last = values[first]
    for i in range(first, len(out)):
        if missing[i]:
            out[i] = last
        else:
            last = out[i]
    return out


def save_tsf_subset(dataset: TimeSeriesDataset, path) -> None:
    """Write ``dataset`` in the tsf-subset format (floats via repr, round-trip exact)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"@frequency {dataset.frequency}\n")
        fh.write(f"@horizon {dataset.horizon}\n")
        fh.write("@data\n")
        for s in dataset.series:
            fh.write(s.id + ":" + ",".join(repr(float(v)) for v in s.targets) + "\n")


def load_csv(path, horizon: int, frequency: Frequency) -> TimeSeriesDataset:
    """Load long-format ``series_id,value`` rows, time-ordered within each series.

    Series may interleave; row order within a series is preserved. An optional
    header row ``series_id,value`` is skipped.
    """
    groups: dict = {}
    order: list = []
    with open(path, "r", encoding="utf-8") as fh:
        for row_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise MalformedRow(row_no, "expected 'series_id,value'")
            sid, val = parts[0].strip(), parts[1].strip()
            if row_no == 1 and (sid, val) == ("series_id", "value"):
                continue
            try:
                v = float(val)
            except ValueError as exc:
                raise MalformedRow(row_no, f"bad value '{val}'") from exc
            if sid not in groups:
                groups[sid] = []
                order.append(sid)
            groups[sid].append(v)
    if not groups:
        raise EmptyDataset(f"{path}: no rows")
    series = [Series(id=sid, targets=np.array(groups[sid])) for sid in order]
    return TimeSeriesDataset(series=series, frequency=frequency, horizon=horizon, name=str(path))


def split(dataset: TimeSeriesDataset) -> SplitView:
    """Reserve the last 2H points of every series: H for validation, H for test.

    Raises :class:`SeriesTooShort` listing every offender when any series has
    fewer than 2H+1 points (the training range must be nonempty).
    """
    H = dataset.horizon
    offenders = [s.id for s in dataset.series if len(s) < 2 * H + 1]
    if offenders:
        raise SeriesTooShort(offenders)
    train, val, test = [], [], []
    for s in dataset.series:
        L = len(s)
        train.append((0, L - 2 * H))
        val.append((L - 2 * H, L - H))
        test.append((L - H, L))
    return SplitView(train=tuple(train), val=tuple(val), test=tuple(test))


def seasonality_for_frequency(frequency: Frequency) -> list:
    """Candidate seasonal periods for a frequency, smallest first."""
    if frequency.name == "other":
        return [frequency.custom_period]
    return list(SEASONALITY_TABLE[frequency.name])


def seasonal_period(frequency: Frequency) -> int:
    """The period used for seasonal-naive scaling: first table entry."""
    return seasonality_for_frequency(frequency)[0]


def base_window_size(dataset: TimeSeriesDataset) -> int:
    """Smallest candidate period >= horizon; the largest period if none qualifies."""
    periods = seasonality_for_frequency(dataset.frequency)
    for s in periods:
        if s >= dataset.horizon:
            return s
    return periods[-1]
