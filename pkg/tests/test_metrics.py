import numpy as np
import pytest

from tsforge.data import Frequency, Series, TimeSeriesDataset, split
from tsforge.errors import AllUndefined, EmptyHistory, LengthMismatch, MissingForecast, TrainTooShort
from tsforge.metrics import (
    aggregate,
    incumbent_auc,
    incumbent_auc_raw,
    mae,
    mape,
    mase,
    smape,
)


# -- direct-summation oracles -------------------------------------------------

def mase_oracle(y_true, y_pred, y_train, m):
    num = sum(abs(a - b) for a, b in zip(y_true, y_pred)) / len(y_true)
    den = sum(abs(y_train[t] - y_train[t - m]) for t in range(m, len(y_train)))
    den /= len(y_train) - m
    if den < 1e-10:
        return None
    return num / den


def smape_oracle(y_true, y_pred):
    total = 0.0
    for a, b in zip(y_true, y_pred):
        d = abs(a) + abs(b)
        total += abs(b - a) / d if d > 0 else 0.0
    return 200.0 * total / len(y_true)


def mae_oracle(y_true, y_pred):
    return sum(abs(a - b) for a, b in zip(y_true, y_pred)) / len(y_true)


def mape_oracle(y_true, y_pred):
    terms = [abs((b - a) / a) for a, b in zip(y_true, y_pred) if a != 0]
    return 100.0 * sum(terms) / len(terms) if terms else None


def test_mase_worked_example():
    assert mase([4, 6], [5, 5], [1, 2, 3, 4], m=1) == pytest.approx(1.0)


def test_mase_exact_prediction_zero():
    assert mase([3, 1], [3, 1], [1, 5, 2], m=1) == 0.0


def test_mase_constant_train_undefined():
    assert mase([1, 2], [1, 2], [5, 5, 5, 5], m=1) is None


def test_mase_train_too_short():
    with pytest.raises(TrainTooShort):
        mase([1], [1], [1, 2], m=2)


def test_smape_examples():
    assert smape([1], [1]) == 0.0
    assert smape([1], [3]) == pytest.approx(100.0)
    assert smape([0], [0]) == 0.0


def test_mae_examples():
    assert mae([1, 2], [2, 2]) == pytest.approx(0.5)
    assert mae([3, 4], [3, 4]) == 0.0


def test_mape_all_zero_undefined():
    assert mape([0, 0], [1, 2]) is None


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        smape([1, 2], [1])


def test_metrics_match_oracles_on_random_instances():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        H = rng.integers(1, 12)
        n_train = rng.integers(4, 40)
        m = int(rng.integers(1, max(2, n_train - 1)))
        y_true = rng.normal(size=H) * 10
        y_pred = rng.normal(size=H) * 10
        y_train = rng.normal(size=n_train) * 10
        got = mase(y_true, y_pred, y_train, m)
        want = mase_oracle(y_true, y_pred, y_train, m)
        if want is None:
            assert got is None
        else:
            assert got == pytest.approx(want, abs=1e-12, rel=1e-12)
        assert smape(y_true, y_pred) == pytest.approx(smape_oracle(y_true, y_pred), abs=1e-12, rel=1e-12)
        assert mae(y_true, y_pred) == pytest.approx(mae_oracle(y_true, y_pred), abs=1e-12, rel=1e-12)
        got_mape = mape(y_true, y_pred)
        want_mape = mape_oracle(y_true, y_pred)
        if want_mape is None:
            assert got_mape is None
        else:
            assert got_mape == pytest.approx(want_mape, abs=1e-12, rel=1e-12)


def test_mase_scale_equivariance():
    rng = np.random.default_rng(7)
    for _ in range(100):
        y_true = rng.normal(size=6)
        y_pred = rng.normal(size=6)
        y_train = rng.normal(size=24)
        c = float(10 ** rng.uniform(-6, 6))
        a = mase(y_true, y_pred, y_train, m=2)
        b = mase(c * y_true, c * y_pred, c * y_train, m=2)
        assert b == pytest.approx(a, rel=1e-12)


def test_metrics_nonnegative():
    rng = np.random.default_rng(3)
    for _ in range(50):
        y_true, y_pred = rng.normal(size=5), rng.normal(size=5)
        assert smape(y_true, y_pred) >= 0
        assert mae(y_true, y_pred) >= 0


# -- aggregation ---------------------------------------------------------------

def two_series_ds():
    a = Series(id="a", targets=np.array([1, 2, 3, 4, 5, 6, 7, 8, 9, 10.0]))
    b = Series(id="b", targets=np.array([5, 5, 5, 5, 5, 5, 5, 5, 5, 5.0]))
    return TimeSeriesDataset(series=[a, b], frequency=Frequency("daily"), horizon=2)


def test_aggregate_mean_and_undefined_count():
    ds = two_series_ds()
    sv = split(ds)
    fc = {"a": [9.0, 10.0], "b": [5.0, 5.0]}
    rep = aggregate(ds, sv, fc, metric="mase", m=1, segment="test")
    assert rep.undefined_count == 1  # constant series b
    assert rep.aggregate == rep.per_series["a"]


def test_aggregate_missing_forecast():
    ds = two_series_ds()
    sv = split(ds)
    with pytest.raises(MissingForecast):
        aggregate(ds, sv, {"a": [1.0, 1.0]}, metric="mase", m=1)


def test_aggregate_all_undefined():
    a = Series(id="a", targets=np.full(10, 2.0))
    ds = TimeSeriesDataset(series=[a], frequency=Frequency("daily"), horizon=2)
    sv = split(ds)
    with pytest.raises(AllUndefined):
        aggregate(ds, sv, {"a": [2.0, 2.0]}, metric="mase", m=1)


def test_aggregate_simple_mean():
    a = Series(id="a", targets=np.arange(10.0))
    b = Series(id="b", targets=np.arange(10.0) * 2)
    ds = TimeSeriesDataset(series=[a, b], frequency=Frequency("daily"), horizon=2)
    sv = split(ds)
    fc = {"a": a.targets[8:], "b": b.targets[8:] + 2.0}
    rep = aggregate(ds, sv, fc, metric="mae", m=1, segment="test")
    assert rep.aggregate == pytest.approx((0.0 + 2.0) / 2)


# -- incumbent AUC --------------------------------------------------------------

def test_auc_single_point():
    assert incumbent_auc([(10.0, 2.0)], 20.0) == pytest.approx(2.0)


def test_auc_step_integral():
    assert incumbent_auc([(10.0, 2.0), (15.0, 1.0)], 20.0) == pytest.approx(1.5)


def test_auc_running_minimum_ignores_worse_points():
    assert incumbent_auc([(10.0, 2.0), (15.0, 3.0)], 20.0) == pytest.approx(2.0)


def test_auc_raw_unnormalized():
    assert incumbent_auc_raw([(10.0, 2.0), (15.0, 1.0)], 20.0) == pytest.approx(15.0)


def test_auc_empty_history():
    with pytest.raises(EmptyHistory):
        incumbent_auc([], 10.0)


def test_auc_nonincreasing_under_earlier_or_better_point():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = rng.integers(2, 8)
        ts = np.sort(rng.uniform(0, 50, size=n))
        ls = rng.uniform(0.1, 5.0, size=n)
        hist = list(zip(ts, ls))
        base = incumbent_auc_raw(hist, 60.0)
        # add a strictly better point at the end
        better = sorted(hist + [(55.0, min(ls) * 0.5)])
        assert incumbent_auc_raw(better, 60.0) <= base + 1e-12
        # add an earlier point no worse than the first
        earlier = sorted([(ts[0] / 2, ls[0])] + hist)
        assert incumbent_auc_raw(earlier, 60.0) <= base + ls[0] * (ts[0] - ts[0] / 2) + 1e-12
