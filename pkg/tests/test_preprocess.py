from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tailcast.errors import DataIOError, InsufficientDataError
from tailcast.preprocess import (ObservationFrame, StationSeries, align, median_preselect, origin_shift,
                                 read_station_csv, split_by_date, write_frame, write_station_csv)

T0 = datetime(2000, 1, 1, tzinfo=timezone.utc)


def stamps(idx):
    return tuple(T0 + timedelta(hours=12 * i) for i in idx)


def series(name, idx, values, target=False):
    return StationSeries(name, stamps(idx), np.asarray(values, dtype=float), is_target=target)


def frame(cov, target=None):
    cov = np.asarray(cov, dtype=float)
    return ObservationFrame(stamps(range(len(cov))), cov, target, tuple(f"s{j}" for j in range(cov.shape[1])))


def test_align_intersection():
    a = series("a", [0, 1, 2, 3, 4], [1, 2, 3, 4, 5])
    b = series("b", [1, 2, 4, 6, 7], [9, 8, 7, 6, 5], target=True)
    f = align([a, b])
    assert f.n == 3
    assert f.timestamps == stamps([1, 2, 4])
    np.testing.assert_array_equal(f.covariates[:, 0], [2, 3, 5])
    np.testing.assert_array_equal(f.target, [9, 8, 7])
    assert f.station_ids == ("a", "b")


def test_align_identical_series():
    a = series("a", range(4), [1, 2, 3, 4])
    f = align([a, series("a2", range(4), [1, 2, 3, 4])])
    assert f.n == 4
    np.testing.assert_array_equal(f.covariates[:, 0], f.covariates[:, 1])


def test_align_target_is_last_column():
    t = series("t", range(3), [7, 8, 9], target=True)
    f = align([t, series("a", range(3), [1, 2, 3])])
    assert f.station_ids == ("a", "t")
    np.testing.assert_array_equal(f.values[:, -1], [7, 8, 9])


def test_duplicate_timestamp_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        StationSeries("a", stamps([0, 0, 1]), np.ones(3))


def test_align_no_common_records():
    with pytest.raises(InsufficientDataError, match="no common records"):
        align([series("a", [0, 1], [1, 2]), series("b", [5, 6], [1, 2])])


def test_median_preselect_example():
    f = median_preselect(frame([(1, 1), (2, 0), (0, 2), (0, 0)]))
    np.testing.assert_array_equal(f.medians, [0.5, 0.5])
    np.testing.assert_array_equal(f.covariates, [(1, 1), (2, 0), (0, 2)])


def test_median_preselect_ties_and_single_row():
    assert median_preselect(frame([(3, 3)] * 5)).n == 5
    assert median_preselect(frame([(1, 2)])).n == 1


def test_median_preselect_second_stage_uses_own_medians():
    rng = np.random.default_rng(0)
    f1 = median_preselect(frame(rng.normal(size=(400, 2))))
    f2 = median_preselect(f1)
    np.testing.assert_allclose(f2.medians, np.median(f1.covariates, axis=0))
    assert f2.n <= f1.n


def test_origin_shift_examples():
    f = origin_shift(frame([[3.0], [5.0], [4.0]]))
    np.testing.assert_array_equal(f.covariates[:, 0], [0, 2, 1])
    np.testing.assert_array_equal(f.shift, [3])
    g = origin_shift(frame([(1, 4), (2, 3)]))
    np.testing.assert_array_equal(g.covariates, [(0, 1), (1, 0)])
    np.testing.assert_array_equal(g.shift, [1, 3])
    h = origin_shift(frame([[0.0], [2.0]]))
    np.testing.assert_array_equal(h.shift, [0])


@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 3)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_origin_shift_min_zero_and_roundtrip(values):
    f = frame(values)
    g = origin_shift(f)
    assert np.all(g.values.min(axis=0) == 0)
    np.testing.assert_allclose(g.original(), values, rtol=0, atol=1e-9)


def test_split_by_date_partition():
    f = frame(np.arange(10.0)[:, None], target=np.arange(10.0))
    train, test = split_by_date(f, f.timestamps[5], train_side="after", shift_scope="pooled")
    assert (train.n, test.n) == (4, 6)
    assert set(train.timestamps).isdisjoint(test.timestamps)
    assert set(train.timestamps) | set(test.timestamps) == set(f.timestamps)


def test_split_cut_before_all_rows():
    f = frame(np.arange(5.0)[:, None])
    train, test = split_by_date(f, T0 - timedelta(days=1), train_side="after")
    assert (train.n, test.n) == (5, 0)


def test_split_degenerate():
    f = frame(np.arange(5.0)[:, None])
    with pytest.raises(InsufficientDataError, match="degenerate split"):
        split_by_date(f, T0 - timedelta(days=1), train_side="before")


def test_split_train_scope_shift_from_training_rows():
    f = frame(np.array([[5.0], [1.0], [7.0], [3.0]]), target=np.array([2.0, 0.0, 4.0, 6.0]))
    train, test = split_by_date(f, f.timestamps[1], train_side="after", shift_scope="train")
    np.testing.assert_array_equal(train.shift, [3.0, 4.0])
    np.testing.assert_array_equal(test.shift, train.shift)
    np.testing.assert_array_equal(test.original(), f.values[:2])


def test_csv_roundtrip_and_bad_rows(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("timestamp,value\n2000-01-01T12:00:00Z,1.5\n2000-01-01T00:00:00Z,0.5\n"
                 "2000-01-02T00:00:00Z,\n2000-01-03T00:00:00Z,nan\n")
    s = read_station_csv(p)
    assert s.station_id == "a" and s.n_dropped == 2
    np.testing.assert_array_equal(s.values, [0.5, 1.5])
    q = tmp_path / "b.csv"
    write_station_csv(q, s)
    assert read_station_csv(q, "a").values.tolist() == [0.5, 1.5]


def test_read_errors(tmp_path):
    with pytest.raises(DataIOError):
        read_station_csv(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("time,val\n")
    with pytest.raises(DataIOError, match="header"):
        read_station_csv(bad)


def test_write_frame_sidecar(tmp_path):
    import json
    f = origin_shift(frame([(1.0, 4.0), (2.0, 3.0)], target=np.array([1.0, 2.0])))
    write_frame(tmp_path / "f.csv", f)
    side = json.loads((tmp_path / "f.json").read_text())
    assert side["shift"] == [1.0, 3.0, 1.0] and side["n_rows"] == 2
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "timestamp,s0,s1,target"
