"""Prediction error and interval-coverage metrics.

``form="printed"`` evaluates the reference standard-error expressions
literally: the inner term subtracts the *square* of the mean, so the
radicand can be negative (NaN is returned then).
``form="corrected"`` uses the textbook standard errors of the mean squared
and mean absolute error instead.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

SE_FORMS = ("printed", "corrected")


def _errors(y, yhat, min_n=2):
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} observations vs {yhat.size} predictions")
    if y.size < min_n:
        raise ValueError(f"need at least {min_n} pairs, got {y.size}")
    return y - yhat


def _root(x, power):
    return x ** power if x >= 0 else math.nan


def rmse_sse(y, yhat, form: str = "printed") -> tuple[float, float]:
    e2 = _errors(y, yhat) ** 2
    n = e2.size
    mse = float(e2.mean())
    if form == "printed":
        inner = float(np.mean(e2 - mse ** 2))
    elif form == "corrected":
        inner = float(np.mean((e2 - mse) ** 2))
    else:
        raise ValueError(f"form must be one of {SE_FORMS}")
    return math.sqrt(mse), _root(inner, 0.25) / math.sqrt(n)


def mae_ase(y, yhat, form: str = "printed") -> tuple[float, float]:
    a = np.abs(_errors(y, yhat))
    n = a.size
    mae = float(a.mean())
    if form == "printed":
        inner = float(np.mean(a - mae ** 2))
    elif form == "corrected":
        inner = float(np.mean((a - mae) ** 2))
    else:
        raise ValueError(f"form must be one of {SE_FORMS}")
    return mae, _root(inner, 0.5) / math.sqrt(n)


def extreme_subset(y_test, predictions):
    """Pairs whose observed value is at least the median observed value
    (midpoint of the two central order statistics for even n).

    ``predictions`` may be 1-D (points) or 2-D (one row per observation).
    Returns (y, predictions, mask).
    """
    y = np.asarray(y_test, dtype=float).ravel()
    pred = np.asarray(predictions)
    if y.size == 0:
        raise ValueError("empty test set")
    if len(pred) != y.size:
        raise ValueError("length mismatch between targets and predictions")
    mask = y >= np.median(y)
    return y[mask], pred[mask], mask


def coverage_95(y, intervals) -> float:
    """Share of observations inside their [lo, hi] interval (inclusive)."""
    y = np.asarray(y, dtype=float).ravel()
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if iv.shape[0] != y.size:
        raise ValueError("length mismatch between targets and intervals")
    if np.any(iv[:, 0] > iv[:, 1]):
        raise ValueError("interval with lo > hi")
    if y.size == 0:
        return math.nan
    return float(np.mean((iv[:, 0] <= y) & (y <= iv[:, 1])))


@dataclass
class QQData:
    observed: np.ndarray
    predicted: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def rows(self):
        return zip(self.observed, self.predicted, self.lo, self.hi)


def qq_data(y, yhat, n_boot: int = 200, seed=0, level=0.95) -> QQData:
    """Sorted observed vs sorted predicted values with pairs-bootstrap bands
    on the predicted quantiles."""
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.size != yhat.size:
        raise ValueError("length mismatch")
    if y.size < 10:
        raise ValueError(f"QQ data needs n >= 10, got {y.size}")
    n = y.size
    rng = np.random.default_rng(seed)
    boot = np.empty((n_boot, n))
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        boot[b] = np.sort(yhat[idx])
    a = (1 - level) / 2
    return QQData(np.sort(y), np.sort(yhat), np.quantile(boot, a, axis=0), np.quantile(boot, 1 - a, axis=0))


@dataclass
class ErrorReport:
    method: str
    n: int
    rmse: float
    sse: float
    mae: float
    ase: float
    n_ext: int
    rmse_ext: float | None
    sse_ext: float | None
    mae_ext: float | None
    ase_ext: float | None
    coverage_95: float | None = None
    se_form: str = "printed"

    def to_json(self, paper_format: bool = False) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and math.isnan(v):
                d[k] = None
        if paper_format:
            for k in ("rmse", "sse", "mae", "ase", "rmse_ext", "sse_ext", "mae_ext", "ase_ext"):
                if d[k] is not None:
                    d[k] = round(100 * d[k], 1)
            d["units"] = "meters x 100"
        return d


def error_report(method: str, y, yhat, intervals=None, form: str = "printed") -> ErrorReport:
    """All error metrics on the full test set and on its upper half."""
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    rmse, sse = rmse_sse(y, yhat, form)
    mae, ase = mae_ase(y, yhat, form)
    y_ext, p_ext, _ = extreme_subset(y, yhat)
    if y_ext.size >= 2:
        rmse_e, sse_e = rmse_sse(y_ext, p_ext, form)
        mae_e, ase_e = mae_ase(y_ext, p_ext, form)
    else:
        rmse_e = sse_e = mae_e = ase_e = None
    cov = None if intervals is None else coverage_95(y, intervals)
    return ErrorReport(method, int(y.size), rmse, sse, mae, ase, int(y_ext.size), rmse_e, sse_e,
                       mae_e, ase_e, cov, form)


def empty_report(method: str, form: str = "printed") -> ErrorReport:
    nan = math.nan
    return ErrorReport(method, 0, nan, nan, nan, nan, 0, None, None, None, None, None, form)
