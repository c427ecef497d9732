"""End-to-end orchestration: load, fit margins, train, evaluate, reconstruct."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .egp import ThresholdedMarginal, fit_marginal
from .errors import InsufficientDataError, ModelMismatchError
from .metrics import empty_report, error_report, qq_data
from .mgpred import MgpModel, fit_censored, mgpred_predict, row_seed
from .preprocess import (ObservationFrame, align, format_timestamp, median_preselect, origin_shift,
                         read_station_csv, reshift, split_by_date)
from .roxane import RoxaneModel, roxane_bootstrap_bands, roxane_predict_batch, roxane_train
from .transforms import MarginalSet, extract_extremes, extreme_mask

logger = logging.getLogger(__name__)


@dataclass
class Data:
    train: ObservationFrame
    test: ObservationFrame
    covariate_only: ObservationFrame | None


def load_data(cfg: RunConfig) -> Data:
    series = {s.id: read_station_csv(s.path, s.id, s.role == "target") for s in cfg.stations}
    ordered = [series[k] for k in cfg.station_order]
    frame = align(ordered)
    if cfg.median_preselect:
        frame = median_preselect(frame)
    frame = origin_shift(frame)
    if cfg.split_date is None:
        train, test = frame, frame.take(np.zeros(frame.n, dtype=bool))
    else:
        train, test = split_by_date(frame, cfg.split_date, cfg.train_side, cfg.shift_scope)
    cov_only = None
    covs = [series[k] for k in cfg.covariate_ids]
    target_stamps = set(series[cfg.target_id].timestamps)
    if len(covs) == 1:
        s = covs[0]
        stamps, X = s.timestamps, s.values[:, None]
    else:
        joined = align(covs)
        stamps, X = joined.timestamps, joined.covariates
    keep = np.array([ts not in target_stamps
                     and (cfg.reconstruct_start is None or ts >= cfg.reconstruct_start)
                     and (cfg.reconstruct_end is None or ts <= cfg.reconstruct_end) for ts in stamps],
                    dtype=bool)
    if keep.any():
        idx = np.nonzero(keep)[0]
        raw = ObservationFrame(tuple(stamps[i] for i in idx), X[idx], None, tuple(cfg.covariate_ids))
        cov_only = reshift(raw, train.shift[: len(covs)])
    return Data(train, test, cov_only)


def fit_marginals(train: ObservationFrame, n_restarts=5, seed=0) -> MarginalSet:
    margins = []
    for j, station in enumerate(train.station_ids):
        try:
            margins.append(fit_marginal(train.values[:, j], station=station, n_restarts=n_restarts,
                                        seed=[seed, j]))
        except Exception as exc:
            exc.args = (f"station {station}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
    return MarginalSet(tuple(margins))


def check_stations(ms: MarginalSet, frame: ObservationFrame):
    if tuple(ms.stations) != tuple(frame.station_ids[: len(ms.stations)]) or frame.d != ms.d:
        raise ModelMismatchError(f"model stations {list(ms.stations)} do not match data "
                                 f"{list(frame.station_ids)}")


def train_models(cfg: RunConfig, train: ObservationFrame, ms: MarginalSet) -> tuple[dict, dict]:
    """Fit the configured regressors and the MGP panel on the training extremes."""
    ext = extract_extremes(train, ms)
    models, log = {}, {"n_train": train.n, "n_extreme": ext.n}
    for name in cfg.regressors:
        kw = dict(cfg.forest, seed=cfg.seed) if name == "forest" else {}
        model = roxane_train(ext, ms, name, **kw)
        models[model.name] = model
    if cfg.families:
        mg = fit_censored(ext, ms, cfg.families, n_restarts=cfg.mgp_restarts, seed=cfg.seed,
                          normalize=cfg.normalize_likelihood)
        models["mgpred"] = mg
        log.update(n_uncensored=mg.n_uncensored, family=mg.family.kind, k=mg.family.n_params,
                   candidates=mg.candidates)
    return models, log


def model_from_json(d: dict):
    if d.get("method") == "mgpred":
        return MgpModel.from_json(d)
    if d.get("method") == "roxane":
        return RoxaneModel.from_json(d)
    raise ModelMismatchError("unrecognized model file")


@dataclass
class Predictions:
    timestamps: tuple
    point: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mc: list | None = None


def predict(model, frame: ObservationFrame, seed=0, L=100, n_boot=200, keep_mc=False) -> Predictions:
    """Predictions (shifted scale) for every row of ``frame``; rows must be extreme."""
    X = frame.covariates
    if isinstance(model, MgpModel):
        recs = [mgpred_predict(model, x, L=L, seed=row_seed(seed, ts), timestamp=ts)
                for x, ts in zip(X, _epochs(frame.timestamps))]
        point = np.array([r.point for r in recs])
        lo = np.array([r.interval_95[0] for r in recs])
        hi = np.array([r.interval_95[1] for r in recs])
        mc = [r.mc_sample for r in recs] if keep_mc else None
        return Predictions(frame.timestamps, point, lo, hi, mc)
    if frame.n == 0:
        e = np.empty(0)
        return Predictions((), e, e, e)
    point = roxane_predict_batch(model, X)
    lo, hi = roxane_bootstrap_bands(model, X, n_boot=n_boot, seed=seed)
    return Predictions(frame.timestamps, point, lo, hi)


def _epochs(stamps):
    return [int(ts.timestamp()) for ts in stamps]


def evaluate(cfg: RunConfig, models: dict, test: ObservationFrame):
    """Error reports (shifted scale is fine: errors are shift invariant)."""
    reports, preds, qq = {}, {}, {}
    ms = next(iter(models.values())).marginals
    check_stations(ms, test)
    ext = extract_extremes(test, ms)
    for name, model in sorted(models.items()):
        if ext.n == 0:
            reports[name] = empty_report(name, cfg.se_form)
            continue
        p = predict(model, ext, seed=cfg.seed, L=cfg.L, n_boot=cfg.n_boot, keep_mc=cfg.dump_mc)
        preds[name] = p
        intervals = np.column_stack([p.lo, p.hi]) if name == "mgpred" else None
        reports[name] = error_report(name, ext.target, p.point, intervals, cfg.se_form)
        if ext.n >= 10:
            qq[name] = qq_data(ext.target, p.point, n_boot=cfg.n_boot, seed=cfg.seed)
    return ext, reports, preds, qq


def reconstruct(cfg: RunConfig, models: dict, frame: ObservationFrame | None):
    """Predictions for the extreme rows of a covariate-only frame."""
    if frame is None or frame.n == 0:
        logger.warning("no covariate-only rows to reconstruct")
        return None, {}, 0
    ms = next(iter(models.values())).marginals
    if tuple(ms.covariates[i].station for i in range(ms.d)) != tuple(frame.station_ids[: ms.d]):
        raise ModelMismatchError("covariate stations do not match the model")
    mask = extreme_mask(frame.covariates, ms.thresholds[: ms.d])
    n_skipped = int((~mask).sum())
    if n_skipped:
        logger.info("reconstruct: %d non-extreme rows omitted", n_skipped)
    ext = frame.take(mask)
    if ext.n == 0:
        logger.warning("reconstruct: no extreme covariate rows")
    return ext, {name: predict(m, ext, seed=cfg.seed, L=cfg.L, n_boot=cfg.n_boot)
                 for name, m in sorted(models.items())}, n_skipped


# -- writers -------------------------------------------------------------------------

def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(c if isinstance(c, str) else _fmt(c) for c in row) + "\n")


def prediction_rows(p: Predictions, shift_y: float, observed=None):
    """Rows in original units: timestamp, [observed,] point, lo95, hi95."""
    for i, ts in enumerate(p.timestamps):
        row = [format_timestamp(ts)]
        if observed is not None:
            row.append(observed[i] + shift_y)
        row += [p.point[i] + shift_y, p.lo[i] + shift_y, p.hi[i] + shift_y]
        yield row


def yearly_max_rows(stamps, values_by_name: dict):
    years = np.array([ts.year for ts in stamps])
    names = sorted(values_by_name)
    for y in np.unique(years):
        m = years == y
        yield [str(int(y))] + [float(np.max(values_by_name[k][m])) for k in names]


def require_rows(frame: ObservationFrame, k: int, what: str):
    if frame.n < k:
        raise InsufficientDataError(f"{what}: {frame.n} rows, need >= {k}")


def marginal_table(ms: MarginalSet) -> dict:
    """One column per station, rows sigma, xi, kappa, t."""
    return {m.station: {"sigma": m.params.sigma, "xi": m.params.xi, "kappa": m.params.kappa,
                        "t": m.threshold} for m in ms.margins}


def load_marginals(directory, order) -> MarginalSet | None:
    directory = Path(directory)
    files = [directory / f"{s}.json" for s in order]
    if not all(f.is_file() for f in files):
        return None
    out = []
    for f in files:
        with open(f, encoding="utf-8") as fh:
            out.append(ThresholdedMarginal.from_json(json.load(fh)))
    return MarginalSet(tuple(out))
