"""Station series ingestion, alignment, median pre-selection, origin shift
and date splitting."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DataIOError, InsufficientDataError

logger = logging.getLogger(__name__)


def parse_timestamp(text: str) -> datetime:
    ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class StationSeries:
    station_id: str
    timestamps: tuple[datetime, ...]
    values: np.ndarray
    is_target: bool = False
    n_dropped: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if len(values) != len(self.timestamps):
            raise ValueError("timestamps and values differ in length")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.station_id}: non-finite values")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if b == a:
                raise ValueError(f"{self.station_id}: duplicate timestamp {format_timestamp(a)}")
            if b < a:
                raise ValueError(f"{self.station_id}: timestamps not increasing at {format_timestamp(b)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def read_station_csv(path, station_id: str | None = None, is_target: bool = False) -> StationSeries:
    """Read a ``timestamp,value`` CSV. Rows with absent or non-finite values
    are dropped and counted; rows are sorted chronologically."""
    path = Path(path)
    station_id = station_id or path.stem
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"timestamp", "value"} <= set(reader.fieldnames):
                raise DataIOError(f"{path}: expected header 'timestamp,value'")
            pairs, dropped = [], 0
            for row in reader:
                raw = (row.get("value") or "").strip()
                try:
                    value = float(raw)
                except ValueError:
                    dropped += 1
                    continue
                if not math.isfinite(value):
                    dropped += 1
                    continue
                pairs.append((parse_timestamp(row["timestamp"]), value))
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    pairs.sort(key=lambda p: p[0])
    if dropped:
        logger.info("%s: dropped %d rows with missing/non-finite values", station_id, dropped)
    try:
        return StationSeries(station_id, tuple(p[0] for p in pairs), np.array([p[1] for p in pairs]),
                             is_target=is_target, n_dropped=dropped)
    except ValueError as exc:
        raise DataIOError(f"{path}: {exc}") from exc


def write_station_csv(path, series: StationSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("timestamp,value\n")
        for ts, v in zip(series.timestamps, series.values):
            fh.write(f"{format_timestamp(ts)},{v:.6f}\n")


@dataclass(frozen=True)
class ObservationFrame:
    """Aligned multivariate records; columns are covariates then the optional
    target. Original-scale values are ``value + shift``."""

    timestamps: tuple[datetime, ...]
    covariates: np.ndarray
    target: np.ndarray | None
    station_ids: tuple[str, ...]
    shift: np.ndarray = None
    medians: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        if cov.shape[0] != len(self.timestamps):
            cov = cov.reshape(len(self.timestamps), -1)
        object.__setattr__(self, "covariates", cov)
        if self.target is not None:
            object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        n_cols = cov.shape[1] + (self.target is not None)
        if self.shift is None:
            object.__setattr__(self, "shift", np.zeros(n_cols))
        else:
            object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float))
        if cov.shape[1] < 1:
            raise ValueError("frame needs at least one covariate")

    @property
    def n(self) -> int:
        return len(self.timestamps)

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    @property
    def has_target(self) -> bool:
        return self.target is not None

    @property
    def values(self) -> np.ndarray:
        """n x (d [+1]) matrix of all columns on the shifted scale."""
        if self.target is None:
            return self.covariates
        return np.column_stack([self.covariates, self.target])

    def original(self) -> np.ndarray:
        return self.values + self.shift[: self.values.shape[1]]

    def take(self, mask_or_index) -> ObservationFrame:
        idx = np.arange(self.n)[mask_or_index]
        return replace(
            self,
            timestamps=tuple(self.timestamps[i] for i in idx),
            covariates=self.covariates[idx].reshape(len(idx), self.d),
            target=None if self.target is None else self.target[idx],
        )

    def with_values(self, values: np.ndarray, shift: np.ndarray) -> ObservationFrame:
        return replace(
            self,
            covariates=values[:, : self.d],
            target=values[:, self.d] if self.target is not None else None,
            shift=shift,
        )

    def sidecar(self) -> dict:
        return {
            "station_ids": list(self.station_ids),
            "shift": [float(v) for v in self.shift],
            "medians": None if self.medians is None else [float(v) for v in self.medians],
            "n_rows": self.n,
        }


def align(series: list[StationSeries]) -> ObservationFrame:
    """Exact-timestamp inner join. At most one series may be flagged as target;
    it becomes the last column."""
    if len(series) < 2:
        raise ValueError("align needs at least two series")
    targets = [s for s in series if s.is_target]
    if len(targets) > 1:
        raise ValueError("more than one target series")
    covs = [s for s in series if not s.is_target]
    if not covs:
        raise ValueError("no covariate series")
    for s in series:
        seen = set()
        for ts in s.timestamps:
            if ts in seen:
                raise ValueError(f"{s.station_id}: duplicate timestamp {format_timestamp(ts)}")
            seen.add(ts)
    common = set(series[0].timestamps)
    for s in series[1:]:
        common &= set(s.timestamps)
    if not common:
        raise InsufficientDataError("no common records")
    stamps = tuple(sorted(common))

    def column(s):
        lookup = dict(zip(s.timestamps, s.values))
        return np.array([lookup[t] for t in stamps])

    cov = np.column_stack([column(s) for s in covs])
    target = column(targets[0]) if targets else None
    ids = tuple(s.station_id for s in covs) + tuple(s.station_id for s in targets)
    dropped = {s.station_id: s.n_dropped for s in series}
    return ObservationFrame(stamps, cov, target, ids, meta={"dropped_rows": dropped})


def median_preselect(frame: ObservationFrame) -> ObservationFrame:
    """Keep rows where some covariate is >= its own median over ``frame``.

    Medians are those of the input frame, so a second application uses
    second-stage medians and may drop further rows.
    """
    if frame.n == 0:
        return replace(frame, medians=np.full(frame.d, np.nan))
    medians = np.median(frame.covariates, axis=0)
    keep = np.any(frame.covariates >= medians, axis=1)
    out = frame.take(keep)
    return replace(out, medians=medians)


def origin_shift(frame: ObservationFrame) -> ObservationFrame:
    """Subtract the columnwise minimum; accumulates into ``frame.shift``."""
    if frame.n == 0:
        raise ValueError("cannot shift an empty frame")
    vals = frame.values
    mins = vals.min(axis=0)
    return frame.with_values(vals - mins, frame.shift + mins)


def reshift(frame: ObservationFrame, shift: np.ndarray) -> ObservationFrame:
    """Re-express ``frame`` relative to a new origin ``shift`` (original scale)."""
    shift = np.asarray(shift, dtype=float)
    orig = frame.original()
    return frame.with_values(orig - shift[: orig.shape[1]], shift[: orig.shape[1]].copy())


def split_by_date(frame: ObservationFrame, cut: datetime, train_side: str = "after",
                  shift_scope: str = "train") -> tuple[ObservationFrame, ObservationFrame]:
    """Partition at ``cut`` (rows <= cut vs rows > cut) and return (train, test).

    With ``shift_scope="train"`` both parts are re-shifted by the columnwise
    minimum of the training part; ``"pooled"`` keeps the incoming shift.
    """
    if train_side not in ("before", "after"):
        raise ValueError("train_side must be 'before' or 'after'")
    if shift_scope not in ("train", "pooled"):
        raise ValueError("shift_scope must be 'train' or 'pooled'")
    if cut.tzinfo is None:
        cut = cut.replace(tzinfo=timezone.utc)
    early = np.array([ts <= cut for ts in frame.timestamps], dtype=bool)
    train_mask = early if train_side == "before" else ~early
    train, test = frame.take(train_mask), frame.take(~train_mask)
    if train.n == 0:
        raise InsufficientDataError("degenerate split: empty training frame")
    if shift_scope == "train":
        shift = train.original().min(axis=0)
        train, test = reshift(train, shift), reshift(test, shift)
    return train, test


def write_frame(path, frame: ObservationFrame, original_scale: bool = False) -> None:
    """Frame CSV plus a ``.json`` sidecar with shift, medians and row count."""
    path = Path(path)
    vals = frame.original() if original_scale else frame.values
    with open(path, "w", newline="", encoding="utf-8") as fh:
        header = ["timestamp", *frame.station_ids[: frame.d]]
        if frame.has_target:
            header.append("target")
        fh.write(",".join(header) + "\n")
        for ts, row in zip(frame.timestamps, vals):
            fh.write(format_timestamp(ts) + "," + ",".join(f"{v:.6f}" for v in row) + "\n")
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(frame.sidecar(), fh, indent=2, sort_keys=True)
