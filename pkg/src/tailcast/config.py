"""Run configuration (TOML) for the command-line pipeline."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import DataIOError, ModelMismatchError
from .mgp import FAMILIES
from .preprocess import parse_timestamp

SEED_ENV = "TAILCAST_SEED"


@dataclass
class StationSpec:
    id: str
    path: Path
    role: str = "covariate"

    def __post_init__(self):
        if self.role not in ("covariate", "target"):
            raise ModelMismatchError(f"station {self.id}: role must be 'covariate' or 'target'")


@dataclass
class SynthSpec:
    n: int = 15_000
    n_reconstruct: int = 3_000
    alpha: float = 1.86
    beta: tuple = (-0.27, 0.04, 0.0)
    # (station, sigma, xi, kappa, offset); covariates first, target last
    margins: tuple = (("brest", 0.13, -0.092, 15.12, -0.30),
                      ("saint_nazaire", 0.10, 0.004, 13.05, -0.25),
                      ("port_tudy", 0.09, -0.010, 38.68, -0.20))
    start: str = "1990-01-01T00:00:00Z"
    step_minutes: int = 745
    train_fraction: float = 0.6


@dataclass
class RunConfig:
    stations: list = field(default_factory=list)
    split_date: datetime | None = None
    train_side: str = "after"
    shift_scope: str = "pooled"
    median_preselect: bool = True
    regressors: tuple = ("ols",)
    forest: dict = field(default_factory=dict)
    families: tuple = FAMILIES
    L: int = 100
    mgp_restarts: int = 5
    normalize_likelihood: bool = True
    egp_restarts: int = 5
    se_form: str = "printed"
    paper_format: bool = False
    dump_mc: bool = False
    n_boot: int = 200
    reconstruct_start: datetime | None = None
    reconstruct_end: datetime | None = None
    seed: int = 0
    out_dir: Path = Path("out")
    synth: SynthSpec = field(default_factory=SynthSpec)
    base_dir: Path = Path(".")

    @property
    def covariate_ids(self) -> list[str]:
        return [s.id for s in self.stations if s.role == "covariate"]

    @property
    def target_id(self) -> str:
        return next(s.id for s in self.stations if s.role == "target")

    @property
    def station_order(self) -> list[str]:
        return self.covariate_ids + [self.target_id]

    def validate(self, need_stations=True):
        if need_stations:
            roles = [s.role for s in self.stations]
            if roles.count("target") != 1:
                raise ModelMismatchError("config needs exactly one target station")
            if roles.count("covariate") < 1:
                raise ModelMismatchError("config needs at least one covariate station")
            for s in self.stations:
                if not s.path.is_file():
                    raise DataIOError(f"station {s.id}: cannot read {s.path}")
        if self.train_side not in ("before", "after"):
            raise ModelMismatchError("train_side must be 'before' or 'after'")
        if self.shift_scope not in ("pooled", "train"):
            raise ModelMismatchError("shift_scope must be 'pooled' or 'train'")
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ModelMismatchError(f"unknown MGP families: {sorted(unknown)}")
        return self


def _date(v):
    return None if v in (None, "") else parse_timestamp(str(v))


def load_config(path, seed: int | None = None, out_dir=None) -> RunConfig:
    """Read a TOML run configuration. Seed precedence: argument, then the
    ``seed`` key, then the TAILCAST_SEED environment variable, then 0."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise DataIOError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise DataIOError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(raw, path.parent, seed=seed, out_dir=out_dir)


def config_from_dict(raw: dict, base_dir=Path("."), seed=None, out_dir=None) -> RunConfig:
    base_dir = Path(base_dir)
    cfg = RunConfig(base_dir=base_dir)
    cfg.stations = [StationSpec(s["id"], base_dir / s["path"], s.get("role", "covariate"))
                    for s in raw.get("stations", [])]
    split = raw.get("split", {})
    cfg.split_date = _date(split.get("date"))
    cfg.train_side = split.get("train_side", cfg.train_side)
    cfg.shift_scope = split.get("shift_scope", cfg.shift_scope)
    cfg.median_preselect = bool(raw.get("preprocess", {}).get("median_preselect", True))
    cfg.egp_restarts = int(raw.get("marginals", {}).get("n_restarts", cfg.egp_restarts))
    rox = raw.get("roxane", {})
    cfg.regressors = tuple(rox.get("regressors", cfg.regressors))
    cfg.forest = dict(rox.get("forest", {}))
    if "max_depth_grid" in cfg.forest:
        cfg.forest["max_depth_grid"] = tuple(cfg.forest["max_depth_grid"])
    mg = raw.get("mgpred", {})
    cfg.families = tuple(mg.get("families", cfg.families))
    cfg.L = int(mg.get("L", cfg.L))
    cfg.mgp_restarts = int(mg.get("n_restarts", cfg.mgp_restarts))
    cfg.normalize_likelihood = bool(mg.get("normalize", cfg.normalize_likelihood))
    met = raw.get("metrics", {})
    cfg.se_form = met.get("se_form", cfg.se_form)
    cfg.paper_format = bool(met.get("paper_format", cfg.paper_format))
    cfg.n_boot = int(met.get("n_boot", cfg.n_boot))
    rec = raw.get("reconstruct", {})
    cfg.reconstruct_start = _date(rec.get("start"))
    cfg.reconstruct_end = _date(rec.get("end"))
    if "synth" in raw:
        s = dict(raw["synth"])
        if "margins" in s:
            s["margins"] = tuple((m["station"], m["sigma"], m["xi"], m["kappa"], m.get("offset", 0.0))
                                 for m in s["margins"])
        if "beta" in s:
            s["beta"] = tuple(s["beta"])
        cfg.synth = SynthSpec(**s)
    if seed is None:
        seed = raw.get("seed")
    if seed is None and os.environ.get(SEED_ENV):
        seed = int(os.environ[SEED_ENV])
    cfg.seed = int(seed or 0)
    out = out_dir if out_dir is not None else raw.get("out_dir", "out")
    cfg.out_dir = Path(out) if out_dir is not None else base_dir / out
    return cfg
