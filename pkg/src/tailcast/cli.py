"""Command-line front end: ``tailcast <command> --config run.toml``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .config import SEED_ENV, RunConfig, SynthSpec, load_config
from .egp import egp_excess_pdf, fit_gp_above, gp_pdf
from .errors import InsufficientDataError, ModelMismatchError, TailcastError
from .metrics import SE_FORMS
from .synth import write_dataset

logger = logging.getLogger("tailcast")


def _config(args):
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    if getattr(args, "shift_scope", None):
        cfg.shift_scope = args.shift_scope
    if getattr(args, "paper_format", False):
        cfg.paper_format = True
    if getattr(args, "dump_mc", False):
        cfg.dump_mc = True
    if getattr(args, "se_form", None):
        cfg.se_form = args.se_form
    return cfg


def _marginals(cfg, data):
    ms = pl.load_marginals(cfg.out_dir / "marginals", cfg.station_order)
    if ms is None:
        ms = _fit_and_write_marginals(cfg, data)
    pl.check_stations(ms, data.train)
    return ms


def _fit_and_write_marginals(cfg, data):
    ms = pl.fit_marginals(data.train, n_restarts=cfg.egp_restarts, seed=cfg.seed)
    out = cfg.out_dir / "marginals"
    for m in ms.margins:
        pl.write_json(out / f"{m.station}.json", m.to_json())
    pl.write_json(out / "summary.json", pl.marginal_table(ms))
    return ms


def cmd_fit_marginals(cfg) -> int:
    data = pl.load_data(cfg)
    ms = _fit_and_write_marginals(cfg, data)
    out = cfg.out_dir / "marginals"
    dens_rows, hist_rows = [], []
    for j, m in enumerate(ms.margins):
        z = data.train.values[:, j]
        excess = z[z > m.threshold] - m.threshold
        try:
            gp = fit_gp_above(z, m.threshold)
        except InsufficientDataError as exc:
            logger.warning("%s: no GP comparison (%s)", m.station, exc)
            gp = None
        top = float(np.max(excess)) if excess.size else 1.0
        grid = np.linspace(0.0, top, 201)
        egp_d = egp_excess_pdf(m.params, m.threshold, grid)
        gp_d = gp_pdf(gp, grid) if gp else np.full(grid.size, np.nan)
        dens_rows += [[m.station, y, a, b] for y, a, b in zip(grid, egp_d, gp_d)]
        if excess.size:
            counts, edges = np.histogram(excess, bins=30, range=(0.0, top), density=True)
            hist_rows += [[m.station, lo, hi, c] for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    pl.write_rows(out / "egp_vs_gp.csv", ["station", "excess", "egp_density", "gp_density"], dens_rows)
    pl.write_rows(out / "histogram.csv", ["station", "lo", "hi", "density"], hist_rows)
    for station, row in pl.marginal_table(ms).items():
        print(f"{station:>16s}  sigma={row['sigma']:.3f}  xi={row['xi']:+.3f}  "
              f"kappa={row['kappa']:.2f}  t={row['t']:.3f}")
    return 0


def cmd_train(cfg) -> int:
    data = pl.load_data(cfg)
    ms = _marginals(cfg, data)
    models, log = pl.train_models(cfg, data.train, ms)
    for name, model in models.items():
        pl.write_json(cfg.out_dir / "models" / f"{name}.json", model.to_json())
    pl.write_json(cfg.out_dir / "models" / "train_log.json", log)
    print(f"trained {', '.join(sorted(models))} on {log['n_extreme']} extreme rows")
    return 0


def _load_models(cfg) -> dict:
    directory = cfg.out_dir / "models"
    models = {}
    for name in [f"roxane_{r}" for r in cfg.regressors] + (["mgpred"] if cfg.families else []):
        path = directory / f"{name}.json"
        if not path.is_file():
            continue
        with open(path, encoding="utf-8") as fh:
            models[name] = pl.model_from_json(json.load(fh))
    if not models:
        raise ModelMismatchError(f"no trained models in {directory}; run 'train' first")
    order = tuple(cfg.station_order)
    for name, m in models.items():
        if tuple(m.marginals.stations) != order:
            raise ModelMismatchError(f"{name}: model stations {list(m.marginals.stations)} "
                                     f"differ from config {list(order)}")
    return models


def cmd_evaluate(cfg) -> int:
    data = pl.load_data(cfg)
    models = _load_models(cfg)
    ext, reports, preds, qq = pl.evaluate(cfg, models, data.test)
    out = cfg.out_dir / "evaluate"
    table = {"n_test": data.test.n, "n_test_extreme": ext.n,
             "methods": {k: r.to_json(cfg.paper_format) for k, r in reports.items()}}
    pl.write_json(out / "report.json", table)
    shift_y = float(data.test.shift[-1])
    for name, p in preds.items():
        pl.write_rows(out / f"predictions_{name}.csv", ["timestamp", "observed", "point", "lo95", "hi95"],
                      pl.prediction_rows(p, shift_y, ext.target))
        if name in qq:
            q = qq[name]
            pl.write_rows(out / f"qq_{name}.csv", ["observed", "predicted", "lo95", "hi95"],
                          ([a + shift_y, b + shift_y, c + shift_y, d + shift_y] for a, b, c, d in q.rows()))
        if p.mc is not None:
            L = len(p.mc[0]) if p.mc else 0
            pl.write_rows(out / f"mc_{name}.csv", ["timestamp"] + [f"draw{i}" for i in range(L)],
                          ([r[0]] + [v + shift_y for v in s] for r, s in
                           zip(pl.prediction_rows(p, shift_y), p.mc)))
    if preds:
        series = {"observed": ext.target + shift_y, **{k: p.point + shift_y for k, p in preds.items()}}
        pl.write_rows(out / "yearly_max.csv", ["year"] + sorted(series),
                      pl.yearly_max_rows(ext.timestamps, series))
    for name, r in sorted(reports.items()):
        cov = "" if r.coverage_95 is None else f"  coverage={r.coverage_95:.3f}"
        print(f"{name:>14s}  n_ext={r.n:d}  rmse={r.rmse:.4f}  mae={r.mae:.4f}{cov}")
    return 0


def cmd_reconstruct(cfg) -> int:
    data = pl.load_data(cfg)
    models = _load_models(cfg)
    ext, preds, n_skipped = pl.reconstruct(cfg, models, data.covariate_only)
    shift_y = float(data.train.shift[-1])
    rows = []
    for name, p in sorted(preds.items()):
        rows += [[r[0], name, *r[1:]] for r in pl.prediction_rows(p, shift_y)]
    rows.sort(key=lambda r: (r[0], r[1]))
    pl.write_rows(cfg.out_dir / "reconstruction.csv", ["timestamp", "method", "point", "lo95", "hi95"], rows)
    n = 0 if ext is None else ext.n
    print(f"reconstructed {n} extreme rows ({n_skipped} non-extreme rows omitted)")
    return 0


def cmd_synth(cfg, spec: SynthSpec | None = None) -> int:
    truth = write_dataset(cfg.out_dir, spec or cfg.synth, seed=cfg.seed)
    print(f"wrote synthetic dataset (n={truth['n']}) to {cfg.out_dir}")
    return 0


COMMANDS = {"fit-marginals": cmd_fit_marginals, "train": cmd_train, "evaluate": cmd_evaluate,
            "reconstruct": cmd_reconstruct, "synth": cmd_synth}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tailcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "synth", help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--shift-scope", choices=["pooled", "train"], default=None)
        p.add_argument("--paper-format", action="store_true", help="report errors x100, 1 decimal")
        p.add_argument("--dump-mc", action="store_true", help="write the full Monte-Carlo samples")
        p.add_argument("--se-form", choices=SE_FORMS, default=None)
        if name == "synth":
            p.add_argument("--n", type=int, default=None, help="rows with a target value")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return _synth(args)
        cfg = _config(args).validate()
        return COMMANDS[args.command](cfg)
    except TailcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _synth(args) -> int:
    if args.config:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    else:
        seed = args.seed if args.seed is not None else int(os.environ.get(SEED_ENV, 0) or 0)
        cfg = RunConfig(seed=seed, out_dir=args.out or Path("synthetic"))
    spec = cfg.synth
    if args.n is not None:
        spec = SynthSpec(**{**spec.__dict__, "n": args.n})
    return cmd_synth(cfg, spec)


if __name__ == "__main__":
    sys.exit(main())
