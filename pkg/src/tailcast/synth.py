"""Synthetic multi-station data with a known EGP + Gumbel-T ground truth.

Rows are standard-MGP draws (Gumbel T-construction) whose columns are
mapped through their ranks onto exact EGP margins. Above each column's
EGP threshold the exponential scale then equals the MGP coordinate plus a
constant, so the joint threshold exceedances follow the Gumbel-T model.
"""

from __future__ import annotations

import json
from datetime import timedelta
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .config import SynthSpec
from .egp import EgpParams, egp_quantile, select_threshold
from .mgp import simulate_standard_mgp
from .preprocess import StationSeries, format_timestamp, parse_timestamp, write_station_csv


def generate(spec: SynthSpec, seed: int = 0):
    """Returns (list of StationSeries, ground-truth dict).

    Covariate stations cover ``n_reconstruct + n`` tides; the target station
    only the last ``n``.
    """
    D = len(spec.margins)
    if len(spec.beta) != D or spec.beta[-1] != 0:
        raise ValueError("beta must match the number of stations and end with 0")
    n_total = spec.n_reconstruct + spec.n
    z = simulate_standard_mgp("gumbel", spec.alpha, np.asarray(spec.beta, dtype=float), n_total,
                              seed=np.random.SeedSequence([seed, 7]))
    u = (rankdata(z, axis=0, method="ordinal") - 0.5) / n_total
    start = parse_timestamp(spec.start)
    step = timedelta(minutes=spec.step_minutes)
    stamps = tuple(start + i * step for i in range(n_total))
    series, truth_margins = [], []
    for j, (station, sigma, xi, kappa, offset) in enumerate(spec.margins):
        params = EgpParams(sigma, xi, kappa)
        values = np.round(egp_quantile(params, u[:, j]) + offset, 6)
        is_target = j == D - 1
        lo = spec.n_reconstruct if is_target else 0
        series.append(StationSeries(station, stamps[lo:], values[lo:], is_target=is_target))
        truth_margins.append({"station": station, "sigma": sigma, "xi": xi, "kappa": kappa,
                              "offset": offset, "threshold": select_threshold(params),
                              "role": "target" if is_target else "covariate"})
    n_test = int(round((1 - spec.train_fraction) * spec.n))
    split = stamps[spec.n_reconstruct + n_test - 1]
    truth = {"family": "GumbelT", "alpha": spec.alpha, "beta": list(spec.beta), "seed": seed,
             "n": spec.n, "n_reconstruct": spec.n_reconstruct, "margins": truth_margins,
             "split_date": format_timestamp(split), "train_side": "after",
             "reconstruct_end": format_timestamp(stamps[spec.n_reconstruct - 1]) if spec.n_reconstruct else None}
    return series, truth


def config_text(truth: dict, files: dict) -> str:
    lines = [f"seed = {truth['seed']}", 'out_dir = "out"', ""]
    for m in truth["margins"]:
        lines += ["[[stations]]", f'id = "{m["station"]}"', f'path = "{files[m["station"]]}"',
                  f'role = "{m["role"]}"', ""]
    lines += ["[split]", f'date = "{truth["split_date"]}"', 'train_side = "after"', ""]
    lines += ["[roxane]", 'regressors = ["ols", "forest"]', ""]
    lines += ["[mgpred]", "L = 100", ""]
    if truth["reconstruct_end"]:
        lines += ["[reconstruct]", f'end = "{truth["reconstruct_end"]}"', ""]
    return "\n".join(lines)


def write_dataset(out_dir, spec: SynthSpec, seed: int = 0) -> dict:
    """Station CSVs, ``ground_truth.json`` and a ready ``config.toml``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series, truth = generate(spec, seed)
    files = {}
    for s in series:
        name = f"{s.station_id}.csv"
        write_station_csv(out / name, s)
        files[s.station_id] = name
    with open(out / "ground_truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
    (out / "config.toml").write_text(config_text(truth, files), encoding="utf-8")
    return truth
