"""Angular regression predictor (ROXANE).

A regressor learns the target angle theta_y = p(Y) / ||p(Z)|| from the
covariate angle theta_x = p(X) / ||p(X)|| on Pareto-scale extremes; the
covariate radius only enters through the back-transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, ModelMismatchError, NumericalError
from .forest import ForestConfig, RegressionTree, cv_select_depth, forest_predict, grow_forest
from .preprocess import ObservationFrame
from .transforms import (THETA_CLAMP, MarginalSet, angular_arrays, clamp_theta, extreme_mask,
                         pareto_frame, pareto_inverse)

MIN_EXTREMES = 20
MODEL_VERSION = 1


class Regressor:
    """Minimal regressor interface: ``fit(X, y)``, ``predict(X)``, ``name``."""

    name = "base"

    def fit(self, X, y):
        raise NotImplementedError

    def predict(self, X):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


class OLSRegressor(Regressor):
    name = "ols"

    def __init__(self, coef=None):
        self.coef = None if coef is None else np.asarray(coef, dtype=float)

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        if n <= d + 1:
            raise InsufficientDataError(f"OLS needs n > d + 1 rows (n={n}, d={d})")
        design = np.column_stack([np.ones(n), X])
        names = ["intercept"] + [f"x{j}" for j in range(d)]
        rank = np.linalg.matrix_rank(design)
        if rank < d + 1:
            collinear, kept = [], []
            for j in range(d + 1):
                if np.linalg.matrix_rank(design[:, kept + [j]]) == len(kept) + 1:
                    kept.append(j)
                else:
                    collinear.append(names[j])
            raise NumericalError(f"rank-deficient OLS design; collinear columns: {', '.join(collinear)}")
        self.coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = self.coef[0] + np.atleast_2d(X) @ self.coef[1:]
        return float(out[0]) if X.ndim == 1 else out

    def to_json(self):
        return {"kind": "ols", "coef": [float(c) for c in self.coef]}


class ForestRegressor(Regressor):
    name = "forest"

    def __init__(self, config: ForestConfig | None = None):
        self.config = config or ForestConfig()
        self.trees = []
        self.max_depth = None
        self.cv_scores = {}

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        if len(y) < 20:
            raise InsufficientDataError(f"forest needs >= 20 rows, got {len(y)}")
        mtry = math.ceil(X.shape[1] / 3)
        if len(self.config.max_depth_grid) > 1:
            self.max_depth, self.cv_scores = cv_select_depth(X, y, self.config, mtry)
        else:
            self.max_depth = int(self.config.max_depth_grid[0])
        self.trees = grow_forest(X, y, self.config.n_trees, self.max_depth, mtry,
                                 self.config.min_samples_leaf, seed=[self.config.seed, 0])
        return self

    def predict(self, X, per_tree=False):
        X = np.asarray(X, dtype=float)
        out = forest_predict(self.trees, np.atleast_2d(X), per_tree=per_tree)
        return float(out[0]) if X.ndim == 1 and not per_tree else out

    def to_json(self):
        c = self.config
        return {"kind": "forest", "max_depth": self.max_depth,
                "cv_mse": {str(k): v for k, v in self.cv_scores.items()},
                "config": {"n_trees": c.n_trees, "max_depth_grid": list(c.max_depth_grid),
                           "cv_folds": c.cv_folds, "seed": c.seed, "min_samples_leaf": c.min_samples_leaf},
                "trees": [t.to_json() for t in self.trees]}


def ols_fit(inputs, targets) -> OLSRegressor:
    return OLSRegressor().fit(inputs, targets)


def forest_fit(inputs, targets, config: ForestConfig | dict | None = None) -> ForestRegressor:
    if isinstance(config, dict):
        config = ForestConfig(**config)
    return ForestRegressor(config).fit(inputs, targets)


REGISTRY = {"ols": lambda **kw: OLSRegressor(), "forest": lambda **kw: ForestRegressor(ForestConfig(**kw))}


def make_regressor(name: str, **kw) -> Regressor:
    try:
        return REGISTRY[name](**kw)
    except KeyError:
        raise ValueError(f"unknown regressor {name!r}; known: {sorted(REGISTRY)}") from None


def regressor_from_json(d: dict) -> Regressor:
    if d["kind"] == "ols":
        return OLSRegressor(d["coef"])
    if d["kind"] == "forest":
        reg = ForestRegressor(ForestConfig(**{**d["config"], "max_depth_grid": tuple(d["config"]["max_depth_grid"])}))
        reg.max_depth = d["max_depth"]
        reg.cv_scores = {int(k): v for k, v in d.get("cv_mse", {}).items()}
        reg.trees = [RegressionTree.from_json(t, reg.max_depth) for t in d["trees"]]
        return reg
    raise ValueError(f"unknown regressor kind {d['kind']!r}")


@dataclass
class RoxaneModel:
    marginals: MarginalSet
    regressor: Regressor
    theta_clamp: float = THETA_CLAMP
    n_train: int = 0
    train_angles: tuple | None = field(default=None, repr=False)

    @property
    def name(self) -> str:
        return f"roxane_{self.regressor.name}"

    def to_json(self) -> dict:
        out = {"version": MODEL_VERSION, "method": "roxane", "regressor": self.regressor.to_json(),
               "theta_clamp": self.theta_clamp, "n_train": self.n_train,
               "marginals": self.marginals.to_json()}
        if self.train_angles is not None:
            # kept so bootstrap bands can be rebuilt from a saved model
            tx, ty = self.train_angles
            out["train_angles"] = {"theta_x": np.asarray(tx).tolist(), "theta_y": np.asarray(ty).tolist()}
        return out

    @classmethod
    def from_json(cls, d: dict) -> RoxaneModel:
        if d.get("method") != "roxane" or d.get("version") != MODEL_VERSION:
            raise ModelMismatchError("not a ROXANE model file of a supported version")
        angles = d.get("train_angles")
        if angles is not None:
            angles = (np.asarray(angles["theta_x"], dtype=float), np.asarray(angles["theta_y"], dtype=float))
        return cls(MarginalSet.from_json(d["marginals"]), regressor_from_json(d["regressor"]),
                   d["theta_clamp"], d.get("n_train", 0), angles)


def angular_training_set(frame_ext: ObservationFrame, ms: MarginalSet):
    if not frame_ext.has_target:
        raise ValueError("training frame has no target column")
    theta_x, theta_y, _ = angular_arrays(pareto_frame(ms, frame_ext.values))
    return theta_x, theta_y


def roxane_train(frame_ext: ObservationFrame, ms: MarginalSet, algo="ols", **algo_kw) -> RoxaneModel:
    """Fit ``algo`` (registry name, factory or unfitted Regressor) on the
    angular pairs of the extreme training rows."""
    if not frame_ext.has_target:
        raise ValueError("training frame has no target column")
    if frame_ext.n < MIN_EXTREMES:
        raise InsufficientDataError(f"ROXANE needs >= {MIN_EXTREMES} extreme rows, got {frame_ext.n}")
    theta_x, theta_y = angular_training_set(frame_ext, ms)
    if isinstance(algo, str):
        reg = make_regressor(algo, **algo_kw)
    elif isinstance(algo, Regressor):
        reg = algo
    else:
        reg = algo()
    reg.fit(theta_x, theta_y)
    return RoxaneModel(ms, reg, n_train=frame_ext.n, train_angles=(theta_x, theta_y))


def _back_transform(model: RoxaneModel, theta_hat, radius):
    t = clamp_theta(np.asarray(theta_hat, dtype=float), model.theta_clamp)
    p_y = t * radius / np.sqrt(1.0 - t * t)
    # Pareto scale starts at 1 (target at its lower support end)
    return pareto_inverse(model.marginals.target, np.maximum(p_y, 1.0))


def roxane_predict_batch(model: RoxaneModel, X) -> np.ndarray:
    """Predictions (shifted scale) for rows of ``X``, all of which must be extreme."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ms = model.marginals
    if X.shape[1] != ms.d:
        raise ModelMismatchError(f"model expects {ms.d} covariates, got {X.shape[1]}")
    if not np.all(extreme_mask(X, ms.thresholds[: ms.d])):
        raise ValueError("not extreme: every row needs a covariate above its threshold")
    px = pareto_frame(ms, X)
    radius = np.linalg.norm(px, axis=1)
    theta_hat = np.atleast_1d(model.regressor.predict(px / radius[:, None]))
    return np.atleast_1d(_back_transform(model, theta_hat, radius))


def roxane_predict(model: RoxaneModel, x) -> float:
    return float(roxane_predict_batch(model, np.asarray(x, dtype=float)[None, :])[0])


def roxane_bootstrap_bands(model: RoxaneModel, X, n_boot=200, seed=0, level=0.95):
    """Pairs-bootstrap prediction bands (shifted scale).

    OLS is refit on ``n_boot`` resamples of the angular training pairs; for a
    forest the per-tree predictions (each tree already a bootstrap fit) are
    used instead of refitting whole forests.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ms = model.marginals
    px = pareto_frame(ms, X)
    radius = np.linalg.norm(px, axis=1)
    theta_x = px / radius[:, None]
    alpha = (1 - level) / 2
    if isinstance(model.regressor, ForestRegressor):
        draws = model.regressor.predict(theta_x, per_tree=True)
    else:
        if model.train_angles is None:
            raise ValueError("bootstrap bands need the training angles")
        tx, ty = model.train_angles
        rng = np.random.default_rng(seed)
        draws = []
        for _ in range(n_boot):
            idx = rng.integers(0, len(ty), size=len(ty))
            draws.append(OLSRegressor().fit(tx[idx], ty[idx]).predict(theta_x))
        draws = np.array(draws)
    ys = np.array([_back_transform(model, row, radius) for row in draws])
    return np.quantile(ys, alpha, axis=0), np.quantile(ys, 1 - alpha, axis=0)
