from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from tailcast.egp import ThresholdedMarginal
from tailcast.errors import InsufficientDataError, NumericalError
from tailcast.forest import RegressionTree
from tailcast.preprocess import ObservationFrame
from tailcast.roxane import (ForestConfig, OLSRegressor, RoxaneModel, forest_fit, ols_fit,
                             roxane_bootstrap_bands, roxane_predict, roxane_predict_batch, roxane_train)
from tailcast.transforms import MarginalSet, pareto_inverse, pareto_transform


def marginal_set(ref_fits):
    return MarginalSet(tuple(ThresholdedMarginal(p, t, s) for s, (p, t) in ref_fits.items()))


def frame(X, y):
    t0 = datetime(2001, 1, 1, tzinfo=timezone.utc)
    return ObservationFrame(tuple(t0 + timedelta(hours=12 * i) for i in range(len(X))), X, y,
                            ("brest", "saint_nazaire", "port_tudy"))


def angular_frame(ms, n, a, b, noise=0.0, seed=0):
    """Rows whose angles satisfy theta_y = a * theta_x1 + b (+ noise)."""
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.3, 1.2, n)
    tx = np.column_stack([np.cos(phi), np.sin(phi)])
    radius = rng.uniform(3.0, 40.0, n) / tx.min(axis=1)  # both Pareto coordinates >= 3
    ty = a * tx[:, 0] + b + noise * rng.standard_normal(n)
    p = np.column_stack([tx * radius[:, None], ty * radius / np.sqrt(1 - ty ** 2)])
    Z = np.column_stack([pareto_inverse(m.params, p[:, j]) for j, m in enumerate(ms.margins)])
    return frame(Z[:, :2], Z[:, 2]), (tx, ty, radius)


def test_ols_hand_case():
    reg = ols_fit(np.array([[0.0], [1.0], [2.0]]), np.array([1.0, 3.0, 5.0]))
    np.testing.assert_allclose(reg.coef, [1.0, 2.0], atol=1e-12)


def test_ols_affine_residuals():
    X = np.random.default_rng(1).normal(size=(30, 3))
    y = 0.5 + X @ [1.0, -2.0, 0.25]
    reg = ols_fit(X, y)
    assert np.max(np.abs(reg.predict(X) - y)) <= 1e-10


def test_ols_errors():
    with pytest.raises(InsufficientDataError):
        ols_fit(np.array([[0.0], [1.0]]), np.array([1.0, 2.0]))
    X = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.raises(NumericalError, match="x2"):
        ols_fit(np.column_stack([X, X[:, 0]]), X[:, 1])


def test_forest_constant_and_deterministic():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(40, 2))
    cfg = ForestConfig(n_trees=20, seed=3)
    const = forest_fit(X, np.full(40, 0.7), cfg)
    np.testing.assert_allclose(const.predict(rng.uniform(size=(5, 2))), 0.7, rtol=1e-14)
    y = X[:, 0] + 0.1 * rng.standard_normal(40)
    p1 = forest_fit(X, y, cfg).predict(X)
    p2 = forest_fit(X, y, cfg).predict(X)
    np.testing.assert_array_equal(p1, p2)
    with pytest.raises(InsufficientDataError):
        forest_fit(X[:19], y[:19], cfg)


def test_tree_depth_one_two_leaves():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    y = np.array([1.0, 3.0, 20.0, 22.0])
    tree = RegressionTree(max_depth=1, min_samples_leaf=1).fit(X, y)
    np.testing.assert_allclose(tree.predict(np.array([[0.5], [10.5]])), [2.0, 21.0])


def test_exact_angular_linear_recovery(ref_fits):
    ms = marginal_set(ref_fits)
    f, _ = angular_frame(ms, 200, 0.4, 0.3)
    model = roxane_train(f, ms, "ols")
    np.testing.assert_allclose(model.regressor.coef, [0.3, 0.4, 0.0], atol=1e-8)


def test_perfect_fit_predictions_match(ref_fits):
    ms = marginal_set(ref_fits)
    f, _ = angular_frame(ms, 200, 0.4, 0.3)
    model = roxane_train(f, ms, "ols")
    np.testing.assert_allclose(roxane_predict_batch(model, f.covariates), f.target, rtol=1e-6)


def test_train_errors(ref_fits):
    ms = marginal_set(ref_fits)
    f, _ = angular_frame(ms, 10, 0.4, 0.3)
    with pytest.raises(InsufficientDataError):
        roxane_train(f, ms, "ols")
    g, _ = angular_frame(ms, 30, 0.4, 0.3)
    with pytest.raises(ValueError):
        roxane_train(frame(g.covariates, None), ms, "ols")


def test_training_is_deterministic(ref_fits):
    ms = marginal_set(ref_fits)
    f, _ = angular_frame(ms, 60, 0.4, 0.3, noise=0.02)
    m1 = roxane_train(f, ms, "forest", n_trees=20, seed=5)
    m2 = roxane_train(f, ms, "forest", n_trees=20, seed=5)
    assert m1.to_json() == m2.to_json()


def test_zero_angle_predicts_lower_end(ref_fits):
    ms = marginal_set(ref_fits)
    model = RoxaneModel(ms, OLSRegressor([0.0, 0.0, 0.0]))
    assert roxane_predict(model, [0.6, 0.6]) == 0.0


def test_non_extreme_rejected(ref_fits):
    ms = marginal_set(ref_fits)
    model = RoxaneModel(ms, OLSRegressor([0.3, 0.4, 0.0]))
    with pytest.raises(ValueError, match="not extreme"):
        roxane_predict(model, ms.thresholds[:2])


def test_radius_invariance(ref_fits):
    ms = marginal_set(ref_fits)
    f, _ = angular_frame(ms, 80, 0.4, 0.3, noise=0.02)
    model = roxane_train(f, ms, "forest", n_trees=20, seed=1)
    tx = np.array([0.6, 0.8])
    preds = []
    for r in (5.0, 20.0, 80.0):
        x = np.array([pareto_inverse(m.params, v) for m, v in zip(ms.covariates, tx * r)])
        px = np.array([pareto_transform(m.params, v) for m, v in zip(ms.covariates, x)])
        preds.append(model.regressor.predict(px / np.linalg.norm(px)))
        p_y = pareto_transform(ms.target.params, roxane_predict(model, x))
        theta = p_y / np.hypot(p_y, np.linalg.norm(px))
        assert theta == pytest.approx(np.clip(preds[-1], 0, 1 - 1e-6), rel=1e-9)
    assert preds[0] == pytest.approx(preds[1], abs=1e-12) and preds[1] == pytest.approx(preds[2], abs=1e-12)
    x = np.array([0.7, 0.5])
    assert roxane_predict(model, x) == roxane_predict(model, x.copy())


def test_json_roundtrip_and_bands(ref_fits):
    ms = marginal_set(ref_fits)
    f, _ = angular_frame(ms, 60, 0.4, 0.3, noise=0.02)
    for algo, kw in (("ols", {}), ("forest", {"n_trees": 20, "seed": 2})):
        model = roxane_train(f, ms, algo, **kw)
        back = RoxaneModel.from_json(model.to_json())
        np.testing.assert_array_equal(roxane_predict_batch(back, f.covariates),
                                      roxane_predict_batch(model, f.covariates))
        lo, hi = roxane_bootstrap_bands(back, f.covariates[:5], n_boot=50, seed=0)
        assert np.all(lo <= hi)
