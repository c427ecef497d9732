"""Pareto / exponential standardization of EGP margins and the angular
decomposition used by the regression predictor."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .egp import EgpParams, ThresholdedMarginal, egp_cdf, egp_quantile, XI_EPS
from .errors import DomainError
from .preprocess import ObservationFrame

THETA_CLAMP = 1 - 1e-6
# batch transforms keep 1 - F away from 0 by this much
_SURVIVAL_FLOOR = 1e-15


@dataclass(frozen=True)
class MarginalSet:
    """One fitted margin per column: d covariates in frame order, then the target."""

    margins: tuple[ThresholdedMarginal, ...]

    def __post_init__(self):
        object.__setattr__(self, "margins", tuple(self.margins))
        if len(self.margins) < 2:
            raise ValueError("need at least one covariate margin and one target margin")

    @property
    def d(self) -> int:
        return len(self.margins) - 1

    @property
    def covariates(self) -> tuple[ThresholdedMarginal, ...]:
        return self.margins[:-1]

    @property
    def target(self) -> ThresholdedMarginal:
        return self.margins[-1]

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([m.threshold for m in self.margins])

    @property
    def stations(self) -> tuple[str, ...]:
        return tuple(m.station for m in self.margins)

    def to_json(self) -> list:
        return [m.to_json() for m in self.margins]

    @classmethod
    def from_json(cls, items: list) -> MarginalSet:
        return cls(tuple(ThresholdedMarginal.from_json(d) for d in items))


def _params(m) -> EgpParams:
    return m.params if isinstance(m, ThresholdedMarginal) else m


# -- scalar transforms --------------------------------------------------------

def pareto_transform(m, z):
    F = egp_cdf(_params(m), z)
    if np.any(np.asarray(F) >= 1):
        raise DomainError("Pareto transform is infinite at the upper end point")
    return 1.0 / (1.0 - F)


def pareto_inverse(m, v):
    v = np.asarray(v, dtype=float)
    if np.any(v < 1) or np.any(np.isnan(v)):
        raise DomainError("Pareto-scale value must be >= 1")
    out = egp_quantile(_params(m), 1.0 - 1.0 / v)
    return out


def _expo(p: EgpParams, z, log_f_cap=0.0):
    """-log(1 - F(z)) via log F, avoiding 1 - F cancellation."""
    with np.errstate(divide="ignore"):
        if abs(p.xi) < XI_EPS:
            lt = -z / p.sigma
        else:
            lt = -np.log1p(p.xi * z / p.sigma) / p.xi
        log_F = p.kappa * np.log(-np.expm1(lt))
        out = -np.log(-np.expm1(np.minimum(log_F, log_f_cap)))
    return np.where(z == 0, 0.0, out)


def expo_transform(m, z):
    p = _params(m)
    F = np.asarray(egp_cdf(p, z))
    if np.any(F >= 1):
        raise DomainError("exponential transform is infinite at the upper end point")
    out = _expo(p, np.asarray(z, dtype=float))
    return float(out) if out.ndim == 0 else out


def expo_inverse(m, w):
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise DomainError("exponential-scale value must be >= 0")
    # 1 - exp(-w) written as -expm1(-w)
    return egp_quantile(_params(m), -np.expm1(-w))


# -- batch transforms for pipelines (clip to support) -------------------------

def expo_column(m, z) -> np.ndarray:
    """Vectorized e = -log(1 - F(z)); z clipped to the support, F capped below 1."""
    p = _params(m)
    z = np.clip(np.asarray(z, dtype=float), 0.0, p.upper)
    return _expo(p, z, math.log1p(-_SURVIVAL_FLOOR))


def expo_frame(ms: MarginalSet, values: np.ndarray) -> np.ndarray:
    values = np.atleast_2d(values)
    return np.column_stack([expo_column(m, values[:, j]) for j, m in enumerate(ms.margins[: values.shape[1]])])


def pareto_frame(ms: MarginalSet, values: np.ndarray) -> np.ndarray:
    return np.exp(expo_frame(ms, values))


def expo_thresholds(ms: MarginalSet) -> np.ndarray:
    return np.array([expo_column(m, m.threshold) for m in ms.margins]).ravel()


# -- extremes and angles --------------------------------------------------------

def extreme_mask(covariates: np.ndarray, thresholds_x: np.ndarray) -> np.ndarray:
    return np.any(np.atleast_2d(covariates) > np.asarray(thresholds_x), axis=1)


def extract_extremes(frame: ObservationFrame, ms: MarginalSet) -> ObservationFrame:
    """Rows where at least one covariate strictly exceeds its threshold."""
    if frame.d != ms.d:
        raise ValueError(f"frame has {frame.d} covariates, marginal set has {ms.d}")
    return frame.take(extreme_mask(frame.covariates, ms.thresholds[: ms.d]))


@dataclass(frozen=True)
class AngularSample:
    theta_x: np.ndarray
    theta_y: float
    radius: float


def angular_decompose(row) -> AngularSample:
    """Split a Pareto-scale row (covariates..., target) into the covariate
    angle, the target angle and the covariate radius (Euclidean norms)."""
    row = np.asarray(row, dtype=float)
    px, py = row[:-1], row[-1]
    radius = float(np.linalg.norm(px))
    return AngularSample(px / radius, float(py / np.linalg.norm(row)), radius)


def angular_arrays(pareto_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``angular_decompose`` over rows: (theta_x, theta_y, radius)."""
    px, py = pareto_rows[:, :-1], pareto_rows[:, -1]
    radius = np.linalg.norm(px, axis=1)
    full = np.hypot(radius, py)
    return px / radius[:, None], py / full, radius


def clamp_theta(theta_y, theta_max: float = THETA_CLAMP):
    return np.clip(theta_y, 0.0, theta_max)


def angular_invert(theta_y, radius, theta_max: float = THETA_CLAMP):
    """Pareto-scale target from its angle and the covariate radius.

    Feasible angles in [0, 1) are inverted exactly; angles >= 1 are clamped
    to ``theta_max`` and negative ones to 0.
    """
    t = np.asarray(theta_y, dtype=float)
    t = np.where(t >= 1.0, theta_max, np.maximum(t, 0.0))
    out = t * np.asarray(radius, dtype=float) / np.sqrt((1.0 - t) * (1.0 + t))
    return float(out) if np.ndim(out) == 0 else out
