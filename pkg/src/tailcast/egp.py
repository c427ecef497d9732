"""Extended generalized Pareto (EGPD3) margins.

F(z) = (1 - (1 + xi z / sigma)^(-1/xi))^kappa on [0, upper), with the
exponential limit used for |xi| < XI_EPS. Fitting is maximum likelihood by
restarted simplex search; thresholds are the largest inflection point of
the density (closed form).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, stats

from .errors import DomainError, FitError, InsufficientDataError

logger = logging.getLogger(__name__)

XI_EPS = 1e-6
XI_MIN = -0.499
MIN_SAMPLE = 30


@dataclass(frozen=True)
class EgpParams:
    sigma: float
    xi: float
    kappa: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be > 0, got {self.kappa}")
        if not self.xi > -0.5:
            raise DomainError(f"xi must be > -1/2, got {self.xi}")

    @property
    def upper(self) -> float:
        return -self.sigma / self.xi if self.xi < 0 else math.inf


@dataclass(frozen=True)
class GpParams:
    sigma_gp: float
    xi_gp: float

    def __post_init__(self):
        if not self.sigma_gp > 0:
            raise DomainError("sigma_gp must be > 0")


@dataclass(frozen=True)
class ThresholdedMarginal:
    params: EgpParams
    threshold: float
    station: str = ""
    loglik: float = math.nan
    n: int = 0

    @property
    def support_upper(self) -> float:
        return self.params.upper

    @classmethod
    def from_params(cls, params: EgpParams, **kw) -> ThresholdedMarginal:
        return cls(params, select_threshold(params), **kw)

    def to_json(self) -> dict:
        return {"station": self.station, "sigma": self.params.sigma, "xi": self.params.xi,
                "kappa": self.params.kappa, "threshold": self.threshold,
                "loglik": None if math.isnan(self.loglik) else self.loglik, "n": self.n}

    @classmethod
    def from_json(cls, d: dict) -> ThresholdedMarginal:
        loglik = d.get("loglik")
        return cls(EgpParams(d["sigma"], d["xi"], d["kappa"]), float(d["threshold"]),
                   station=d.get("station", ""), loglik=math.nan if loglik is None else loglik,
                   n=int(d.get("n", 0)))


# -- distribution functions --------------------------------------------------

def _log_tail(params: EgpParams, z):
    """log of (1 + xi z / sigma)^(-1/xi), i.e. log(1 - H(z)) for the GP part."""
    s, xi = params.sigma, params.xi
    if abs(xi) < XI_EPS:
        return -z / s
    return -np.log1p(xi * z / s) / xi


def _check_support(params: EgpParams, z, closed_upper=True):
    z = np.asarray(z, dtype=float)
    upper = params.upper
    bad = (z < 0) | (z > upper if closed_upper else z >= upper) | ~np.isfinite(z) & (z != np.inf)
    if np.any(bad):
        raise DomainError(f"z outside support [0, {upper}]")
    return z


def egp_cdf(params: EgpParams, z):
    z = _check_support(params, z)
    with np.errstate(divide="ignore"):
        lt = _log_tail(params, z)
    # -expm1(lt) = 1 - (1 + xi z/sigma)^(-1/xi); lt = -inf at the upper end point
    out = (-np.expm1(lt)) ** params.kappa
    return float(out) if out.ndim == 0 else out


def egp_logpdf(params: EgpParams, z):
    """Unchecked log-density; -inf outside the open support."""
    s, xi, k = params.sigma, params.xi, params.kappa
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if abs(xi) < XI_EPS:
            log1p_term = z / s
        else:
            w = xi * z / s
            log1p_term = np.where(w > -1, np.log1p(np.maximum(w, -1 + 1e-300)), np.nan) / xi
        lt = -log1p_term
        out = math.log(k / s) + (1 + xi) * lt + (k - 1) * np.log(-np.expm1(lt))
        out = np.where((z > 0) & (z < params.upper) & np.isfinite(out), out, -np.inf)
    # log(1 - H) -> log(z/sigma) near 0; kappa == 1 keeps finite density at 0
    if k == 1:
        out = np.where(z == 0, math.log(1 / s), out)
    return float(out) if out.ndim == 0 else out


def egp_pdf(params: EgpParams, z):
    z = _check_support(params, z)
    out = np.exp(egp_logpdf(params, z))
    return float(out) if np.ndim(out) == 0 else out


def egp_quantile(params: EgpParams, u):
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u >= 1) | np.isnan(u)):
        raise DomainError("u must lie in [0, 1)")
    s, xi, k = params.sigma, params.xi, params.kappa
    with np.errstate(divide="ignore"):
        log_tail = np.log1p(-(u ** (1.0 / k)))  # log(1 - u^(1/kappa)) <= 0
    if abs(xi) < XI_EPS:
        out = -s * log_tail
    else:
        out = s * np.expm1(-xi * log_tail) / xi
    out = np.where(u == 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


# -- threshold ----------------------------------------------------------------

def convexity_quadratic(xi: float, kappa: float) -> tuple[float, float, float]:
    """Coefficients (a, b, c) of a X^2 - b X + c, whose roots X give the
    inflection points z = (sigma/xi)(X^-xi - 1) of the density."""
    a = kappa * kappa + 2 * xi * xi + 3 * kappa * xi
    b = 4 * xi * xi + 3 * (kappa * xi + kappa + xi) - 1
    c = 2 * xi * xi + 3 * xi + 1
    return a, b, c


def select_threshold(params: EgpParams) -> float:
    """Lowest level above which the EGP density is convex.

    The quadratic is polynomial in xi and expm1 keeps the back-substitution
    free of cancellation, so no small-xi switch is needed here; xi == 0 uses
    the exponential limit t = -sigma log X0.
    """
    s, xi, k = params.sigma, params.xi, params.kappa
    a, b, c = convexity_quadratic(xi, k)
    disc = b * b - 4 * a * c
    # a discriminant within rounding error of 0 is a double root (kappa = 1 gives X0 = 1)
    if abs(disc) <= 1e-14 * max(b * b, abs(4 * a * c)):
        disc = 0.0
    if disc < 0:
        raise DomainError(f"no convexity changepoint (negative discriminant) for {params}")
    root = math.sqrt(disc)
    # minus branch of (b - sqrt(disc)) / 2a, written as 2c / (b + sqrt(disc))
    x0 = 2 * c / (b + root) if b + root > 0 else (b - root) / (2 * a)
    if 1 < x0 <= 1 + 1e-12:
        x0 = 1.0
    if not 0 < x0 <= 1:
        raise DomainError(f"no convexity changepoint in (0, 1] (X0={x0}) for {params}")
    log_x0 = math.log(x0)
    t = -s * log_x0 if xi == 0 else s * math.expm1(-xi * log_x0) / xi
    t = t if t > 0 else 0.0
    if t >= params.upper:
        raise DomainError("threshold beyond upper support end point")
    return t


# -- fitting ------------------------------------------------------------------

@dataclass
class EgpFit:
    params: EgpParams
    loglik: float
    n: int
    n_starts: int


def egp_nll(theta, z) -> float:
    """Negative log-likelihood in (log sigma, xi, log kappa); +inf if infeasible."""
    log_s, xi, log_k = theta
    if not (XI_MIN <= xi < 5) or not (-30 < log_s < 30) or not (-10 < log_k < 10):
        return math.inf
    s, k = math.exp(log_s), math.exp(log_k)
    if abs(xi) < XI_EPS:
        lt = -z / s
    else:
        w = xi * z / s
        if w.min() <= -1:
            return math.inf
        lt = -np.log1p(w) / xi
    with np.errstate(divide="ignore"):
        ll = z.size * (log_k - log_s) + (1 + xi) * lt.sum() + (k - 1) * np.log(-np.expm1(lt)).sum()
    return -ll if np.isfinite(ll) else math.inf


def _gp_moments_start(z):
    m, v = z.mean(), z.var()
    xi = 0.5 * (1 - m * m / v)
    sigma = 0.5 * m * (m * m / v + 1)
    return math.log(max(sigma, 1e-8)), float(np.clip(xi, -0.45, 1.0)), 0.0


def fit_egp(sample, n_restarts: int = 5, seed: int = 0) -> EgpFit:
    """Maximum-likelihood EGP fit.

    Exact zeros (the origin-shifted minimum) carry zero density whenever
    kappa > 1 and are excluded from the likelihood.
    """
    z = np.asarray(sample, dtype=float)
    if z.size < MIN_SAMPLE:
        raise InsufficientDataError(f"EGP fit needs >= {MIN_SAMPLE} values, got {z.size}")
    if np.any(z < 0) or not np.all(np.isfinite(z)):
        raise DomainError("EGP sample must be finite and nonnegative")
    z = z[z > 0]
    if z.size < MIN_SAMPLE or np.ptp(z) <= 1e-12 * max(1.0, abs(z.max())):
        raise FitError("degenerate (constant) sample: EGP fit does not converge", best=None)

    rng = np.random.default_rng(seed)
    base = np.array(_gp_moments_start(z))
    starts = [base]
    for _ in range(n_restarts - 1):
        starts.append(np.array([base[0] + rng.normal(0, 0.5),
                                float(np.clip(base[1] + rng.normal(0, 0.15), -0.45, 1.0)),
                                rng.uniform(math.log(0.5), math.log(60.0))]))
    opts = dict(xatol=1e-7, fatol=1e-9, maxiter=4000, maxfev=8000)
    best = None
    for x0 in starts:
        if not math.isfinite(egp_nll(x0, z)):
            continue
        res = optimize.minimize(egp_nll, x0, args=(z,), method="Nelder-Mead", options=opts)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not math.isfinite(best.fun):
        raise FitError("EGP likelihood infeasible at every start", best=None)
    # a fresh simplex from the optimum guards against premature collapse
    best = optimize.minimize(egp_nll, best.x, args=(z,), method="Nelder-Mead", options=opts)
    log_s, xi, log_k = best.x
    params = EgpParams(math.exp(log_s), float(xi), math.exp(log_k))
    if not best.success and best.nit >= opts["maxiter"]:
        raise FitError("EGP fit did not converge within the restart budget", best=params)
    return EgpFit(params, -float(best.fun), int(z.size), len(starts))


def fit_marginal(sample, station: str = "", n_restarts: int = 5, seed: int = 0) -> ThresholdedMarginal:
    fit = fit_egp(sample, n_restarts=n_restarts, seed=seed)
    return ThresholdedMarginal(fit.params, select_threshold(fit.params), station=station,
                               loglik=fit.loglik, n=int(np.size(sample)))


def fit_gp_above(sample, threshold: float) -> GpParams:
    """GP maximum likelihood on the positive excesses over ``threshold``."""
    z = np.asarray(sample, dtype=float)
    excess = z[z > threshold] - threshold
    if excess.size < MIN_SAMPLE:
        raise InsufficientDataError(f"only {excess.size} exceedances of {threshold} (need {MIN_SAMPLE})")
    xi, _, sigma = stats.genpareto.fit(excess, floc=0)
    return GpParams(float(sigma), float(xi))


def gp_pdf(params: GpParams, y):
    return stats.genpareto.pdf(y, params.xi_gp, loc=0, scale=params.sigma_gp)


def egp_excess_pdf(params: EgpParams, threshold: float, y):
    """EGP density of Z - t given Z > t."""
    y = np.asarray(y, dtype=float)
    z = threshold + y
    inside = z < params.upper
    out = np.zeros_like(y)
    out[inside] = np.exp(egp_logpdf(params, z[inside]))
    return out / (1 - egp_cdf(params, threshold))


def params_dict(params: EgpParams) -> dict:
    return asdict(params)
