"""MGPRED: parametric multivariate generalized Pareto regression.

Fit standard-MGP density families by censored maximum likelihood on the
shifted exponential scale e(Z) - e(t), select by AIC, then predict the
target by rejection sampling from the conditional density and averaging.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from .errors import FitError, InsufficientDataError, ModelMismatchError, NumericalError
from .mgp import FAMILIES, MgpFamily, prob_all_positive, simulate_standard_mgp  # noqa: F401
from .preprocess import ObservationFrame
from .transforms import MarginalSet, expo_column, expo_frame, expo_inverse, expo_thresholds

logger = logging.getLogger(__name__)

MIN_UNCENSORED = 30
DEFAULT_L = 100
STUDENT_DF = 3.0
ENVELOPE_GRID = 2048
ENVELOPE_INFLATION = 1.5
MODEL_VERSION = 1


@dataclass
class MgpModel:
    family: MgpFamily
    alpha: float | np.ndarray
    beta: np.ndarray
    aic: float
    n_uncensored: int
    marginals: MarginalSet | None = None
    loglik: float = math.nan
    candidates: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.size != self.family.dim or self.beta[-1] != 0.0:
            raise ValueError("beta must have length D with its last entry exactly 0")
        if self.family.kind == "RevExpT":
            self.alpha = np.asarray(self.alpha, dtype=float)
        else:
            self.alpha = float(self.alpha)

    def logpdf(self, z):
        return self.family.logpdf(self.alpha, self.beta, z)

    def to_json(self) -> dict:
        alpha = self.alpha.tolist() if isinstance(self.alpha, np.ndarray) else self.alpha
        return {"version": MODEL_VERSION, "method": "mgpred", "family": self.family.kind,
                "alpha": alpha, "beta": self.beta.tolist(), "aic": self.aic,
                "loglik": self.loglik, "n_uncensored": self.n_uncensored,
                "candidates": self.candidates,
                "marginals": None if self.marginals is None else self.marginals.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> MgpModel:
        if d.get("method") != "mgpred" or d.get("version") != MODEL_VERSION:
            raise ModelMismatchError("not an MGPRED model file of a supported version")
        beta = np.asarray(d["beta"], dtype=float)
        ms = None if d.get("marginals") is None else MarginalSet.from_json(d["marginals"])
        return cls(MgpFamily(d["family"], beta.size), d["alpha"], beta, d["aic"], d["n_uncensored"],
                   ms, d.get("loglik", math.nan), d.get("candidates", {}))


# -- fitting ----------------------------------------------------------------------

def shifted_expo(ms: MarginalSet, values) -> np.ndarray:
    """Rows mapped to e(Z) - e(t) column by column."""
    values = np.atleast_2d(values)
    return expo_frame(ms, values) - expo_thresholds(ms)[: values.shape[1]]


def uncensored_rows(frame_ext: ObservationFrame, ms: MarginalSet) -> np.ndarray:
    if not frame_ext.has_target:
        raise ValueError("frame has no target column")
    z = shifted_expo(ms, frame_ext.values)
    return z[np.all(z > 0, axis=1)]


def censored_loglik(family: MgpFamily, alpha, beta, z, normalize=True) -> float:
    """Sum of log h over uncensored rows.

    With ``normalize`` each row's density is divided by P(all Z_j > 0) so
    it becomes a proper likelihood for data that were selected on being
    uncensored; without it the raw density sum is returned.
    """
    ll = float(np.sum(family.logpdf(alpha, beta, z)))
    if normalize:
        p = prob_all_positive(family.kind, alpha, beta)
        if not p > 0:
            return -math.inf
        ll -= z.shape[0] * math.log(p)
    return ll


def _objective(theta, family, z, normalize):
    if np.any(np.abs(theta) > 20):
        return math.inf
    alpha, beta = family.unpack(theta)
    if family.kind == "GumbelU" and alpha > 200:
        return math.inf
    try:
        ll = censored_loglik(family, alpha, beta, z, normalize)
    except (ValueError, FloatingPointError, ZeroDivisionError):
        return math.inf
    return -ll if math.isfinite(ll) else math.inf


def _start(family: MgpFamily, z) -> np.ndarray:
    D = family.dim
    # location start: column medians relative to the target column
    med = np.median(z, axis=0)
    beta = np.append(med[:-1] - med[-1], 0.0)
    alpha = 2.0 if family.kind != "RevExpT" else np.full(D, 2.0)
    return family.pack(alpha, beta)


def fit_family(family: MgpFamily, z, n_restarts=5, seed=0, normalize=True):
    """Restarted Nelder-Mead on the censored log-likelihood; returns
    (alpha, beta, loglik)."""
    rng = np.random.default_rng(seed)
    base = _start(family, z)
    starts = [base] + [base + rng.normal(0, 0.4, size=base.size) for _ in range(n_restarts - 1)]
    n = base.size
    opts = dict(xatol=1e-6, fatol=1e-7, maxiter=400 * n, maxfev=800 * n)
    best = None
    for x0 in starts:
        if not math.isfinite(_objective(x0, family, z, normalize)):
            continue
        res = optimize.minimize(_objective, x0, args=(family, z, normalize), method="Nelder-Mead",
                                options=opts)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not math.isfinite(best.fun):
        raise FitError(f"{family.kind}: censored likelihood infeasible at every start", best=None)
    best = optimize.minimize(_objective, best.x, args=(family, z, normalize), method="Nelder-Mead",
                             options=opts)
    alpha, beta = family.unpack(best.x)
    return alpha, beta, -float(best.fun)


def aic(loglik: float, k: int) -> float:
    return 2.0 * k - 2.0 * loglik


def fit_censored_array(z, families=FAMILIES, n_restarts=5, seed=0, normalize=True,
                       marginals: MarginalSet | None = None) -> MgpModel:
    """Fit every family to uncensored rows ``z`` (shifted exponential scale)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[0] < MIN_UNCENSORED:
        raise InsufficientDataError(
            f"only {z.shape[0]} uncensored rows after transform (need {MIN_UNCENSORED})")
    D = z.shape[1]
    fams = [f if isinstance(f, MgpFamily) else MgpFamily(f, D) for f in families]
    results = {}
    for i, fam in enumerate(fams):
        try:
            alpha, beta, ll = fit_family(fam, z, n_restarts, seed=[seed, i] if np.ndim(seed) == 0 else seed,
                                         normalize=normalize)
        except (FitError, NumericalError, ValueError) as exc:
            logger.warning("skipping MGP family %s: %s", fam.kind, exc)
            continue
        results[fam.kind] = (fam, alpha, beta, ll, aic(ll, fam.n_params))
    if not results:
        raise FitError("censored fit failed for every MGP family", best=None)
    kind = min(results, key=lambda k: results[k][4])
    fam, alpha, beta, ll, score = results[kind]
    summary = {k: {"aic": r[4], "loglik": r[3], "k": r[0].n_params} for k, r in results.items()}
    return MgpModel(fam, alpha, beta, score, int(z.shape[0]), marginals, ll, summary)


def fit_censored(frame_ext: ObservationFrame, ms: MarginalSet, families=FAMILIES, n_restarts=5,
                 seed=0, normalize=True) -> MgpModel:
    """Censored MLE over the family panel; returns the smallest-AIC model."""
    if frame_ext.d != ms.d:
        raise ModelMismatchError(f"frame has {frame_ext.d} covariates, marginals have {ms.d}")
    z = uncensored_rows(frame_ext, ms)
    return fit_censored_array(z, families, n_restarts, seed, normalize, marginals=ms)


# -- conditional density ----------------------------------------------------------

@dataclass
class ConditionalDensity:
    """y -> h((x_cond, y)) on (lower, upper), with its normalizing constant.

    ``log_c`` is log of the integral over (lower, upper); mass above
    ``upper`` is below 1e-8 relative. ``truncated_mass`` is the share of the
    untruncated conditional lying below ``lower``.
    """

    model: MgpModel
    x_cond: np.ndarray
    lower: float
    upper: float
    log_c: float
    log_scale: float
    breakpoints: list
    truncated_mass: float

    def logpdf_unnorm(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        z = np.column_stack([np.broadcast_to(self.x_cond, (y.size, self.x_cond.size)), y])
        return self.model.logpdf(z)

    def pdf(self, y):
        """Normalized density; zero outside (lower, upper]."""
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.exp(self.logpdf_unnorm(y_arr) - self.log_c)
        out = np.where((y_arr > self.lower) & (y_arr <= self.upper), out, 0.0)
        return float(out[0]) if np.ndim(y) == 0 else out

    def _scaled(self, y):
        return float(np.exp(self.logpdf_unnorm(y)[0] - self.log_scale))

    def cdf(self, y):
        """Normalized cdf by adaptive quadrature (scalar or array)."""
        ys = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty(ys.size)
        c = math.exp(self.log_c - self.log_scale)
        for i, v in enumerate(ys):
            if v <= self.lower:
                out[i] = 0.0
            elif v >= self.upper:
                out[i] = 1.0
            else:
                pts = [p for p in self.breakpoints if self.lower < p < v]
                val, _ = integrate.quad(self._scaled, self.lower, v, points=pts or None, limit=200)
                out[i] = min(1.0, val / c)
        return float(out[0]) if np.ndim(y) == 0 else out


def conditional_density(model: MgpModel, x_cond, lower: float | None = None) -> ConditionalDensity:
    """Conditional of the target coordinate given covariates ``x_cond``
    (shifted exponential scale), truncated below at ``lower``, which
    defaults to -e(t_Y) from the model's marginals."""
    x_cond = np.asarray(x_cond, dtype=float).ravel()
    if x_cond.size != model.family.dim - 1 or not np.all(np.isfinite(x_cond)):
        raise ValueError(f"x_cond must be {model.family.dim - 1} finite values")
    if lower is None:
        if model.marginals is None:
            raise ValueError("lower bound needed when the model carries no marginals")
        t = model.marginals.target
        lower = -float(expo_column(t, t.threshold))
    bps = sorted(model.family.breakpoints(model.alpha, model.beta, x_cond))

    def logh(y):
        z = np.column_stack([np.broadcast_to(x_cond, (np.size(y), x_cond.size)), np.atleast_1d(y)])
        return model.logpdf(z)

    # locate the bulk: scan from the lower bound past every kink
    hi0 = max([lower, 0.0] + bps) + 5.0
    grid = np.unique(np.concatenate([np.linspace(lower, hi0, 4001)[1:], [b for b in bps if b > lower]]))
    lg = logh(grid)
    peak = float(np.max(lg))
    if not math.isfinite(peak):
        raise NumericalError("unreachable conditioning point: conditional density vanishes")
    # beyond all kinks log h decays at least linearly (slope <= -1)
    upper = hi0
    while logh(np.array([upper]))[0] > peak + math.log(1e-10):
        upper += 5.0
    log_scale = peak

    def scaled(y):
        return float(np.exp(logh(np.array([y]))[0] - log_scale))

    pts = [b for b in bps if lower < b < upper]
    c, _ = integrate.quad(scaled, lower, upper, points=pts or None, limit=400)
    if not c > 0:
        raise NumericalError("unreachable conditioning point: normalizing constant underflows")
    below, _ = integrate.quad(scaled, -np.inf, lower, limit=200) if math.isfinite(lower) else (0.0, 0)
    return ConditionalDensity(model, x_cond, float(lower), float(upper), math.log(c) + log_scale,
                              log_scale, bps, float(below / (below + c)))


# -- rejection sampling -------------------------------------------------------------

class EnvelopeFailure(NumericalError):
    pass


def _proposal(cond: ConditionalDensity):
    loc = float(np.mean(cond.x_cond))
    scale = max(1.0, float(np.std(cond.x_cond)))
    dist = stats.t(df=STUDENT_DF, loc=loc, scale=scale)
    return dist, dist.cdf(cond.lower), dist.cdf(cond.upper)


def _envelope(cond: ConditionalDensity, dist, mass, n_grid: int) -> float:
    """max over a grid (plus kinks and a local refinement) of target/proposal."""
    grid = np.linspace(cond.lower, cond.upper, n_grid + 1)[1:]
    grid = np.concatenate([grid, [b for b in cond.breakpoints if cond.lower < b <= cond.upper]])

    def log_ratio(y):
        y = np.atleast_1d(y)
        return cond.logpdf_unnorm(y) - cond.log_c - (dist.logpdf(y) - math.log(mass))

    lr = log_ratio(grid)
    i = int(np.argmax(lr))
    best = float(lr[i])
    step = (cond.upper - cond.lower) / n_grid
    lo, hi = max(cond.lower, grid[i] - step), min(cond.upper, grid[i] + step)
    if hi > lo:
        res = optimize.minimize_scalar(lambda y: -float(log_ratio(y)[0]), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    return math.exp(best) * ENVELOPE_INFLATION


def rejection_sample(cond: ConditionalDensity, L: int = DEFAULT_L, seed=None,
                     max_proposals: int = 1_000_000, return_stats: bool = False):
    """Exact draws from the normalized conditional by accept-reject with a
    truncated Student-t proposal (location = mean of the conditioning
    values, scale = max(1, their standard deviation), 3 degrees of freedom).

    If a proposal ever exceeds the envelope, the envelope grid is doubled and
    sampling restarts from scratch so that accepted draws stay exact.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    dist, f_lo, f_hi = _proposal(cond)
    mass = f_hi - f_lo
    if not mass > 0:
        raise EnvelopeFailure("envelope failure: proposal puts no mass on the support")
    rng = np.random.default_rng(seed)
    n_grid = ENVELOPE_GRID
    while True:
        M = _envelope(cond, dist, mass, n_grid)
        out, n_prop, violated = [], 0, False
        while len(out) < L:
            batch = int(min(max(64, 2 * (L - len(out)) * M), 200_000))
            u = rng.uniform(f_lo, f_hi, size=batch)
            y = np.clip(dist.ppf(u), np.nextafter(cond.lower, math.inf), cond.upper)
            ratio = np.exp(cond.logpdf_unnorm(y) - cond.log_c - (dist.logpdf(y) - math.log(mass)))
            if np.any(ratio > M):
                violated = True
                break
            accept = rng.uniform(size=batch) * M <= ratio
            out.extend(y[accept].tolist())
            n_prop += batch
            if n_prop >= max_proposals and len(out) < 1e-4 * n_prop:
                raise EnvelopeFailure(
                    f"envelope failure: acceptance rate {len(out) / n_prop:.2e} over {n_prop} proposals")
        if not violated:
            break
        n_grid *= 2
        if n_grid > 2 ** 22:
            raise EnvelopeFailure("envelope failure: grid refinement did not bound the target")
    sample = np.array(out[:L])
    if return_stats:
        return sample, {"M": M, "n_proposals": n_prop, "grid": n_grid}
    return sample


# -- prediction ---------------------------------------------------------------------

@dataclass
class PredictionRecord:
    timestamp: object
    point: float
    mc_sample: np.ndarray
    interval_95: tuple

    def __post_init__(self):
        lo, hi = self.interval_95
        if lo > hi:
            raise NumericalError("prediction interval has lo > hi")


def row_seed(base_seed: int, timestamp) -> np.random.SeedSequence:
    """Per-row seed from (base seed, timestamp), independent of scheduling."""
    if timestamp is None:
        key = 0
    elif isinstance(timestamp, (int, np.integer)):
        key = int(timestamp)
    else:
        key = int(np.datetime64(timestamp, "s").astype(np.int64))
    return np.random.SeedSequence([int(base_seed), key & 0xFFFFFFFFFFFF, key < 0])


def mgpred_predict(model: MgpModel, x, L: int = DEFAULT_L, seed=None, timestamp=None) -> PredictionRecord:
    """Monte-Carlo prediction of the target (shifted meters) from covariates ``x``."""
    ms = model.marginals
    if ms is None:
        raise ValueError("model carries no marginals")
    x = np.asarray(x, dtype=float).ravel()
    if x.size != ms.d:
        raise ModelMismatchError(f"model expects {ms.d} covariates, got {x.size}")
    if not np.any(x > ms.thresholds[: ms.d]):
        raise ValueError("not extreme: no covariate exceeds its threshold")
    x_cond = shifted_expo(ms, x[None, :])[0]
    cond = conditional_density(model, x_cond)
    e_t = -cond.lower
    draws = rejection_sample(cond, L, seed=seed)
    sample = np.asarray(expo_inverse(ms.target, np.maximum(draws + e_t, 0.0)), dtype=float)
    lo, hi = np.quantile(sample, [0.025, 0.975])
    return PredictionRecord(timestamp, float(sample.mean()), sample, (float(lo), float(hi)))
