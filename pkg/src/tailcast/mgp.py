"""Standard multivariate generalized Pareto densities on exponential margins.

Three closed-form families built from independent components, all using
the full vector length D (covariates plus target):

* ``GumbelT``  - Gumbel T-construction, one shared alpha
* ``GumbelU``  - Gumbel U-construction, one shared alpha > 1
* ``RevExpT``  - reverse-exponential T-construction, one alpha per coordinate

Locations ``beta`` always have their last entry pinned to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp
from scipy.stats import qmc

from .errors import DomainError

FAMILIES = ("GumbelT", "GumbelU", "RevExpT")


@dataclass(frozen=True)
class MgpFamily:
    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown MGP family {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def n_params(self) -> int:
        """Free parameters: alpha(s) plus the D - 1 unpinned locations."""
        n_alpha = self.dim if self.kind == "RevExpT" else 1
        return n_alpha + self.dim - 1

    def unpack(self, theta):
        """Map an unconstrained vector to (alpha, beta)."""
        theta = np.asarray(theta, dtype=float)
        D = self.dim
        if self.kind == "RevExpT":
            alpha = np.exp(theta[:D])
            beta = np.append(theta[D:], 0.0)
        else:
            alpha = math.exp(theta[0]) + (1.0 if self.kind == "GumbelU" else 0.0)
            beta = np.append(theta[1:], 0.0)
        return alpha, beta

    def pack(self, alpha, beta):
        beta = np.asarray(beta, dtype=float)[:-1]
        if self.kind == "RevExpT":
            return np.concatenate([np.log(np.asarray(alpha, dtype=float)), beta])
        a = float(alpha) - (1.0 if self.kind == "GumbelU" else 0.0)
        return np.concatenate([[math.log(a)], beta])

    def logpdf(self, alpha, beta, z):
        return LOGPDF[self.kind](alpha, beta, z)

    def breakpoints(self, alpha, beta, x_cond):
        """Values of the last coordinate where the density has a kink."""
        x_cond = np.asarray(x_cond, dtype=float)
        pts = [float(x_cond.max())]
        if self.kind == "RevExpT":
            beta = np.asarray(beta, dtype=float)
            pts.append(float(np.max(x_cond + beta[:-1]) - beta[-1]))
        return pts


def _rows(z):
    z = np.asarray(z, dtype=float)
    return z.reshape(1, -1) if z.ndim == 1 else z


def _finish(out, zmax, squeeze):
    out = np.where(zmax > 0, out, -np.inf)
    return float(out[0]) if squeeze else out


def logpdf_gumbel_t(alpha, beta, z):
    if not alpha > 0:
        raise DomainError("GumbelT needs alpha > 0")
    squeeze = np.ndim(z) == 1
    z = _rows(z)
    D = z.shape[1]
    u = -alpha * (z - np.asarray(beta, dtype=float))
    zmax = z.max(axis=1)
    out = -zmax + (D - 1) * math.log(alpha) + gammaln(D) + u.sum(axis=1) - D * logsumexp(u, axis=1)
    return _finish(out, zmax, squeeze)


def logpdf_gumbel_u(alpha, beta, z):
    if not alpha > 1:
        raise DomainError("GumbelU needs alpha > 1 (E[exp U_j] finite)")
    squeeze = np.ndim(z) == 1
    z = _rows(z)
    D = z.shape[1]
    beta = np.asarray(beta, dtype=float)
    u = -alpha * (z - beta)
    zmax = z.max(axis=1)
    log_norm = (D - 1) * math.log(alpha) + gammaln(D - 1 / alpha) - gammaln(1 - 1 / alpha) \
        - logsumexp(alpha * beta) / alpha
    out = log_norm + u.sum(axis=1) - (D - 1 / alpha) * logsumexp(u, axis=1)
    return _finish(out, zmax, squeeze)


def logpdf_revexp_t(alpha, beta, z):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise DomainError("RevExpT needs every alpha_j > 0")
    squeeze = np.ndim(z) == 1
    z = _rows(z)
    beta = np.asarray(beta, dtype=float)
    a_sum = alpha.sum()
    zmax = z.max(axis=1)
    out = -zmax - (z + beta).max(axis=1) * a_sum - math.log(a_sum) \
        + np.log(alpha).sum() + ((z + beta) * alpha).sum(axis=1)
    return _finish(out, zmax, squeeze)


LOGPDF = {"GumbelT": logpdf_gumbel_t, "GumbelU": logpdf_gumbel_u, "RevExpT": logpdf_revexp_t}


def density_gumbel_t(alpha, beta, z):
    return np.exp(logpdf_gumbel_t(alpha, beta, z))


def density_gumbel_u(alpha, beta, z):
    return np.exp(logpdf_gumbel_u(alpha, beta, z))


def density_revexp_t(alpha_vec, beta_vec, z):
    return np.exp(logpdf_revexp_t(alpha_vec, beta_vec, z))


# -- simulation -----------------------------------------------------------------

def draw_t(kind, alpha, beta, n, rng):
    """Independent-component T vectors for the T-constructions."""
    beta = np.asarray(beta, dtype=float)
    D = beta.size
    if kind == "gumbel":
        return beta + rng.gumbel(size=(n, D)) / alpha
    if kind == "revexp":
        return -beta - rng.exponential(size=(n, D)) / np.asarray(alpha, dtype=float)
    raise ValueError(f"unknown generator {kind!r}")


def simulate_standard_mgp(generator: str, alpha, beta, n: int, seed=None, return_e=False):
    """Rows E + T - max(T); ``generator`` is ``"gumbel"`` or ``"revexp"``.

    With ``return_e`` the unit-exponential draws E are returned too
    (row maxima equal E by construction).
    """
    rng = np.random.default_rng(seed)
    T = draw_t(generator, alpha, beta, n, rng)
    E = rng.exponential(size=n)
    Z = E[:, None] + (T - T.max(axis=1, keepdims=True))
    return (Z, E) if return_e else Z


# -- probability of the uncensored region {z > 0} ---------------------------------

@lru_cache(maxsize=8)
def _sobol_base(D: int, m: int = 13):
    u = qmc.Sobol(d=D, scramble=True, seed=20240917).random_base2(m)
    u = np.clip(u, 1e-12, 1 - 1e-12)
    gumbel = -np.log(-np.log(u))
    expo = -np.log1p(-u)
    gumbel.setflags(write=False)
    expo.setflags(write=False)
    return gumbel, expo


def prob_all_positive(kind: str, alpha, beta) -> float:
    """P(Z_j > 0 for all j) under the standard MGP model.

    T-constructions give E[exp(min T - max T)] (fixed scrambled-Sobol points,
    so the value is a continuous function of the parameters). The Gumbel
    U-construction gives E[exp(min U)] / E[exp(max U)], evaluated by 1-D
    quadrature and in closed form respectively.
    """
    beta = np.asarray(beta, dtype=float)
    D = beta.size
    if D == 1:
        return 1.0
    gumbel, expo = _sobol_base(D)
    if kind == "GumbelT":
        T = beta + gumbel / alpha
    elif kind == "RevExpT":
        T = -beta - expo / np.asarray(alpha, dtype=float)
    elif kind == "GumbelU":
        shift = beta.max()
        b = beta - shift

        def integrand(s):
            # exp(s) * P(min U > s) with P(U_j > s) = 1 - exp(-exp(-alpha (s - b_j)))
            with np.errstate(divide="ignore"):
                return math.exp(s + np.sum(np.log(-np.expm1(-np.exp(-alpha * (s - b))))))

        lo = b.min() - 40.0 / alpha
        hi = b.min() + 5.0
        e_min, _ = integrate.quad(integrand, lo, hi, limit=200, points=[b.min()])
        tail, _ = integrate.quad(integrand, hi, np.inf, limit=200)
        e_min += tail
        log_e_max = gammaln(1 - 1 / alpha) + logsumexp(alpha * b) / alpha
        return float(e_min * math.exp(-log_e_max))
    else:
        raise ValueError(kind)
    return float(np.mean(np.exp(T.min(axis=1) - T.max(axis=1))))
