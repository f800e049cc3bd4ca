"""Canonical exponential families for trial arms.

Each family is expressed in canonical form h(x)·exp(theta·T(x) − A(theta))
and exposes exactly what the bound machinery consumes: observation sampling
from explicit uniform draws, the sufficient statistic, the log-partition
A and its first two derivatives, and a conservative tile-wise dominating
matrix for the Hessian. The carrier h(x) is never materialized: it is
theta-free and cancels out of every score and bound formula.

Gridding must happen in these canonical coordinates (log-odds for Bernoulli
arms, (eta1, eta2) for the unknown-variance Gaussian); the curvature bounds
below are only valid there.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import DomainError
from .rng import ppnd16

NEG_INF = float("-inf")
POS_INF = float("inf")


@njit(cache=True)
def _ppnd_vec(us):
    out = np.empty(us.shape[0])
    for i in range(us.shape[0]):
        out[i] = ppnd16(us[i])
    return out


def _interval_mul(a, b):
    """Product interval of two closed intervals."""
    cands = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return min(cands), max(cands)


def _interval_square(a):
    lo, hi = a
    if lo <= 0.0 <= hi:
        return 0.0, max(lo * lo, hi * hi)
    s = (lo * lo, hi * hi)
    return min(s), max(s)


class BernoulliLogOdds:
    """Bernoulli outcomes with natural parameter eta = log(p / (1 - p))."""

    param_dim = 1
    suff_dim = 1
    draws_per_obs = 1
    domain = ((NEG_INF, POS_INF),)

    name = "bernoulli_logodds"

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (1,) or not np.isfinite(theta).all():
            raise DomainError(f"bernoulli natural parameter must be one finite real, got {theta}")
        return theta

    def mean_prob(self, theta):
        eta = self.check_theta(theta)[0]
        return 1.0 / (1.0 + math.exp(-eta))

    def log_partition(self, theta):
        eta = self.check_theta(theta)[0]
        return max(eta, 0.0) + math.log1p(math.exp(-abs(eta)))

    def grad_A(self, theta):
        return np.array([self.mean_prob(theta)])

    def hess_A(self, theta):
        p = self.mean_prob(theta)
        return np.array([[p * (1.0 - p)]])

    def hess_A_tile_max(self, lower, upper):
        """p(1-p) peaks at eta = 0 and decays in |eta|; evaluate at the
        interval point nearest 0 (global cap 1/4 falls out automatically)."""
        lo, hi = float(lower[0]), float(upper[0])
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise DomainError(f"invalid bernoulli interval [{lo}, {hi}]")
        eta_star = min(max(0.0, lo), hi)
        p = 1.0 / (1.0 + math.exp(-eta_star))
        return np.array([[p * (1.0 - p)]])

    def sample(self, theta, draws):
        p = self.mean_prob(theta)
        return np.array([1.0 if draws[0] < p else 0.0])

    def sample_many(self, theta, us):
        p = self.mean_prob(theta)
        return (np.asarray(us)[:, 0] < p).astype(float).reshape(-1, 1)

    def suff_stat(self, obs):
        return np.asarray(obs, dtype=float)


class GaussianKnownVar:
    """Gaussian outcomes with known variance, natural parameter the mean.

    With T(x) = x / sigma^2 the family is canonical in theta = mu, so the
    per-sample information 1/sigma^2 is constant over the parameter space.
    """

    param_dim = 1
    suff_dim = 1
    draws_per_obs = 1
    domain = ((NEG_INF, POS_INF),)

    def __init__(self, sigma=1.0):
        if not (sigma > 0.0 and math.isfinite(sigma)):
            raise DomainError(f"sigma must be positive and finite, got {sigma}")
        self.sigma = float(sigma)
        self.name = f"gaussian_sigma{sigma:g}"

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (1,) or not np.isfinite(theta).all():
            raise DomainError(f"gaussian mean must be one finite real, got {theta}")
        return theta

    def log_partition(self, theta):
        mu = self.check_theta(theta)[0]
        return mu * mu / (2.0 * self.sigma**2)

    def grad_A(self, theta):
        mu = self.check_theta(theta)[0]
        return np.array([mu / self.sigma**2])

    def hess_A(self, theta):
        self.check_theta(theta)
        return np.array([[1.0 / self.sigma**2]])

    def hess_A_tile_max(self, lower, upper):
        lo, hi = float(lower[0]), float(upper[0])
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise DomainError(f"invalid gaussian interval [{lo}, {hi}]")
        return np.array([[1.0 / self.sigma**2]])

    def sample(self, theta, draws):
        mu = self.check_theta(theta)[0]
        return np.array([mu + self.sigma * ppnd16(draws[0])])

    def sample_many(self, theta, us):
        mu = self.check_theta(theta)[0]
        z = _ppnd_vec(np.ascontiguousarray(np.asarray(us)[:, 0]))
        return (mu + self.sigma * z).reshape(-1, 1)

    def suff_stat(self, obs):
        return np.asarray(obs, dtype=float) / self.sigma**2


class GaussianUnknownVar:
    """Gaussian with unknown mean and variance: eta = (mu/sigma^2, -1/(2 sigma^2)),
    T(x) = (x, x^2), A(eta) = -eta1^2/(4 eta2) - log(-2 eta2)/2."""

    param_dim = 2
    suff_dim = 2
    draws_per_obs = 1
    domain = ((NEG_INF, POS_INF), (NEG_INF, 0.0))

    name = "gaussian_unknown_var"

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (2,) or not np.isfinite(theta).all():
            raise DomainError(f"natural parameter must be two finite reals, got {theta}")
        if not theta[1] < 0.0:
            raise DomainError(f"eta2 must be negative, got {theta[1]}")
        return theta

    def log_partition(self, theta):
        e1, e2 = self.check_theta(theta)
        return -e1 * e1 / (4.0 * e2) - 0.5 * math.log(-2.0 * e2)

    def grad_A(self, theta):
        e1, e2 = self.check_theta(theta)
        return np.array([-e1 / (2.0 * e2), e1 * e1 / (4.0 * e2 * e2) - 1.0 / (2.0 * e2)])

    def hess_A(self, theta):
        e1, e2 = self.check_theta(theta)
        h11 = -1.0 / (2.0 * e2)
        h12 = e1 / (2.0 * e2 * e2)
        h22 = -e1 * e1 / (2.0 * e2**3) + 1.0 / (2.0 * e2 * e2)
        return np.array([[h11, h12], [h12, h22]])

    def hess_A_tile_max(self, lower, upper):
        """Entry-wise interval bounds assembled into a dominating diagonal by
        pushing the worst off-diagonal magnitude onto both diagonal entries."""
        l1, l2 = float(lower[0]), float(lower[1])
        u1, u2 = float(upper[0]), float(upper[1])
        if not (l1 <= u1 and l2 <= u2):
            raise DomainError("interval bounds out of order")
        if not u2 < 0.0:
            raise DomainError(f"eta2 interval must stay negative, got upper {u2}")
        # -1/(2 eta2) and -1/(2 eta2^3) are increasing in eta2 on eta2 < 0
        a11 = (-1.0 / (2.0 * l2), -1.0 / (2.0 * u2))
        inv_2e2sq = (1.0 / (2.0 * l2 * l2), 1.0 / (2.0 * u2 * u2))
        a12 = _interval_mul((l1, u1), inv_2e2sq)
        neg_inv_2e2cu = (-1.0 / (2.0 * l2**3), -1.0 / (2.0 * u2**3))
        a22_first = _interval_mul(_interval_square((l1, u1)), neg_inv_2e2cu)
        a22 = (a22_first[0] + inv_2e2sq[0], a22_first[1] + inv_2e2sq[1])
        w = max(abs(a12[0]), abs(a12[1]))
        return np.array([[a11[1] + w, 0.0], [0.0, a22[1] + w]])

    def mean_and_sd(self, theta):
        e1, e2 = self.check_theta(theta)
        var = -1.0 / (2.0 * e2)
        return -e1 / (2.0 * e2), math.sqrt(var)

    def sample(self, theta, draws):
        mu, sd = self.mean_and_sd(theta)
        return np.array([mu + sd * ppnd16(draws[0])])

    def sample_many(self, theta, us):
        mu, sd = self.mean_and_sd(theta)
        z = _ppnd_vec(np.ascontiguousarray(np.asarray(us)[:, 0]))
        return (mu + sd * z).reshape(-1, 1)

    def suff_stat(self, obs):
        x = np.asarray(obs, dtype=float)
        return np.array([x[0], x[0] * x[0]])
