"""Adaptive trial designs: the allocation/stopping/rejection contract plus the
two reference designs with known behavior.

A design owns per-arm canonical families, hard per-arm sample caps tau_max,
and a rejection rule with a one-dimensional tuning parameter lam that is
monotone: raising lam can only add rejections. Allocation and stopping may
depend on observed data and allocation randomness only, never on the true
parameter.

Every design exposes two equivalent simulation routes: `run_trial` (scalar,
stream-driven, the readable contract) and `simulate_records` (numba batch
kernel over per-replication counter substreams). Tests pin them bit-equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special as sp
from numba import njit, prange

from .domain import Hypothesis
from .errors import ConfigError, DomainError
from .rng import beta_at, beta_draw, ppnd16, split_seed, uniform_at


@dataclass(frozen=True, eq=False)
class TrialOutcome:
    """One simulated run: rejection flags, stacked sufficient statistic at the
    stopping time, and per-arm realized sample counts."""

    rejections: np.ndarray  # bool, length n_hypotheses
    suff_stat: np.ndarray  # float, length d
    arm_counts: np.ndarray  # int, length K


def run_trial(design, theta, stream):
    """Simulate one complete trial; a pure function of (design, theta, stream)."""
    return design.run_trial(theta, stream)


def score_vector(design, outcome, theta_j):
    """Stopped score T(X_tau) - grad A_tau(theta_j); mean-zero under theta_j."""
    theta = design.check_theta(theta_j)
    grad_tau = np.zeros(design.param_dim)
    for k, (fam, sl) in enumerate(zip(design.arm_families, design.arm_slices)):
        grad_tau[sl] = outcome.arm_counts[k] * fam.grad_A(theta[sl])
    return np.asarray(outcome.suff_stat, dtype=float) - grad_tau


def thompson_allocate(alphas, betas, stream, tie_counter=0, sampler=None):
    """Draw one value per arm from its Beta posterior and pick the argmax arm.

    Draws go through the gamma-ratio identity beta(a,b) ~ G_a / (G_a + G_b);
    exact posterior-draw ties alternate arms via the counter. Returns
    (arm index, updated tie counter).
    """
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if alphas.shape != betas.shape or alphas.ndim != 1 or alphas.size < 2:
        raise DomainError("posterior parameters must be parallel vectors over >= 2 arms")
    if np.any(alphas < 1.0) or np.any(betas < 1.0):
        raise DomainError("Beta posterior parameters must be >= 1 (uniform prior plus counts)")
    draw = sampler if sampler is not None else beta_draw
    values = [draw(a, b, stream) for a, b in zip(alphas, betas)]
    best = max(values)
    winners = [k for k, v in enumerate(values) if v == best]
    if len(winners) == 1:
        return winners[0], tie_counter
    arm = winners[tie_counter % len(winners)]
    return arm, tie_counter + 1


def thompson_reject(successes, failures, p0, threshold, lam=0.0):
    """Reject arm i iff its posterior mass above p0 reaches threshold - lam.

    The posterior under a uniform prior is Beta(1+s, 1+f); its tail mass above
    p0 is 1 - I_{p0}(1+s, 1+f) with I the regularized incomplete beta. The
    predicate is evaluated in the algebraically equivalent complement form
    I <= 1 - threshold + lam: near-certain posteriors have tails that round
    to 1.0 in floats, and calibration must still separate them.
    """
    s = np.asarray(successes, dtype=float)
    f = np.asarray(failures, dtype=float)
    if np.any(s < 0) or np.any(f < 0):
        raise DomainError("success/failure counts must be nonnegative")
    if not (0.0 < p0 < 1.0) or not (0.0 < threshold < 1.0):
        raise DomainError("p0 and threshold must lie in (0, 1)")
    lower_mass = sp.betainc(1.0 + s, 1.0 + f, p0)
    return lower_mass <= 1.0 - (threshold - lam)


# --------------------------------------------------------------------------
# batch kernels


@njit(cache=True, parallel=True)
def _gaussian_kernel(master_lo, master_hi, tile_index, rep_start, n_reps,
                     theta0, theta1, n_per_arm, sigma, out):
    rt = math.sqrt(n_per_arm)
    for i in prange(n_reps):
        rep = rep_start + i
        z0 = ppnd16(uniform_at(master_lo, master_hi, tile_index, rep, 0))
        z1 = ppnd16(uniform_at(master_lo, master_hi, tile_index, rep, 1))
        out[i, 0] = n_per_arm * theta0 + rt * sigma * z0
        out[i, 1] = n_per_arm * theta1 + rt * sigma * z1


@njit(cache=True, parallel=True)
def _thompson_kernel(master_lo, master_hi, tile_index, rep_start, n_reps,
                     p_arm0, p_arm1, n_total, out):
    for i in prange(n_reps):
        rep = rep_start + i
        idx = 0
        s0 = 0
        f0 = 0
        s1 = 0
        f1 = 0
        alt = 0
        for _ in range(n_total):
            b0, idx = beta_at(1.0 + s0, 1.0 + f0, master_lo, master_hi, tile_index, rep, idx)
            b1, idx = beta_at(1.0 + s1, 1.0 + f1, master_lo, master_hi, tile_index, rep, idx)
            if b0 > b1:
                arm = 0
            elif b1 > b0:
                arm = 1
            else:
                arm = alt % 2
                alt += 1
            u = uniform_at(master_lo, master_hi, tile_index, rep, idx)
            idx += 1
            if arm == 0:
                if u < p_arm0:
                    s0 += 1
                else:
                    f0 += 1
            else:
                if u < p_arm1:
                    s1 += 1
                else:
                    f1 += 1
        out[i, 0] = s0
        out[i, 1] = f0
        out[i, 2] = s1
        out[i, 3] = f1


# --------------------------------------------------------------------------
# reference designs


class ParallelGaussianDesign:
    """Two independent one-sample z-tests run in parallel (known sigma).

    Arm k enrolls exactly n_per_arm patients and rejects its null
    H_k: mu_k <= mu0 when (ybar - mu0) / (sigma / sqrt(n)) > z_{1-alpha} - lam.
    The per-arm observation sum is simulated directly through the
    location-scale identity; it is the complete sufficient statistic, so the
    trial law is unchanged and each replication costs two uniforms.
    """

    design_id = "parallel_gaussian"
    n_arms = 2
    n_hypotheses = 2
    has_oracle = True

    def __init__(self, n_per_arm=10, sigma=1.0, alpha=0.025, mu0=0.0, lam=0.0):
        from .expfam import GaussianKnownVar

        if n_per_arm < 1:
            raise ConfigError("n_per_arm must be >= 1")
        if not 0.0 < alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        self.n_per_arm = int(n_per_arm)
        self.sigma = float(sigma)
        self.alpha = float(alpha)
        self.mu0 = float(mu0)
        self.lam = float(lam)
        self.zcrit = float(sp.ndtri(1.0 - self.alpha))
        fam = GaussianKnownVar(self.sigma)
        self.arm_families = (fam, fam)
        self.arm_slices = (slice(0, 1), slice(1, 2))
        self.param_dim = 2
        self.tau_max = (self.n_per_arm, self.n_per_arm)

    def with_lambda(self, lam):
        return ParallelGaussianDesign(self.n_per_arm, self.sigma, self.alpha, self.mu0, lam)

    def hypotheses(self):
        return [Hypothesis(0, self.mu0, "<="), Hypothesis(1, self.mu0, "<=")]

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise DomainError(f"theta must have length {self.param_dim}")
        for fam, sl in zip(self.arm_families, self.arm_slices):
            fam.check_theta(theta[sl])
        return theta

    # scalar route
    def run_trial(self, theta, stream):
        theta = self.check_theta(theta)
        rt = math.sqrt(self.n_per_arm)
        sums = np.empty(2)
        for k in range(2):
            z = ppnd16(stream.next())
            sums[k] = self.n_per_arm * theta[k] + rt * self.sigma * z
        records = sums.reshape(1, 2)
        return TrialOutcome(
            rejections=self.rejections(records)[0],
            suff_stat=self.suff_stats(records)[0],
            arm_counts=self.arm_counts(records)[0],
        )

    # batch route
    def simulate_records(self, theta, master_seed, tile_index, rep_start, n_reps):
        theta = self.check_theta(theta)
        lo, hi = split_seed(master_seed)
        out = np.empty((n_reps, 2))
        _gaussian_kernel(lo, hi, tile_index, rep_start, n_reps,
                         theta[0], theta[1], self.n_per_arm, self.sigma, out)
        return out

    def rejections(self, records, lam=None):
        lam = self.lam if lam is None else float(lam)
        zstat = (records - self.n_per_arm * self.mu0) / (self.sigma * math.sqrt(self.n_per_arm))
        return zstat > self.zcrit - lam

    def suff_stats(self, records):
        return records / self.sigma**2

    def arm_counts(self, records):
        return np.full((records.shape[0], 2), self.n_per_arm, dtype=np.int64)

    def score_matrix(self, records, theta):
        theta = self.check_theta(theta)
        out = self.suff_stats(records).astype(float).copy()
        counts = self.arm_counts(records)
        for k, (fam, sl) in enumerate(zip(self.arm_families, self.arm_slices)):
            out[:, sl] -= counts[:, k, None] * fam.grad_A(theta[sl])[None, :]
        return out

    # closed forms from the two-independent-z-tests structure
    def f1(self, mu, lam=None):
        lam = self.lam if lam is None else float(lam)
        arg = (mu - self.mu0) * math.sqrt(self.n_per_arm) / self.sigma - (self.zcrit - lam)
        return float(sp.ndtr(arg))

    def f2(self, theta0, theta1, lam=None):
        return 1.0 - (1.0 - self.f1(theta0, lam)) * (1.0 - self.f1(theta1, lam))

    def false_rejection_rate(self, theta, null_signature, lam=None):
        """Exact chance of rejecting at least one signature-flagged hypothesis."""
        keep = 1.0
        for k, is_null in enumerate(null_signature):
            if is_null:
                keep *= 1.0 - self.f1(theta[k], lam)
        return 1.0 - keep


class ThompsonBernoulliDesign:
    """Two-arm Bayesian Bernoulli trial with Thompson-sampling allocation.

    n_total patients are allocated one at a time to the arm whose posterior
    draw is largest (uniform priors). At the end, arm i's null
    H_i: p_i <= p0 is rejected when the posterior mass above p0 reaches
    threshold - lam. Gridding is over the per-arm log-odds.
    """

    design_id = "thompson"
    n_arms = 2
    n_hypotheses = 2
    has_oracle = False

    def __init__(self, n_total=100, p0=0.6, threshold=0.95, lam=0.0):
        from .expfam import BernoulliLogOdds

        if n_total < 1:
            raise ConfigError("n_total must be >= 1")
        if not (0.0 < p0 < 1.0 and 0.0 < threshold < 1.0):
            raise ConfigError("p0 and threshold must lie in (0, 1)")
        self.n_total = int(n_total)
        self.p0 = float(p0)
        self.threshold = float(threshold)
        self.lam = float(lam)
        fam = BernoulliLogOdds()
        self.arm_families = (fam, fam)
        self.arm_slices = (slice(0, 1), slice(1, 2))
        self.param_dim = 2
        # any single arm could receive every patient
        self.tau_max = (self.n_total, self.n_total)
        self._tail_table = None

    def with_lambda(self, lam):
        return ThompsonBernoulliDesign(self.n_total, self.p0, self.threshold, lam)

    @property
    def eta0(self):
        return math.log(self.p0 / (1.0 - self.p0))

    def hypotheses(self):
        return [Hypothesis(0, self.eta0, "<="), Hypothesis(1, self.eta0, "<=")]

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise DomainError(f"theta must have length {self.param_dim}")
        for fam, sl in zip(self.arm_families, self.arm_slices):
            fam.check_theta(theta[sl])
        return theta

    def _probs(self, theta):
        return np.array([1.0 / (1.0 + math.exp(-theta[0])), 1.0 / (1.0 + math.exp(-theta[1]))])

    # scalar route
    def run_trial(self, theta, stream, posterior_sampler=None):
        theta = self.check_theta(theta)
        probs = self._probs(theta)
        s = np.zeros(2, dtype=np.int64)
        f = np.zeros(2, dtype=np.int64)
        tie = 0
        for _ in range(self.n_total):
            arm, tie = thompson_allocate(1 + s, 1 + f, stream, tie, posterior_sampler)
            if stream.next() < probs[arm]:
                s[arm] += 1
            else:
                f[arm] += 1
        records = np.array([[s[0], f[0], s[1], f[1]]], dtype=np.int64)
        return TrialOutcome(
            rejections=self.rejections(records)[0],
            suff_stat=self.suff_stats(records)[0],
            arm_counts=self.arm_counts(records)[0],
        )

    # batch route
    def simulate_records(self, theta, master_seed, tile_index, rep_start, n_reps):
        theta = self.check_theta(theta)
        probs = self._probs(theta)
        lo, hi = split_seed(master_seed)
        # int16 keeps desk-scale record bases (tiles x reps x 4) in memory
        out = np.empty((n_reps, 4), dtype=np.int16)
        _thompson_kernel(lo, hi, tile_index, rep_start, n_reps,
                         probs[0], probs[1], self.n_total, out)
        return out

    def _lower_masses(self):
        """Posterior mass at or below p0 for every reachable (s, f) pair.

        The complement of the rejection tail; kept on this side so values
        near certainty retain full float precision (see thompson_reject).
        """
        if self._tail_table is None:
            grid = np.arange(self.n_total + 1, dtype=float)
            a = 1.0 + grid[:, None]
            b = 1.0 + grid[None, :]
            self._tail_table = sp.betainc(a, b, self.p0)
        return self._tail_table

    def rejections(self, records, lam=None):
        lam = self.lam if lam is None else float(lam)
        lower = self._lower_masses()
        rhs = 1.0 - (self.threshold - lam)
        rej = np.empty((records.shape[0], 2), dtype=bool)
        rej[:, 0] = lower[records[:, 0], records[:, 1]] <= rhs
        rej[:, 1] = lower[records[:, 2], records[:, 3]] <= rhs
        return rej

    def suff_stats(self, records):
        return records[:, (0, 2)].astype(float)

    def arm_counts(self, records):
        return np.stack([records[:, 0] + records[:, 1], records[:, 2] + records[:, 3]], axis=1)

    def score_matrix(self, records, theta):
        theta = self.check_theta(theta)
        out = self.suff_stats(records)
        counts = self.arm_counts(records)
        for k, (fam, sl) in enumerate(zip(self.arm_families, self.arm_slices)):
            out[:, sl] -= counts[:, k, None] * fam.grad_A(theta[sl])[None, :]
        return out


DESIGNS = {
    ParallelGaussianDesign.design_id: ParallelGaussianDesign,
    ThompsonBernoulliDesign.design_id: ThompsonBernoulliDesign,
}
