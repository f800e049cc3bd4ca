"""Family-level checks: frozen example values, derivative identities against
finite differences, and the Monte Carlo moment/covariance identities."""

import math

import numpy as np
import pytest

from tilebound.errors import DomainError
from tilebound.expfam import BernoulliLogOdds, GaussianKnownVar, GaussianUnknownVar

BERN = BernoulliLogOdds()
GAUSS1 = GaussianKnownVar(1.0)
GUV = GaussianUnknownVar()

ETA_06 = math.log(0.6 / 0.4)


def random_theta(family, rng):
    if family is GUV:
        return np.array([rng.uniform(-3, 3), rng.uniform(-4, -0.05)])
    return np.array([rng.uniform(-3, 3)])


# ---------------------------------------------------------------- sampling

def test_bernoulli_sample_threshold():
    assert BERN.sample(np.array([0.0]), [0.3])[0] == 1.0
    assert BERN.sample(np.array([ETA_06]), [0.61])[0] == 0.0


def test_gaussian_sample_location_scale():
    fam = GaussianKnownVar(3.0)
    # u = 0.5 maps to z = 0, so the observation is exactly the mean
    assert fam.sample(np.array([2.0]), [0.5])[0] == 2.0


def test_sample_determinism():
    rng = np.random.default_rng(0)
    for fam in (BERN, GAUSS1, GUV):
        theta = random_theta(fam, rng)
        u = rng.uniform()
        a = fam.sample(theta, [u])
        b = fam.sample(theta, [u])
        assert np.array_equal(a, b)


@pytest.mark.parametrize("fam", [BERN, GAUSS1, GUV])
def test_sample_many_matches_scalar(fam):
    rng = np.random.default_rng(5)
    theta = random_theta(fam, rng)
    us = rng.uniform(size=(500, 1))
    batch = fam.sample_many(theta, us)
    for i in range(us.shape[0]):
        assert np.array_equal(batch[i], fam.sample(theta, us[i]))


# ----------------------------------------------------- derivative examples

def test_grad_examples():
    assert np.allclose(GUV.grad_A(np.array([0.0, -0.5])), [0.0, 1.0], atol=0)
    assert BERN.grad_A(np.array([0.0]))[0] == 0.5
    assert GAUSS1.grad_A(np.array([0.7]))[0] == 0.7
    assert GAUSS1.log_partition(np.array([0.7])) == pytest.approx(0.7**2 / 2, abs=0)


def test_hess_examples():
    assert BERN.hess_A(np.array([0.0]))[0, 0] == 0.25
    # covariance identity at the standard normal: Var(x) = 1, Cov(x, x^2) = 0,
    # Var(x^2) = E[x^4] - 1 = 2
    assert np.allclose(GUV.hess_A(np.array([0.0, -0.5])), [[1.0, 0.0], [0.0, 2.0]], atol=0)
    p = 0.6
    assert BERN.hess_A(np.array([ETA_06]))[0, 0] == pytest.approx(p * (1 - p), abs=1e-12)


def test_tile_max_examples():
    p02 = 1.0 / (1.0 + math.exp(-0.2))
    got = BERN.hess_A_tile_max([0.2], [0.5])[0, 0]
    assert got == pytest.approx(p02 * (1 - p02), abs=1e-15)
    assert got == pytest.approx(0.2475, abs=5e-5)
    assert BERN.hess_A_tile_max([-0.1], [0.3])[0, 0] == 0.25
    assert GaussianKnownVar(1.0).hess_A_tile_max([-7.0], [11.0])[0, 0] == 1.0


# ------------------------------------------------- finite-difference oracles

@pytest.mark.parametrize("fam", [BERN, GAUSS1, GUV])
def test_grad_matches_fd_of_log_partition(fam):
    rng = np.random.default_rng(11)
    h = 1e-6
    for _ in range(25):
        theta = random_theta(fam, rng)
        grad = fam.grad_A(theta)
        for j in range(fam.param_dim):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (fam.log_partition(tp) - fam.log_partition(tm)) / (2 * h)
            assert grad[j] == pytest.approx(fd, rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("fam", [BERN, GAUSS1, GUV])
def test_hess_matches_fd_of_grad(fam):
    rng = np.random.default_rng(12)
    h = 1e-6
    for _ in range(25):
        theta = random_theta(fam, rng)
        hess = fam.hess_A(theta)
        for j in range(fam.param_dim):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (fam.grad_A(tp) - fam.grad_A(tm)) / (2 * h)
            assert np.allclose(hess[:, j], fd, rtol=1e-4, atol=1e-6)


# ----------------------------------------------------------- psd properties

@pytest.mark.parametrize("fam", [BERN, GAUSS1, GUV])
def test_hessian_psd(fam):
    rng = np.random.default_rng(21)
    for _ in range(1000):
        theta = random_theta(fam, rng)
        v = rng.normal(size=fam.param_dim)
        hess = fam.hess_A(theta)
        assert v @ hess @ v >= -1e-12
        assert np.array_equal(hess, hess.T)


@pytest.mark.parametrize("fam", [BERN, GAUSS1, GUV])
def test_tile_max_dominates(fam):
    rng = np.random.default_rng(22)
    for _ in range(40):
        if fam is GUV:
            lo = np.array([rng.uniform(-3, 2.5), rng.uniform(-4, -0.3)])
            hi = lo + rng.uniform(0.01, 0.5, size=2)
            hi[1] = min(hi[1], -0.05)
        else:
            lo = np.array([rng.uniform(-3, 2.5)])
            hi = lo + rng.uniform(0.01, 0.5, size=1)
        cap = fam.hess_A_tile_max(lo, hi)
        for _ in range(25):
            theta = lo + rng.uniform(size=fam.param_dim) * (hi - lo)
            v = rng.normal(size=fam.param_dim)
            assert v @ (cap - fam.hess_A(theta)) @ v >= -1e-12


# ----------------------------------------------- monte carlo moment identity

@pytest.mark.parametrize("fam,theta", [
    (BERN, np.array([0.4])),
    (GAUSS1, np.array([0.3])),
    (GUV, np.array([0.5, -0.7])),
])
def test_moment_consistency(fam, theta):
    rng = np.random.default_rng(31)
    n = 1_000_000
    us = rng.uniform(size=(n, 1))
    obs = fam.sample_many(theta, us)
    if fam is GUV:
        ts = np.column_stack([obs[:, 0], obs[:, 0] ** 2])
    elif fam is GAUSS1:
        ts = obs / fam.sigma**2
    else:
        ts = obs
    grad = fam.grad_A(theta)
    hess = fam.hess_A(theta)
    mean = ts.mean(axis=0)
    se_mean = ts.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(mean - grad) <= 5 * se_mean)
    centered = ts - mean
    for j in range(fam.suff_dim):
        for k in range(fam.suff_dim):
            prod = centered[:, j] * centered[:, k]
            cov = prod.mean()
            se = prod.std(ddof=1) / math.sqrt(n)
            assert abs(cov - hess[j, k]) <= 5 * se


# ------------------------------------------------------------ domain errors

def test_domain_errors():
    with pytest.raises(DomainError):
        GUV.grad_A(np.array([0.0, 0.0]))  # eta2 must be < 0
    with pytest.raises(DomainError):
        GUV.hess_A(np.array([0.0, 0.5]))
    with pytest.raises(DomainError):
        BERN.grad_A(np.array([float("nan")]))
    with pytest.raises(DomainError):
        GAUSS1.sample(np.array([float("inf")]), [0.5])
    with pytest.raises(DomainError):
        GaussianKnownVar(-1.0)
    with pytest.raises(DomainError):
        GUV.hess_A_tile_max([0.0, -1.0], [0.0, 0.5])
