"""Engine tests: Clopper-Pearson oracles and conservativeness, batch-split
and schedule invariance, unbiasedness against the closed form, checkpoints."""

import math

import numpy as np
import pytest
import scipy.special as sp

from tilebound.designs import ParallelGaussianDesign, ThompsonBernoulliDesign
from tilebound.domain import Tile
from tilebound.engine import (
    Checkpoint,
    SeedPolicy,
    TileSummary,
    clopper_pearson_upper,
    config_digest,
    normal_approx_upper,
    simulate_tile,
    simulate_tile_records,
    summarize_records,
)
from tilebound.errors import ConfigError, DomainError

GAUSS = ParallelGaussianDesign()
THOMPSON = ThompsonBernoulliDesign()


def make_tile(center, half, signature, index=0):
    center = np.asarray(center, dtype=float)
    half = np.asarray(half, dtype=float)
    return Tile(index, center, half, np.asarray(signature, dtype=bool))


# ---------------------------------------------------------- clopper-pearson

def test_cp_boundary_cases():
    assert clopper_pearson_upper(10, 10, 0.005) == 1.0
    expected = 1.0 - 0.005 ** (1.0 / 100.0)
    assert clopper_pearson_upper(0, 100, 0.005) == pytest.approx(expected, rel=1e-12)


def _binom_cdf_log(k, n, p):
    """log-space exact binomial CDF, independent of the incomplete beta route."""
    i = np.arange(0, k + 1)
    logpmf = (sp.gammaln(n + 1) - sp.gammaln(i + 1) - sp.gammaln(n - i + 1)
              + i * math.log(p) + (n - i) * math.log1p(-p))
    return np.exp(logpmf).sum()


def test_cp_against_bisection_oracle():
    k, n, tail = 25, 1000, 0.005
    lo, hi = k / n, 1.0
    for _ in range(60):
        mid = (lo + hi) / 2
        if _binom_cdf_log(k, n, mid) > tail:
            lo = mid
        else:
            hi = mid
    oracle = (lo + hi) / 2
    assert clopper_pearson_upper(k, n, tail) == pytest.approx(oracle, abs=1e-10)


def test_cp_conservative_coverage():
    rng = np.random.default_rng(10)
    tail = 0.025
    for p in (0.01, 0.05, 0.2):
        for n in (1000, 10_000):
            ks = rng.binomial(n, p, size=2000)
            uppers = np.where(
                ks == n, 1.0, sp.betaincinv(ks + 1.0, (n - ks).astype(float), 1.0 - tail)
            )
            freq = (uppers < p).mean()
            assert freq <= tail + 3 * math.sqrt(tail * (1 - tail) / 2000)


def test_cp_validation():
    with pytest.raises(DomainError):
        clopper_pearson_upper(5, 4, 0.01)
    with pytest.raises(DomainError):
        clopper_pearson_upper(1, 10, 0.0)


def test_normal_approx_close_to_cp_at_scale():
    cp = clopper_pearson_upper(2500, 50_000, 0.005)
    na = normal_approx_upper(2500, 50_000, 0.005)
    assert abs(cp - na) < 5e-4


# ------------------------------------------------------------ simulate_tile

def test_pure_alternative_tile_short_circuits():
    tile = make_tile([0.5, 0.5], [0.1, 0.1], [False, False])
    s = simulate_tile(GAUSS, tile, 1000, SeedPolicy(1))
    assert s.false_rej_count == 0
    assert s.n_sims == 1000
    assert np.array_equal(s.score_sum, np.zeros(2))


def test_gaussian_rate_at_origin():
    tile = make_tile([0.0, 0.0], [1 / 64, 1 / 64], [True, True])
    s = simulate_tile(GAUSS, tile, 50_000, SeedPolicy(20240501))
    exact = 0.049375
    se = math.sqrt(exact * (1 - exact) / 50_000)
    assert abs(s.false_rej_count / 50_000 - exact) <= 5 * se


def test_gaussian_rate_partial_null():
    tile = make_tile([0.5, -0.5], [1 / 64, 1 / 64], [False, True])
    s = simulate_tile(GAUSS, tile, 50_000, SeedPolicy(7))
    exact = GAUSS.f1(-0.5)  # false rejection means rejecting H2 alone
    se = math.sqrt(exact * (1 - exact) / 50_000)
    assert abs(s.false_rej_count / 50_000 - exact) <= 5 * se


def test_unbiased_at_random_grid_points():
    rng = np.random.default_rng(99)
    n = 50_000
    for i in range(20):
        center = rng.uniform(-2.0, 0.0, size=2)
        tile = make_tile(center, [1 / 64, 1 / 64], [True, True], index=i)
        s = simulate_tile(GAUSS, tile, n, SeedPolicy(314159))
        exact = GAUSS.f2(center[0], center[1])
        se = math.sqrt(max(exact * (1 - exact), 1e-12) / n)
        assert abs(s.false_rej_count / n - exact) <= 5 * se


def test_bit_reproducibility():
    tile = make_tile([0.4, 0.2], [1 / 128, 1 / 128], [True, True], index=3)
    a = simulate_tile(THOMPSON, tile, 2000, SeedPolicy(42))
    b = simulate_tile(THOMPSON, tile, 2000, SeedPolicy(42))
    assert a.n_sims == b.n_sims
    assert a.false_rej_count == b.false_rej_count
    assert np.array_equal(a.score_sum, b.score_sum)
    c = simulate_tile(THOMPSON, tile, 2000, SeedPolicy(43))
    assert c.false_rej_count != a.false_rej_count or not np.array_equal(c.score_sum, a.score_sum)


@pytest.mark.parametrize("design,center", [
    (GAUSS, [-0.1, -0.2]),
    (THOMPSON, [0.39, 0.41]),
])
def test_batch_split_invariance(design, center):
    tile = make_tile(center, [0.01, 0.01], [True, True], index=11)
    seeds = SeedPolicy(777)
    whole = simulate_tile(design, tile, 3000, seeds, batch_size=3000)
    for bs in (512, 999, 37):
        split = simulate_tile(design, tile, 3000, seeds, batch_size=bs)
        assert split.false_rej_count == whole.false_rej_count
        assert np.array_equal(split.score_sum, whole.score_sum)


def test_summarize_records_matches_simulate_tile():
    tile = make_tile([0.3, 0.5], [0.01, 0.01], [True, False], index=5)
    seeds = SeedPolicy(55)
    records = simulate_tile_records(THOMPSON, tile, 1500, seeds, batch_size=256)
    direct = simulate_tile(THOMPSON, tile, 1500, seeds, batch_size=400)
    replay = summarize_records(THOMPSON, tile, records)
    assert replay.false_rej_count == direct.false_rej_count
    assert np.array_equal(replay.score_sum, direct.score_sum)


def test_score_sum_matches_fsum_oracle():
    tile = make_tile([-0.3, -0.1], [0.02, 0.02], [True, True], index=2)
    seeds = SeedPolicy(21)
    records = simulate_tile_records(GAUSS, tile, 4000, seeds)
    rej = GAUSS.rejections(records)
    sel = rej.any(axis=1)
    scores = GAUSS.score_matrix(records, tile.center)
    s = simulate_tile(GAUSS, tile, 4000, seeds, batch_size=333)
    for j in range(2):
        oracle = math.fsum(scores[sel][:, j])
        assert s.score_sum[j] == pytest.approx(oracle, abs=1e-9)
    assert s.false_rej_count == int(sel.sum())


def test_complement_summary():
    tile = make_tile([0.0, 0.0], [0.01, 0.01], [True, True], index=9)
    seeds = SeedPolicy(66)
    direct = simulate_tile(GAUSS, tile, 5000, seeds)
    comp = simulate_tile(GAUSS, tile, 5000, seeds, complement=True)
    assert direct.false_rej_count + comp.false_rej_count == 5000


def test_merge_fieldwise():
    a = TileSummary(4, 100, 7, np.array([1.5, -2.0]))
    b = TileSummary(4, 50, 3, np.array([0.5, 1.0]))
    m = a.merge(b)
    assert (m.n_sims, m.false_rej_count) == (150, 10)
    assert np.array_equal(m.score_sum, np.array([2.0, -1.0]))
    with pytest.raises(Exception):
        a.merge(TileSummary(5, 1, 0, np.zeros(2)))


# --------------------------------------------------------------- checkpoints

def test_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "run.ckpt"
    digest = config_digest("design=gauss\nsteps=4")
    ck = Checkpoint(str(path), 2, digest)
    s1 = TileSummary(0, 1000, 55, np.array([0.125, -3.75]))
    s2 = TileSummary(7, 1000, 3, np.array([1e-17, 2.5]))
    ck.append(s1)
    ck.append(s2)
    loaded = Checkpoint(str(path), 2, digest).load()
    assert set(loaded) == {0, 7}
    assert loaded[0].false_rej_count == 55
    assert np.array_equal(loaded[7].score_sum, s2.score_sum)


def test_checkpoint_refuses_config_mismatch(tmp_path):
    path = tmp_path / "run.ckpt"
    ck = Checkpoint(str(path), 2, config_digest("a=1"))
    ck.append(TileSummary(0, 10, 1, np.zeros(2)))
    with pytest.raises(ConfigError):
        Checkpoint(str(path), 2, config_digest("a=2")).load()
    with pytest.raises(ConfigError):
        Checkpoint(str(path), 3, config_digest("a=1")).load()


def test_seed_policy_validation():
    with pytest.raises(ConfigError):
        SeedPolicy(-1)
    with pytest.raises(ConfigError):
        SeedPolicy(2**64)
    assert SeedPolicy(2**63).master_seed == 2**63
