"""Monte Carlo workhorse: per-tile replication batches, false-rejection
accumulation, exact binomial upper confidence bounds, and checkpointing.

Reproducibility contract: every replication owns a counter-based substream
keyed by (master_seed, tile_index, rep_index), and accumulation is exact
(integer sums for integer sufficient statistics, Shewchuk partial sums for
float ones). Together these make TileSummaries bit-identical for any batch
split, worker count, or schedule.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass

import numpy as np
import scipy.special as sp

from .errors import ConfigError, DomainError, InternalError

DEFAULT_BATCH_SIZE = 4096

CHECKPOINT_MAGIC = b"TBCHKPT1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SeedPolicy:
    """Externally supplied master seed; substreams for distinct
    (tile, replication) pairs derive from it alone and never overlap."""

    master_seed: int

    def __post_init__(self):
        seed = int(self.master_seed)
        if not 0 <= seed < 2**64:
            raise ConfigError("master seed must fit in 64 bits")
        object.__setattr__(self, "master_seed", seed)


@dataclass
class TileSummary:
    """Accumulated false-rejection evidence for one tile."""

    tile_index: int
    n_sims: int
    false_rej_count: int
    score_sum: np.ndarray  # float, length d; zero vector when count is zero

    def merge(self, other):
        if other.tile_index != self.tile_index:
            raise InternalError("cannot merge summaries of different tiles")
        return TileSummary(
            self.tile_index,
            self.n_sims + other.n_sims,
            self.false_rej_count + other.false_rej_count,
            self.score_sum + other.score_sum,
        )


def _grow_partials(partials, x):
    """Shewchuk exact accumulation step; the partials' true sum is exact."""
    i = 0
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            partials[i] = lo
            i += 1
        x = hi
    partials[i:] = [x]


class _ExactAccumulator:
    """Order-independent accumulation of selected replications.

    Holds the exact sum of selected sufficient statistics (int64 when the
    design's records are integral, Shewchuk partials otherwise) and exact
    integer sums of selected per-arm counts. The stopped score sum is
    computed once at readout, so it is identical for every batch split.
    """

    def __init__(self, design, center):
        self.design = design
        self.center = np.asarray(center, dtype=float)
        self.d = design.param_dim
        self.n_arms = design.n_arms
        self.n_sims = 0
        self.count = 0
        self._suff_int = np.zeros(self.d, dtype=np.int64)
        self._suff_partials = [[] for _ in range(self.d)]
        self._count_sum = np.zeros(self.n_arms, dtype=np.int64)

    def add_batch(self, suff_sel, counts_sel, n_batch, n_selected):
        self.n_sims += int(n_batch)
        self.count += int(n_selected)
        if n_selected == 0:
            return
        self._count_sum += counts_sel.sum(axis=0, dtype=np.int64)
        if np.issubdtype(suff_sel.dtype, np.integer) or np.all(suff_sel == np.floor(suff_sel)):
            self._suff_int += suff_sel.sum(axis=0, dtype=np.int64)
        else:
            for j in range(self.d):
                col = suff_sel[:, j]
                for x in col:
                    _grow_partials(self._suff_partials[j], float(x))

    def summary(self, tile_index):
        score = np.zeros(self.d)
        if self.count > 0:
            suff = np.array(
                [float(self._suff_int[j]) + _fsum_partials(self._suff_partials[j])
                 for j in range(self.d)]
            )
            score = suff.copy()
            for k, (fam, sl) in enumerate(zip(self.design.arm_families, self.design.arm_slices)):
                score[sl] -= float(self._count_sum[k]) * fam.grad_A(self.center[sl])
        return TileSummary(tile_index, self.n_sims, self.count, score)


def _fsum_partials(partials):
    return math.fsum(partials) if partials else 0.0


def accumulate_records(design, tile, records, accum, lam=None, complement=False):
    """Fold one batch of replication records into the accumulator.

    A replication counts iff it rejects at least one hypothesis that is null
    on the tile (or, for complement summaries, iff it rejects none).
    """
    n_batch = records.shape[0]
    sig = tile.null_signature
    if sig.any():
        rej = design.rejections(records, lam)
        indicator = rej[:, sig].any(axis=1)
    else:
        indicator = np.zeros(n_batch, dtype=bool)
    if complement:
        indicator = ~indicator
    n_sel = int(indicator.sum())
    if n_sel:
        suff_sel = design.suff_stats(records[indicator])
        counts_sel = design.arm_counts(records[indicator])
    else:
        suff_sel = np.zeros((0, design.param_dim))
        counts_sel = np.zeros((0, design.n_arms), dtype=np.int64)
    accum.add_batch(suff_sel, counts_sel, n_batch, n_sel)


def summarize_records(design, tile, records, lam=None, complement=False):
    """TileSummary for one pre-simulated record block (calibration reuse path)."""
    accum = _ExactAccumulator(design, tile.center)
    accumulate_records(design, tile, records, accum, lam=lam, complement=complement)
    return accum.summary(tile.index)


def simulate_tile(design, tile, n_sims, seeds, batch_size=DEFAULT_BATCH_SIZE,
                  complement=False, lam=None):
    """Run n_sims independent replications at the tile center.

    Pure-alternative tiles short-circuit: nothing can be falsely rejected
    there, so no data is generated.
    """
    if n_sims < 1:
        raise ConfigError("n_sims must be >= 1")
    design.check_theta(tile.center)
    if not tile.null_signature.any() and not complement:
        return TileSummary(tile.index, int(n_sims), 0, np.zeros(design.param_dim))
    accum = _ExactAccumulator(design, tile.center)
    start = 0
    while start < n_sims:
        nb = min(batch_size, n_sims - start)
        records = design.simulate_records(tile.center, seeds.master_seed, tile.index, start, nb)
        accumulate_records(design, tile, records, accum, lam=lam, complement=complement)
        start += nb
    return accum.summary(tile.index)


def simulate_tile_records(design, tile, n_sims, seeds, batch_size=DEFAULT_BATCH_SIZE):
    """All replication records for one tile (the frozen base of calibration)."""
    blocks = []
    start = 0
    while start < n_sims:
        nb = min(batch_size, n_sims - start)
        blocks.append(
            design.simulate_records(tile.center, seeds.master_seed, tile.index, start, nb)
        )
        start += nb
    return np.concatenate(blocks, axis=0)


def simulate_tiles(design, tiling, n_sims, seeds, batch_size=DEFAULT_BATCH_SIZE,
                   complement=False, checkpoint=None, progress=None):
    """Summaries for every non-skipped tile, optionally checkpointed per tile."""
    done = {}
    writer = None
    if checkpoint is not None:
        done = checkpoint.load()
        writer = checkpoint
    summaries = {}
    for tile in tiling:
        if tile.skippable:
            continue
        if tile.index in done:
            summaries[tile.index] = done[tile.index]
            continue
        summary = simulate_tile(design, tile, n_sims, seeds, batch_size,
                                complement=complement)
        summaries[tile.index] = summary
        if writer is not None:
            writer.append(summary)
        if progress is not None:
            progress(tile, summary)
    return summaries


# --------------------------------------------------------------- cp bounds


def clopper_pearson_upper(k, n, conf_tail):
    """Exact upper confidence limit for a binomial proportion.

    The smallest p with P(Binomial(n, p) <= k) = conf_tail, i.e. the
    (1 - conf_tail) quantile relation BetaInv(1 - conf_tail; k+1, n-k);
    returns 1 when k = n.
    """
    k = int(k)
    n = int(n)
    if n < 1:
        raise DomainError("n must be positive")
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 < conf_tail < 1.0:
        raise DomainError("conf_tail must be in (0, 1)")
    if k == n:
        return 1.0
    return float(sp.betaincinv(k + 1.0, float(n - k), 1.0 - conf_tail))


def normal_approx_upper(k, n, conf_tail):
    """Normal-approximation upper limit; not for regulatory use."""
    k = int(k)
    n = int(n)
    if not 0 <= k <= n or n < 1:
        raise DomainError("need 0 <= k <= n with n positive")
    phat = k / n
    z = float(sp.ndtri(1.0 - conf_tail))
    return float(min(1.0, phat + z * np.sqrt(phat * (1.0 - phat) / n)))


# -------------------------------------------------------------- checkpoints


class Checkpoint:
    """Binary per-tile summary log for resumable runs.

    Layout (little-endian): an 8-byte magic, u32 version, u32 d, 32-byte
    config hash header; then per completed tile a record of tile_index u64,
    n_sims u64, false_rej_count u64, and d float64 score-sum entries.
    """

    def __init__(self, path, d, config_hash):
        self.path = path
        self.d = int(d)
        self.config_hash = config_hash
        self._record = struct.Struct("<QQQ" + "d" * self.d)

    def load(self):
        """Existing summaries, validating the header against this run's config."""
        try:
            raw = open(self.path, "rb").read()
        except FileNotFoundError:
            return {}
        head = struct.Struct("<8sII32s")
        if len(raw) < head.size:
            raise ConfigError(f"checkpoint {self.path} is truncated")
        magic, version, d, chash = head.unpack_from(raw, 0)
        if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
            raise ConfigError(f"checkpoint {self.path} has an unknown format")
        if d != self.d:
            raise ConfigError("checkpoint dimension does not match this run")
        if chash != self.config_hash:
            raise ConfigError("checkpoint was produced by a different configuration; refusing")
        out = {}
        offset = head.size
        while offset + self._record.size <= len(raw):
            vals = self._record.unpack_from(raw, offset)
            offset += self._record.size
            out[int(vals[0])] = TileSummary(
                int(vals[0]), int(vals[1]), int(vals[2]), np.array(vals[3:])
            )
        return out

    def append(self, summary):
        fresh = not os.path.exists(self.path)
        with open(self.path, "ab") as fh:
            if fresh:
                fh.write(struct.pack("<8sII32s", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                                     self.d, self.config_hash))
            fh.write(self._record.pack(summary.tile_index, summary.n_sims,
                                       summary.false_rej_count, *summary.score_sum))


def config_digest(text):
    """Stable 32-byte digest of a canonical config rendering."""
    return hashlib.sha256(text.encode("utf-8")).digest()
