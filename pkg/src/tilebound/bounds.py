"""Per-tile confidence bounds and their assembly into surfaces.

For each tile centered at a simulation point, the bound is the three-term
sum delta_I + delta_II + delta_III:

* delta_I  — exact Clopper-Pearson upper limit on the false-rejection rate
  at the center, at confidence 1 - delta/2;
* delta_II — corner-wise Cantelli upper bound on the linear Taylor term,
  using the accumulated stopped-score sum and the variance cap
  grad-covariance <= tau_max-scaled Hessian of the log-partition, at
  confidence 1 - delta/2;
* delta_III — deterministic second-order remainder, half the worst corner
  quadratic form of a tile-wise dominating information matrix.

delta_III and the Cantelli widths are deterministic, so only the first two
terms spend confidence; the stitched surface is valid pointwise at 1 - delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import corners
from .engine import (
    clopper_pearson_upper,
    normal_approx_upper,
    simulate_tile_records,
    summarize_records,
)
from .errors import CalibrationError, ConfigError, InternalError


@dataclass(frozen=True)
class TileBound:
    """The (delta_I, delta_II, delta_III) triple and total for one tile."""

    tile_index: int
    delta_i: float
    delta_ii: float
    delta_iii: float
    total: float
    n_sims: int
    false_rej_count: int


@dataclass
class BoundSurface:
    """Tile-wise constant bound over the gridded region.

    kind == "upper": g(theta) evaluates to the max total over containing
    tiles. kind == "lower": totals hold lower bounds and evaluation takes
    the min. Points covered only by skipped (pure-alternative) tiles have
    no defined Type I Error and evaluate to None.
    """

    tiling: object
    bounds: dict
    confidence: float
    kind: str = "upper"
    metadata: dict = field(default_factory=dict)

    def evaluate(self, theta):
        holders = self.tiling.tiles_containing(theta)
        totals = [self.bounds[t.index].total for t in holders if t.index in self.bounds]
        if not totals:
            return None
        return max(totals) if self.kind == "upper" else min(totals)

    def max_total(self):
        """(value, tile_index) of the largest bound; None on empty surfaces."""
        if not self.bounds:
            return None
        idx = max(self.bounds, key=lambda i: self.bounds[i].total)
        return self.bounds[idx].total, idx


def info_matrix(design, theta):
    """Sum_k tau_max[k] * hess_A_k at theta: the covariance cap for T(X_tau_max)."""
    theta = design.check_theta(theta)
    out = np.zeros((design.param_dim, design.param_dim))
    for k, (fam, sl) in enumerate(zip(design.arm_families, design.arm_slices)):
        out[sl, sl] += design.tau_max[k] * fam.hess_A(theta[sl])
    return out


def tile_max_info(design, tile):
    """Tile-wise dominating matrix: tau_max-scaled per-arm hess_A_tile_max."""
    out = np.zeros((design.param_dim, design.param_dim))
    for k, (fam, sl) in enumerate(zip(design.arm_families, design.arm_slices)):
        out[sl, sl] += design.tau_max[k] * fam.hess_A_tile_max(tile.lower[sl], tile.upper[sl])
    return out


def delta_i(summary, delta_budget_half, use_normal_approx=False):
    """Upper confidence limit on the tile-center false-rejection rate."""
    upper = normal_approx_upper if use_normal_approx else clopper_pearson_upper
    return upper(summary.false_rej_count, summary.n_sims, delta_budget_half)


def cantelli_lambda(v, hess_at_center, n_sims, delta_budget_half):
    """Cantelli width: sqrt(v'Hv / n * (1/(delta/2) - 1))."""
    quad = float(v @ hess_at_center @ v)
    if quad < -1e-12:
        raise InternalError("information matrix is not positive semidefinite")
    quad = max(quad, 0.0)
    return math.sqrt(quad / n_sims * (1.0 / delta_budget_half - 1.0))


def delta_ii(summary, tile, hess_at_center, delta_budget_half, det_caps=None):
    """Corner-wise Cantelli bound on sup_v v' grad f over the tile.

    Per corner offset v_m: Y_m = v_m . (score_sum / n), c_m = Y_m + lambda_m,
    optionally capped by a user-supplied deterministic bound. The maximum
    over corners is floored at zero: the linear term can be negative, but
    exploiting that would need a lower confidence bound the construction
    does not make.
    """
    offsets = corners(tile)
    if det_caps is not None and len(det_caps) != len(offsets):
        raise ConfigError("det_caps must supply one cap per corner")
    grad_hat = summary.score_sum / summary.n_sims
    best = -math.inf
    for m, v in enumerate(offsets):
        c = float(v @ grad_hat) + cantelli_lambda(v, hess_at_center, summary.n_sims,
                                                  delta_budget_half)
        if det_caps is not None:
            c = min(c, float(det_caps[m]))
        best = max(best, c)
    return max(0.0, best)


def delta_iii(design, tile):
    """Second-order remainder: max over corners of v'Mv / 2 with M the
    tile-wise dominating information matrix."""
    m = tile_max_info(design, tile)
    best = 0.0
    for v in corners(tile):
        best = max(best, float(v @ m @ v) / 2.0)
    return best


def _tile_bound(design, tile, summary, delta, split, use_normal_approx, det_caps):
    budget_i = delta * split
    budget_ii = delta * (1.0 - split)
    d1 = delta_i(summary, budget_i, use_normal_approx)
    d2 = delta_ii(summary, tile, info_matrix(design, tile.center), budget_ii, det_caps)
    d3 = delta_iii(design, tile)
    total = min(1.0, d1 + d2 + d3)
    return TileBound(tile.index, d1, d2, d3, total, summary.n_sims, summary.false_rej_count)


def assemble_surface(design, tiling, summaries, delta, split=0.5,
                     use_normal_approx=False, det_caps=None, metadata=None):
    """Stitch per-tile bounds into the upper surface g.

    Pure-alternative tiles carry no bound: Type I Error is undefined there
    and reporting 0 would misread as a guarantee.
    """
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must be in (0, 1)")
    if not 0.0 < split < 1.0:
        raise ConfigError("budget split must be in (0, 1)")
    bounds = {}
    for tile in tiling:
        if tile.skippable:
            continue
        if tile.index not in summaries:
            raise InternalError(f"missing summary for tile {tile.index}")
        bounds[tile.index] = _tile_bound(design, tile, summaries[tile.index], delta,
                                         split, use_normal_approx, det_caps)
    meta = dict(metadata or {})
    meta.setdefault("design_id", design.design_id)
    meta.setdefault("delta", delta)
    meta.setdefault("lambda", design.lam)
    return BoundSurface(tiling, bounds, confidence=1.0 - delta, kind="upper", metadata=meta)


def lower_surface(design, tiling, complement_summaries, delta, split=0.5,
                  use_normal_approx=False, metadata=None):
    """Pointwise 1 - delta lower bound surface g-.

    The same three-term machinery upper-bounds the complement probability
    P(no false rejection); subtracting from one gives the lower bound,
    clipped at zero.
    """
    upper_on_complement = assemble_surface(design, tiling, complement_summaries, delta,
                                           split, use_normal_approx, metadata=metadata)
    bounds = {}
    for idx, b in upper_on_complement.bounds.items():
        g_lower = max(0.0, 1.0 - b.total)
        bounds[idx] = TileBound(idx, b.delta_i, b.delta_ii, b.delta_iii, g_lower,
                                b.n_sims, b.false_rej_count)
    meta = dict(upper_on_complement.metadata)
    meta["complement"] = True
    return BoundSurface(tiling, bounds, confidence=1.0 - delta, kind="lower", metadata=meta)


@dataclass(frozen=True)
class RedesignReport:
    ok: bool
    violations: tuple  # (tile_index, margin) pairs, margin > 0 means violated
    combined_confidence: float


def check_redesign(g2_plus, g1_minus, g0_plus, alpha):
    """Tile-wise re-design slack check g2+ <= g1- + alpha - g0+.

    Passing certifies the adaptation keeps the overall budget alpha with
    confidence 1 - delta0 - delta1 - delta2.
    """
    keys = set(g2_plus.bounds)
    if set(g1_minus.bounds) != keys or set(g0_plus.bounds) != keys:
        raise ConfigError("re-design check requires identical tilings and tile sets")
    violations = []
    for idx in sorted(keys):
        margin = g2_plus.bounds[idx].total - (
            g1_minus.bounds[idx].total + alpha - g0_plus.bounds[idx].total
        )
        if margin > 0.0:
            violations.append((idx, margin))
    combined = 1.0 - sum(1.0 - s.confidence for s in (g0_plus, g1_minus, g2_plus))
    return RedesignReport(not violations, tuple(violations), combined)


# ---------------------------------------------------------------- calibration


@dataclass
class CalibrationResult:
    lambda_prime: float
    ok: bool
    surface: BoundSurface
    audit: list  # (lambda, max_total, passed) per ladder value


def select_lambda(ladder, passes):
    """Largest ladder value whose entire prefix passes; None if the most
    conservative value already fails."""
    chosen = None
    for lam, ok in zip(ladder, passes):
        if not ok:
            break
        chosen = lam
    return chosen


def simulate_base(design, tiling, n_sims, seeds, batch_size=4096):
    """Frozen Monte Carlo base B: full replication records per non-skipped tile.

    Sampling decisions are fixed once here; calibration only re-evaluates
    rejection rules on the stored outcomes.
    """
    return {
        tile.index: simulate_tile_records(design, tile, n_sims, seeds, batch_size)
        for tile in tiling
        if not tile.skippable
    }


def surface_from_base(design, tiling, base, delta, lam=None, split=0.5,
                      use_normal_approx=False, metadata=None):
    """Assemble the surface for one rejection tuning on the frozen base."""
    lam = design.lam if lam is None else float(lam)
    design_lam = design.with_lambda(lam)
    summaries = {
        idx: summarize_records(design_lam, tiling[idx], base[idx])
        for idx in base
    }
    meta = dict(metadata or {})
    meta["lambda"] = lam
    return assemble_surface(design_lam, tiling, summaries, delta, split,
                            use_normal_approx, metadata=meta)


def calibrate(design, tiling, base, ladder, alpha_target, delta, split=0.5,
              use_normal_approx=False):
    """Safe threshold calibration over a lambda ladder on the frozen base.

    Walks the ascending ladder, keeping the largest lambda whose whole
    prefix satisfies g_lambda(theta_j) <= alpha on every bounded tile; the
    rejection rule's monotonicity in lambda makes the chosen rule valid at
    every theta with pointwise confidence 1 - delta. When nothing passes,
    the most conservative ladder surface is returned flagged as failed.
    """
    ladder = sorted(float(x) for x in ladder)
    if not ladder:
        raise ConfigError("lambda ladder must be nonempty")
    alpha_fn = alpha_target if callable(alpha_target) else (lambda tile: float(alpha_target))
    audit = []
    surfaces = {}
    passes = []
    for lam in ladder:
        surface = surface_from_base(design, tiling, base, delta, lam, split,
                                    use_normal_approx)
        surfaces[lam] = surface
        ok = all(
            surface.bounds[t.index].total <= alpha_fn(t)
            for t in tiling if t.index in surface.bounds
        )
        worst = surface.max_total()
        audit.append((lam, worst[0] if worst else 0.0, ok))
        passes.append(ok)
    chosen = select_lambda(ladder, passes)
    if chosen is None:
        return CalibrationResult(ladder[0], False, surfaces[ladder[0]], audit)
    return CalibrationResult(chosen, True, surfaces[chosen], audit)
