"""Null-hypothesis bookkeeping and tiling of the bounded region under study.

The region is an axis-aligned box in canonical coordinates; hypotheses are
half-spaces along single coordinates. `build_grid` produces a tensor tiling
whose faces contain every hypothesis cutoff, so the null status of each
hypothesis is constant across every tile interior and the per-tile Taylor
argument never straddles a discontinuity of the error function.

When a cutoff falls strictly inside a grid cell, the cell is split at the
cutoff and at the cutoff's reflection through the cell center. The middle
piece keeps the original grid point as its center, so a uniform grid of
simulation points survives boundary alignment intact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CornerCapError

CORNER_CAP = 12


@dataclass(frozen=True)
class Hypothesis:
    """Half-space null set {theta : theta[coord_index] REL cutoff}."""

    coord_index: int
    cutoff: float
    direction: str  # "<=" or ">="

    def __post_init__(self):
        if self.direction not in ("<=", ">="):
            raise ConfigError(f"hypothesis direction must be '<=' or '>=', got {self.direction!r}")
        if self.coord_index < 0:
            raise ConfigError("hypothesis coordinate index must be nonnegative")

    def is_null_at(self, theta):
        x = theta[self.coord_index]
        return x <= self.cutoff if self.direction == "<=" else x >= self.cutoff

    def null_over_cell(self, lo, hi):
        """Null status of the open cell (lo, hi) on this coordinate; the cell
        must not straddle the cutoff."""
        if self.direction == "<=":
            return hi <= self.cutoff
        return lo >= self.cutoff


@dataclass(frozen=True)
class Region:
    """Axis-aligned bounded box Theta_0, in canonical coordinates."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size == 0:
            raise ConfigError("region bounds must be equal-length nonempty vectors")
        if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
            raise ConfigError("region bounds must be finite")
        if not np.all(lower < upper):
            raise ConfigError("region must satisfy lower < upper componentwise")

    @property
    def dim(self):
        return self.lower.size


@dataclass(frozen=True, eq=False)
class Tile:
    """Axis-aligned box centered at its simulation point, with the hypotheses'
    null statuses frozen over its interior.

    The box edges are stored explicitly: they carry the exact break values of
    the tiling, whereas center +/- half_widths can drift by an ulp and would
    let a face slide off its hypothesis cutoff.
    """

    index: int
    center: np.ndarray
    half_widths: np.ndarray
    null_signature: np.ndarray  # bool per hypothesis
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        if self.lower is None:
            object.__setattr__(self, "lower", self.center - self.half_widths)
        if self.upper is None:
            object.__setattr__(self, "upper", self.center + self.half_widths)

    @property
    def skippable(self):
        """True when no hypothesis is null anywhere on the tile (pure alternative)."""
        return not bool(self.null_signature.any())

    def contains(self, point):
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= self.lower) and np.all(point <= self.upper))


def corners(tile, cap=CORNER_CAP):
    """All 2^d corner offsets v_m = corner - center of a tile.

    The linear term of the per-tile bound is maximized at a corner, so these
    offsets are what the Cantelli and curvature bounds enumerate.
    """
    d = tile.half_widths.size
    if d > cap:
        raise CornerCapError(
            f"corner enumeration needs 2^{d} points which exceeds the cap of 2^{cap}"
        )
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
    return signs * tile.half_widths


class Tiling:
    """The tiles of one grid, plus the per-axis break structure used for
    point location. Iterating yields tiles in row-major axis order."""

    def __init__(self, region, axis_breaks, hypotheses):
        self.region = region
        self.axis_breaks = [np.asarray(b) for b in axis_breaks]
        self.hypotheses = list(hypotheses)
        self._cells_per_axis = [len(b) - 1 for b in self.axis_breaks]
        self.tiles = self._build_tiles()

    def _build_tiles(self):
        tiles = []
        ranges = [range(n) for n in self._cells_per_axis]
        for flat, multi in enumerate(itertools.product(*ranges)):
            lo = np.array([self.axis_breaks[ax][i] for ax, i in enumerate(multi)])
            hi = np.array([self.axis_breaks[ax][i + 1] for ax, i in enumerate(multi)])
            sig = np.array(
                [h.null_over_cell(lo[h.coord_index], hi[h.coord_index]) for h in self.hypotheses],
                dtype=bool,
            )
            tiles.append(Tile(flat, (lo + hi) / 2.0, (hi - lo) / 2.0, sig, lo, hi))
        return tiles

    def __len__(self):
        return len(self.tiles)

    def __iter__(self):
        return iter(self.tiles)

    def __getitem__(self, i):
        return self.tiles[i]

    def tiles_containing(self, point):
        """All tiles whose closed box contains the point (several on shared faces)."""
        point = np.asarray(point, dtype=float)
        per_axis = []
        for ax, breaks in enumerate(self.axis_breaks):
            x = point[ax]
            if x < breaks[0] or x > breaks[-1]:
                return []
            left = int(np.searchsorted(breaks, x, side="left"))
            right = int(np.searchsorted(breaks, x, side="right"))
            cells = set()
            for pos in (left - 1, left, right - 1, right):
                if 0 <= pos < len(breaks) - 1 and breaks[pos] <= x <= breaks[pos + 1]:
                    cells.add(pos)
            per_axis.append(sorted(cells))
        out = []
        for multi in itertools.product(*per_axis):
            flat = 0
            for ax, i in enumerate(multi):
                flat = flat * self._cells_per_axis[ax] + i
            out.append(self.tiles[flat])
        return out


def _split_breaks(breaks, cutoff):
    """Insert a cutoff (and its reflection through the host cell's center)
    into a sorted break vector when it falls strictly inside a cell."""
    if cutoff in breaks:
        return breaks
    j = int(np.searchsorted(breaks, cutoff)) - 1
    a, b = breaks[j], breaks[j + 1]
    mid = (a + b) / 2.0
    inserts = {cutoff}
    mirror = 2.0 * mid - cutoff
    if a < mirror < b:
        inserts.add(mirror)
    return sorted(set(breaks) | inserts)


def build_grid(region, steps, hypotheses=()):
    """Tile the region with `steps` uniform cells per axis, then align faces
    with every hypothesis cutoff.

    Tiles whose null signature is all-false are still emitted (flagged
    skippable); simulation skips them because there is nothing to falsely
    reject there.
    """
    steps = [int(s) for s in np.atleast_1d(steps)]
    if len(steps) != region.dim:
        raise ConfigError(f"steps has {len(steps)} entries for a {region.dim}-dimensional region")
    if any(s < 1 for s in steps):
        raise ConfigError("steps must be >= 1 in every dimension")
    for h in hypotheses:
        if h.coord_index >= region.dim:
            raise ConfigError(f"hypothesis coordinate {h.coord_index} outside region dimension")
        if not (region.lower[h.coord_index] <= h.cutoff <= region.upper[h.coord_index]):
            raise ConfigError(
                f"hypothesis cutoff {h.cutoff} outside region extent on axis {h.coord_index}"
            )
    axis_breaks = []
    for ax in range(region.dim):
        breaks = list(np.linspace(region.lower[ax], region.upper[ax], steps[ax] + 1))
        for h in hypotheses:
            if h.coord_index == ax:
                breaks = _split_breaks(breaks, h.cutoff)
        axis_breaks.append(np.array(breaks))
    return Tiling(region, axis_breaks, hypotheses)
