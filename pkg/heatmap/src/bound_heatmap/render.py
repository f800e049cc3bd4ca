"""Render bound-surface CSVs as static figures.

Input files follow the verification engine's column contract exactly:

    tile_index,center_0..center_{d-1},half_0..half_{d-1},null_sig,
    n_sims,false_rej,delta_I,delta_II,delta_III,total

plus the oracle companion `tile_index,center_0..,f_exact`. Only d = 1 and
d = 2 are renderable. Grid cells with no surface row (skipped
pure-alternative tiles) appear in a dedicated N/A color, never as zero.

Rendering is deterministic: fixed figure geometry, fixed colormap, no
timestamps, so identical inputs give identical image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

NA_COLOR = "#d4d4d4"
FIGURE_DPI = 150


class SchemaError(ValueError):
    """The CSV does not follow the surface/oracle column contract."""


@dataclass
class SurfaceTable:
    d: int
    tile_index: np.ndarray
    centers: np.ndarray  # (n, d)
    halves: np.ndarray  # (n, d)
    totals: np.ndarray
    columns: dict  # every numeric column by name


@dataclass
class RenderSummary:
    """What was drawn; lets callers check extrema against the CSV."""

    d: int
    n_tiles: int
    total_min: float
    total_max: float
    color_min: float
    color_max: float
    panels: int
    slack_min: float = None
    slack_max: float = None


def _surface_columns(d):
    cols = ["tile_index"]
    cols += [f"center_{j}" for j in range(d)]
    cols += [f"half_{j}" for j in range(d)]
    cols += ["null_sig", "n_sims", "false_rej", "delta_I", "delta_II", "delta_III", "total"]
    return cols


def _read_rows(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: file is empty")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
    return header, rows


def load_surface(path):
    header, rows = _read_rows(path)
    d = sum(1 for c in header if c.startswith("center_"))
    if d < 1 or header != _surface_columns(d):
        raise SchemaError(f"{path}: unknown surface schema {header!r}")
    if not rows:
        raise SchemaError(f"{path}: surface has a header but no tiles")
    tile_index = np.array([int(r[0]) for r in rows])
    centers = np.array([[float(x) for x in r[1:1 + d]] for r in rows])
    halves = np.array([[float(x) for x in r[1 + d:1 + 2 * d]] for r in rows])
    numeric = {}
    for j, name in enumerate(("n_sims", "false_rej", "delta_I", "delta_II",
                              "delta_III", "total")):
        numeric[name] = np.array([float(r[2 + 2 * d + j]) for r in rows])
    return SurfaceTable(d, tile_index, centers, halves, numeric["total"], numeric)


def load_oracle(path):
    header, rows = _read_rows(path)
    d = sum(1 for c in header if c.startswith("center_"))
    expected = ["tile_index"] + [f"center_{j}" for j in range(d)] + ["f_exact"]
    if d < 1 or header != expected:
        raise SchemaError(f"{path}: unknown oracle schema {header!r}")
    return {int(r[0]): float(r[-1]) for r in rows}


def _axis_edges(centers, halves):
    """Distinct cell edges along one axis, tolerating float duplicates."""
    edges = np.concatenate([centers - halves, centers + halves])
    edges = np.unique(edges)
    merged = [edges[0]]
    for e in edges[1:]:
        if e - merged[-1] > 1e-12:
            merged.append(e)
    return np.asarray(merged)


def _grid_matrix(table, values):
    """Values arranged on the tensor grid spanned by the tiles; cells with no
    row stay NaN (the N/A color)."""
    xs = _axis_edges(table.centers[:, 0], table.halves[:, 0])
    ys = _axis_edges(table.centers[:, 1], table.halves[:, 1])
    mat = np.full((len(ys) - 1, len(xs) - 1), np.nan)
    ix = np.searchsorted(xs, table.centers[:, 0]) - 1
    iy = np.searchsorted(ys, table.centers[:, 1]) - 1
    mat[iy, ix] = values
    return xs, ys, mat


def _panel(ax, table, values, title):
    xs, ys, mat = _grid_matrix(table, values)
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad(NA_COLOR)
    vmin = float(np.nanmin(mat))
    vmax = float(np.nanmax(mat))
    mesh = ax.pcolormesh(xs, ys, np.ma.masked_invalid(mat), cmap=cmap,
                         vmin=vmin, vmax=vmax, rasterized=True)
    ax.set_title(title)
    ax.set_xlabel("coordinate 0")
    ax.set_ylabel("coordinate 1")
    return mesh, vmin, vmax


def render_heatmap(surface_csv, out_image, oracle_csv=None):
    """Draw the surface (heatmap for d=2, line plot for d=1) and, when an
    oracle file is supplied, a second panel of the slack total - f_exact.

    Returns a RenderSummary describing exactly what was plotted.
    """
    table = load_surface(surface_csv)
    if table.d > 2:
        raise SchemaError(f"cannot render {table.d}-dimensional surfaces (d <= 2 only)")
    slack = None
    if oracle_csv is not None:
        oracle = load_oracle(oracle_csv)
        missing = [int(i) for i in table.tile_index if int(i) not in oracle]
        if missing:
            raise SchemaError(f"oracle file lacks tiles {missing[:5]}...")
        exact = np.array([oracle[int(i)] for i in table.tile_index])
        slack = table.totals - exact

    panels = 1 if slack is None else 2
    if table.d == 1:
        fig, axes = plt.subplots(1, panels, figsize=(5.0 * panels, 3.5), dpi=FIGURE_DPI)
        axes = np.atleast_1d(axes)
        order = np.argsort(table.centers[:, 0])
        axes[0].plot(table.centers[order, 0], table.totals[order], drawstyle="steps-mid")
        axes[0].set_title("bound surface")
        axes[0].set_xlabel("coordinate 0")
        axes[0].set_ylabel("total")
        color_min, color_max = float(table.totals.min()), float(table.totals.max())
        if slack is not None:
            axes[1].plot(table.centers[order, 0], slack[order], drawstyle="steps-mid")
            axes[1].set_title("slack vs oracle")
            axes[1].set_xlabel("coordinate 0")
    else:
        fig, axes = plt.subplots(1, panels, figsize=(5.5 * panels, 4.4), dpi=FIGURE_DPI)
        axes = np.atleast_1d(axes)
        mesh, color_min, color_max = _panel(axes[0], table, table.totals, "bound surface")
        fig.colorbar(mesh, ax=axes[0])
        if slack is not None:
            mesh2, _, _ = _panel(axes[1], table, slack, "slack vs oracle")
            fig.colorbar(mesh2, ax=axes[1])
    fig.tight_layout()
    fig.savefig(out_image, format="png")
    plt.close(fig)
    summary = RenderSummary(
        d=table.d,
        n_tiles=len(table.tile_index),
        total_min=float(table.totals.min()),
        total_max=float(table.totals.max()),
        color_min=color_min,
        color_max=color_max,
        panels=panels,
    )
    if slack is not None:
        summary.slack_min = float(slack.min())
        summary.slack_max = float(slack.max())
    return summary
