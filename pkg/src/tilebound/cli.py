"""Batch front-end: verify / calibrate / oracle / redesign-check subcommands.

Exit codes: 0 success, 2 configuration or validation error, 3 calibration or
re-design verdict failure, 1 internal error. The master seed has no default;
it is expected on the command line (a regulator- or third-party-selected
value).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .errors import CalibrationError, ConfigError, TileboundError

SURFACE_NAME = "surface.csv"
ORACLE_NAME = "oracle.csv"
REPORT_NAME = "report.txt"
AUDIT_NAME = "ladder_audit.csv"
REDESIGN_REPORT_NAME = "redesign_report.txt"


def fmt17(x):
    """Float rendering with 17 significant digits: round-trips bit-exactly."""
    return format(float(x), ".17g")


def surface_header(d):
    cols = ["tile_index"]
    cols += [f"center_{j}" for j in range(d)]
    cols += [f"half_{j}" for j in range(d)]
    cols += ["null_sig", "n_sims", "false_rej", "delta_I", "delta_II", "delta_III", "total"]
    return ",".join(cols)


def write_surface_csv(path, surface):
    """One row per bounded tile; skipped (pure-alternative) tiles are absent
    rather than written as zero."""
    d = surface.tiling[0].center.size
    lines = [surface_header(d)]
    for idx in sorted(surface.bounds):
        tile = surface.tiling[idx]
        b = surface.bounds[idx]
        sig = "".join("1" if bit else "0" for bit in tile.null_signature)
        row = [str(idx)]
        row += [fmt17(c) for c in tile.center]
        row += [fmt17(h) for h in tile.half_widths]
        row += [sig, str(b.n_sims), str(b.false_rej_count),
                fmt17(b.delta_i), fmt17(b.delta_ii), fmt17(b.delta_iii), fmt17(b.total)]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_surface_csv(path):
    """Rows of a surface CSV as dicts of exact parsed values."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ConfigError(f"{path}: empty surface file")
    header = lines[0].split(",")
    if header[0] != "tile_index" or header[-1] != "total":
        raise ConfigError(f"{path}: unrecognized surface schema")
    d = sum(1 for c in header if c.startswith("center_"))
    if surface_header(d) != lines[0]:
        raise ConfigError(f"{path}: unrecognized surface schema")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ConfigError(f"{path}: malformed row {ln!r}")
        rows.append({
            "tile_index": int(parts[0]),
            "center": [float(x) for x in parts[1:1 + d]],
            "half": [float(x) for x in parts[1 + d:1 + 2 * d]],
            "null_sig": parts[1 + 2 * d],
            "n_sims": int(parts[2 + 2 * d]),
            "false_rej": int(parts[3 + 2 * d]),
            "delta_I": float(parts[4 + 2 * d]),
            "delta_II": float(parts[5 + 2 * d]),
            "delta_III": float(parts[6 + 2 * d]),
            "total": float(parts[7 + 2 * d]),
        })
    return d, rows


def _meta_path(csv_path):
    base, _ = os.path.splitext(csv_path)
    return base + ".meta.json"


def write_metadata(csv_path, meta):
    with open(_meta_path(csv_path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_metadata(csv_path):
    try:
        with open(_meta_path(csv_path), "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        return None


# ------------------------------------------------------------------ commands


def _require_seed(args):
    if args.seed is None:
        raise ConfigError("--seed is required: the master seed has no default")
    if not 0 <= args.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer")
    return args.seed


def _set_threads(n):
    import numba

    eff = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(eff)


def _load(args):
    from .config import load_config

    cfg = load_config(args.config)
    if getattr(args, "threads", None):
        _set_threads(args.threads)
    os.makedirs(args.out, exist_ok=True)
    return cfg


def _surface_metadata(cfg, seed, surface, extra=None):
    meta = {
        "design_id": cfg.design_id,
        "design_params": {k: v for k, v in cfg.design_params.items()},
        "surface_kind": surface.kind,
        "master_seed": seed,
        "delta": cfg.delta,
        "confidence": surface.confidence,
        "lambda": surface.metadata.get("lambda"),
        "n_sims": cfg.n_sims,
        "region_lower": [float(x) for x in cfg.region.lower],
        "region_upper": [float(x) for x in cfg.region.upper],
        "steps": list(cfg.steps),
    }
    meta.update(extra or {})
    return meta


def _write_report(path, lines):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _report_lines(cfg, tiling, surface, elapsed, seed):
    import numpy as np

    n_bounded = len(surface.bounds)
    n_skipped = len(tiling) - n_bounded
    worst = surface.max_total()
    lines = [
        "tilebound report",
        f"design: {cfg.design_id} (lambda={surface.metadata.get('lambda')})",
        f"grid: {'x'.join(str(s) for s in cfg.steps)} requested cells, "
        f"{len(tiling)} tiles after boundary alignment",
        f"bounded tiles: {n_bounded}; skipped pure-alternative tiles: {n_skipped}",
        f"n_sims per tile: {cfg.n_sims}; delta: {cfg.delta}; master_seed: {seed}",
        f"elapsed: {elapsed:.1f}s",
    ]
    if worst is not None:
        val, idx = worst
        center = ", ".join(fmt17(c) for c in surface.tiling[idx].center)
        lines.append(f"max total: {fmt17(val)} at tile {idx} (center {center})")
        b = surface.bounds[idx]
        rate = b.false_rej_count / b.n_sims
        slack = max(b.total - rate, 1e-300)
        lines.append(
            "slack attribution at argmax tile: "
            f"CP margin {100 * (b.delta_i - rate) / slack:.0f}%, "
            f"linear term {100 * b.delta_ii / slack:.0f}%, "
            f"curvature {100 * b.delta_iii / slack:.0f}%"
        )
        for name in ("delta_i", "delta_ii", "delta_iii"):
            vals = [getattr(t, name) for t in surface.bounds.values()]
            lines.append(f"median {name}: {fmt17(float(np.median(vals)))}")
    return lines


def cmd_verify(args):
    cfg = _load(args)
    seed = _require_seed(args)
    from .bounds import assemble_surface, lower_surface
    from .engine import Checkpoint, SeedPolicy, config_digest, simulate_tiles

    design = cfg.make_design()
    tiling = cfg.make_tiling(design)
    digest = config_digest(cfg.canonical_text(seed))
    checkpoint = None
    if args.checkpoint:
        checkpoint = Checkpoint(args.checkpoint, design.param_dim, digest)
    t0 = time.time()
    complement = cfg.surface_kind == "lower"
    summaries = simulate_tiles(design, tiling, cfg.n_sims, SeedPolicy(seed),
                               cfg.batch_size, complement=complement,
                               checkpoint=checkpoint)
    build = lower_surface if complement else assemble_surface
    surface = build(design, tiling, summaries, cfg.delta, cfg.budget_split,
                    args.non_regulatory_normal_approx,
                    metadata={"master_seed": seed, "lambda": design.lam})
    elapsed = time.time() - t0
    csv_path = os.path.join(args.out, SURFACE_NAME)
    write_surface_csv(csv_path, surface)
    write_metadata(csv_path, _surface_metadata(cfg, seed, surface, {
        "normal_approx": bool(args.non_regulatory_normal_approx),
    }))
    _write_report(os.path.join(args.out, REPORT_NAME),
                  _report_lines(cfg, tiling, surface, elapsed, seed))
    worst = surface.max_total()
    if worst is not None:
        print(f"max total {fmt17(worst[0])} over {len(surface.bounds)} tiles "
              f"-> {csv_path}")
    else:
        print(f"no bounded tiles -> {csv_path}")
    return 0


def cmd_calibrate(args):
    cfg = _load(args)
    seed = _require_seed(args)
    if cfg.lambda_ladder is None:
        raise ConfigError("calibrate requires a lambda_ladder config entry")
    if cfg.alpha_target is None:
        raise ConfigError("calibrate requires an alpha_target config entry")
    from .bounds import calibrate, simulate_base
    from .engine import SeedPolicy

    design = cfg.make_design()
    tiling = cfg.make_tiling(design)
    t0 = time.time()
    base = simulate_base(design, tiling, cfg.n_sims, SeedPolicy(seed), cfg.batch_size)
    result = calibrate(design, tiling, base, cfg.lambda_ladder, cfg.alpha_target,
                       cfg.delta, cfg.budget_split, args.non_regulatory_normal_approx)
    elapsed = time.time() - t0
    csv_path = os.path.join(args.out, SURFACE_NAME)
    write_surface_csv(csv_path, result.surface)
    write_metadata(csv_path, _surface_metadata(cfg, seed, result.surface, {
        "lambda_prime": result.lambda_prime,
        "alpha_target": cfg.alpha_target,
        "calibration_ok": result.ok,
    }))
    audit_path = os.path.join(args.out, AUDIT_NAME)
    with open(audit_path, "w", encoding="utf-8") as fh:
        fh.write("lambda,max_total,passed\n")
        for lam, worst, ok in result.audit:
            fh.write(f"{fmt17(lam)},{fmt17(worst)},{int(ok)}\n")
    lines = _report_lines(cfg, tiling, result.surface, elapsed, seed)
    lines.append(f"lambda_prime: {fmt17(result.lambda_prime)} (ok={result.ok})")
    _write_report(os.path.join(args.out, REPORT_NAME), lines)
    print(f"lambda_prime = {fmt17(result.lambda_prime)}")
    if not result.ok:
        raise CalibrationError(
            f"no ladder value satisfied alpha_target={cfg.alpha_target}; "
            f"most conservative surface written to {csv_path}"
        )
    return 0


def cmd_oracle(args):
    cfg = _load(args)
    design = cfg.make_design()
    if not getattr(design, "has_oracle", False):
        raise ConfigError(f"design {cfg.design_id!r} has no analytic oracle")
    tiling = cfg.make_tiling(design)
    d = design.param_dim
    path = os.path.join(args.out, ORACLE_NAME)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        cols = ["tile_index"] + [f"center_{j}" for j in range(d)] + ["f_exact"]
        fh.write(",".join(cols) + "\n")
        for tile in tiling:
            f_exact = design.f2(tile.center[0], tile.center[1])
            row = [str(tile.index)] + [fmt17(c) for c in tile.center] + [fmt17(f_exact)]
            fh.write(",".join(row) + "\n")
    print(f"wrote exact error rates for {len(tiling)} tile centers -> {path}")
    return 0


def _surface_from_rows(rows, delta, kind):
    from .bounds import BoundSurface, TileBound

    bounds = {
        r["tile_index"]: TileBound(r["tile_index"], r["delta_I"], r["delta_II"],
                                   r["delta_III"], r["total"], r["n_sims"], r["false_rej"])
        for r in rows
    }
    return BoundSurface(None, bounds, confidence=1.0 - delta, kind=kind)


def cmd_redesign_check(args):
    from .bounds import check_redesign

    os.makedirs(args.out, exist_ok=True)
    parsed = {}
    inputs = (
        ("g2_plus", args.g2_plus, args.delta2),
        ("g1_minus", args.g1_minus, args.delta1),
        ("g0_plus", args.g0_plus, args.delta0),
    )
    for name, path, delta in inputs:
        d, rows = parse_surface_csv(path)
        if delta is None:
            meta = read_metadata(path)
            if meta is None or "delta" not in meta:
                raise ConfigError(
                    f"{path}: no metadata sidecar; pass --delta0/--delta1/--delta2"
                )
            delta = float(meta["delta"])
        parsed[name] = (d, rows, delta)
    geoms = [
        [(r["tile_index"], tuple(r["center"]), tuple(r["half"])) for r in rows]
        for _, rows, _ in parsed.values()
    ]
    if not (geoms[0] == geoms[1] == geoms[2]):
        raise ConfigError("the three surfaces must share an identical tiling")
    g2 = _surface_from_rows(parsed["g2_plus"][1], parsed["g2_plus"][2], "upper")
    g1 = _surface_from_rows(parsed["g1_minus"][1], parsed["g1_minus"][2], "lower")
    g0 = _surface_from_rows(parsed["g0_plus"][1], parsed["g0_plus"][2], "upper")
    report = check_redesign(g2, g1, g0, args.alpha)
    verdict = f"verdict: {'PASS' if report.ok else 'FAIL'}"
    lines = [
        "re-design slack check: g2+(theta) <= g1-(theta) + alpha - g0+(theta)",
        f"alpha: {fmt17(args.alpha)}",
        f"tiles checked: {len(g2.bounds)}",
        f"combined confidence: {fmt17(report.combined_confidence)}",
        verdict,
    ]
    for idx, margin in report.violations:
        lines.append(f"violation at tile {idx}: margin {fmt17(margin)}")
    _write_report(os.path.join(args.out, REDESIGN_REPORT_NAME), lines)
    print(verdict)
    return 0 if report.ok else 3


# ---------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tilebound",
        description="Type I Error upper-bound surfaces for adaptive trial designs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker thread count")

    p_verify = sub.add_parser("verify", help="simulate and write the bound surface")
    common(p_verify)
    p_verify.add_argument("--seed", type=int, default=None, help="64-bit master seed (required)")
    p_verify.add_argument("--checkpoint", default=None, help="resumable per-tile checkpoint file")
    p_verify.add_argument("--non-regulatory-normal-approx", action="store_true",
                          help="normal-approximation intervals instead of Clopper-Pearson")
    p_verify.set_defaults(func=cmd_verify)

    p_cal = sub.add_parser("calibrate", help="pick the largest safe rejection tuning")
    common(p_cal)
    p_cal.add_argument("--seed", type=int, default=None, help="64-bit master seed (required)")
    p_cal.add_argument("--non-regulatory-normal-approx", action="store_true")
    p_cal.set_defaults(func=cmd_calibrate)

    p_oracle = sub.add_parser("oracle", help="write exact error rates at tile centers")
    common(p_oracle)
    p_oracle.set_defaults(func=cmd_oracle)

    p_rd = sub.add_parser("redesign-check", help="tile-wise re-design slack check")
    p_rd.add_argument("--g2-plus", required=True, help="new design upper surface CSV")
    p_rd.add_argument("--g1-minus", required=True, help="conditional lower surface CSV")
    p_rd.add_argument("--g0-plus", required=True, help="original upper surface CSV")
    p_rd.add_argument("--alpha", type=float, required=True)
    p_rd.add_argument("--delta0", type=float, default=None)
    p_rd.add_argument("--delta1", type=float, default=None)
    p_rd.add_argument("--delta2", type=float, default=None)
    p_rd.add_argument("--out", default=".")
    p_rd.set_defaults(func=cmd_redesign_check)
    return parser


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    # the threading env var must exist before numba is first imported
    if "--threads" in argv:
        try:
            requested = int(argv[argv.index("--threads") + 1])
            current = int(os.environ.get("NUMBA_NUM_THREADS", "0") or 0)
            cpus = os.cpu_count() or 1
            os.environ["NUMBA_NUM_THREADS"] = str(max(requested, current, cpus))
        except (ValueError, IndexError):
            pass
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CalibrationError as exc:
        print(f"calibration failure: {exc}", file=sys.stderr)
        return 3
    except TileboundError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
