"""Run configuration: a flat human-readable key = value file plus flag
overrides, validated against module preconditions before simulation starts.

The master seed is deliberately not a config default: it arrives on the
command line so a regulator or third party can pin it after the design is
frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import Hypothesis, Region, build_grid
from .errors import ConfigError

_DESIGN_KEYS = {
    "parallel_gaussian": {"n_per_arm", "sigma", "alpha", "mu0", "lambda"},
    "thompson": {"n_total", "p0", "posterior_threshold", "lambda"},
}

_GLOBAL_KEYS = {
    "design", "region_lower", "region_upper", "steps", "hypotheses",
    "n_sims", "delta", "batch_size", "budget_split", "surface_kind",
    "lambda_ladder", "alpha_target",
}


def parse_config_file(path):
    """Read `key = value` lines; '#' starts a comment, blank lines ignored."""
    raw = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = value.strip()
    return raw


def _as_float(raw, key, default=None):
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return float(raw[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r} must be a number, got {raw[key]!r}") from exc


def _as_int(raw, key, default=None):
    val = _as_float(raw, key, default)
    if val != int(val):
        raise ConfigError(f"config key {key!r} must be an integer, got {val}")
    return int(val)


def _as_floats(raw, key):
    if key not in raw:
        raise ConfigError(f"missing required config key {key!r}")
    try:
        return [float(x) for x in raw[key].split(",")]
    except ValueError as exc:
        raise ConfigError(f"config key {key!r} must be comma-separated numbers") from exc


def _parse_hypotheses(text):
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        for op in ("<=", ">="):
            if op in chunk:
                coord, cutoff = chunk.split(op)
                out.append(Hypothesis(int(coord), float(cutoff), op))
                break
        else:
            raise ConfigError(f"hypothesis {chunk!r} must look like '0 <= 0.405'")
    return out


def _parse_ladder(text):
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("lambda_ladder range must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1 or stop < start:
            raise ConfigError("lambda_ladder range must be nondecreasing with count >= 1")
        return list(np.linspace(start, stop, count))
    return [float(x) for x in text.split(",")]


@dataclass
class RunConfig:
    design_id: str
    design_params: dict
    region: Region
    steps: list
    hypotheses: list  # None means "the design's own"
    n_sims: int
    delta: float
    batch_size: int = 4096
    budget_split: float = 0.5
    surface_kind: str = "upper"
    lambda_ladder: list = None
    alpha_target: float = None
    raw: dict = field(default_factory=dict, repr=False)

    def make_design(self, lam_override=None):
        from .designs import DESIGNS

        params = dict(self.design_params)
        if lam_override is not None:
            params["lam"] = float(lam_override)
        return DESIGNS[self.design_id](**params)

    def make_tiling(self, design):
        hyps = self.hypotheses if self.hypotheses is not None else design.hypotheses()
        if len(self.steps) != self.region.dim:
            raise ConfigError("steps and region dimensions disagree")
        if self.region.dim != design.param_dim:
            raise ConfigError(
                f"region has dimension {self.region.dim}; design needs {design.param_dim}"
            )
        return build_grid(self.region, self.steps, hyps)

    def canonical_text(self, master_seed):
        """Deterministic rendering of everything that identifies a simulation,
        hashed into checkpoint headers."""
        items = {
            "design": self.design_id,
            **{k: repr(v) for k, v in sorted(self.design_params.items())},
            "region_lower": ",".join(repr(x) for x in self.region.lower),
            "region_upper": ",".join(repr(x) for x in self.region.upper),
            "steps": ",".join(str(s) for s in self.steps),
            "hypotheses": "design-default" if self.hypotheses is None else ";".join(
                f"{h.coord_index}{h.direction}{h.cutoff!r}" for h in self.hypotheses
            ),
            "n_sims": str(self.n_sims),
            "surface_kind": self.surface_kind,
            "master_seed": str(master_seed),
        }
        return "\n".join(f"{k}={v}" for k, v in sorted(items.items()))


def build_config(raw):
    """Validate raw key-value pairs into a RunConfig."""
    unknown = set(raw) - _GLOBAL_KEYS - set().union(*_DESIGN_KEYS.values())
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    design_id = raw.get("design")
    if design_id not in _DESIGN_KEYS:
        raise ConfigError(
            f"design must be one of {sorted(_DESIGN_KEYS)}, got {design_id!r}"
        )
    foreign = {
        k for k in raw
        if k in set().union(*_DESIGN_KEYS.values()) - _DESIGN_KEYS[design_id]
    }
    if foreign:
        raise ConfigError(
            f"config keys {sorted(foreign)} do not apply to design {design_id!r}"
        )
    params = {}
    if design_id == "parallel_gaussian":
        params["n_per_arm"] = _as_int(raw, "n_per_arm", 10)
        params["sigma"] = _as_float(raw, "sigma", 1.0)
        params["alpha"] = _as_float(raw, "alpha", 0.025)
        params["mu0"] = _as_float(raw, "mu0", 0.0)
    else:
        params["n_total"] = _as_int(raw, "n_total", 100)
        params["p0"] = _as_float(raw, "p0", 0.6)
        params["threshold"] = _as_float(raw, "posterior_threshold", 0.95)
    params["lam"] = _as_float(raw, "lambda", 0.0)

    region = Region(np.array(_as_floats(raw, "region_lower")),
                    np.array(_as_floats(raw, "region_upper")))
    steps = [int(x) for x in _as_floats(raw, "steps")]
    if any(s < 1 for s in steps):
        raise ConfigError("steps must be >= 1 in every dimension")
    hypotheses = _parse_hypotheses(raw["hypotheses"]) if "hypotheses" in raw else None
    n_sims = _as_int(raw, "n_sims")
    if n_sims < 1:
        raise ConfigError("n_sims must be >= 1")
    delta = _as_float(raw, "delta")
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must be in (0, 1)")
    batch_size = _as_int(raw, "batch_size", 4096)
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    budget_split = _as_float(raw, "budget_split", 0.5)
    if not 0.0 < budget_split < 1.0:
        raise ConfigError("budget_split must be in (0, 1)")
    surface_kind = raw.get("surface_kind", "upper")
    if surface_kind not in ("upper", "lower"):
        raise ConfigError("surface_kind must be 'upper' or 'lower'")
    ladder = _parse_ladder(raw["lambda_ladder"]) if "lambda_ladder" in raw else None
    alpha_target = _as_float(raw, "alpha_target", 0.0) if "alpha_target" in raw else None
    return RunConfig(design_id, params, region, steps, hypotheses, n_sims, delta,
                     batch_size, budget_split, surface_kind, ladder, alpha_target,
                     raw=dict(raw))


def load_config(path):
    return build_config(parse_config_file(path))
