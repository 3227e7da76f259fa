"""Experiment configuration: a TOML file, overridden by ``--set key=value``.

Recognised keys (all optional except ``experiment``):

    experiment      enum-ball | growth | volumes | theta | orbit | ratio | report | accept
    family          lattice family for enum-ball / growth (sl2z, sl2zi, solvable, ...)
    model           space model for orbit / ratio / report
    stabilizer      SO11 | SO12 | SL2R | TORUS for volumes / theta
    t               single height
    t_grid          list of heights, or a table {start, stop, step}
    count_only      enum-ball prints only the count
    seed            base seed (u64) for base points and Monte Carlo
    n_points        number of seeded base points
    normalization   model | raw | volume
    samples         Monte Carlo samples per volume
    k_nodes         periodic trapezoid nodes per compact angle
    r1, r2          section radii for theta (lists allowed)
    workers         numba worker threads
    out             output directory
    [base]          chart box {lo, hi} for base points
    [phi], [psi]    test functions {kind, lo, hi, scale, name}
    [budget]        max_elements, max_stage_seconds
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .arithmetic_groups import Family
from .spaces import ModelKind, TestFunction, TestFunctionKind
from .volumes import StabilizerKind

EXPERIMENTS = ("enum-ball", "growth", "volumes", "theta", "orbit", "ratio", "report", "accept")

DEFAULTS = {
    "seed": 0,
    "n_points": 10,
    "normalization": "model",
    "samples": 1_000_000,
    "k_nodes": 256,
    "workers": 1,
    "count_only": False,
    "out": "runs/latest",
    "budget": {"max_elements": 200_000_000, "max_stage_seconds": 900.0},
}


class ConfigError(ValueError):
    def __init__(self, key: str, reason: str):
        super().__init__(f"config key '{key}': {reason}")
        self.key = key
        self.reason = reason


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def resolved(self) -> dict:
        return {"experiment": self.experiment, **self.values}

    def hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def t_grid(self) -> list[float]:
        return self.values["t_grid"]

    def phi(self, key: str = "phi") -> TestFunction:
        d = self.values[key]
        return TestFunction(d["kind"], tuple(d["lo"]), tuple(d["hi"]), float(d.get("scale", 1.0)),
                            d.get("name", key))


def _parse_value(raw: str):
    """Values in --set use TOML syntax; bare words fall back to strings."""
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def apply_override(values: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(item, "overrides must look like key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    parts = key.split(".")
    node = values
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(key, f"'{p}' is not a table")
    node[parts[-1]] = _parse_value(raw.strip())


def _grid(key, spec) -> list[float]:
    if isinstance(spec, dict):
        try:
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        except KeyError as e:
            raise ConfigError(key, f"grid table needs start, stop and step (missing {e})") from None
        if step <= 0:
            raise ConfigError(key, "step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if not isinstance(spec, list) or not spec:
        raise ConfigError(key, "expected a non-empty list or a {start, stop, step} table")
    return [float(v) for v in spec]


def _check_enum(values, key, allowed):
    v = values.get(key)
    if v is not None and v not in allowed:
        raise ConfigError(key, f"'{v}' is not one of {', '.join(allowed)}")


def _check_phi(values, key, model):
    d = values.get(key)
    if d is None:
        return
    if not isinstance(d, dict):
        raise ConfigError(key, "expected a table {kind, lo, hi}")
    for k in ("kind", "lo", "hi"):
        if k not in d:
            raise ConfigError(f"{key}.{k}", "missing")
    if d["kind"] not in [e.value for e in TestFunctionKind]:
        raise ConfigError(f"{key}.kind", f"unknown test function kind '{d['kind']}'")
    try:
        phi = TestFunction(d["kind"], tuple(d["lo"]), tuple(d["hi"]), float(d.get("scale", 1.0)))
    except (ValueError, TypeError) as e:
        raise ConfigError(key, str(e)) from None
    if model is not None:
        from .spaces import SpaceModel
        try:
            phi.validate_for(SpaceModel(model))
        except ValueError as e:
            raise ConfigError(key, str(e)) from None


def validate(values: dict) -> ExperimentConfig:
    values = copy.deepcopy(values)
    exp = values.pop("experiment", None)
    if exp is None:
        raise ConfigError("experiment", "missing")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"'{exp}' is not one of {', '.join(EXPERIMENTS)}")
    merged = copy.deepcopy(DEFAULTS)
    for k, v in values.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k].update(v)
        else:
            merged[k] = v
    values = merged
    _check_enum(values, "family", [f.value for f in Family])
    _check_enum(values, "model", [m.value for m in ModelKind])
    _check_enum(values, "stabilizer", [s.value for s in StabilizerKind])
    _check_enum(values, "normalization", ["model", "raw", "volume"])
    if "t" in values:
        if not isinstance(values["t"], (int, float)) or not math.isfinite(values["t"]):
            raise ConfigError("t", "must be a finite number")
        if values["t"] < 0:
            raise ConfigError("t", f"must be non-negative, got {values['t']}")
        values["t"] = float(values["t"])
    if "t_grid" in values:
        g = _grid("t_grid", values["t_grid"])
        if any(t < 0 for t in g):
            raise ConfigError("t_grid", "heights must be non-negative")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ConfigError("t_grid", "heights must be strictly increasing")
        values["t_grid"] = g
    for key in ("seed", "n_points", "samples", "k_nodes", "workers"):
        v = values[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 0 or (key != "seed" and v == 0):
            raise ConfigError(key, f"must be a positive integer, got {v!r}")
    if values["seed"] >= 2**64:
        raise ConfigError("seed", "must fit in an unsigned 64-bit integer")
    if not isinstance(values["count_only"], bool):
        raise ConfigError("count_only", "must be true or false")
    for k in ("max_elements", "max_stage_seconds"):
        if not isinstance(values["budget"].get(k), (int, float)) or values["budget"][k] <= 0:
            raise ConfigError(f"budget.{k}", "must be a positive number")
    for key in ("phi", "psi"):
        _check_phi(values, key, values.get("model"))
    if "base" in values:
        b = values["base"]
        if not isinstance(b, dict) or "lo" not in b or "hi" not in b:
            raise ConfigError("base", "expected a table {lo, hi}")
        if len(b["lo"]) != len(b["hi"]) or any(h < l for l, h in zip(b["lo"], b["hi"])):
            raise ConfigError("base", "invalid box")
    needs = {
        "enum-ball": ("family", "t"),
        "growth": ("family", "t_grid"),
        "volumes": ("stabilizer", "t_grid"),
        "theta": ("stabilizer", "t"),
        "orbit": ("model", "t", "phi"),
        "ratio": ("model", "t", "phi", "psi"),
        "report": ("model", "t_grid", "phi"),
        "accept": (),
    }[exp]
    for k in needs:
        if k not in values:
            raise ConfigError(k, f"required by the {exp} experiment")
    return ExperimentConfig(exp, values)


def load_config(path: str | Path | None, overrides: list[str] = (), experiment: str | None = None,
                extra: dict | None = None) -> ExperimentConfig:
    values: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                values = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except tomli.TOMLDecodeError as e:
            raise ConfigError("config", f"invalid TOML: {e}") from None
    if experiment is not None:
        if values.get("experiment", experiment) != experiment:
            raise ConfigError("experiment", f"file says '{values['experiment']}', command line says '{experiment}'")
        values["experiment"] = experiment
    for k, v in (extra or {}).items():
        if v is not None:
            values[k] = v
    for item in overrides:
        apply_override(values, item)
    return validate(values)


def base_points(model, cfg: ExperimentConfig) -> np.ndarray:
    """Seeded base points in the configured chart box.

    Uses its own stream (seed, 0) so Monte Carlo streams never share state.
    """
    box = cfg.get("base") or default_base_box(model)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg["seed"], 0])))
    return model.sample_points(rng, cfg["n_points"], box["lo"], box["hi"])


def default_base_box(model) -> dict:
    k = model.kind
    if k is ModelKind.PROJECTIVE_LINE:
        return {"lo": [0.0], "hi": [math.pi]}
    if k is ModelKind.DE_SITTER2:
        return {"lo": [-0.5, 0.0], "hi": [0.5, 2 * math.pi]}
    if k is ModelKind.DE_SITTER3:
        return {"lo": [-0.5, 0.1, 0.0], "hi": [0.5, math.pi - 0.1, 2 * math.pi]}
    if k is ModelKind.PUNCTURED_PLANE:
        return {"lo": [0.3, 0.3], "hi": [2.0, 2.0]}
    return {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]}
