"""Run configuration: strict YAML schema, defaults, overrides and validation."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from ..model import CutoffSpec, ModelError, ModelParams, PotentialSpec

KINDS = ("flow", "scatter", "hartree", "quantum-sweep", "ground-sweep")

# Leaf values are (type(s), default).  Nested dicts are sub-blocks.
_NUM = (int, float)
SCHEMA: dict[str, Any] = {
    "kind": (str, None),
    "seed": (int, 0),
    "output_dir": (str, "runs/out"),
    "model": {
        "dimension": (int, 1),
        "box_half_length": (_NUM, 16.0),
        "grid_size": (int, 256),
        "mass": (_NUM, 1.0),
        "potential": {"c0": (_NUM, 1.0), "nu": (_NUM, 1.0)},
        "cutoff": {"radius": (_NUM, 2.0), "amplitude": (_NUM, 1.0), "profile": (str, "bump")},
    },
    "tolerances": {
        "energy_drift": (_NUM, 1e-6),
        "mass_drift": (_NUM, 1e-12),
        "pairing": (_NUM, 1e-6),
        "residual": (_NUM, 1e-8),
        "krylov": (_NUM, 1e-12),
    },
    "initial": {
        "type": (str, "hartree"),  # hartree | modes | random
        "delta": (_NUM, 0.5),
        "weights": (list, [0.8, 0.6]),
        "phase": (_NUM, 0.3),
        "meson_amplitude": (_NUM, 0.0),
    },
    "flow": {"horizon": (_NUM, 10.0), "dt": (_NUM, 1e-3), "stride": (int, 100), "snapshots": (bool, False)},
    "scatter": {
        "horizon": (_NUM, 40.0),
        "max_horizon": (_NUM, 160.0),
        "directions": (list, [1, -1]),
        "dictionary_size": (int, 8),
        "dt": (_NUM, 2e-3),
        "large_box": (bool, True),
        "check_decay": (bool, False),
    },
    "hartree": {
        "deltas": (list, [0.3, 0.5]),
        "method": (str, "scf"),
        "starts": (int, 3),
        "max_iter": (int, 500),
    },
    "quantum_sweep": {
        "hslash_list": (list, [0.5, 0.25, 0.125]),
        "observable": (str, "weyl"),
        "du": (int, 3),
        "meson_modes": (int, 3),
        "cap": ((int, type(None)), None),
        "horizon": (_NUM, 2.0),
        "step": (_NUM, 0.02),
        "delta": (_NUM, 0.5),
        "direction": (int, 1),
        "xi_count": ((int, type(None)), None),
    },
    "ground_sweep": {
        "pairs": (list, [[1, 0.25], [2, 0.125], [4, 0.0625]]),
        "du": (int, 3),
        "meson_modes": (int, 3),
        "cap": ((int, type(None)), None),
        "delta": (_NUM, 0.5),
        "horizon": (_NUM, 200.0),
        "xi_count": ((int, type(None)), None),
    },
}

KIND_BLOCK = {
    "flow": "flow",
    "scatter": "scatter",
    "hartree": "hartree",
    "quantum-sweep": "quantum_sweep",
    "ground-sweep": "ground_sweep",
}


class ConfigError(ValueError):
    """Every schema violation found in a configuration."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def defaults(schema: dict = SCHEMA) -> dict:
    out = {}
    for key, spec in schema.items():
        out[key] = defaults(spec) if isinstance(spec, dict) else copy.deepcopy(spec[1])
    return out


def _check(raw: Any, schema: dict, path: str, errors: list[str]) -> dict:
    out = {}
    if not isinstance(raw, dict):
        errors.append(f"{path or '<root>'}: expected a mapping")
        return defaults(schema)
    for key in raw:
        if key not in schema:
            errors.append(f"{path}{key}: unknown key")
    for key, spec in schema.items():
        where = f"{path}{key}"
        if isinstance(spec, dict):
            out[key] = _check(raw.get(key, {}) or {}, spec, where + ".", errors)
            continue
        types, default = spec
        if key not in raw:
            out[key] = copy.deepcopy(default)
            continue
        val = raw[key]
        if isinstance(val, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            errors.append(f"{where}: expected {_tname(types)}, got bool")
        elif types == _NUM and isinstance(val, int):
            val = float(val)
            out[key] = val
            continue
        elif not isinstance(val, types):
            errors.append(f"{where}: expected {_tname(types)}, got {type(val).__name__}")
        out[key] = val
    return out


def _tname(types) -> str:
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


def _semantic(cfg: dict, errors: list[str]) -> None:
    if cfg["kind"] is None:
        errors.append("kind: required")
    elif cfg["kind"] not in KINDS:
        errors.append(f"kind: must be one of {', '.join(KINDS)}")
    try:
        model_params(cfg).check()
    except ModelError as exc:
        errors.extend(f"model: {m}" for m in str(exc).split("; "))
    except (TypeError, ValueError) as exc:
        errors.append(f"model: {exc}")
    f = cfg["flow"]
    if f["dt"] <= 0:
        errors.append("flow.dt: must be positive")
    if f["horizon"] <= 0:
        errors.append("flow.horizon: must be positive")
    if f["stride"] < 1:
        errors.append("flow.stride: must be >= 1")
    if cfg["initial"]["type"] not in ("hartree", "modes", "random"):
        errors.append("initial.type: must be hartree, modes or random")
    if cfg["initial"]["delta"] <= 0:
        errors.append("initial.delta: must be positive")
    s = cfg["scatter"]
    if any(d not in (1, -1) for d in s["directions"]):
        errors.append("scatter.directions: entries must be 1 or -1")
    if not 1 <= s["dictionary_size"] <= 16:
        errors.append("scatter.dictionary_size: must be in [1, 16]")
    if s["max_horizon"] < s["horizon"]:
        errors.append("scatter.max_horizon: must be >= scatter.horizon")
    h = cfg["hartree"]
    if h["method"] not in ("scf", "pg"):
        errors.append("hartree.method: must be scf or pg")
    if not h["deltas"] or any(not isinstance(d, (int, float)) or d <= 0 for d in h["deltas"]):
        errors.append("hartree.deltas: must be a non-empty list of positive numbers")
    q = cfg["quantum_sweep"]
    if q["observable"] not in ("weyl", "field", "corr", "ground"):
        errors.append("quantum_sweep.observable: must be weyl, field, corr or ground")
    if not q["hslash_list"] or any(not isinstance(v, (int, float)) or not 0 < v <= 1 for v in q["hslash_list"]):
        errors.append("quantum_sweep.hslash_list: values must lie in (0, 1]")
    if q["direction"] not in (1, -1):
        errors.append("quantum_sweep.direction: must be 1 or -1")
    g = cfg["ground_sweep"]
    for pair in g["pairs"]:
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2 and isinstance(pair[0], int) and pair[0] >= 1 and isinstance(pair[1], (int, float)) and 0 < pair[1] <= 1):
            errors.append(f"ground_sweep.pairs: bad entry {pair!r}, expected [n >= 1, hbar in (0, 1]]")


def resolve(raw: dict) -> dict:
    """Validated configuration with every default filled in; raises ConfigError."""
    errors: list[str] = []
    cfg = _check(raw, SCHEMA, "", errors)
    try:
        _semantic(cfg, errors)
    except (TypeError, KeyError, AttributeError):
        pass  # a mistyped value was already reported by the schema pass
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_override(text: str) -> tuple[list[str], Any]:
    if "=" not in text:
        raise ConfigError([f"override {text!r}: expected key=value"])
    key, value = text.split("=", 1)
    return key.strip().split("."), yaml.safe_load(value)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    raw = copy.deepcopy(raw)
    for item in overrides:
        path, value = parse_override(item)
        node = raw
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError([f"override {item!r}: {part} is not a block"])
        node[path[-1]] = value
    return raw


def load(path: str | Path, overrides: list[str] | None = None) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return resolve(apply_overrides(raw, overrides or []))


def model_params(cfg: dict) -> ModelParams:
    m = cfg["model"]
    return ModelParams(
        dimension=m["dimension"],
        box_half_length=float(m["box_half_length"]),
        grid_size=m["grid_size"],
        mass=float(m["mass"]),
        potential=PotentialSpec(**m["potential"]),
        cutoff=CutoffSpec(**m["cutoff"]),
    )


@dataclass
class RunConfig:
    """A resolved configuration; ``data`` holds every key including defaults."""

    data: dict

    @classmethod
    def from_file(cls, path: str | Path, overrides: list[str] | None = None) -> "RunConfig":
        return cls(load(path, overrides))

    @classmethod
    def from_dict(cls, raw: dict, overrides: list[str] | None = None) -> "RunConfig":
        return cls(resolve(apply_overrides(raw, overrides or [])))

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def block(self) -> dict:
        return self.data[KIND_BLOCK[self.kind]]

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output_dir"])

    def model(self) -> ModelParams:
        return model_params(self.data)
