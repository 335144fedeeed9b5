"""Experiment configuration: defaults, JSON schema, presets and object builders."""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .aggregation import GlobalGrid
from .beam import DEFAULT_FREQUENCIES, DEFAULT_KINDS, BeamModalModel, BeamSpec
from .cwt import MorletParams, frequency_grid
from .scans import SPEED_PRESETS, RoadProfile
from .vehicle import PRESETS


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


DEFAULTS = {
    "name": "default",
    "beam": {"span_length": 3.06, "deck_width": 0.635},
    "modes": {"frequencies": list(DEFAULT_FREQUENCIES), "kinds": list(DEFAULT_KINDS),
              "damping": 0.01, "modal_mass": 1.0},
    "excitation": {"rate": 2.0, "magnitude_range": [0.002, 0.006], "warmup": 15.0},
    "scan_plan": {"groups": [{"speed": "medium", "count": 240}], "lanes": [0.28],
                  "directions": "alternate", "seed": 1, "sampling_rate": 100.0, "jitter": 0.2},
    "noise": {"std": 0.05},
    "bumps": {"positions": [0.45, 1.0, 1.6, 2.1, 2.6], "severity": 55.0, "half_width": 0.005,
              "exponent": 2.0},
    "vehicle": {"enabled": False, "pool": ["V1", "V2", "V3", "V4"], "seed": 7,
                "input_mode": "acceleration", "hold": "foh"},
    "cwt": {"omega0": 16.0, "fmin": 1.0, "fmax": 40.0, "n_freq": 201, "spacing": "log",
            "padding_fraction": 0.5, "padding_mode": "antisymmetric", "normalization": "amplitude",
            "resample_fs": 100.0},
    "grid": {"n_x": 200, "power": False},
    "identify": {"max_modes": 10, "min_prominence_ratio": 0.1, "noise_quantile": 0.02,
                 "band": [2.0, 40.0], "halfband": 1, "decontaminate": False, "reference": True},
    "output": {"dir": "runs/default", "figures": True},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_seed = {"type": "integer", "minimum": 0}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "crowdmodal experiment",
    **_obj({
        "name": {"type": "string", "minLength": 1},
        "base": {"type": "string"},
        "beam": _obj({"span_length": _pos, "deck_width": _pos}, ["span_length", "deck_width"]),
        "modes": _obj({
            "frequencies": {"type": "array", "items": _pos, "minItems": 1},
            "kinds": {"type": "array", "items": {"type": "string", "pattern": "^[VTvt][1-9][0-9]*$"}, "minItems": 1},
            "damping": {"oneOf": [{"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                                  {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                              "exclusiveMaximum": 1}}]},
            "modal_mass": {"oneOf": [_pos, {"type": "array", "items": _pos}]},
        }, ["frequencies", "kinds"]),
        "excitation": _obj({
            "rate": _nonneg,
            "magnitude_range": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
            "warmup": _nonneg,
        }, ["rate", "magnitude_range", "warmup"]),
        "scan_plan": _obj({
            "groups": {"type": "array", "minItems": 1, "items": _obj({
                "speed": {"oneOf": [{"enum": sorted(SPEED_PRESETS)}, _pos]},
                "count": _int1,
            }, ["speed", "count"])},
            "lanes": {"type": "array", "items": _num, "minItems": 1},
            "directions": {"enum": ["alternate", "forward", "reverse"]},
            "seed": _seed,
            "sampling_rate": _pos,
            "jitter": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
        }, ["groups", "lanes", "seed"]),
        "noise": _obj({"std": _nonneg}, ["std"]),
        "bumps": _obj({
            "positions": {"type": "array", "items": _nonneg},
            "severity": _nonneg,
            "half_width": _pos,
            "exponent": _num,
        }),
        "vehicle": _obj({
            "enabled": {"type": "boolean"},
            "pool": {"type": "array", "items": {"enum": sorted(PRESETS)}, "minItems": 1},
            "seed": _seed,
            "input_mode": {"enum": ["acceleration", "displacement"]},
            "hold": {"enum": ["foh", "zoh"]},
        }, ["enabled", "seed"]),
        "cwt": _obj({
            "omega0": {"type": "number", "minimum": 5},
            "fmin": _pos, "fmax": _pos,
            "n_freq": {"type": "integer", "minimum": 3},
            "spacing": {"enum": ["log", "linear"]},
            "padding_fraction": _nonneg,
            "padding_mode": {"enum": ["antisymmetric", "reflection", "zero"]},
            "normalization": {"enum": ["amplitude", "l2"]},
            "resample_fs": _pos,
        }),
        "grid": _obj({"n_x": {"type": "integer", "minimum": 50}, "power": {"type": "boolean"}}),
        "identify": _obj({
            "max_modes": _int1,
            "min_prominence_ratio": _nonneg,
            "noise_quantile": {"type": "number", "minimum": 0, "maximum": 1},
            "band": {"oneOf": [{"type": "null"},
                               {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}]},
            "halfband": {"type": "integer", "minimum": 0},
            "decontaminate": {"type": "boolean"},
            "reference": {"type": "boolean"},
        }),
        "output": _obj({"dir": {"type": "string"}, "figures": {"type": "boolean"}}),
    }, ["scan_plan"]),
}


def preset_names():
    return sorted(p.name[:-5] for p in resources.files("crowdmodal.presets").iterdir()
                  if p.name.endswith(".json"))


def _read_preset(name):
    path = resources.files("crowdmodal.presets") / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def _flatten(doc, seen=()):
    """Resolve a chain of ``base`` presets into one override document."""
    if "base" not in doc:
        return doc
    name = doc["base"]
    if name in seen:
        raise ConfigError(f"circular base preset {name!r}", "base")
    parent = _flatten(_read_preset(name), seen + (name,))
    return deep_merge(parent, {k: v for k, v in doc.items() if k != "base"})


def deep_merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _format_path(path):
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def validate(doc):
    """Schema check plus cross-field checks; raises :class:`ConfigError` with a field path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: _format_path(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _format_path(e.absolute_path))
    modes = doc["modes"]
    n = len(modes["frequencies"])
    if len(modes["kinds"]) != n:
        raise ConfigError("must have one kind per frequency", "modes.kinds")
    for key in ("damping", "modal_mass"):
        if isinstance(modes[key], list) and len(modes[key]) != n:
            raise ConfigError("must have one entry per frequency", f"modes.{key}")
    half = doc["beam"]["deck_width"] / 2
    for i, y in enumerate(doc["scan_plan"]["lanes"]):
        if abs(y) > half:
            raise ConfigError(f"lane offset {y} outside deck half-width {half}", f"scan_plan.lanes[{i}]")
    for i, x in enumerate(doc["bumps"]["positions"]):
        if x > doc["beam"]["span_length"]:
            raise ConfigError("bump outside the span", f"bumps.positions[{i}]")
    lo, hi = doc["excitation"]["magnitude_range"]
    if lo > hi:
        raise ConfigError("lower bound exceeds upper bound", "excitation.magnitude_range")
    c = doc["cwt"]
    if c["fmin"] >= c["fmax"]:
        raise ConfigError("fmin must be below fmax", "cwt.fmin")
    if c["fmax"] >= c["resample_fs"] / 2:
        raise ConfigError("fmax must be below the Nyquist frequency of resample_fs", "cwt.fmax")
    band = doc["identify"]["band"]
    if band is not None and band[0] >= band[1]:
        raise ConfigError("band lower edge must be below the upper edge", "identify.band")
    return doc


def resolve(doc, seed=None, out=None):
    """Layer ``doc`` (and its ``base`` preset, if named) over the defaults and validate."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = deep_merge(DEFAULTS, _flatten(doc))
    if seed is not None:
        cfg["scan_plan"]["seed"] = int(seed)
    if out is not None:
        cfg["output"]["dir"] = str(out)
    return validate(cfg)


def load_config(source, seed=None, out=None):
    """Load a config from a JSON file path or a preset name."""
    p = Path(source)
    if p.suffix == ".json" or p.exists():
        try:
            doc = json.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {source} not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {source} is not valid JSON: {e}") from None
    else:
        doc = _read_preset(str(source))
    return resolve(doc, seed, out)


def config_hash(cfg):
    """SHA-256 of the canonical JSON form; the output directory does not count."""
    doc = copy.deepcopy(cfg)
    doc.get("output", {}).pop("dir", None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _per_mode(value, n):
    return tuple(value) if isinstance(value, list) else (float(value),) * n


def build_spec(cfg):
    b = cfg["beam"]
    return BeamSpec(b["span_length"], b["deck_width"], tuple(cfg["scan_plan"]["lanes"]))


def build_model(cfg):
    m = cfg["modes"]
    n = len(m["frequencies"])
    return BeamModalModel(tuple(m["frequencies"]), tuple(m["kinds"]), _per_mode(m["damping"], n),
                          _per_mode(m["modal_mass"], n))


def build_profile(cfg):
    b = cfg["bumps"]
    return RoadProfile(tuple(b["positions"]), b["severity"], b["half_width"], b["exponent"])


def build_params(cfg):
    c = cfg["cwt"]
    freqs = frequency_grid(c["fmin"], c["fmax"], c["n_freq"], c["spacing"])
    return MorletParams(c["omega0"], freqs, c["padding_fraction"], c["padding_mode"], c["normalization"])


def build_grid(cfg, params=None):
    params = params or build_params(cfg)
    return GlobalGrid.uniform(cfg["beam"]["span_length"], params.frequencies, cfg["grid"]["n_x"])
