"""YAML run configuration: schema validation, overrides and hashing.

Top-level keys (all optional except ``schema_version`` and ``spec``)::

    schema_version: 1
    spec:        {n_sites, omega, delta_g, delta_l, v_nn, interaction, distance_mode}
    initial:     {kind, pqg_method, pqg_epsilon, landau_zener: {delta_start, delta_end, omega_lz, duration, address_shift}}
    duration:    post-quench evolution time (us)
    sample_times: list of times, or {start, stop, count}
    noise:       null or {t1, t2_star, enabled}
    trajectories, rng_seed, krylov_dim, record_sites
    spam:        null or {p1, p2}
    shots:       null or integer
    scan:        {ratios, state, method, dt, alpha_low, alpha_high, horizon, fit_range}
    resonance:   {L, ratios, omega_f, ramp_duration, landscape}
    bch:         {max_order, pqg_epsilon}

Frequencies are in MHz and times in us.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

from fvdsim.engine import NoiseModel
from fvdsim.errors import ConfigError, FvdError
from fvdsim.model import HamiltonianSpec
from fvdsim.observables import SpamModel
from fvdsim.protocols import ExperimentConfig, InitialState, LandauZenerParams

SCHEMA_VERSION = 1

_SCHEMA: dict = {
    "schema_version": int,
    "spec": {"n_sites": int, "omega": float, "delta_g": float, "delta_l": float, "v_nn": float,
             "interaction": str, "distance_mode": str},
    "initial": {"kind": str, "pqg_method": str, "pqg_epsilon": float,
                "landau_zener": {"delta_start": float, "delta_end": float, "omega_lz": float, "duration": float,
                                 "address_shift": float}},
    "duration": float,
    "sample_times": "times",
    "noise": {"t1": float, "t2_star": float, "enabled": bool},
    "trajectories": int,
    "rng_seed": int,
    "krylov_dim": int,
    "record_sites": bool,
    "spam": {"p1": float, "p2": float},
    "shots": int,
    "scan": {"ratios": list, "state": str, "method": str, "dt": float, "alpha_low": float, "alpha_high": float,
             "horizon": float, "fit_range": list},
    "resonance": {"L": int, "ratios": list, "omega_f": float, "ramp_duration": float, "landscape": bool},
    "bch": {"max_order": int, "pqg_epsilon": float},
}

DEFAULTS: dict = {
    "initial": {"kind": "neel", "pqg_method": "exact_ground", "pqg_epsilon": 1e-4},
    "duration": 1.0,
    "sample_times": None,
    "noise": None,
    "trajectories": 1,
    "rng_seed": 0,
    "krylov_dim": 12,
    "record_sites": False,
    "spam": None,
    "shots": None,
}


class _LineLoader(yaml.SafeLoader):
    pass


def _mapping_with_lines(loader, node):
    loader.flatten_mapping(node)
    out = {}
    lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        lines[key] = key_node.start_mark.line + 1
    return _LinedDict(out, lines)


class _LinedDict(dict):
    def __init__(self, data, lines):
        super().__init__(data)
        self.lines = lines


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _mapping_with_lines)


def _where(path: str, line: int | None) -> str:
    return f"{path} (line {line})" if line else path


def _validate(data, schema, path: str = "") -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping", path or None)
    lines = getattr(data, "lines", {})
    for key, value in data.items():
        full = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise ConfigError(f"unknown key '{full}' at {_where(full, lines.get(key))}", full)
        rule = schema[key]
        if value is None:
            continue
        if isinstance(rule, dict):
            _validate(value, rule, full)
        elif rule == "times":
            if isinstance(value, dict):
                _validate(value, {"start": float, "stop": float, "count": int}, full)
            elif not isinstance(value, list):
                raise ConfigError(f"{_where(full, lines.get(key))} must be a list or {{start, stop, count}}", full)
        elif rule is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{_where(full, lines.get(key))} must be a number, got {value!r}", full)
        elif rule is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{_where(full, lines.get(key))} must be an integer, got {value!r}", full)
        elif not isinstance(value, rule):
            raise ConfigError(f"{_where(full, lines.get(key))} must be of type {rule.__name__}, got {value!r}", full)


def _plain(data):
    if isinstance(data, dict):
        return {k: _plain(v) for k, v in data.items()}
    if isinstance(data, list):
        return [_plain(v) for v in data]
    return data


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override '{text}' must look like key.path=value")
    key, raw = text.split("=", 1)
    return key.strip().split("."), yaml.safe_load(raw)


def apply_overrides(data: dict, overrides) -> dict:
    data = copy.deepcopy(data)
    for text in overrides or ():
        path, value = parse_override(text)
        node = data
        for part in path[:-1]:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
            if not isinstance(node, dict):
                raise ConfigError(f"override '{text}' descends into a non-mapping", ".".join(path))
        node[path[-1]] = value
    return data


def load_config(path, overrides=()) -> dict:
    """Read, validate and resolve a configuration file; returns plain data with defaults filled in."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.load(text, Loader=_LineLoader) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    _validate(raw, _SCHEMA)
    data = apply_overrides(_plain(raw), overrides)
    _validate(data, _SCHEMA)
    return resolve(data)


def resolve(data: dict) -> dict:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}",
                          "schema_version")
    if "spec" not in data:
        raise ConfigError("missing required key 'spec'", "spec")
    out = copy.deepcopy(DEFAULTS)
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    for key in ("n_sites", "omega", "delta_g", "delta_l", "v_nn"):
        if key not in out["spec"]:
            raise ConfigError(f"missing required key 'spec.{key}'", f"spec.{key}")
    return out


def config_hash(data: dict) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()


def sample_times_from(value, duration: float) -> tuple[float, ...] | None:
    if value is None:
        return None
    if isinstance(value, dict):
        return tuple(float(t) for t in np.linspace(value["start"], value["stop"], value["count"]))
    return tuple(float(t) for t in value)


def build_experiment(data: dict) -> ExperimentConfig:
    """Turn resolved config data into an ``ExperimentConfig`` (errors become ``ConfigError``)."""
    try:
        spec = HamiltonianSpec(**data["spec"])
        init = dict(data["initial"])
        lz = init.pop("landau_zener", None)
        initial = InitialState(**init, landau_zener=LandauZenerParams(**lz) if lz else LandauZenerParams())
        noise = NoiseModel(**data["noise"]) if data.get("noise") else None
        spam = SpamModel(**data["spam"]) if data.get("spam") else None
        return ExperimentConfig(
            spec=spec,
            initial=initial,
            duration=float(data["duration"]),
            sample_times=sample_times_from(data.get("sample_times"), data["duration"]),
            noise=noise,
            trajectories=int(data["trajectories"]),
            spam=spam,
            shots=data.get("shots"),
            rng_seed=int(data["rng_seed"]),
            krylov_dim=int(data["krylov_dim"]),
            record_sites=bool(data["record_sites"]),
        )
    except ConfigError:
        raise
    except (FvdError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
