"""JSON run-configuration loading, validation, and hashing.

The configuration is strict: unknown keys anywhere are errors (reported
with their dotted path), duplicate keys in the JSON text are errors, and
value problems carry the offending path.  Every omitted key gets the
shipped default, and the fully resolved dictionary is what gets hashed
(SHA-256 over a canonical dump, so formatting and key order do not change
the hash) and echoed into the run directory, physics constants included.

Exactly one data source drives an inversion: a synthetic ``phantom``
(default: the Gaussian-well target), or a measured ``data`` file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Any

from .acceptance import LambdaOrderingError, Sensitivities
from .chain import MISFIT_DOMAINS, RULES, ChainConfig
from .grid import GridSpec
from .normalizers import SCHEMES, NormalizerConfig
from .proposal import ProposalConfig


class ConfigError(ValueError):
    """Invalid run configuration; the message carries the key path."""


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _as_float(path: str, v: Any) -> float:
    if not _is_number(v):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    return float(v)


def _as_int(path: str, v: Any) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return v


def _as_bool(path: str, v: Any) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: expected a boolean, got {v!r}")
    return v


def _as_str(path: str, v: Any, choices: tuple[str, ...] | None = None) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(f"{path}: {v!r} is not one of {list(choices)}")
    return v


# defaults, also the authoritative key sets
GRID_DEFAULTS = {
    "n": 20, "m": 20, "lx": 2.0, "ly": 2.0, "h_conv": 0.005,
    "thickness": 0.1, "power": 5.0, "cpu_segment_fraction": 0.5,
}
CHAIN_DEFAULTS = {
    "iterations": 10_000, "seed": 0, "record_stride": 1,
    "checkpoint_stride": 0, "acceptance_rule": "normalized",
    "misfit_domain": "boundary",
}
SENSITIVITY_DEFAULTS = {
    "lambda1": 0.5, "lambda2": 0.15, "lambda3": 0.45, "sigma": 0.1,
    "allow_unordered": False,
}
PROPOSAL_DEFAULTS = {"omega_max": 0.005, "k_min": 1e-6}
NORMALIZER_DEFAULTS = {
    "scheme": "z2", "w0": 0.1, "w": 0.75, "cutoff": 1.5, "zeta": 0.01,
    "eps": 1e-12, "restricted_interval": None,
}
PHANTOM_PARAM_KEYS = {
    "constant": ("value",),
    "tilted_plane": ("base", "gx", "gy"),
    "gaussian_well": ("base", "depth", "cx", "cy", "width"),
}
PHANTOM_PARAM_DEFAULTS = {
    "constant": {"value": 1.0},
    "tilted_plane": {"base": 1.0, "gx": 0.5, "gy": 0.5},
    "gaussian_well": {"base": 1.0, "depth": 0.5, "cx": 0.5, "cy": 0.5,
                      "width": 0.2},
}

_INT_KEYS = {"grid.n", "grid.m", "chain.iterations", "chain.seed",
             "chain.record_stride", "chain.checkpoint_stride"}
_BOOL_KEYS = {"sensitivities.allow_unordered",
              "normalizer.restricted_interval"}
_STR_KEYS = {
    "chain.acceptance_rule": RULES,
    "chain.misfit_domain": MISFIT_DOMAINS,
    "normalizer.scheme": SCHEMES,
}


@dataclass(frozen=True)
class PhantomSpec:
    kind: str
    params: dict

    def build(self, n: int, m: int):
        from .phantoms import make_phantom
        return make_phantom(self.kind, n, m, **self.params)


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    chain: ChainConfig
    phantom: PhantomSpec | None
    data_path: str | None
    init_file: str | None
    resolved: dict
    config_hash: str


def _no_duplicates(pairs):
    seen = set()
    out = {}
    for key, value in pairs:
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} in configuration")
        seen.add(key)
        out[key] = value
    return out


def parse_json(text: str) -> dict:
    try:
        raw = json.loads(text, object_pairs_hook=_no_duplicates)
    except ConfigError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a JSON object")
    return raw


def _resolve_section(raw: dict, section: str, defaults: dict) -> dict:
    given = raw.get(section, {})
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected an object")
    out = dict(defaults)
    for key, value in given.items():
        path = f"{section}.{key}"
        if key not in defaults:
            raise ConfigError(f"{path}: unknown key")
        if path in _INT_KEYS:
            out[key] = _as_int(path, value)
        elif path in _BOOL_KEYS:
            out[key] = _as_bool(path, value)
        elif path in _STR_KEYS:
            out[key] = _as_str(path, value, _STR_KEYS[path])
        else:
            out[key] = _as_float(path, value)
    return out


def resolve(raw: dict) -> dict:
    """Apply defaults and validate structure; returns the full dictionary."""
    known_sections = {"grid", "chain", "sensitivities", "proposal",
                      "normalizer", "phantom", "data", "init"}
    for key in raw:
        if key not in known_sections:
            raise ConfigError(f"{key}: unknown key")

    resolved = {
        "grid": _resolve_section(raw, "grid", GRID_DEFAULTS),
        "chain": _resolve_section(raw, "chain", CHAIN_DEFAULTS),
        "sensitivities": _resolve_section(raw, "sensitivities",
                                          SENSITIVITY_DEFAULTS),
        "proposal": _resolve_section(raw, "proposal", PROPOSAL_DEFAULTS),
        "normalizer": _resolve_section(raw, "normalizer",
                                       NORMALIZER_DEFAULTS),
    }
    # make the echoed dictionary fully concrete: the restricted-interval
    # default depends on the scheme (on for z1, off otherwise)
    norm = resolved["normalizer"]
    if norm["restricted_interval"] is None:
        norm["restricted_interval"] = norm["scheme"] == "z1"

    if "phantom" in raw and "data" in raw:
        raise ConfigError("phantom and data are mutually exclusive; "
                          "give exactly one")
    if "data" in raw:
        data = raw["data"]
        if not isinstance(data, dict):
            raise ConfigError("data: expected an object")
        for key in data:
            if key != "path":
                raise ConfigError(f"data.{key}: unknown key")
        if "path" not in data:
            raise ConfigError("data.path: required")
        resolved["data"] = {"path": _as_str("data.path", data["path"])}
    else:
        phantom = raw.get("phantom", {})
        if not isinstance(phantom, dict):
            raise ConfigError("phantom: expected an object")
        for key in phantom:
            if key not in ("kind", "params"):
                raise ConfigError(f"phantom.{key}: unknown key")
        kind = _as_str("phantom.kind", phantom.get("kind", "gaussian_well"),
                       tuple(PHANTOM_PARAM_KEYS))
        params = dict(PHANTOM_PARAM_DEFAULTS[kind])
        for key, value in phantom.get("params", {}).items():
            if key not in PHANTOM_PARAM_KEYS[kind]:
                raise ConfigError(f"phantom.params.{key}: unknown key for "
                                  f"kind {kind!r}")
            params[key] = _as_float(f"phantom.params.{key}", value)
        resolved["phantom"] = {"kind": kind, "params": params}

    init = raw.get("init", {"value": 1.0})
    if not isinstance(init, dict):
        raise ConfigError("init: expected an object")
    for key in init:
        if key not in ("value", "file"):
            raise ConfigError(f"init.{key}: unknown key")
    if "value" in init and "file" in init:
        raise ConfigError("init.value and init.file are mutually exclusive")
    if "file" in init:
        resolved["init"] = {"file": _as_str("init.file", init["file"])}
    else:
        resolved["init"] = {"value": _as_float("init.value",
                                               init.get("value", 1.0))}
    return resolved


def config_hash(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def build(resolved: dict) -> RunConfig:
    """Turn a resolved dictionary into typed configuration objects."""
    try:
        grid = GridSpec(**resolved["grid"])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc
    try:
        sens = Sensitivities(**resolved["sensitivities"])
    except LambdaOrderingError as exc:
        raise ConfigError(
            f"sensitivities: {exc} (set sensitivities.allow_unordered "
            f"to run it anyway)") from exc
    except ValueError as exc:
        raise ConfigError(f"sensitivities: {exc}") from exc
    try:
        prop = ProposalConfig(**resolved["proposal"])
    except ValueError as exc:
        raise ConfigError(f"proposal: {exc}") from exc
    try:
        norm = NormalizerConfig(**resolved["normalizer"])
    except ValueError as exc:
        raise ConfigError(f"normalizer: {exc}") from exc

    init = resolved["init"]
    try:
        chain = ChainConfig(
            k_init=init.get("value", 1.0),
            sensitivities=sens, proposal=prop, normalizer=norm,
            **resolved["chain"],
        )
    except ValueError as exc:
        raise ConfigError(f"chain: {exc}") from exc

    phantom = None
    data_path = None
    if "phantom" in resolved:
        phantom = PhantomSpec(resolved["phantom"]["kind"],
                              dict(resolved["phantom"]["params"]))
    else:
        data_path = resolved["data"]["path"]

    return RunConfig(
        grid=grid, chain=chain, phantom=phantom, data_path=data_path,
        init_file=init.get("file"),
        resolved=resolved, config_hash=config_hash(resolved),
    )


def load_config(path) -> RunConfig:
    """Parse, resolve, and build a configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return build(resolve(parse_json(text)))
