"""Run configuration: parsing, validation with field paths, and serialization.

A config is a TOML document (JSON with the same structure is also accepted):

    seed = 0

    [grid]
    n = 64
    L = 6.283185307179586

    [scenario]
    name = "taylor_green"
    params = { amp = 1.0 }

    [potential]            # family = "none" | "magnetic" | "quadratic"
    [forcing]              # f = [ {kind = "mode", amp = [a, b], kx = 1, ...} ], g = [...]
    [stepper]              # dt, scheme, constraint_mode, dealias, cfl_safety, T,
                           # snapshot_every, monitor_every
    [monitors]             # eps, R, radius_multiplier, policy, ball_weights,
                           # local_energy, smallness, cap
    [picard]               # T0, dt, max_iters, tol, dealias
    [output]               # dir, plots
    [sweep]                # key = "stepper.dt", values = [...], workers = 2

Missing keys take their defaults; unknown keys are errors. ``to_dict``
returns the fully resolved document, so ``dumps(parse(text))`` is a fixed
point of ``parse`` followed by ``dumps``.
"""

from __future__ import annotations

import copy
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .energy import MonitorConfig
from .forcing import ForcingSpec
from .integrator import PicardConfig, StepperConfig
from .potential import FAMILIES, PotentialSpec
from .scenarios import SCENARIOS, scenario_params
from .spectral import TorusGrid


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _vec3(v) -> bool:
    return isinstance(v, (list, tuple)) and len(v) == 3 and all(_num(x) and math.isfinite(x) for x in v)


# section -> key -> (default, check, message)
_SCHEMA: dict[str, dict[str, tuple[Any, Any, str]]] = {
    "grid": {
        "n": (64, lambda v: _int(v) and v >= 8 and v % 2 == 0, "must be an even integer >= 8"),
        "L": (2 * math.pi, lambda v: _num(v) and math.isfinite(v) and v > 0, "must be a positive number"),
    },
    "potential": {
        "family": ("none", lambda v: v in FAMILIES, f"must be one of {FAMILIES}"),
        "H": ([0.0, 0.0, 0.0], _vec3, "must be a list of 3 finite numbers"),
        "xi": ([0.0, 0.0, 0.0], _vec3, "must be a list of 3 finite numbers"),
    },
    "stepper": {
        "dt": (1e-3, lambda v: _num(v) and math.isfinite(v) and v > 0, "must be positive"),
        "scheme": ("IF-Heun", lambda v: v in ("IF-Heun", "IF-Euler"), "must be 'IF-Heun' or 'IF-Euler'"),
        "constraint_mode": (
            "renormalize",
            lambda v: v in ("renormalize", "track-drift"),
            "must be 'renormalize' or 'track-drift'",
        ),
        "dealias": (True, lambda v: isinstance(v, bool), "must be a boolean"),
        "cfl_safety": (1.0, lambda v: _num(v) and 0 < v <= 1, "must lie in (0, 1]"),
        "T": (1.0, lambda v: _num(v) and math.isfinite(v) and v >= 0, "must be non-negative"),
        "snapshot_every": (100, lambda v: _int(v) and v >= 1, "must be a positive integer"),
        "monitor_every": (1, lambda v: _int(v) and v >= 1, "must be a positive integer"),
    },
    "monitors": {
        "eps": (1.0, lambda v: _num(v) and v > 0, "must be positive"),
        "R": (0.5, lambda v: _num(v) and v > 0, "must be positive"),
        "radius_multiplier": (2.0, lambda v: _num(v) and v > 0, "must be positive"),
        "policy": (
            "log",
            lambda v: v in ("halt", "log", "restart-renormalized"),
            "must be 'halt', 'log' or 'restart-renormalized'",
        ),
        "ball_weights": ("area", lambda v: v in ("area", "sharp"), "must be 'area' or 'sharp'"),
        "local_energy": (True, lambda v: isinstance(v, bool), "must be a boolean"),
        "smallness": (0.0, lambda v: _num(v) and v >= 0, "must be non-negative"),
        "cap": (1e6, lambda v: _num(v) and v > 0, "must be positive"),
    },
    "picard": {
        "T0": (0.05, lambda v: _num(v) and v > 0, "must be positive"),
        "dt": (1e-3, lambda v: _num(v) and v > 0, "must be positive"),
        "max_iters": (30, lambda v: _int(v) and v >= 2, "must be an integer >= 2"),
        "tol": (1e-10, lambda v: _num(v) and v > 0, "must be positive"),
        "dealias": (True, lambda v: isinstance(v, bool), "must be a boolean"),
    },
    "output": {
        "dir": ("run", lambda v: isinstance(v, str) and v != "", "must be a non-empty string"),
        "plots": (True, lambda v: isinstance(v, bool), "must be a boolean"),
    },
}


def _section(raw: dict, name: str) -> dict:
    sub = raw.get(name, {})
    if not isinstance(sub, dict):
        raise ConfigError(name, "must be a table")
    schema = _SCHEMA[name]
    for key in sub:
        if key not in schema:
            raise ConfigError(f"{name}.{key}", f"unknown key (expected one of {sorted(schema)})")
    out = {}
    for key, (default, check, msg) in schema.items():
        val = sub.get(key, copy.deepcopy(default))
        if _int(val) and isinstance(default, float):
            val = float(val)
        if not check(val):
            raise ConfigError(f"{name}.{key}", f"{msg}, got {val!r}")
        out[key] = list(map(float, val)) if isinstance(default, list) else val
    return out


def _scenario(raw: dict) -> dict:
    sub = raw.get("scenario", {})
    if not isinstance(sub, dict):
        raise ConfigError("scenario", "must be a table")
    for key in sub:
        if key not in ("name", "params"):
            raise ConfigError(f"scenario.{key}", "unknown key (expected 'name' or 'params')")
    name = sub.get("name", "taylor_green")
    if name not in SCENARIOS:
        raise ConfigError("scenario.name", f"unknown scenario {name!r}; available: {', '.join(sorted(SCENARIOS))}")
    params = sub.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("scenario.params", "must be a table")
    defaults = scenario_params(name)
    for key in params:
        if key not in defaults:
            raise ConfigError(f"scenario.params.{key}", f"unknown parameter for {name!r} (expected {sorted(defaults)})")
    return {"name": name, "params": dict(params)}


def _forcing(raw: dict) -> dict:
    sub = raw.get("forcing", {})
    if not isinstance(sub, dict):
        raise ConfigError("forcing", "must be a table")
    for key in sub:
        if key not in ("f", "g"):
            raise ConfigError(f"forcing.{key}", "unknown key (expected 'f' or 'g')")
    for key in ("f", "g"):
        terms = sub.get(key, [])
        if not isinstance(terms, list):
            raise ConfigError(f"forcing.{key}", "must be a list of tables")
        for i, term in enumerate(terms):
            try:
                ForcingSpec.from_dict({key: [term]})
            except (ValueError, TypeError, KeyError) as exc:
                raise ConfigError(f"forcing.{key}[{i}]", str(exc)) from exc
    try:
        return ForcingSpec.from_dict(sub).to_dict()
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError("forcing", str(exc)) from exc


def _sweep(raw: dict) -> dict | None:
    sub = raw.get("sweep")
    if sub is None:
        return None
    if not isinstance(sub, dict):
        raise ConfigError("sweep", "must be a table")
    for key in sub:
        if key not in ("key", "values", "workers"):
            raise ConfigError(f"sweep.{key}", "unknown key (expected 'key', 'values', 'workers')")
    key = sub.get("key")
    if not isinstance(key, str) or key.count(".") != 1:
        raise ConfigError("sweep.key", "must be a 'section.field' string")
    section, fld = key.split(".")
    if section not in _SCHEMA or fld not in _SCHEMA[section]:
        raise ConfigError("sweep.key", f"unknown field {key!r}")
    values = sub.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values", "must be a non-empty list")
    workers = sub.get("workers", 1)
    if not _int(workers) or workers < 1:
        raise ConfigError("sweep.workers", "must be a positive integer")
    return {"key": key, "values": list(values), "workers": workers}


@dataclass
class RunConfig:
    seed: int
    grid: dict
    scenario: dict
    potential: dict
    forcing: dict
    stepper: dict
    monitors: dict
    picard: dict
    output: dict
    sweep: dict | None = None

    # typed views --------------------------------------------------------

    def make_grid(self) -> TorusGrid:
        return TorusGrid(self.grid["n"], self.grid["L"])

    def make_potential(self) -> PotentialSpec:
        return PotentialSpec.from_dict(self.potential)

    def make_forcing(self) -> ForcingSpec:
        return ForcingSpec.from_dict(self.forcing)

    def make_stepper(self) -> StepperConfig:
        s = self.stepper
        return StepperConfig(s["dt"], s["scheme"], s["constraint_mode"], s["dealias"], s["cfl_safety"])

    def make_monitors(self) -> MonitorConfig:
        m = self.monitors
        return MonitorConfig(
            every=self.stepper["monitor_every"],
            eps=m["eps"],
            R=m["R"],
            radius_multiplier=m["radius_multiplier"],
            policy=m["policy"],
            ball_weights=m["ball_weights"],
            local_energy=m["local_energy"],
        )

    def make_picard(self) -> PicardConfig:
        p = self.picard
        return PicardConfig(p["T0"], p["dt"], p["max_iters"], p["tol"], p["dealias"])

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "grid": dict(self.grid),
            "scenario": {"name": self.scenario["name"], "params": dict(self.scenario["params"])},
            "potential": dict(self.potential),
            "forcing": copy.deepcopy(self.forcing),
            "stepper": dict(self.stepper),
            "monitors": dict(self.monitors),
            "picard": dict(self.picard),
            "output": dict(self.output),
        }
        if self.sweep is not None:
            out["sweep"] = dict(self.sweep)
        return out

    def with_override(self, dotted: str, value) -> "RunConfig":
        raw = self.to_dict()
        section, key = dotted.split(".")
        raw[section][key] = value
        return parse_dict(raw)


_TOP = ("seed", "grid", "scenario", "potential", "forcing", "stepper", "monitors", "picard", "output", "sweep")


def parse_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a table")
    for key in raw:
        if key not in _TOP:
            raise ConfigError(key, f"unknown top-level key (expected one of {list(_TOP)})")
    seed = raw.get("seed", 0)
    if not _int(seed) or not 0 <= seed < 2**64:
        raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {seed!r}")
    cfg = RunConfig(
        seed=seed,
        grid=_section(raw, "grid"),
        scenario=_scenario(raw),
        potential=_section(raw, "potential"),
        forcing=_forcing(raw),
        stepper=_section(raw, "stepper"),
        monitors=_section(raw, "monitors"),
        picard=_section(raw, "picard"),
        output=_section(raw, "output"),
        sweep=_sweep(raw),
    )
    # cross-field checks
    R, mult, L = cfg.monitors["R"], cfg.monitors["radius_multiplier"], cfg.grid["L"]
    if cfg.monitors["local_energy"] and not mult * R < L / 2:
        raise ConfigError("monitors.R", f"ball radius {mult}*R = {mult * R} must be < L/2 = {L / 2}")
    return cfg


def parse_text(text: str, fmt: str = "toml") -> RunConfig:
    try:
        raw = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("<file>", f"cannot parse {fmt}: {exc}") from exc
    return parse_dict(raw)


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("<file>", f"config file {str(path)!r} not found")
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    return parse_text(path.read_text(), fmt)


def dumps(cfg: RunConfig, fmt: str = "toml") -> str:
    data = cfg.to_dict()
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True) + "\n"
    return tomli_w.dumps(data)


def save(cfg: RunConfig, path: str | Path) -> None:
    path = Path(path)
    path.write_text(dumps(cfg, "json" if path.suffix.lower() == ".json" else "toml"))
