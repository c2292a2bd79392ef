"""Experiment configuration files.

A config is a JSON object with ``version``, ``mode`` and ``output`` plus
mode-specific fields.  Relative paths are resolved against the directory
holding the config file.  Validation errors name the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .models import MODEL_NAMES

CONFIG_VERSION = 1
MODES = ("trace", "phase", "vm", "sis", "stochastic", "clearing")
SEEDED_MODES = ("vm", "stochastic")
GENERATORS = ("path", "ring", "star", "complete", "erdos_renyi", "random_regular")

REQUIRED = {
    "trace": ("model", "network", "nodes"),
    "phase": ("method", "mu", "sigma"),
    "vm": ("network", "x0"),
    "sis": ("nu", "delta", "k"),
    "stochastic": ("model", "network", "nodes", "steps"),
    "clearing": ("input",),
}

OPTIONAL = {
    "trace": ("max_steps",),
    "phase": ("class", "phi0", "k", "tol", "max_iter", "threads"),
    "vm": ("seed", "replicas", "max_sweeps", "threads"),
    "sis": ("x0", "steps", "tol"),
    "stochastic": ("seed", "replicas", "beta", "beta_prime", "gamma", "gamma_prime",
                   "initial_failed", "threads"),
    "clearing": ("tol",),
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str, source: Optional[str] = None):
        self.field = field_name
        self.message = message
        self.source = source
        where = f"{source}: " if source else ""
        super().__init__(f"{where}field '{field_name}': {message}")


@dataclass
class ExperimentConfig:
    mode: str
    output: Path
    params: dict = field(default_factory=dict)
    seed: Optional[int] = None
    replicas: Optional[int] = None
    threads: int = 1
    version: int = CONFIG_VERSION
    source: Optional[Path] = None

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def with_overrides(self, seed=None, replicas=None, threads=None, output=None):
        cfg = ExperimentConfig(**{**self.__dict__, "params": dict(self.params)})
        if seed is not None:
            cfg.seed = _integer("seed", seed, minimum=0)
        if replicas is not None:
            cfg.replicas = _integer("replicas", replicas, minimum=1)
        if threads is not None:
            cfg.threads = _integer("threads", threads, minimum=1)
        if output is not None:
            cfg.output = Path(output)
        if cfg.mode in SEEDED_MODES and cfg.seed is None:
            raise ConfigError("seed", f"required for mode '{cfg.mode}'")
        return cfg


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _number(name, value, minimum=None, maximum=None, positive=False) -> float:
    if not _is_number(value):
        raise ConfigError(name, f"expected a number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(name, "must be finite")
    if positive and not value > 0:
        raise ConfigError(name, f"must be > 0, got {value:g}")
    if minimum is not None and value < minimum:
        raise ConfigError(name, f"must be >= {minimum:g}, got {value:g}")
    if maximum is not None and value > maximum:
        raise ConfigError(name, f"must be <= {maximum:g}, got {value:g}")
    return value


def _integer(name, value, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {type(value).__name__}")
    if minimum is not None and value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def _enum(name, value, choices) -> str:
    if not isinstance(value, str):
        raise ConfigError(name, f"expected a string, got {type(value).__name__}")
    if value not in choices:
        raise ConfigError(name, f"illegal value {value!r}; expected one of {sorted(choices)}")
    return value


def parse_grid(name, value, positive=False) -> np.ndarray:
    """A grid is a non-empty list of numbers or ``{"start", "stop", "num"}``."""
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "num"}
        if unknown:
            raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
        for key in ("start", "stop", "num"):
            if key not in value:
                raise ConfigError(f"{name}.{key}", "missing")
        start = _number(f"{name}.start", value["start"])
        stop = _number(f"{name}.stop", value["stop"])
        num = _integer(f"{name}.num", value["num"], minimum=1)
        grid = np.linspace(start, stop, num)
    elif isinstance(value, list):
        if not value:
            raise ConfigError(name, "grid must be non-empty")
        grid = np.array([_number(f"{name}[{i}]", v) for i, v in enumerate(value)])
    else:
        raise ConfigError(name, "expected a list of numbers or {start, stop, num}")
    if positive and np.any(grid <= 0):
        raise ConfigError(name, f"all values must be > 0, got minimum {grid.min():g}")
    return grid


def _path(name, value, base: Path) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(name, "expected a file path")
    p = Path(value)
    return p if p.is_absolute() else base / p


def _network_spec(value, base: Path):
    if isinstance(value, str):
        return _path("network", value, base)
    if not isinstance(value, dict):
        raise ConfigError("network", "expected a path or a generator object")
    gen = _enum("network.generator", value.get("generator"), GENERATORS)
    spec = {"generator": gen}
    if "n" not in value:
        raise ConfigError("network.n", "missing")
    spec["n"] = _integer("network.n", value["n"], minimum=1)
    if gen == "erdos_renyi":
        spec["p"] = _number("network.p", value.get("p"), minimum=0.0, maximum=1.0)
        spec["directed"] = bool(value.get("directed", True))
    if gen == "random_regular":
        spec["k"] = _integer("network.k", value.get("k"), minimum=1)
    unknown = set(value) - {"generator", "n", "p", "directed", "k"}
    if unknown:
        raise ConfigError(f"network.{sorted(unknown)[0]}", "unknown key")
    return spec


def validate_config(raw: dict, base: Path = Path("."), source: Optional[str] = None) -> ExperimentConfig:
    try:
        return _validate(raw, base)
    except ConfigError as exc:
        if source and exc.source is None:
            raise ConfigError(exc.field, exc.message, source) from None
        raise


def _validate(raw, base: Path) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in ("version", "mode", "output"):
        if key not in raw:
            raise ConfigError(key, "missing required field")
    version = _integer("version", raw["version"])
    if version != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported version {version}; expected {CONFIG_VERSION}")
    mode = _enum("mode", raw["mode"], MODES)
    for key in REQUIRED[mode]:
        if key not in raw:
            raise ConfigError(key, f"missing required field for mode '{mode}'")
    allowed = {"version", "mode", "output", *REQUIRED[mode], *OPTIONAL[mode]}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(unknown[0], f"unknown field for mode '{mode}'")

    output = _path("output", raw["output"], base)
    p: dict = {}
    seed = raw.get("seed")
    if seed is not None:
        seed = _integer("seed", seed, minimum=0)
    replicas = raw.get("replicas")
    if replicas is not None:
        replicas = _integer("replicas", replicas, minimum=1)
    threads = _integer("threads", raw.get("threads", 1), minimum=1)

    if mode == "trace":
        p["model"] = _enum("model", raw["model"], MODEL_NAMES)
        p["network"] = _path("network", raw["network"], base)
        p["nodes"] = _path("nodes", raw["nodes"], base)
        if "max_steps" in raw:
            p["max_steps"] = _integer("max_steps", raw["max_steps"], minimum=1)

    elif mode == "phase":
        p["method"] = _enum("method", raw["method"], ("mf1", "mf2", "mf3"))
        p["class"] = _enum("class", raw.get("class", "i"), ("i", "ii", "iii"))
        p["phi0"] = _number("phi0", raw.get("phi0", 0.0), minimum=0.0)
        if p["class"] == "ii" and not p["phi0"] > 0:
            raise ConfigError("phi0", "class ii needs a positive initial load")
        if p["method"] != "mf1" and p["class"] != "i":
            raise ConfigError("class", f"{p['method']} supports class i only")
        p["k"] = _integer("k", raw.get("k", 3), minimum=1)
        p["mu"] = parse_grid("mu", raw["mu"])
        p["sigma"] = parse_grid("sigma", raw["sigma"], positive=True)
        p["tol"] = _number("tol", raw.get("tol", 1e-10), positive=True)
        p["max_iter"] = _integer("max_iter", raw.get("max_iter", 100_000), minimum=1)

    elif mode == "vm":
        p["network"] = _network_spec(raw["network"], base)
        p["x0"] = _number("x0", raw["x0"], minimum=0.0, maximum=1.0)
        p["max_sweeps"] = _integer("max_sweeps", raw.get("max_sweeps", 100_000), minimum=1)

    elif mode == "sis":
        p["nu"] = _number("nu", raw["nu"], minimum=0.0, maximum=1.0)
        p["delta"] = _number("delta", raw["delta"], minimum=0.0, maximum=1.0)
        p["k"] = _integer("k", raw["k"], minimum=1)
        p["x0"] = _number("x0", raw.get("x0", 0.01), minimum=0.0, maximum=1.0)
        p["steps"] = _integer("steps", raw.get("steps", 1000), minimum=0)
        p["tol"] = _number("tol", raw.get("tol", 1e-13), positive=True)

    elif mode == "stochastic":
        p["model"] = _enum("model", raw["model"], MODEL_NAMES)
        if p["model"].endswith("llss"):
            raise ConfigError("model", "LLSS has no memoryless fragility rule; "
                                       "stochastic runs need a static model")
        p["network"] = _network_spec(raw["network"], base)
        p["nodes"] = _path("nodes", raw["nodes"], base)
        p["steps"] = _integer("steps", raw["steps"], minimum=0)
        for name, default in (("beta", 1.0), ("beta_prime", 1.0)):
            value = raw.get(name, default)
            if value in ("inf", "infinity"):
                p[name] = float("inf")
            else:
                p[name] = _number(name, value, minimum=0.0)
        for name in ("gamma", "gamma_prime"):
            p[name] = _number(name, raw.get(name, 1.0), minimum=0.0, maximum=1.0)
        failed = raw.get("initial_failed", [])
        if not isinstance(failed, list):
            raise ConfigError("initial_failed", "expected a list of node indices")
        p["initial_failed"] = [_integer(f"initial_failed[{i}]", v, minimum=0)
                               for i, v in enumerate(failed)]

    elif mode == "clearing":
        p["input"] = _path("input", raw["input"], base)
        p["tol"] = _number("tol", raw.get("tol", 1e-10), positive=True)

    return ExperimentConfig(mode=mode, output=output, params=p, seed=seed,
                            replicas=replicas, threads=threads, version=version)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read config ({exc.strerror})", str(path)) from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}", str(path)) from None
    cfg = validate_config(raw, base=path.parent, source=str(path))
    cfg.source = path
    return cfg
