"""Experiment configuration: JSON ingestion, validation and a stable digest."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import ConfigError

SUBCOMMANDS = ("waterfill", "finite-rdf", "gauss-realize", "simulate")
FORMATS = ("csv", "json")
# Fields that only say where results go; they never enter the digest.
_PLUMBING = ("out", "format")
# Fields that change the numbers each subcommand produces.
_SEMANTIC = {
    "waterfill": ("eigenvalues", "D"),
    "finite-rdf": ("source", "distortion", "s_grid", "horizon", "warm_start", "max_iter", "tol"),
    "gauss-realize": ("model", "D", "power", "Q", "horizon", "steady_state", "decoder", "channel", "tol"),
    "simulate": ("model", "D", "Q", "trials", "horizon", "steady_state", "decoder", "channel", "seed"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.  Models and sources are stored inline once loaded.

    ``s_grid`` accepts a list or ``"start:stop:count"`` (inclusive linspace);
    it is kept sorted from ``0`` toward ``-inf``.  ``D`` is a number or a list
    (a distortion grid for ``waterfill``).
    """

    subcommand: str
    eigenvalues: list = None
    D: object = None
    power: float = None
    source: dict = None
    distortion: dict = None
    s_grid: list = None
    model: dict = None
    Q: float = 1.0
    trials: int = 1
    horizon: int = None
    steady_state: bool = True
    decoder: str = "mmse"
    channel: str = "parallel"
    trace: bool = False
    warm_start: bool = True
    max_iter: int = 10000
    tol: float = 1e-10
    seed: int = 0
    timestamp: bool = False
    out: str = None
    format: str = "csv"

    def canonical(self, include_plumbing=False):
        """Plain dict of every field with defaults filled in."""
        d = asdict(self)
        if not include_plumbing:
            for k in _PLUMBING:
                d.pop(k)
        return d

    def semantic(self):
        """The fields that determine the results of this subcommand."""
        d = asdict(self)
        return {"subcommand": self.subcommand, **{k: d[k] for k in _SEMANTIC.get(self.subcommand, ())}}

    @property
    def config_hash(self):
        """sha256 of the canonical JSON of :meth:`semantic`."""
        text = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return validate(replace(self, **kw)) if kw else self


_FIELDS = {f.name for f in fields(ExperimentConfig)}


def _parse_grid(text, name):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"{name}: expected 'start:stop:count', got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    if n < 1:
        raise ConfigError(f"{name}: count must be >= 1")
    return np.linspace(a, b, n).tolist()


def _load_ref(value, base, name):
    """Inline dict, or a path (relative to the config file) to a JSON object."""
    if isinstance(value, dict):
        return value
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected an object or a file path")
    path = value if os.path.isabs(value) else os.path.join(base, value)
    if not os.path.isfile(path):
        raise ConfigError(f"{name}: referenced file {value!r} does not exist")
    with open(path) as fh:
        return parse_json(fh.read(), path)


def parse_json(text, origin="<config>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{origin}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{origin}: top level must be a JSON object")
    return data


def _number(d, name, positive=False, nonneg=False):
    v = d.get(name)
    if v is None:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{name}: must be > 0")
    if nonneg and v < 0:
        raise ConfigError(f"{name}: must be >= 0")


def _integer(d, name, minimum):
    v = d.get(name)
    if v is None:
        return
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{name} ≥ {minimum} required, got {v}")


def from_dict(data, base="."):
    """Build and validate a config from parsed JSON; unknown keys are rejected."""
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "subcommand" not in data:
        raise ConfigError("subcommand: required")
    d = dict(data)
    for name in ("source", "model"):
        if d.get(name) is not None:
            d[name] = _load_ref(d[name], base, name)
    return validate(ExperimentConfig(**d))


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    d = cfg.canonical(include_plumbing=True)
    if cfg.subcommand not in SUBCOMMANDS:
        raise ConfigError(f"subcommand: must be one of {SUBCOMMANDS}, got {cfg.subcommand!r}")
    if cfg.format not in FORMATS:
        raise ConfigError(f"format: must be one of {FORMATS}")
    for name in ("Q", "tol"):
        _number(d, name, positive=True)
    _number(d, "power", nonneg=True)
    _integer(d, "trials", 1)
    _integer(d, "horizon", 0 if cfg.subcommand == "finite-rdf" else 1)
    _integer(d, "max_iter", 1)
    _integer(d, "seed", 0)
    for name in ("steady_state", "trace", "warm_start", "timestamp"):
        if not isinstance(d[name], bool):
            raise ConfigError(f"{name}: expected true or false")
    if cfg.decoder not in ("mmse", "unnormalized"):
        raise ConfigError("decoder: must be 'mmse' or 'unnormalized'")
    if cfg.channel not in ("parallel", "scalar"):
        raise ConfigError("channel: must be 'parallel' or 'scalar'")

    D = cfg.D
    if isinstance(D, str):
        D = _parse_grid(D, "D")
    if isinstance(D, list):
        if not D:
            raise ConfigError("D: grid is empty")
        if cfg.subcommand != "waterfill":
            raise ConfigError("D: a grid is only accepted by waterfill")
        for v in D:
            _number({"D": v}, "D", positive=True)
        D = [float(v) for v in D]
    elif D is not None:
        _number({"D": D}, "D", positive=True)
        D = float(D)
    updates = {"D": D}

    sub = cfg.subcommand
    if sub == "waterfill":
        if not cfg.eigenvalues:
            raise ConfigError("eigenvalues: required nonempty list for waterfill")
        for v in cfg.eigenvalues:
            _number({"eigenvalues": v}, "eigenvalues", positive=True)
        if D is None:
            raise ConfigError("D: required for waterfill")
        updates["eigenvalues"] = [float(v) for v in cfg.eigenvalues]
    elif sub == "finite-rdf":
        if cfg.source is None:
            raise ConfigError("source: required for finite-rdf")
        if cfg.distortion is None:
            raise ConfigError("distortion: required for finite-rdf")
        if cfg.s_grid is None:
            raise ConfigError("s_grid: required for finite-rdf")
        grid = _parse_grid(cfg.s_grid, "s_grid") if isinstance(cfg.s_grid, str) else cfg.s_grid
        if not isinstance(grid, list) or not grid:
            raise ConfigError("s_grid: grid is empty")
        for v in grid:
            _number({"s_grid": v}, "s_grid")
            if v > 0:
                raise ConfigError("s_grid: every s must be <= 0")
        updates["s_grid"] = sorted((float(v) for v in grid), reverse=True)
        source = dict(cfg.source)
        if cfg.horizon is not None:
            source["horizon"] = cfg.horizon
        updates["source"] = source
        updates["horizon"] = int(source.get("horizon", 0))
        dist = cfg.distortion
        updates["distortion"] = {"kind": dist} if isinstance(dist, str) else dict(dist)
    else:
        if cfg.model is None:
            raise ConfigError(f"model: required for {sub}")
        if sub == "gauss-realize":
            if (D is None) == (cfg.power is None):
                raise ConfigError("D: give exactly one of D or power for gauss-realize")
        else:
            if D is None:
                raise ConfigError("D: required for simulate")
            if cfg.horizon is None:
                raise ConfigError("horizon: required for simulate")
    return replace(cfg, **updates)


def load_config(path) -> ExperimentConfig:
    """Read a JSON config file; file references resolve against its directory."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return from_dict(parse_json(text, str(path)), base=os.path.dirname(os.path.abspath(path)))


def dump_config(cfg: ExperimentConfig, path=None):
    """Canonical JSON text of ``cfg`` (all defaults explicit); written to ``path`` if given."""
    text = json.dumps(cfg.canonical(include_plumbing=True), sort_keys=True, indent=2) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
