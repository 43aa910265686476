"""Pipeline configuration tree and run manifest."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .bayesopt import BOBudget
from .biped import BipedConfig
from .controller import ControllerGains
from .episode import EpisodeConfig, ObjectiveWeights
from .trajectory import PARAM_BOUNDS, PARAM_NAMES, SwingTrajConfig


class ConfigError(ValueError):
    """Malformed or inconsistent pipeline configuration."""


@dataclass(frozen=True)
class AxesSpec:
    v_min: float = 0.1
    v_max: float = 0.5
    n_v: int = 15
    s_min: float = 0.1
    s_max: float = 0.8
    n_s: int = 10

    def __post_init__(self):
        if self.n_v < 1 or self.n_s < 1:
            raise ConfigError("axes need at least one value each")
        if self.v_max < self.v_min or self.s_max < self.s_min:
            raise ConfigError("axis upper bounds must not be below lower bounds")
        if (self.n_v > 1 and self.v_max == self.v_min) or (self.n_s > 1 and self.s_max == self.s_min):
            raise ConfigError("multi-point axis needs a non-empty range")

    @property
    def velocities(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.n_v)

    @property
    def positions(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.n_s)


@dataclass(frozen=True)
class SafeRegionConfig:
    class_weights: tuple = (1.0, 14.0)
    C: float = 100.0
    gamma: float | None = None
    tol: float = 1e-3
    render_factor: int = 4

    def __post_init__(self):
        object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        if len(self.class_weights) != 2 or min(self.class_weights) <= 0 or self.C <= 0:
            raise ConfigError("class weights and C must be positive")
        if self.render_factor < 1:
            raise ConfigError("render_factor must be >= 1")


@dataclass(frozen=True)
class ValidationConfig:
    n_reach: int = 1000
    n_step: int = 150
    max_draws_per_trial: int = 1000


@dataclass(frozen=True)
class PipelineConfig:
    biped: BipedConfig = field(default_factory=BipedConfig)
    gains: ControllerGains = field(default_factory=ControllerGains)
    swing: SwingTrajConfig = field(default_factory=SwingTrajConfig)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    bounds: dict = field(default_factory=lambda: {k: tuple(v) for k, v in PARAM_BOUNDS.items()})
    step_tolerance: float = 0.05
    phase1: AxesSpec = field(default_factory=AxesSpec)
    phase2: AxesSpec = field(default_factory=lambda: AxesSpec(n_v=40, n_s=20))
    budget: BOBudget = field(default_factory=BOBudget)
    safe_region: SafeRegionConfig = field(default_factory=SafeRegionConfig)
    selector_degree: int = 4
    near_optimal_deltas: tuple = (0.05, 0.10)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    seed: int = 0
    workers: int = 1
    out: str = "out"

    def __post_init__(self):
        b = {k: (float(v[0]), float(v[1])) for k, v in dict(self.bounds).items()}
        if set(b) != set(PARAM_NAMES):
            raise ConfigError(f"bounds must list exactly {PARAM_NAMES}")
        if any(lo >= hi for lo, hi in b.values()):
            raise ConfigError("each parameter bound needs low < high")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "near_optimal_deltas", tuple(float(d) for d in self.near_optimal_deltas))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.step_tolerance <= 0:
            raise ConfigError("step_tolerance must be positive")

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(self.biped, self.gains, self.swing, self.weights, self.step_tolerance)

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "biped":
                v = v.to_dict()
            elif f.name == "gains":
                v = v.to_dict()
            elif f.name == "bounds":
                v = {k: list(v[k]) for k in PARAM_NAMES}
            elif hasattr(v, "__dataclass_fields__"):
                v = asdict(v)
            d[f.name] = _jsonable(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        try:
            for name, value in data.items():
                if name == "biped":
                    kw[name] = BipedConfig.from_dict({**BipedConfig().to_dict(), **value})
                elif name == "gains":
                    kw[name] = ControllerGains.from_dict({**ControllerGains().to_dict(), **value})
                elif name in _NESTED:
                    kw[name] = _build(_NESTED[name], value)
                elif name == "bounds":
                    kw[name] = {**PARAM_BOUNDS, **value}
                elif name == "near_optimal_deltas":
                    kw[name] = tuple(value)
                else:
                    kw[name] = value
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def experiment_dict(self) -> dict:
        """Everything except the run-time settings that cannot change results."""
        d = self.to_dict()
        for k in RUNTIME_KEYS:
            d.pop(k)
        return d

    def save(self, path, runtime: bool = True) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict() if runtime else self.experiment_dict(), fh, indent=1,
                      sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
        return cls.from_dict(data)

    def digest(self) -> str:
        blob = json.dumps(self.experiment_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


RUNTIME_KEYS = ("workers", "out")

_NESTED = {"swing": SwingTrajConfig, "weights": ObjectiveWeights, "phase1": AxesSpec,
           "phase2": AxesSpec, "budget": BOBudget, "safe_region": SafeRegionConfig,
           "validation": ValidationConfig}


def _build(cls, value):
    if not isinstance(value, dict):
        raise ConfigError(f"{cls.__name__} block must be an object")
    names = {f.name for f in fields(cls)}
    extra = set(value) - names
    if extra:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(extra)}")
    if "class_weights" in value:
        value = {**value, "class_weights": tuple(value["class_weights"])}
    return cls(**value)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class ManifestError(RuntimeError):
    """An artifact is missing or does not match its recorded hash."""


@dataclass
class RunManifest:
    """Hashes of every artifact written under one output directory."""

    root: str
    config_hash: str = ""
    seed: int = 0
    files: dict = field(default_factory=dict)      # relative path -> sha256
    commands: dict = field(default_factory=dict)   # command -> {outputs, inputs, ...}
    timings: dict = field(default_factory=dict)

    NAME = "manifest.json"

    @property
    def path(self) -> str:
        return os.path.join(self.root, self.NAME)

    @classmethod
    def open(cls, root) -> "RunManifest":
        path = os.path.join(root, cls.NAME)
        if not os.path.exists(path):
            return cls(root)
        with open(path) as fh:
            d = json.load(fh)
        return cls(root, d.get("config_hash", ""), d.get("seed", 0), d.get("files", {}),
                   d.get("commands", {}), d.get("timings", {}))

    def record(self, command: str, outputs, inputs=(), **extra) -> None:
        outs = {}
        for p in outputs:
            rel = os.path.relpath(p, self.root)
            outs[rel] = sha256_file(p)
        self.files.update(outs)
        ins = {}
        for p in inputs:
            rel = os.path.relpath(p, self.root)
            ins[rel] = sha256_file(p)
        self.commands[command] = {"outputs": sorted(outs), "inputs": ins, **extra}

    def verify(self, paths=None) -> None:
        """Raise :class:`ManifestError` if a listed file is missing or altered."""
        targets = self.files if paths is None else {
            os.path.relpath(p, self.root): self.files.get(os.path.relpath(p, self.root))
            for p in paths}
        for rel, digest in sorted(targets.items()):
            if digest is None:
                continue
            full = os.path.join(self.root, rel)
            if not os.path.exists(full):
                raise ManifestError(f"{rel} is listed in the manifest but missing")
            if sha256_file(full) != digest:
                raise ManifestError(f"{rel} does not match its recorded hash")

    def save(self) -> None:
        d = {"config_hash": self.config_hash, "seed": self.seed, "files": self.files,
             "commands": self.commands, "timings": self.timings}
        with open(self.path, "w") as fh:
            json.dump(d, fh, indent=1, sort_keys=True)
            fh.write("\n")
