"""Pipeline configuration: one JSON document, strictly validated.

Unknown keys raise a ``ConfigError`` naming the offending field. Defaults
reproduce the standard parameter set (table at 0.65 m, 50 degree camera,
friction 0.71, candidate cap 10,000, batch 1,500).
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .candidates import RotationGrid
from .grasping import MAPPINGS, SimOptions
from .hand import HandModel
from .scene import SceneConfig

WORKERS_ENV = "GRASPSIM_WORKERS"


class ConfigError(ValueError):
    pass


def _strict(cls, d, where: str):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    names = {f.name for f in fields(cls)}
    for key in d:
        if key not in names:
            raise ConfigError(f"{where}: unknown field {key!r}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class CameraConfig:
    fov_deg: float = 50.0
    near: float = 0.01
    far: float = 0.75
    resolution: int = 128

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise ValueError("camera needs 0 < near < far")
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must lie in (0, 180)")
        if self.resolution < 1:
            raise ValueError("resolution must be positive")


@dataclass(frozen=True)
class FilterConfig:
    variance_threshold: float = 1e-3
    bisect_epsilon: float = 0.01
    sigma_k: float = 4.0
    review_margin: float = 0.5

    def __post_init__(self):
        if self.variance_threshold < 0 or self.bisect_epsilon < 0 or self.sigma_k <= 0:
            raise ValueError("filter thresholds must be non-negative (sigma_k positive)")


@dataclass(frozen=True)
class SplitConfig:
    validation_fraction: float = 0.10

    def __post_init__(self):
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class PipelineConfig:
    corpus: str = "corpus"
    scene: SceneConfig = field(default_factory=SceneConfig)
    hand: HandModel = field(default_factory=HandModel)
    grid: RotationGrid = field(default_factory=RotationGrid)
    camera: CameraConfig = field(default_factory=CameraConfig)
    sim: SimOptions = field(default_factory=SimOptions)
    filters: FilterConfig = field(default_factory=FilterConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    cap: int = 10_000
    batch_size: int = 1_500
    mappings: tuple = MAPPINGS
    object_mass: float = 1.0
    mesh_scale: float = 1.0
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.cap < 0 or self.batch_size < 0:
            raise ValueError("cap and batch_size must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.object_mass <= 0 or self.mesh_scale <= 0:
            raise ValueError("object_mass and mesh_scale must be positive")
        bad = [m for m in self.mappings if m not in MAPPINGS]
        if bad or not self.mappings:
            raise ValueError(f"mappings must be a non-empty subset of {MAPPINGS}, got {self.mappings}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        for key in d:
            if key not in names:
                raise ConfigError(f"config: unknown field {key!r}")
        kw = dict(d)
        if "scene" in kw:
            kw["scene"] = _strict(SceneConfig, kw["scene"], "scene")
        if "camera" in kw:
            kw["camera"] = _strict(CameraConfig, kw["camera"], "camera")
        if "sim" in kw:
            kw["sim"] = _strict(SimOptions, kw["sim"], "sim")
        if "filters" in kw:
            kw["filters"] = _strict(FilterConfig, kw["filters"], "filters")
        if "split" in kw:
            kw["split"] = _strict(SplitConfig, kw["split"], "split")
        try:
            if "hand" in kw:
                kw["hand"] = HandModel.from_dict(kw["hand"])
            if "grid" in kw:
                kw["grid"] = RotationGrid.from_dict(kw["grid"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if "mappings" in kw:
            kw["mappings"] = tuple(kw["mappings"])
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config: {exc}") from exc

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name in ("hand", "grid"):
                val = val.to_dict()
            elif hasattr(val, "__dataclass_fields__"):
                val = asdict(val)
            elif isinstance(val, tuple):
                val = list(val)
            out[f.name] = val
        return json.loads(json.dumps(out))

    def replace(self, **changes) -> "PipelineConfig":
        d = self.to_dict()
        d.update(changes)
        return PipelineConfig.from_dict(d)

    def fingerprint(self, *sections) -> str:
        """Hash of the config (optionally only ``sections``); worker count is excluded."""
        d = self.to_dict()
        d.pop("workers")
        if sections:
            d = {k: d[k] for k in sections}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def load_config(path=None, seed=None, workers=None) -> PipelineConfig:
    """Read a JSON config and apply overrides.

    Worker count precedence: explicit argument, then the ``GRASPSIM_WORKERS``
    environment variable, then the config file.
    """
    d = {}
    if path is not None:
        d = json.loads(Path(path).read_text())
        if isinstance(d, dict) and "corpus" in d and not Path(d["corpus"]).is_absolute():
            d["corpus"] = str((Path(path).parent / d["corpus"]).resolve())
    cfg = PipelineConfig.from_dict(d)
    changes = {}
    if seed is not None:
        changes["seed"] = int(seed)
    env = os.environ.get(WORKERS_ENV)
    if workers is not None:
        changes["workers"] = int(workers)
    elif env:
        try:
            changes["workers"] = int(env)
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
    return cfg.replace(**changes) if changes else cfg
