"""Pipeline configuration: defaults, JSON round-trip, and dotted-path overrides.

The width and size prior tables are configuration defaults standing in for
operator-supplied class knowledge; they are overridable and never asserted as
ground truth.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

from .clustering import ClassWidthPrior
from .errors import SchemaError
from .ground import GroundConfig
from .metrics import EvalConfig
from .refine import ClassSizePrior
from .tracking import TrackingConfig

DEFAULT_CLASS_WIDTHS: dict[str, float] = {
    "car": 1.9,
    "truck": 2.5,
    "bus": 2.9,
    "trailer": 2.9,
    "construction_vehicle": 2.8,
    "pedestrian": 0.7,
    "motorcycle": 0.8,
    "bicycle": 0.6,
}

DEFAULT_CLASS_SIZES: dict[str, tuple[float, float, float]] = {
    "car": (4.6, 1.9, 1.7),
    "truck": (7.0, 2.5, 2.8),
    "bus": (11.0, 2.9, 3.5),
    "trailer": (12.0, 2.9, 3.8),
    "construction_vehicle": (6.5, 2.8, 3.2),
    "pedestrian": (0.7, 0.7, 1.7),
    "motorcycle": (2.1, 0.8, 1.4),
    "bicycle": (1.7, 0.6, 1.3),
}

DEFAULT_PROMPTS = sorted(DEFAULT_CLASS_WIDTHS)


@dataclass(frozen=True)
class MaskNmsConfig:
    ioa_threshold: float = 0.5
    conf_floor: float = 0.3


@dataclass(frozen=True)
class DenoiseConfig:
    min_pts: int = 3
    default_eps: float = 1.0


@dataclass(frozen=True)
class StageToggles:
    denoise: bool = True
    multicam_merge: bool = True
    tracking: bool = True
    inflation: bool = True


@dataclass(frozen=True)
class OutputConfig:
    results_path: str = "results.json"
    report_prefix: str = "report"


@dataclass(frozen=True)
class PipelineConfig:
    ground: GroundConfig = field(default_factory=GroundConfig)
    nms: MaskNmsConfig = field(default_factory=MaskNmsConfig)
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    stages: StageToggles = field(default_factory=StageToggles)
    width_priors: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_WIDTHS))
    size_priors: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_CLASS_SIZES.items()})
    size_prior_min_ratio: float = 0.6
    class_prompts: list = field(default_factory=lambda: list(DEFAULT_PROMPTS))
    sweeps_k: int = 5
    association_reference_only: bool = False
    static_yaw_snap: bool = True
    snap_radius: float = 10.0
    snap_extent_ratio: float = 1.2
    output: OutputConfig = field(default_factory=OutputConfig)

    def width_prior(self) -> ClassWidthPrior:
        return ClassWidthPrior({k: float(v) for k, v in self.width_priors.items()})

    def size_prior(self) -> ClassSizePrior:
        return ClassSizePrior.from_means(
            {k: tuple(v) for k, v in self.size_priors.items()}, self.size_prior_min_ratio
        )


_NESTED = {
    "ground": GroundConfig,
    "nms": MaskNmsConfig,
    "denoise": DenoiseConfig,
    "tracking": TrackingConfig,
    "eval": EvalConfig,
    "stages": StageToggles,
    "output": OutputConfig,
}


def _build(cls, obj: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaError(f"config {where}: unknown keys {', '.join(unknown)}")
    kwargs = {}
    for key, value in obj.items():
        if cls is PipelineConfig and key in _NESTED:
            if not isinstance(value, dict):
                raise SchemaError(f"config {where}.{key}: expected an object")
            kwargs[key] = _build(_NESTED[key], value, f"{where}.{key}")
        else:
            if key == "distance_thresholds":
                value = tuple(value)
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"config {where}: {exc}") from exc


def config_from_dict(obj: dict) -> PipelineConfig:
    return _build(PipelineConfig, obj, "root")


def config_from_file(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def config_to_dict(cfg: PipelineConfig) -> dict:
    out = dataclasses.asdict(cfg)

    def plain(value):
        if isinstance(value, dict):
            return {k: plain(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [plain(v) for v in value]
        return value

    return plain(out)


def config_to_json(cfg: PipelineConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def config_hash(cfg: PipelineConfig) -> str:
    digest = hashlib.sha256(config_to_json(cfg).encode()).hexdigest()
    return f"sha256:{digest}"


def apply_overrides(cfg: PipelineConfig, overrides: list[str]) -> PipelineConfig:
    """Apply `key.path=value` overrides; values are parsed as JSON when possible."""
    obj = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise SchemaError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = obj
        parts = path.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise SchemaError(f"override {item!r}: no such config section {part!r}")
            node = node[part]
        leaf = parts[-1]
        if leaf not in node:
            raise SchemaError(f"override {item!r}: no such config key {leaf!r}")
        node[leaf] = value
    return config_from_dict(obj)


__all__ = [
    "DEFAULT_CLASS_WIDTHS",
    "DEFAULT_CLASS_SIZES",
    "DEFAULT_PROMPTS",
    "MaskNmsConfig",
    "DenoiseConfig",
    "StageToggles",
    "OutputConfig",
    "PipelineConfig",
    "config_from_dict",
    "config_from_file",
    "config_to_dict",
    "config_to_json",
    "config_hash",
    "apply_overrides",
]
