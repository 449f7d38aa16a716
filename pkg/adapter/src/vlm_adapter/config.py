"""Adapter configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

DEFAULT_PROMPTS = [
    "bicycle",
    "bus",
    "car",
    "construction_vehicle",
    "motorcycle",
    "pedestrian",
    "trailer",
    "truck",
]


@dataclass(frozen=True)
class AdapterConfig:
    prompts: tuple[str, ...] = tuple(DEFAULT_PROMPTS)
    conf_floor: float = 0.3
    detector_id: str = "IDEA-Research/grounding-dino-base"
    segmenter_id: str = "facebook/sam-vit-base"
    embedder_id: str = "facebook/dinov2-base"
    device: str = "cpu"
    mask_average: bool = True  # average patch features over the mask area
    embedding_dim: int = 32  # synthetic backend; model backends use native width
    patch_px: int = 16

    def __post_init__(self) -> None:
        if not self.prompts:
            raise ValueError("prompt list must be non-empty")
        if not 0.0 <= self.conf_floor <= 1.0:
            raise ValueError("conf_floor must be within [0, 1]")
        object.__setattr__(self, "prompts", tuple(self.prompts))

    @classmethod
    def from_file(cls, path) -> AdapterConfig:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        allowed = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - allowed)
        if unknown:
            raise ValueError(f"unknown adapter config keys: {', '.join(unknown)}")
        return cls(**obj)
