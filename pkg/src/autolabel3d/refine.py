"""Final box conditioning: motion-aligned headings and class-prior inflation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Box3D, normalize_yaw

DEFAULT_MIN_RATIO = 0.6


@dataclass(frozen=True)
class ClassSizePrior:
    """Mean (length, width, height) per class plus minimum plausible dimensions."""

    means: dict[str, tuple[float, float, float]]
    minimums: dict[str, tuple[float, float, float]]

    def __post_init__(self) -> None:
        for cls, mean in self.means.items():
            minimum = self.minimums.get(cls)
            if minimum is None:
                raise ValueError(f"no minimum dimensions for class {cls!r}")
            for lo, mu in zip(minimum, mean):
                if not 0 < lo <= mu:
                    raise ValueError(f"class {cls!r}: need 0 < minimum <= mean per axis")

    @classmethod
    def from_means(cls, means: dict[str, tuple[float, float, float]], ratio: float = DEFAULT_MIN_RATIO) -> ClassSizePrior:
        minimums = {k: tuple(ratio * v for v in mean) for k, mean in means.items()}
        return cls(means={k: tuple(v) for k, v in means.items()}, minimums=minimums)

    def mean(self, class_name: str) -> tuple[float, float, float] | None:
        return self.means.get(class_name)

    def minimum(self, class_name: str) -> tuple[float, float, float] | None:
        return self.minimums.get(class_name)


def orient_by_motion(box: Box3D, velocity: np.ndarray, moving_threshold: float = 0.5) -> Box3D:
    """Point the box heading along the motion direction when moving.

    Static boxes (speed <= threshold) are returned unchanged, keeping their
    geometric heading. For movers the yaw becomes atan2(vy, vx) with the size
    tuple kept as-is: the length value stays on the motion axis even when the
    new heading is closer to the old width axis (footprint axes swap).
    """
    v = np.asarray(velocity, dtype=np.float64).reshape(2)
    if float(np.hypot(v[0], v[1])) <= moving_threshold:
        return box
    return replace(box, yaw=normalize_yaw(math.atan2(v[1], v[0])))


def inflate_box(
    box: Box3D,
    class_name: str,
    priors: ClassSizePrior,
    ego_xy: np.ndarray,
) -> Box3D:
    """Grow undersized dimensions to the class mean, preserving the near face.

    Planar axes shift the center away from the ego position so the face that
    the sensor observed stays put; height grows upward from the measured
    bottom face. Classes without priors are returned unchanged.
    """
    minimum = priors.minimum(class_name)
    mean = priors.mean(class_name)
    if minimum is None or mean is None:
        return box
    ego = np.asarray(ego_xy, dtype=np.float64).reshape(2)

    size = box.size.copy()
    center_xy = box.center[:2].copy()
    cz = float(box.center[2])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    axes = (np.array([c, s]), np.array([-s, c]))

    for dim, axis in enumerate(axes):
        if size[dim] < minimum[dim]:
            shift = 0.5 * (mean[dim] - size[dim])
            sign = float(np.sign((center_xy - ego) @ axis)) or 1.0
            center_xy = center_xy + sign * shift * axis
            size[dim] = mean[dim]
    if size[2] < minimum[2]:
        cz += 0.5 * (mean[2] - size[2])
        size[2] = mean[2]

    return Box3D(
        center=np.array([center_xy[0], center_xy[1], cz]),
        size=size,
        yaw=box.yaw,
        velocity=box.velocity,
        frame=box.frame,
    )


__all__ = ["DEFAULT_MIN_RATIO", "ClassSizePrior", "orient_by_motion", "inflate_box"]
