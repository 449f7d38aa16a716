"""Run-length-encoded instance masks: codec, containment, IoA, and mask NMS.

RLE follows the COCO convention: column-major scan, counts alternate runs of
zeros and ones starting with a zeros run, and the compact string form packs
counts 5 bits per character (offset 48) with third-onward counts delta-coded
against the count two positions back.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import MalformedMaskError


@dataclass(frozen=True, eq=False)
class RleMask:
    """Binary mask of `size` (height, width) stored as alternating run lengths."""

    size: tuple[int, int]
    counts: np.ndarray

    def __post_init__(self) -> None:
        h, w = (int(v) for v in self.size)
        if h <= 0 or w <= 0:
            raise MalformedMaskError(f"mask size must be positive, got {(h, w)}")
        counts = np.array(self.counts, dtype=np.int64).reshape(-1)
        if counts.size and counts.min() < 0:
            raise MalformedMaskError("run lengths must be non-negative")
        if int(counts.sum()) != h * w:
            raise MalformedMaskError(
                f"run lengths sum to {int(counts.sum())}, expected {h}x{w}={h * w}"
            )
        counts.setflags(write=False)
        object.__setattr__(self, "size", (h, w))
        object.__setattr__(self, "counts", counts)

    @cached_property
    def dense(self) -> np.ndarray:
        """Decoded (height, width) boolean grid; computed once per mask."""
        return decode(self)

    @property
    def area(self) -> int:
        return int(self.counts[1::2].sum())

    @classmethod
    def from_dense(cls, grid: np.ndarray) -> RleMask:
        return encode(grid)

    def to_string(self) -> str:
        return counts_to_string(self.counts)

    @classmethod
    def from_string(cls, size: tuple[int, int], s: str) -> RleMask:
        return cls(size, counts_from_string(s))


def decode(mask: RleMask) -> np.ndarray:
    """Expand runs to a dense (height, width) boolean grid."""
    h, w = mask.size
    if int(mask.counts.sum()) != h * w:
        raise MalformedMaskError("run lengths inconsistent with mask size")
    values = np.zeros(mask.counts.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, mask.counts)
    return flat.reshape((h, w), order="F")


def encode(grid: np.ndarray) -> RleMask:
    """Encode a dense boolean grid into canonical runs (leading zeros run)."""
    g = np.asarray(grid).astype(bool)
    if g.ndim != 2:
        raise MalformedMaskError(f"expected a 2D grid, got shape {g.shape}")
    h, w = g.shape
    flat = g.flatten(order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate([[0], runs])
    return RleMask((h, w), runs)


def counts_to_string(counts: np.ndarray) -> str:
    """Pack run lengths into the COCO compact ASCII form."""
    cnts = [int(c) for c in np.asarray(counts).reshape(-1)]
    out: list[str] = []
    for i, c in enumerate(cnts):
        x = c - cnts[i - 2] if i > 2 else c
        more = True
        while more:
            ch = x & 0x1F
            x >>= 5
            more = (x != -1) if (ch & 0x10) else (x != 0)
            if more:
                ch |= 0x20
            out.append(chr(ch + 48))
    return "".join(out)


def counts_from_string(s: str) -> np.ndarray:
    """Unpack the COCO compact ASCII form back into run lengths."""
    cnts: list[int] = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            if p >= len(s):
                raise MalformedMaskError("truncated RLE string")
            ch = ord(s[p]) - 48
            if ch < 0 or ch > 63:
                raise MalformedMaskError(f"invalid RLE character {s[p]!r}")
            x |= (ch & 0x1F) << (5 * k)
            more = bool(ch & 0x20)
            p += 1
            k += 1
            if not more and (ch & 0x10):
                x |= -1 << (5 * k)
        if len(cnts) > 2:
            x += cnts[-2]
        cnts.append(x)
    return np.array(cnts, dtype=np.int64)


def contains(mask: RleMask, u: float, v: float) -> bool:
    """True iff pixel (floor(u), floor(v)) is inside the grid and set."""
    if not (np.isfinite(u) and np.isfinite(v)):
        return False
    col = int(np.floor(u))
    row = int(np.floor(v))
    h, w = mask.size
    if not (0 <= col < w and 0 <= row < h):
        return False
    return bool(mask.dense[row, col])


def ioa(a: RleMask, b: RleMask) -> float:
    """Intersection area of a and b divided by the area of a (0 if a is empty)."""
    if a.size != b.size:
        raise ValueError(f"mask sizes differ: {a.size} vs {b.size}")
    area = a.area
    if area == 0:
        return 0.0
    inter = int(np.count_nonzero(a.dense & b.dense))
    return inter / area


@dataclass(frozen=True, eq=False)
class Detection2D:
    """A 2D instance detection from one camera: class, mask, and appearance."""

    camera_id: str
    class_name: str
    confidence: float
    bbox2d: np.ndarray
    mask: RleMask
    embedding: np.ndarray

    def __post_init__(self) -> None:
        if not self.class_name:
            raise ValueError("class_name is required")
        conf = float(self.confidence)
        if not (0.0 <= conf <= 1.0):
            raise ValueError(f"confidence {conf} outside [0, 1]")
        bbox = np.array(self.bbox2d, dtype=np.float64).reshape(4)
        h, w = self.mask.size
        x0, y0, x1, y1 = bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate bbox {bbox.tolist()}")
        if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
            raise ValueError(f"bbox {bbox.tolist()} outside {w}x{h} image")
        emb = np.array(self.embedding, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(emb))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm:.8f} is not 1")
        bbox.setflags(write=False)
        emb.setflags(write=False)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "bbox2d", bbox)
        object.__setattr__(self, "embedding", emb)


def mask_nms(
    dets: list[Detection2D],
    ioa_threshold: float = 0.5,
    conf_floor: float = 0.3,
) -> list[Detection2D]:
    """Confidence-ordered mask NMS for one camera image.

    Detections below `conf_floor` are dropped. The rest are visited by
    descending confidence (ties by input index); each is suppressed when the
    overlap with the union of already-kept masks exceeds `ioa_threshold` of
    its own area, otherwise that overlap is trimmed away. Survivors therefore
    have pairwise disjoint masks.
    """
    if not dets:
        return []
    size = dets[0].mask.size
    for d in dets[1:]:
        if d.mask.size != size:
            raise ValueError(f"mask sizes differ: {d.mask.size} vs {size}")

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    union = np.zeros(size, dtype=bool)
    kept: list[Detection2D] = []
    for i in order:
        det = dets[i]
        if det.confidence < conf_floor:
            continue
        dense = det.mask.dense
        area = int(np.count_nonzero(dense))
        inter = int(np.count_nonzero(dense & union))
        overlap = inter / area if area else 0.0
        if overlap > ioa_threshold:
            continue
        if inter:
            trimmed = dense & ~union
            det = Detection2D(
                camera_id=det.camera_id,
                class_name=det.class_name,
                confidence=det.confidence,
                bbox2d=det.bbox2d,
                mask=encode(trimmed),
                embedding=det.embedding,
            )
            union |= trimmed
        else:
            union |= dense
        kept.append(det)
    return kept


__all__ = [
    "RleMask",
    "Detection2D",
    "decode",
    "encode",
    "counts_to_string",
    "counts_from_string",
    "contains",
    "ioa",
    "mask_nms",
]
