"""Vision backends: a deterministic synthetic one and a model-based one.

The synthetic backend treats every solid non-background color in the image as
one instance; it exists so the adapter's wiring, serialization, and contract
tests run without model weights. The hugging-face backend wires an
open-vocabulary detector, a promptable segmenter, and a patch-feature
extractor; it loads lazily and is only exercised when explicitly selected.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .config import AdapterConfig


@dataclass(frozen=True)
class RawDetection:
    bbox: tuple[float, float, float, float]  # x0, y0, x1, y1
    class_name: str
    confidence: float


class VisionBackend(Protocol):
    def detect(self, image: np.ndarray, prompts: tuple[str, ...]) -> list[RawDetection]: ...

    def segment(self, image: np.ndarray, bbox: tuple[float, float, float, float]) -> np.ndarray: ...

    def patch_features(self, image: np.ndarray) -> np.ndarray:
        """(rows, cols, dim) feature grid at the configured patch size."""
        ...


class SyntheticBackend:
    """Deterministic stand-in: solid color blobs are instances."""

    def __init__(self, cfg: AdapterConfig) -> None:
        self.cfg = cfg

    def _background(self, image: np.ndarray) -> np.ndarray:
        corners = np.stack([image[0, 0], image[0, -1], image[-1, 0], image[-1, -1]])
        colors, counts = np.unique(corners, axis=0, return_counts=True)
        return colors[int(counts.argmax())]

    def _instance_colors(self, image: np.ndarray) -> list[np.ndarray]:
        background = self._background(image)
        flat = image.reshape(-1, image.shape[2])
        colors, counts = np.unique(flat, axis=0, return_counts=True)
        out = []
        for color, count in zip(colors, counts):
            if np.array_equal(color, background) or count < 4:
                continue
            out.append(color)
        out.sort(key=lambda c: tuple(int(v) for v in c))
        return out

    def detect(self, image: np.ndarray, prompts: tuple[str, ...]) -> list[RawDetection]:
        h, w = image.shape[:2]
        detections = []
        for color in self._instance_colors(image):
            mask = np.all(image == color, axis=2)
            rows, cols = np.nonzero(mask)
            area_frac = rows.size / float(h * w)
            digest = int(hashlib.sha256(bytes(int(v) for v in color)).hexdigest()[:8], 16)
            detections.append(
                RawDetection(
                    bbox=(float(cols.min()), float(rows.min()), float(cols.max() + 1), float(rows.max() + 1)),
                    class_name=prompts[digest % len(prompts)],
                    confidence=round(min(0.95, 0.35 + 2.0 * area_frac), 6),
                )
            )
        return detections

    def segment(self, image: np.ndarray, bbox: tuple[float, float, float, float]) -> np.ndarray:
        x0, y0, x1, y1 = (int(round(v)) for v in bbox)
        window = image[y0:y1, x0:x1]
        background = self._background(image)
        inner = ~np.all(window == background, axis=2)
        if inner.any():
            colors, counts = np.unique(window[inner].reshape(-1, image.shape[2]), axis=0, return_counts=True)
            color = colors[int(counts.argmax())]
        else:
            color = background
        mask = np.zeros(image.shape[:2], dtype=bool)
        mask[y0:y1, x0:x1] = np.all(window == color, axis=2)
        return mask

    def patch_features(self, image: np.ndarray) -> np.ndarray:
        px = self.cfg.patch_px
        h, w = image.shape[:2]
        rows, cols = -(-h // px), -(-w // px)
        feats = np.empty((rows, cols, self.cfg.embedding_dim))
        for r in range(rows):
            for c in range(cols):
                patch = image[r * px : (r + 1) * px, c * px : (c + 1) * px]
                mean = tuple(int(round(float(v))) for v in patch.reshape(-1, image.shape[2]).mean(0))
                seed = int(hashlib.sha256(repr(mean).encode()).hexdigest()[:8], 16)
                vec = np.random.default_rng(seed).standard_normal(self.cfg.embedding_dim)
                feats[r, c] = vec / np.linalg.norm(vec)
        return feats


class HuggingFaceBackend:
    """Open-vocabulary detector + promptable segmenter + patch features."""

    def __init__(self, cfg: AdapterConfig) -> None:
        try:
            import torch
            from transformers import (
                AutoImageProcessor,
                AutoModel,
                AutoModelForZeroShotObjectDetection,
                AutoProcessor,
                SamModel,
                SamProcessor,
            )
        except ImportError as exc:  # pragma: no cover - model stack optional
            raise RuntimeError(
                "the huggingface backend needs the 'models' extra (torch + transformers)"
            ) from exc
        self.cfg = cfg
        self.torch = torch
        self.device = torch.device(cfg.device)
        try:
            self.det_processor = AutoProcessor.from_pretrained(cfg.detector_id)
            self.detector = AutoModelForZeroShotObjectDetection.from_pretrained(cfg.detector_id)
            self.sam_processor = SamProcessor.from_pretrained(cfg.segmenter_id)
            self.segmenter = SamModel.from_pretrained(cfg.segmenter_id)
            self.emb_processor = AutoImageProcessor.from_pretrained(cfg.embedder_id)
            self.embedder = AutoModel.from_pretrained(cfg.embedder_id)
        except Exception as exc:  # pragma: no cover
            raise RuntimeError(
                f"model load failed (detector={cfg.detector_id}, segmenter={cfg.segmenter_id}, "
                f"embedder={cfg.embedder_id}): {exc}"
            ) from exc
        for model in (self.detector, self.segmenter, self.embedder):
            model.to(self.device).eval()

    def detect(self, image, prompts):  # pragma: no cover - needs weights
        text = ". ".join(prompts) + "."
        inputs = self.det_processor(images=image, text=text, return_tensors="pt").to(self.device)
        with self.torch.no_grad():
            outputs = self.detector(**inputs)
        results = self.det_processor.post_process_grounded_object_detection(
            outputs,
            inputs.input_ids,
            threshold=self.cfg.conf_floor,
            target_sizes=[image.shape[:2]],
        )[0]
        out = []
        for score, label, box in zip(results["scores"], results["labels"], results["boxes"]):
            name = str(label).strip().replace(" ", "_")
            out.append(RawDetection(tuple(float(v) for v in box), name, float(score)))
        return out

    def segment(self, image, bbox):  # pragma: no cover - needs weights
        inputs = self.sam_processor(
            image, input_boxes=[[list(bbox)]], return_tensors="pt"
        ).to(self.device)
        with self.torch.no_grad():
            outputs = self.segmenter(**inputs)
        masks = self.sam_processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
        )[0][0]
        scores = outputs.iou_scores.cpu().reshape(-1)
        return masks[int(scores.argmax())].numpy().astype(bool)

    def patch_features(self, image):  # pragma: no cover - needs weights
        inputs = self.emb_processor(images=image, return_tensors="pt").to(self.device)
        with self.torch.no_grad():
            tokens = self.embedder(**inputs).last_hidden_state[0, 1:].cpu().numpy()
        side = int(round(tokens.shape[0] ** 0.5))
        grid = tokens.reshape(side, side, -1)
        norms = np.linalg.norm(grid, axis=2, keepdims=True)
        return grid / np.maximum(norms, 1e-12)


def make_backend(name: str, cfg: AdapterConfig) -> VisionBackend:
    if name == "synthetic":
        return SyntheticBackend(cfg)
    if name == "huggingface":
        return HuggingFaceBackend(cfg)
    raise ValueError(f"unknown backend {name!r}; choose synthetic or huggingface")
