"""Frame extraction: images -> interchange detection records."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .backends import VisionBackend
from .config import AdapterConfig
from .rle import mask_to_rle


def _patch_pooled_embedding(
    mask: np.ndarray, feats: np.ndarray, patch_px: int, mask_average: bool
) -> np.ndarray:
    rows, cols = np.nonzero(mask)
    if mask_average:
        patch_ids = sorted({(r // patch_px, c // patch_px) for r, c in zip(rows, cols)})
    else:
        patch_ids = [(int(rows.mean()) // patch_px, int(cols.mean()) // patch_px)]
    pooled = np.zeros(feats.shape[2])
    for r, c in patch_ids:
        if r < feats.shape[0] and c < feats.shape[1]:
            pooled += feats[r, c]
    norm = float(np.linalg.norm(pooled))
    if norm < 1e-12:
        pooled = np.ones(feats.shape[2])
        norm = float(np.linalg.norm(pooled))
    return pooled / norm


def extract_frame(image: np.ndarray, cfg: AdapterConfig, backend: VisionBackend) -> list[dict]:
    """Detection records for one camera image, ready for the detections JSON.

    Detector boxes below the confidence floor are dropped, each surviving box
    is segmented, and the embedding is the renormalized mean of the patch
    features whose patches intersect the mask.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image, got shape {image.shape}")
    h, w = image.shape[:2]
    detections = [d for d in backend.detect(image, cfg.prompts) if d.confidence >= cfg.conf_floor]
    if not detections:
        return []
    feats = backend.patch_features(image)
    records = []
    for det in detections:
        mask = backend.segment(image, det.bbox)
        if mask.shape != (h, w) or not mask.any():
            continue
        embedding = _patch_pooled_embedding(mask, feats, cfg.patch_px, cfg.mask_average)
        x0 = max(0.0, min(det.bbox[0], w - 1.0))
        y0 = max(0.0, min(det.bbox[1], h - 1.0))
        x1 = max(x0 + 1.0, min(det.bbox[2], float(w)))
        y1 = max(y0 + 1.0, min(det.bbox[3], float(h)))
        records.append(
            {
                "class_name": det.class_name,
                "confidence": float(det.confidence),
                "bbox2d": [x0, y0, x1, y1],
                "mask_rle": mask_to_rle(mask),
                "embedding": [float(v) for v in embedding],
            }
        )
    return records


def extract_scene(scene_dir, cfg: AdapterConfig, backend: VisionBackend) -> int:
    """Fill detections/ for every frame and camera of a converted scene.

    Expects `images/<frame:06d>/<camera_id>.<ext>` alongside the manifest;
    returns the number of records written. Updates the manifest embedding
    width to match the backend's output.
    """
    from PIL import Image

    scene_dir = Path(scene_dir)
    with open(scene_dir / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)

    total = 0
    emb_dim = None
    for frame in manifest["frames"]:
        idx = frame["index"]
        image_dir = scene_dir / "images" / f"{idx:06d}"
        det_dir = scene_dir / "detections" / f"{idx:06d}"
        det_dir.mkdir(parents=True, exist_ok=True)
        for cam in manifest["cameras"]:
            cam_id = cam["camera_id"]
            candidates = [p for ext in ("png", "jpg", "jpeg") for p in [image_dir / f"{cam_id}.{ext}"] if p.is_file()]
            if not candidates:
                raise FileNotFoundError(str(image_dir / f"{cam_id}.png"))
            image = np.asarray(Image.open(candidates[0]).convert("RGB"))
            if image.shape[:2] != (cam["height"], cam["width"]):
                raise ValueError(
                    f"frame {idx} camera {cam_id}: image {image.shape[:2]} does not match "
                    f"calibration {(cam['height'], cam['width'])}"
                )
            records = extract_frame(image, cfg, backend)
            for rec in records:
                emb_dim = emb_dim or len(rec["embedding"])
            total += len(records)
            with open(det_dir / f"{cam_id}.json", "w", encoding="utf-8") as fh:
                json.dump(records, fh, indent=2, sort_keys=True)
                fh.write("\n")

    if emb_dim is not None and manifest.get("embedding_dim") != emb_dim:
        manifest["embedding_dim"] = emb_dim
        with open(scene_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return total
