"""End-to-end labeling runs: per-frame stages, tracking, refinement, output."""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import ObjectProposal, associate, build_proposal, denoise
from .config import PipelineConfig, config_hash
from .errors import SchemaError
from .geometry import FRAME_EGO, FRAME_GLOBAL, Box3D, replace
from .ground import remove_ground
from .masks import mask_nms
from .metrics import EvalBox, EvalReport, evaluate, map_classes
from .refine import inflate_box, orient_by_motion
from .scene_io import Scene, aggregate_sweeps, load_scene
from .synth import RESULTS_FORMAT
from .tracking import build_tracks, camera_ring_adjacency, merge_multicamera

_POOL_CHUNK = 1


@dataclass(eq=False)
class LabeledObject:
    """A pipeline object in the global frame, ready for tracking/refinement."""

    class_name: str
    confidence: float
    embedding: np.ndarray
    box: Box3D
    points: np.ndarray
    source_cameras: frozenset[str]
    velocity: np.ndarray
    track_id: int = -1


def _frame_ground_seed(base_seed: int, frame_index: int) -> int:
    return int(np.random.SeedSequence((base_seed, frame_index)).generate_state(1)[0])


def _process_frame(scene: Scene, frame_index: int, cfg: PipelineConfig) -> list[LabeledObject]:
    """Stages 1-5 for one frame: aggregate, ground filter, NMS, associate,
    denoise, fit, and multi-camera merge; output is in the global frame."""
    frame = scene.frames[frame_index]
    aggregate = aggregate_sweeps(scene, frame_index, cfg.sweeps_k)
    ground_cfg = dataclasses.replace(
        cfg.ground, rng_seed=_frame_ground_seed(cfg.ground.rng_seed, frame_index)
    )
    kept_idx = remove_ground(aggregate, ground_cfg)
    kept = aggregate.cloud.select(kept_idx)

    if cfg.association_reference_only:
        assoc_idx = np.flatnonzero(aggregate.source_sweep[kept_idx] == frame_index)
    else:
        assoc_idx = np.arange(len(kept), dtype=np.int64)
    assoc_cloud = kept.select(assoc_idx)

    width_priors = cfg.width_prior()
    proposals: list[ObjectProposal] = []
    for cam in frame.cameras:
        dets = mask_nms(
            scene.detections[frame_index].get(cam.camera_id, []),
            cfg.nms.ioa_threshold,
            cfg.nms.conf_floor,
        )
        for cluster in associate(assoc_cloud, cam, dets):
            indices = assoc_idx[cluster.point_indices]
            pts = kept.points[indices]
            if cfg.stages.denoise:
                local = denoise(
                    pts,
                    cluster.detection.class_name,
                    width_priors,
                    cfg.denoise.min_pts,
                    cfg.denoise.default_eps,
                )
                indices = indices[local]
                pts = pts[local]
            proposals.append(build_proposal(pts, cluster.detection, point_indices=indices))

    if cfg.stages.multicam_merge:
        adjacency = camera_ring_adjacency(frame.cameras)
        proposals = merge_multicamera(proposals, kept.points, width_priors, adjacency)

    to_global = frame.ego_pose
    objects = []
    for p in proposals:
        objects.append(
            LabeledObject(
                class_name=p.class_name,
                confidence=p.confidence,
                embedding=p.embedding,
                box=p.box.transformed(to_global, FRAME_GLOBAL),
                points=to_global.apply(kept.points[p.point_indices]),
                source_cameras=p.source_cameras,
                velocity=np.zeros(2),
            )
        )
    return objects


def _snap_static_yaws(objects: list[LabeledObject], cfg: PipelineConfig) -> None:
    """Give near-square static boxes the heading of the nearest moving peer."""
    moving = [
        o for o in objects if float(np.hypot(*o.velocity)) > cfg.tracking.moving_threshold
    ]
    for obj in objects:
        if float(np.hypot(*obj.velocity)) > cfg.tracking.moving_threshold:
            continue
        length, width = obj.box.size[0], obj.box.size[1]
        if length / width >= cfg.snap_extent_ratio:
            continue
        best = None
        best_dist = cfg.snap_radius
        for peer in moving:
            if peer.class_name != obj.class_name or peer is obj:
                continue
            d = float(np.linalg.norm(peer.box.center[:2] - obj.box.center[:2]))
            if d <= best_dist:
                best_dist = d
                best = peer
        if best is not None:
            obj.box = replace(obj.box, yaw=best.box.yaw)


def run_label(scene_dir, cfg: PipelineConfig, jobs: int = 1) -> dict:
    """Label a scene directory and return the results document."""
    scene = load_scene(scene_dir, min_confidence=cfg.nms.conf_floor)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_frame = list(
                pool.map(
                    _process_frame,
                    [scene] * scene.n_frames,
                    range(scene.n_frames),
                    [cfg] * scene.n_frames,
                    chunksize=_POOL_CHUNK,
                )
            )
    else:
        per_frame = [_process_frame(scene, f, cfg) for f in range(scene.n_frames)]

    if cfg.stages.tracking:
        tracks = build_tracks(
            per_frame,
            [[o.points for o in objs] for objs in per_frame],
            [f.timestamp for f in scene.frames],
            cfg.tracking,
        )
        for track in tracks:
            for f, idx, v in zip(track.frames, track.proposal_indices, track.velocities):
                obj = per_frame[f][idx]
                obj.track_id = track.track_id
                obj.velocity = v
        for objs in per_frame:
            for obj in objs:
                obj.box = orient_by_motion(obj.box, obj.velocity, cfg.tracking.moving_threshold)
            if cfg.static_yaw_snap:
                _snap_static_yaws(objs, cfg)
    else:
        next_id = 0
        for objs in per_frame:
            for obj in objs:
                obj.track_id = next_id
                next_id += 1

    if cfg.stages.inflation:
        size_priors = cfg.size_prior()
        for frame, objs in zip(scene.frames, per_frame):
            ego_xy = frame.ego_pose.translation[:2]
            for obj in objs:
                obj.box = inflate_box(obj.box, obj.class_name, size_priors, ego_xy)

    frames_out = []
    for frame, objs in zip(scene.frames, per_frame):
        to_ego = frame.ego_pose.inverse()
        boxes = []
        for obj in objs:
            box = replace(obj.box, velocity=obj.velocity).transformed(to_ego, FRAME_EGO)
            boxes.append(
                {
                    "center": box.center.tolist(),
                    "size": box.size.tolist(),
                    "yaw": box.yaw,
                    "velocity": box.velocity.tolist(),
                    "class_name": obj.class_name,
                    "confidence": obj.confidence,
                    "track_id": obj.track_id,
                }
            )
        frames_out.append(
            {"frame_index": frame.frame_index, "timestamp": frame.timestamp, "boxes": boxes}
        )

    return {
        "format": RESULTS_FORMAT,
        "scene_id": scene.scene_id,
        "config_hash": config_hash(cfg),
        "frames": frames_out,
    }


def write_results(results: dict, path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
        fh.write("\n")
    return out


def load_boxes_by_frame(path, preset: str, confidence_override: float | None = None) -> dict[int, list[EvalBox]]:
    """Read a results-format file into per-frame EvalBox lists with mapped classes."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != RESULTS_FORMAT:
        raise SchemaError(f"{path}: format {doc.get('format')!r}, expected {RESULTS_FORMAT!r}")
    out: dict[int, list[EvalBox]] = {}
    for frame in doc.get("frames", []):
        f = int(frame["frame_index"])
        raw_classes = [b["class_name"] for b in frame.get("boxes", [])]
        mapped = map_classes(raw_classes, preset)
        boxes = []
        for b, cls in zip(frame.get("boxes", []), mapped):
            conf = confidence_override if confidence_override is not None else float(b.get("confidence", 1.0))
            boxes.append(
                EvalBox(
                    center=np.asarray(b["center"], dtype=np.float64),
                    size=np.asarray(b["size"], dtype=np.float64),
                    yaw=float(b["yaw"]),
                    velocity=np.asarray(b.get("velocity", (0.0, 0.0)), dtype=np.float64),
                    class_name=cls,
                    confidence=conf,
                    frame_index=f,
                )
            )
        out[f] = boxes
    return out


def run_eval(results_path, gt_path, cfg: PipelineConfig) -> EvalReport:
    preds = load_boxes_by_frame(results_path, cfg.eval.class_preset)
    gts = load_boxes_by_frame(gt_path, cfg.eval.class_preset, confidence_override=1.0)
    return evaluate(preds, gts, cfg.eval)


__all__ = [
    "LabeledObject",
    "run_label",
    "write_results",
    "load_boxes_by_frame",
    "run_eval",
]
