"""Detection scoring: center-distance AP, true-positive error means, and the
combined detection score.

Protocol details follow the public nuScenes benchmark definition: greedy
matching in confidence order against the nearest unmatched ground truth,
101-point interpolated precision over recall with both axes clipped at 0.1,
a 2 m matching threshold for the TP error metrics, and a 1.0 sentinel when a
class has no matches. Attribute error is pinned at 1.0 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .geometry import normalize_yaw

DYNAMIC_CLASSES = (
    "bicycle",
    "bus",
    "car",
    "construction_vehicle",
    "motorcycle",
    "pedestrian",
    "trailer",
    "truck",
)

_THREE_CLASS = {
    "car": "vehicle",
    "truck": "vehicle",
    "bus": "vehicle",
    "trailer": "vehicle",
    "construction_vehicle": "vehicle",
    "pedestrian": "pedestrian",
    "bicycle": "bicycle",
    "motorcycle": "bicycle",
}

CLASS_PRESETS: dict[str, dict[str, str] | None] = {
    "1class": None,  # wildcard: everything maps to "object"
    "3class": _THREE_CLASS,
    "8class": {c: c for c in DYNAMIC_CLASSES},
}


def map_classes(names: list[str], preset: str) -> list[str]:
    """Apply a class-mapping preset; unknown raw classes are all reported."""
    try:
        mapping = CLASS_PRESETS[preset]
    except KeyError:
        raise SchemaError(f"unknown class preset {preset!r}; choose from {sorted(CLASS_PRESETS)}")
    if mapping is None:
        return ["object"] * len(names)
    missing = sorted({n for n in names if n not in mapping})
    if missing:
        raise SchemaError(f"classes not covered by preset {preset!r}: {', '.join(missing)}")
    return [mapping[n] for n in names]


def preset_targets(preset: str) -> list[str]:
    mapping = CLASS_PRESETS[preset]
    if mapping is None:
        return ["object"]
    return sorted(set(mapping.values()))


@dataclass(frozen=True, eq=False)
class EvalBox:
    """A box reduced to what the protocol needs."""

    center: np.ndarray
    size: np.ndarray
    yaw: float
    velocity: np.ndarray
    class_name: str
    confidence: float = 1.0
    frame_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "size", np.asarray(self.size, dtype=np.float64).reshape(3))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=np.float64).reshape(2))


@dataclass(frozen=True)
class EvalConfig:
    distance_thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    tp_threshold: float = 2.0
    class_preset: str = "3class"
    maae: float = 1.0
    pseudo_mode: bool = False  # force every prediction confidence to 1.0

    def __post_init__(self) -> None:
        th = tuple(float(t) for t in self.distance_thresholds)
        if not th or any(t <= 0 for t in th) or list(th) != sorted(th):
            raise ValueError("distance thresholds must be positive ascending")
        if self.tp_threshold not in th:
            raise ValueError("tp_threshold must be one of the distance thresholds")
        object.__setattr__(self, "distance_thresholds", th)


def _pred_order(preds: list[EvalBox]) -> list[int]:
    # Canonical: confidence first, geometry as tie-break so the result is
    # invariant to input permutation even with duplicated confidences.
    def key(i: int):
        p = preds[i]
        return (-p.confidence, *p.center.tolist(), *p.size.tolist(), p.yaw)

    return sorted(range(len(preds)), key=key)


def match_predictions(
    preds: list[EvalBox], gts: list[EvalBox], threshold: float
) -> tuple[list[tuple[EvalBox, EvalBox, float]], list[EvalBox], list[EvalBox]]:
    """Greedy one-to-one matching for a single class within a single frame.

    Predictions are visited by descending confidence; each takes its nearest
    (2D center distance) unmatched ground truth when that distance is below
    the threshold.
    """
    matches: list[tuple[EvalBox, EvalBox, float]] = []
    unmatched_preds: list[EvalBox] = []
    taken = np.zeros(len(gts), dtype=bool)
    gt_centers = np.array([g.center[:2] for g in gts]) if gts else np.empty((0, 2))

    for i in _pred_order(preds):
        p = preds[i]
        if not gts:
            unmatched_preds.append(p)
            continue
        d = np.linalg.norm(gt_centers - p.center[:2], axis=1)
        d = np.where(taken, np.inf, d)
        j = int(d.argmin())
        if d[j] < threshold:
            taken[j] = True
            matches.append((p, gts[j], float(d[j])))
        else:
            unmatched_preds.append(p)
    unmatched_gts = [g for j, g in enumerate(gts) if not taken[j]]
    return matches, unmatched_preds, unmatched_gts


def average_precision(
    records: list[tuple[float, bool]], n_gt: int, min_recall: float = 0.1, min_precision: float = 0.1
) -> float:
    """AP from (confidence, is_true_positive) records accumulated over frames.

    101-point interpolated precision over recall in [0, 1], averaged above
    min_recall after subtracting min_precision (clipped at 0), normalized by
    (1 - min_precision). Zero when there is no ground truth or no predictions.
    """
    if n_gt == 0 or not records:
        return 0.0
    ranked = sorted(records, key=lambda r: -r[0])
    tps = np.cumsum([r[1] for r in ranked])
    fps = np.cumsum([not r[1] for r in ranked])
    precision = tps / (tps + fps)
    recall = tps / n_gt

    recall_grid = np.linspace(0.0, 1.0, 101)
    interp = np.interp(recall_grid, recall, precision, right=0.0)
    clipped = interp[round(100 * min_recall) + 1 :] - min_precision
    clipped[clipped < 0] = 0.0
    return float(min(1.0, max(0.0, clipped.mean() / (1.0 - min_precision))))


def scale_iou(a: EvalBox, b: EvalBox) -> float:
    """3D IoU of the two size tuples after aligning centers and yaw."""
    overlap = np.minimum(a.size, b.size)
    inter = float(np.prod(overlap))
    union = float(np.prod(a.size)) + float(np.prod(b.size)) - inter
    return inter / union


def tp_errors(matches: list[tuple[EvalBox, EvalBox, float]]) -> tuple[float, float, float, float]:
    """(ATE, ASE, AOE, AVE) means over matched pairs; 1.0 each when empty."""
    if not matches:
        return (1.0, 1.0, 1.0, 1.0)
    ate = float(np.mean([d for _, _, d in matches]))
    ase = float(np.mean([1.0 - scale_iou(p, g) for p, g, _ in matches]))
    aoe = float(np.mean([abs(normalize_yaw(p.yaw - g.yaw)) for p, g, _ in matches]))
    ave = float(np.mean([np.linalg.norm(p.velocity - g.velocity) for p, g, _ in matches]))
    return (ate, ase, aoe, ave)


def nds(map_: float, mate: float, mase: float, maoe: float, mave: float, maae: float = 1.0) -> float:
    """Weighted detection score: half mAP, half clamped TP-error complements."""
    tp_terms = sum(1.0 - min(1.0, m) for m in (mate, mase, maoe, mave, maae))
    return (5.0 * map_ + tp_terms) / 10.0


@dataclass(eq=False)
class ClassResult:
    ap: dict[float, float]
    ate: float
    ase: float
    aoe: float
    ave: float
    n_gt: int
    matches: list[dict] = field(default_factory=list)


@dataclass(eq=False)
class EvalReport:
    per_class: dict[str, ClassResult]
    mean_ap: float
    mate: float
    mase: float
    maoe: float
    mave: float
    maae: float
    nds_score: float
    config: EvalConfig

    def to_json_dict(self) -> dict:
        return {
            "mAP": self.mean_ap,
            "mATE": self.mate,
            "mASE": self.mase,
            "mAOE": self.maoe,
            "mAVE": self.mave,
            "mAAE": self.maae,
            "NDS": self.nds_score,
            "mAP_percent": 100.0 * self.mean_ap,
            "NDS_percent": 100.0 * self.nds_score,
            "class_preset": self.config.class_preset,
            "distance_thresholds": list(self.config.distance_thresholds),
            "tp_threshold": self.config.tp_threshold,
            "per_class": {
                cls: {
                    "ap": {f"{t:g}": r.ap[t] for t in sorted(r.ap)},
                    "ate": r.ate,
                    "ase": r.ase,
                    "aoe": r.aoe,
                    "ave": r.ave,
                    "n_gt": r.n_gt,
                    "matches": r.matches,
                }
                for cls, r in sorted(self.per_class.items())
            },
        }

    def csv_rows(self) -> list[list]:
        thresholds = sorted(self.config.distance_thresholds)
        header = ["class", "n_gt"] + [f"ap_{t:g}" for t in thresholds] + ["ate", "ase", "aoe", "ave"]
        rows: list[list] = [header]
        for cls, r in sorted(self.per_class.items()):
            rows.append(
                [cls, r.n_gt]
                + [f"{r.ap[t]:.6f}" for t in thresholds]
                + [f"{r.ate:.6f}", f"{r.ase:.6f}", f"{r.aoe:.6f}", f"{r.ave:.6f}"]
            )
        return rows


def evaluate(
    preds_by_frame: dict[int, list[EvalBox]],
    gts_by_frame: dict[int, list[EvalBox]],
    cfg: EvalConfig,
) -> EvalReport:
    """Score predictions against ground truth over a shared set of frames."""
    if cfg.pseudo_mode:
        preds_by_frame = {
            f: [
                EvalBox(p.center, p.size, p.yaw, p.velocity, p.class_name, 1.0, p.frame_index)
                for p in boxes
            ]
            for f, boxes in preds_by_frame.items()
        }

    frames = sorted(set(preds_by_frame) | set(gts_by_frame))
    classes = preset_targets(cfg.class_preset)
    per_class: dict[str, ClassResult] = {}

    for cls in classes:
        n_gt = sum(
            sum(1 for g in gts_by_frame.get(f, []) if g.class_name == cls) for f in frames
        )
        ap: dict[float, float] = {}
        tp_matches: list[tuple[EvalBox, EvalBox, float]] = []
        audit: list[dict] = []
        for threshold in cfg.distance_thresholds:
            records: list[tuple[float, bool]] = []
            matches_at_t: list[tuple[EvalBox, EvalBox, float]] = []
            for f in frames:
                p_cls = [p for p in preds_by_frame.get(f, []) if p.class_name == cls]
                g_cls = [g for g in gts_by_frame.get(f, []) if g.class_name == cls]
                matched, unmatched_preds, _ = match_predictions(p_cls, g_cls, threshold)
                records.extend((p.confidence, True) for p, _, _ in matched)
                records.extend((p.confidence, False) for p in unmatched_preds)
                matches_at_t.extend(matched)
            ap[threshold] = average_precision(records, n_gt)
            if threshold == cfg.tp_threshold:
                tp_matches = matches_at_t
                audit = [
                    {
                        "frame_index": p.frame_index,
                        "pred_center": p.center.tolist(),
                        "gt_center": g.center.tolist(),
                        "distance": d,
                    }
                    for p, g, d in matches_at_t
                ]
        ate, ase, aoe, ave = tp_errors(tp_matches)
        per_class[cls] = ClassResult(ap=ap, ate=ate, ase=ase, aoe=aoe, ave=ave, n_gt=n_gt, matches=audit)

    mean_ap = float(np.mean([r.ap[t] for r in per_class.values() for t in cfg.distance_thresholds]))
    mate = float(np.mean([r.ate for r in per_class.values()]))
    mase = float(np.mean([r.ase for r in per_class.values()]))
    maoe = float(np.mean([r.aoe for r in per_class.values()]))
    mave = float(np.mean([r.ave for r in per_class.values()]))
    return EvalReport(
        per_class=per_class,
        mean_ap=mean_ap,
        mate=mate,
        mase=mase,
        maoe=maoe,
        mave=mave,
        maae=cfg.maae,
        nds_score=nds(mean_ap, mate, mase, maoe, mave, cfg.maae),
        config=cfg,
    )


__all__ = [
    "DYNAMIC_CLASSES",
    "CLASS_PRESETS",
    "map_classes",
    "preset_targets",
    "EvalBox",
    "EvalConfig",
    "EvalReport",
    "ClassResult",
    "match_predictions",
    "average_precision",
    "scale_iou",
    "tp_errors",
    "nds",
    "evaluate",
]
