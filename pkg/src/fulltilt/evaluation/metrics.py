"""Radius-scaled detection metrics: mAP at distance thresholds expressed as
multiples of each ground-truth particle's radius, plus precision/recall/F1
at a score threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..geometry import Particle3D
from ..model.network import Detection


@dataclass(frozen=True)
class EvalConfig:
    radius_factors: tuple[float, ...] = (0.5, 1.0)
    f1_radius_factor: float = 1.0
    f1_score_threshold: float = 0.3
    per_class: bool = True

    def __post_init__(self):
        if any(f <= 0 for f in self.radius_factors) or self.f1_radius_factor <= 0:
            raise ValueError("radius factors must be positive")
        if not 0 <= self.f1_score_threshold <= 1:
            raise ValueError("score threshold must be in [0, 1]")


@dataclass
class EvalReport:
    ap_per_class: dict[float, dict[int, float]]
    map_per_factor: dict[float, float]
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    gt_count: int
    runtime_s: float = 0.0
    peak_mem_bytes: int = 0
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ap_per_class": {str(f): {str(c): v for c, v in d.items()}
                             for f, d in self.ap_per_class.items()},
            "map_per_factor": {str(f): v for f, v in self.map_per_factor.items()},
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "gt_count": self.gt_count,
            "runtime_s": self.runtime_s,
            "peak_mem_bytes": self.peak_mem_bytes,
            "metadata": self.metadata,
        }


def match_detections(
    dets: list[Detection | tuple],
    gt: list[Particle3D],
    factor: float,
) -> list[bool]:
    """Greedy TP/FP flags for detections sorted by descending score.

    A detection is a true positive iff an unmatched ground-truth particle of
    the same class lies within factor * (gt diameter / 2) of its center
    (3D Euclidean, pixel units). Each ground truth matches at most once.
    """
    flags = []
    used = [False] * len(gt)
    for det in dets:
        best_j = -1
        best_dist = math.inf
        for j, p in enumerate(gt):
            if used[j] or p.class_label != det.class_label:
                continue
            dist = math.dist((det.x, det.y, det.z), (p.x, p.y, p.z))
            if dist <= factor * p.d / 2 and dist < best_dist:
                best_dist = dist
                best_j = j
        if best_j >= 0:
            used[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags: list[bool], gt_count: int) -> float | None:
    """Area under the precision-recall curve with the upper-envelope
    (all-points) interpolation. Flags must be score-descending.

    Returns None when undefined (no ground truth and no detections);
    0.0 when there are detections but no ground truth.
    """
    if gt_count == 0:
        return None if not flags else 0.0
    if not flags:
        return 0.0
    precisions, recalls = [], []
    tp = 0
    for i, flag in enumerate(flags):
        if flag:
            tp += 1
        precisions.append(tp / (i + 1))
        recalls.append(tp / gt_count)
    # upper envelope of precision from the right
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    area = 0.0
    prev_recall = 0.0
    for p, r in zip(precisions, recalls):
        if r > prev_recall:
            area += (r - prev_recall) * p
            prev_recall = r
    return area


def _sorted_dets(dets: list[Detection]) -> list[Detection]:
    return sorted(dets, key=lambda d: -d.score)


def evaluate_pairs(
    pairs: list[tuple[list[Detection], list[Particle3D]]],
    cfg: EvalConfig = EvalConfig(),
    runtime_s: float = 0.0,
    peak_mem_bytes: int = 0,
    metadata: dict | None = None,
) -> EvalReport:
    """Pooled report over (detections, ground truth) pairs; a detection can
    only match ground truth from its own scene. Everything in pixels."""
    classes_gt = sorted({p.class_label for _, gt in pairs for p in gt})
    classes_all = sorted(
        set(classes_gt) | {d.class_label for dets, _ in pairs for d in dets}
    )
    total_gt = sum(len(gt) for _, gt in pairs)

    ap_per_class: dict[float, dict[int, float]] = {}
    map_per_factor: dict[float, float] = {}
    for factor in cfg.radius_factors:
        per_class = {}
        for cls in classes_all:
            scored_flags = []
            cls_gt_count = 0
            for dets, gt in pairs:
                cls_dets = _sorted_dets([d for d in dets if d.class_label == cls])
                cls_gt = [p for p in gt if p.class_label == cls]
                cls_gt_count += len(cls_gt)
                flags = match_detections(cls_dets, cls_gt, factor)
                scored_flags.extend(zip((d.score for d in cls_dets), flags))
            scored_flags.sort(key=lambda t: -t[0])
            ap = average_precision([f for _, f in scored_flags], cls_gt_count)
            if ap is not None:
                per_class[cls] = ap
        ap_per_class[factor] = per_class
        present = [per_class[c] for c in classes_gt if c in per_class]
        map_per_factor[factor] = sum(present) / len(present) if present else 0.0

    tp = fp = 0
    for dets, gt in pairs:
        kept = [d for d in _sorted_dets(dets) if d.score >= cfg.f1_score_threshold]
        for cls in classes_all:
            cls_dets = [d for d in kept if d.class_label == cls]
            cls_gt = [p for p in gt if p.class_label == cls]
            flags = match_detections(cls_dets, cls_gt, cfg.f1_radius_factor)
            tp += sum(flags)
            fp += len(flags) - sum(flags)
    fn = total_gt - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / total_gt if total_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    return EvalReport(
        ap_per_class=ap_per_class,
        map_per_factor=map_per_factor,
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        gt_count=total_gt,
        runtime_s=runtime_s,
        peak_mem_bytes=peak_mem_bytes,
        metadata=metadata or {},
    )


def evaluate_detections(
    dets: list[Detection],
    gt: list[Particle3D],
    cfg: EvalConfig = EvalConfig(),
    runtime_s: float = 0.0,
    peak_mem_bytes: int = 0,
    metadata: dict | None = None,
) -> EvalReport:
    """Single-scene convenience wrapper around :func:`evaluate_pairs`."""
    return evaluate_pairs([(dets, gt)], cfg, runtime_s, peak_mem_bytes, metadata)


def detections_to_pixels(dets: list[Detection], dims) -> list[Detection]:
    """Normalized model outputs -> pixel-space detections."""
    return [
        Detection(
            x=d.x * dims.w,
            y=d.y * dims.h,
            z=d.z * dims.d,
            d=d.d * dims.w,
            class_label=d.class_label,
            score=d.score,
        )
        for d in dets
    ]
