"""Box geometry, prediction filtering, and assignment to ground-truth ids.

All functions here are pure; frames can be matched in parallel without
shared state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment

from .mot import BoundingBox, Detection, GroundTruthEntry, Sequence

ASSIGNMENT_STRATEGIES = ("greedy_by_confidence", "optimal_bipartite")

# weight offset that makes match count dominate total IoU in the
# optimal-bipartite objective, so it never finds fewer matches than greedy
_CARDINALITY_WEIGHT = 1.0e6


@dataclass(frozen=True)
class MatchConfig:
    """Thresholds and strategy used to decide which objects count as detected."""

    iou_threshold: float = 0.5
    confidence_threshold: float = 0.7
    nms_iou_threshold: float = 0.5
    assignment_strategy: str = "greedy_by_confidence"
    class_map: Mapping[int, int] | None = None

    def __post_init__(self):
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if not (0.0 <= self.confidence_threshold <= 1.0):
            raise ValueError(
                f"confidence_threshold must be in [0, 1], got {self.confidence_threshold}"
            )
        if not (0.0 < self.nms_iou_threshold <= 1.0):
            raise ValueError(
                f"nms_iou_threshold must be in (0, 1], got {self.nms_iou_threshold}"
            )
        if self.assignment_strategy not in ASSIGNMENT_STRATEGIES:
            raise ValueError(
                f"assignment_strategy must be one of {ASSIGNMENT_STRATEGIES}, "
                f"got {self.assignment_strategy!r}"
            )

    def detection_class(self, det: Detection) -> int:
        if self.class_map is None:
            return det.class_id
        return self.class_map.get(det.class_id, det.class_id)


@dataclass(frozen=True)
class GroundTruthFilter:
    """Eligibility rules for ground truth before matching.

    classes=None admits every class; the default keeps only class 1
    (pedestrian in MOT-style annotations).  min_visibility=0.0 includes all
    visibility levels.
    """

    classes: frozenset[int] | None = frozenset({1})
    require_consider: bool = True
    min_visibility: float = 0.0

    def eligible(self, entries: list[GroundTruthEntry]) -> list[GroundTruthEntry]:
        out = []
        for e in entries:
            if self.require_consider and not e.consider_flag:
                continue
            if self.classes is not None and e.class_id not in self.classes:
                continue
            if e.visibility < self.min_visibility:
                continue
            out.append(e)
        return out


@dataclass(frozen=True)
class FrameMatchResult:
    """Outcome of assigning one frame's detections to its ground-truth ids.

    detected_ids and missed_ids partition the frame's eligible ground-truth
    id set.  matched_detections pairs each detected id with its winning
    detection; unmatched_detections are the false positives.
    """

    frame: int
    detected_ids: frozenset[int]
    missed_ids: frozenset[int]
    matched_detections: tuple[tuple[int, Detection], ...]
    unmatched_detections: tuple[Detection, ...]

    @property
    def tp_count(self) -> int:
        return len(self.detected_ids)

    @property
    def fn_count(self) -> int:
        return len(self.missed_ids)

    @property
    def fp_count(self) -> int:
        return len(self.unmatched_detections)

    @property
    def tn_count(self) -> int:
        """Always zero: detection has no enumerable universe of absent objects."""
        return 0


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when they do not overlap.

    Degenerate touching (zero-area intersection) counts as no overlap; the
    union is areaA + areaB - intersection so shared area is not double
    counted.  Exactly symmetric in its arguments.
    """
    overlap_w = min(a.right, b.right) - max(a.left, b.left)
    if overlap_w <= 0:
        return 0.0
    overlap_h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if overlap_h <= 0:
        return 0.0
    intersection = overlap_w * overlap_h
    # areas from the same corner representation as the overlap, so identical
    # boxes yield exactly 1.0; the clamp guards the last-ulp rounding cases
    area_a = (a.right - a.left) * (a.bottom - a.top)
    area_b = (b.right - b.left) * (b.bottom - b.top)
    union = area_a + area_b - intersection
    return min(1.0, intersection / union)


def filter_by_confidence(dets: list[Detection], threshold: float) -> list[Detection]:
    """Keep detections with confidence >= threshold, preserving order."""
    return [d for d in dets if d.confidence >= threshold]


def _detection_rank(det: Detection) -> tuple:
    # descending confidence; ties broken by box coordinates for determinism
    return (-det.confidence, det.box.left, det.box.top, det.box.width, det.box.height)


def nms(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Class-aware non-maximum suppression.

    A detection survives iff no higher-ranked survivor of the same class
    overlaps it with IoU strictly above the threshold.  Survivors come back
    in rank order (descending confidence, then box coordinates), which makes
    the operation idempotent and deterministic under confidence ties.
    """
    survivors: list[Detection] = []
    for det in sorted(dets, key=_detection_rank):
        suppressed = any(
            kept.class_id == det.class_id and iou(kept.box, det.box) > iou_threshold
            for kept in survivors
        )
        if not suppressed:
            survivors.append(det)
    return survivors


def _greedy_assignment(
    gts: list[GroundTruthEntry],
    dets: list[Detection],
    cfg: MatchConfig,
) -> dict[int, Detection]:
    by_id = sorted(gts, key=lambda g: g.object_id)
    assigned: dict[int, Detection] = {}
    taken: set[int] = set()
    for det in sorted(dets, key=_detection_rank):
        det_class = cfg.detection_class(det)
        best_id = None
        best_iou = 0.0
        for gt in by_id:
            if gt.object_id in taken or gt.class_id != det_class:
                continue
            value = iou(det.box, gt.box)
            # strict > keeps the lowest object_id on IoU ties
            if value >= cfg.iou_threshold and value > best_iou:
                best_iou = value
                best_id = gt.object_id
        if best_id is not None:
            assigned[best_id] = det
            taken.add(best_id)
    return assigned


def _bipartite_assignment(
    gts: list[GroundTruthEntry],
    dets: list[Detection],
    cfg: MatchConfig,
) -> dict[int, Detection]:
    if not gts or not dets:
        return {}
    gt_sorted = sorted(gts, key=lambda g: g.object_id)
    det_sorted = sorted(dets, key=_detection_rank)
    weights = np.zeros((len(gt_sorted), len(det_sorted)))
    eligible = np.zeros_like(weights, dtype=bool)
    for i, gt in enumerate(gt_sorted):
        for j, det in enumerate(det_sorted):
            if gt.class_id != cfg.detection_class(det):
                continue
            value = iou(gt.box, det.box)
            if value >= cfg.iou_threshold:
                weights[i, j] = _CARDINALITY_WEIGHT + value
                eligible[i, j] = True
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return {
        gt_sorted[i].object_id: det_sorted[j]
        for i, j in zip(rows, cols)
        if eligible[i, j]
    }


def match_frame(
    gts: list[GroundTruthEntry],
    dets: list[Detection],
    cfg: MatchConfig,
    frame: int | None = None,
) -> FrameMatchResult:
    """Assign detections to ground-truth ids for one frame.

    Expects detections already confidence-filtered and NMS'd, and ground
    truth already eligibility-filtered.  Each detection matches at most one
    id and vice versa; an id counts as detected iff a same-class detection
    with IoU >= cfg.iou_threshold was assigned to it.
    """
    if frame is None:
        if gts:
            frame = gts[0].frame
        elif dets:
            frame = dets[0].frame
        else:
            frame = 0
    if cfg.assignment_strategy == "optimal_bipartite":
        assigned = _bipartite_assignment(gts, dets, cfg)
    else:
        assigned = _greedy_assignment(gts, dets, cfg)
    detected = frozenset(assigned)
    missed = frozenset(g.object_id for g in gts) - detected
    winners = {id(det) for det in assigned.values()}
    unmatched = tuple(d for d in dets if id(d) not in winners)
    matched = tuple(sorted(assigned.items(), key=lambda item: item[0]))
    return FrameMatchResult(
        frame=frame,
        detected_ids=detected,
        missed_ids=missed,
        matched_detections=matched,
        unmatched_detections=unmatched,
    )


def match_sequence(
    seq: Sequence,
    cfg: MatchConfig,
    gt_filter: GroundTruthFilter | None = None,
) -> list[FrameMatchResult]:
    """Run the full per-frame pipeline (eligibility, confidence, NMS, assignment).

    Consistency and accuracy are both computed from these results, so the two
    metrics always describe the same detector configuration.
    """
    gt_filter = gt_filter or GroundTruthFilter()
    results = []
    for f in seq.frames:
        gts = gt_filter.eligible(seq.ground_truth[f])
        dets = nms(
            filter_by_confidence(seq.detections[f], cfg.confidence_threshold),
            cfg.nms_iou_threshold,
        )
        results.append(match_frame(gts, dets, cfg, frame=f))
    return results
