"""Consistency and accuracy metrics over per-frame match results.

Pairwise consistency for two frames is the fraction of the objects present
in both frames that the detector treats the same way (detected in both or
missed in both).  Video consistency averages that value over adjacent frame
pairs.  Accuracy is the usual average precision over the ranked detection
pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import ContractError
from .matching import FrameMatchResult, GroundTruthFilter, MatchConfig, match_sequence
from .mot import Sequence

AP_INTERPOLATIONS = ("all_points", "eleven_point")


class InconsistencySets(NamedTuple):
    """Shared ids of a frame pair, split by one-sided detection status."""

    shared: frozenset[int]
    detected_only_in_first: frozenset[int]
    detected_only_in_second: frozenset[int]


def inconsistency_sets(
    gt_first: Iterable[int],
    gt_second: Iterable[int],
    detected_first: Iterable[int],
    detected_second: Iterable[int],
) -> InconsistencySets:
    """Split the shared ground-truth ids of two frames by detection status.

    detected_only_in_first holds ids present in both frames that were
    detected in the first frame but missed in the second; the other set is
    the mirror image.  The detected sets must be subsets of their frames'
    ground-truth sets (they come from match results); anything else signals
    an upstream matching bug.
    """
    gt_first = frozenset(gt_first)
    gt_second = frozenset(gt_second)
    detected_first = frozenset(detected_first)
    detected_second = frozenset(detected_second)
    if not detected_first <= gt_first:
        raise ContractError(
            f"detected ids {sorted(detected_first - gt_first)} not in first frame's ground truth"
        )
    if not detected_second <= gt_second:
        raise ContractError(
            f"detected ids {sorted(detected_second - gt_second)} not in second frame's ground truth"
        )
    shared = gt_first & gt_second
    only_first = frozenset(
        i for i in shared if i in detected_first and i not in detected_second
    )
    only_second = frozenset(
        i for i in shared if i in detected_second and i not in detected_first
    )
    return InconsistencySets(shared, only_first, only_second)


@dataclass(frozen=True)
class PairwiseConsistency:
    """Consistency of one frame pair; value is None when no ids are shared."""

    frame_first: int
    frame_second: int
    shared_ids: frozenset[int]
    detected_only_in_first: frozenset[int]
    detected_only_in_second: frozenset[int]
    value: float | None

    @property
    def defined(self) -> bool:
        return self.value is not None


def pairwise_consistency(
    sets: InconsistencySets,
    frame_first: int = 0,
    frame_second: int = 1,
) -> PairwiseConsistency:
    """Score one frame pair from its inconsistency sets.

    value = (|shared| - |only_first| - |only_second|) / |shared|; pairs with
    an empty shared set are a represented state (value None), not an error,
    and are excluded from averages.
    """
    shared, only_first, only_second = sets
    if not shared:
        value = None
    else:
        value = (len(shared) - len(only_first) - len(only_second)) / len(shared)
    return PairwiseConsistency(
        frame_first=frame_first,
        frame_second=frame_second,
        shared_ids=shared,
        detected_only_in_first=only_first,
        detected_only_in_second=only_second,
        value=value,
    )


@dataclass(frozen=True)
class VideoConsistency:
    """Mean pairwise consistency over a video's adjacent frame pairs.

    value is None when every pair was skipped for an empty shared set (a
    no-signal sequence, distinct from a measured 0.0).
    """

    value: float | None
    pair_values: tuple[PairwiseConsistency, ...]
    defined_pair_count: int

    @property
    def skipped_pair_count(self) -> int:
        return len(self.pair_values) - self.defined_pair_count


def consistency_from_matches(results: list[FrameMatchResult]) -> VideoConsistency:
    """Video consistency from per-frame match results, in frame order."""
    if len(results) < 2:
        raise ValueError("need at least 2 frames to measure consistency")
    pairs = []
    for first, second in zip(results, results[1:]):
        gt_first = first.detected_ids | first.missed_ids
        gt_second = second.detected_ids | second.missed_ids
        sets = inconsistency_sets(
            gt_first, gt_second, first.detected_ids, second.detected_ids
        )
        pairs.append(pairwise_consistency(sets, first.frame, second.frame))
    defined = [p.value for p in pairs if p.value is not None]
    # fsum is exactly rounded, so the mean is independent of pair order
    value = math.fsum(defined) / len(defined) if defined else None
    return VideoConsistency(
        value=value, pair_values=tuple(pairs), defined_pair_count=len(defined)
    )


def video_consistency(
    seq: Sequence,
    cfg: MatchConfig,
    gt_filter: GroundTruthFilter | None = None,
) -> VideoConsistency:
    """Match every frame of a sequence and average adjacent-pair consistency."""
    if seq.meta.frame_count < 2:
        raise ValueError("need at least 2 frames to measure consistency")
    return consistency_from_matches(match_sequence(seq, cfg, gt_filter))


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall points over the ranked detection pool, plus their AP.

    One point per detection rank; recall is non-decreasing along the curve.
    ap is None when the evaluation unit has no ground truth at all.
    """

    recalls: tuple[float, ...]
    precisions: tuple[float, ...]
    cum_tp: tuple[int, ...]
    cum_fp: tuple[int, ...]
    total_gt: int
    ap: float | None


def _precision_envelope(precisions: list[float]) -> list[float]:
    env = list(precisions)
    for k in range(len(env) - 2, -1, -1):
        env[k] = max(env[k], env[k + 1])
    return env


def _ap_all_points(recalls: list[float], precisions: list[float]) -> float:
    env = _precision_envelope(precisions)
    terms = []
    prev_recall = 0.0
    for r, p in zip(recalls, env):
        if r > prev_recall:
            terms.append((r - prev_recall) * p)
            prev_recall = r
    return math.fsum(terms)


def _ap_eleven_point(recalls: list[float], precisions: list[float]) -> float:
    env = _precision_envelope(precisions)
    samples = []
    for level in range(11):
        r = level / 10.0
        best = 0.0
        for recall, p in zip(recalls, env):
            if recall >= r:
                best = p
                break
        samples.append(best)
    return math.fsum(samples) / 11.0


def average_precision(
    outcomes: Iterable[tuple[float, bool]],
    total_gt: int,
    interpolation: str = "all_points",
) -> PRCurve:
    """Build the precision/recall curve for ranked detection outcomes.

    outcomes are (confidence, is_true_positive) pairs pooled across the
    frames of the evaluation unit; they are ranked by descending confidence
    (stable for ties).  The default AP integrates the precision envelope at
    every recall change (all-points interpolation); "eleven_point" samples
    the envelope at recall levels 0.0, 0.1, ..., 1.0 instead.
    """
    if interpolation not in AP_INTERPOLATIONS:
        raise ValueError(
            f"interpolation must be one of {AP_INTERPOLATIONS}, got {interpolation!r}"
        )
    if total_gt < 0:
        raise ValueError(f"total_gt must be >= 0, got {total_gt}")
    ranked = sorted(outcomes, key=lambda o: -o[0])
    cum_tp: list[int] = []
    cum_fp: list[int] = []
    tp = fp = 0
    for _, is_tp in ranked:
        if is_tp:
            tp += 1
        else:
            fp += 1
        cum_tp.append(tp)
        cum_fp.append(fp)
    precisions_ = [t / (t + f) for t, f in zip(cum_tp, cum_fp)]
    if total_gt == 0:
        recalls = [0.0 for _ in ranked]
        ap = None
    elif interpolation == "all_points":
        recalls = [t / total_gt for t in cum_tp]
        ap = _ap_all_points(recalls, precisions_)
    else:
        recalls = [t / total_gt for t in cum_tp]
        ap = _ap_eleven_point(recalls, precisions_)
    return PRCurve(
        recalls=tuple(recalls),
        precisions=tuple(precisions_),
        cum_tp=tuple(cum_tp),
        cum_fp=tuple(cum_fp),
        total_gt=total_gt,
        ap=ap,
    )


def mean_average_precision(curves: Iterable[PRCurve]) -> float | None:
    """Unweighted mean of the defined per-class APs; None when none is defined."""
    defined = [c.ap for c in curves if c.ap is not None]
    if not defined:
        return None
    return math.fsum(defined) / len(defined)
