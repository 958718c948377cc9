import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from detcon.errors import ContractError
from detcon.matching import MatchConfig
from detcon.metrics import (
    PRCurve,
    average_precision,
    inconsistency_sets,
    mean_average_precision,
    pairwise_consistency,
    video_consistency,
)
from detcon.report import evaluate_sequence
from detcon.synth import inject_false_positives, sequence_from_id_sets

A, B, C, D = 1, 2, 3, 4


class TestInconsistencySets:
    def test_partial_handoff(self):
        sets = inconsistency_sets({A, B, C}, {D, A, B}, {A, B}, {A})
        assert sets.shared == {A, B}
        assert sets.detected_only_in_first == {B}
        assert sets.detected_only_in_second == frozenset()

    def test_perfect_detector_has_empty_sets(self):
        sets = inconsistency_sets({A, B}, {A, B}, {A, B}, {A, B})
        assert sets.detected_only_in_first == frozenset()
        assert sets.detected_only_in_second == frozenset()

    def test_disjoint_detection_splits_both_ways(self):
        sets = inconsistency_sets({A, B}, {A, B}, {A}, {B})
        assert sets.detected_only_in_first == {A}
        assert sets.detected_only_in_second == {B}

    def test_detected_outside_gt_is_contract_error(self):
        with pytest.raises(ContractError):
            inconsistency_sets({A}, {A}, {A, B}, {A})
        with pytest.raises(ContractError):
            inconsistency_sets({A}, {A}, {A}, {B})

    def test_ids_only_in_one_frame_are_excluded(self):
        sets = inconsistency_sets({A, C}, {A, D}, {C}, {D})
        assert sets.shared == {A}
        assert sets.detected_only_in_first == frozenset()
        assert sets.detected_only_in_second == frozenset()


class TestPairwiseConsistency:
    def test_half(self):
        sets = inconsistency_sets({A, B, C}, {D, A, B}, {A, B}, {A})
        assert pairwise_consistency(sets).value == 0.5

    def test_fully_consistent(self):
        sets = inconsistency_sets({A, B}, {A, B}, {A}, {A})
        assert pairwise_consistency(sets).value == 1.0

    def test_fully_inconsistent(self):
        sets = inconsistency_sets({A, B}, {A, B}, {A}, {B})
        assert pairwise_consistency(sets).value == 0.0

    def test_empty_shared_set_is_undefined_not_error(self):
        sets = inconsistency_sets({A}, {B}, {A}, {B})
        pair = pairwise_consistency(sets)
        assert pair.value is None
        assert not pair.defined

    @given(
        st.sets(st.integers(1, 8)),
        st.sets(st.integers(1, 8)),
        st.data(),
    )
    def test_symmetric_and_bounded(self, gt_i, gt_j, data):
        det_i = data.draw(st.sets(st.sampled_from(sorted(gt_i))) if gt_i else st.just(set()))
        det_j = data.draw(st.sets(st.sampled_from(sorted(gt_j))) if gt_j else st.just(set()))
        forward = pairwise_consistency(inconsistency_sets(gt_i, gt_j, det_i, det_j))
        backward = pairwise_consistency(inconsistency_sets(gt_j, gt_i, det_j, det_i))
        assert forward.value == backward.value
        if forward.value is not None:
            assert 0.0 <= forward.value <= 1.0
        assert forward.detected_only_in_first == backward.detected_only_in_second
        assert forward.detected_only_in_first <= forward.shared_ids
        assert forward.detected_only_in_second <= forward.shared_ids
        assert not forward.detected_only_in_first & forward.detected_only_in_second


def brute_force_video_consistency(gt_sets, det_sets):
    """Literal enumeration of the set-membership definitions, kept naive on
    purpose so it stays independent of the library implementation."""
    values = []
    for i in range(len(gt_sets) - 1):
        shared = {x for x in gt_sets[i] if x in gt_sets[i + 1]}
        if not shared:
            continue
        one_sided = 0
        for x in shared:
            detected_here = x in det_sets[i]
            detected_next = x in det_sets[i + 1]
            if detected_here != detected_next:
                one_sided += 1
        values.append((len(shared) - one_sided) / len(shared))
    if not values:
        return None
    return math.fsum(values) / len(values)


def random_instance(rng, max_frames=5, max_ids=6):
    n_frames = rng.randint(2, max_frames)
    universe = list(range(1, max_ids + 1))
    gt_sets, det_sets = [], []
    for _ in range(n_frames):
        gt = {i for i in universe if rng.random() < 0.7}
        det = {i for i in gt if rng.random() < 0.6}
        gt_sets.append(gt)
        det_sets.append(det)
    return gt_sets, det_sets


def library_consistency(gt_sets, det_sets, cfg=None):
    seq = sequence_from_id_sets(gt_sets, det_sets)
    return video_consistency(seq, cfg or MatchConfig())


class TestVideoConsistency:
    def test_mean_of_pairwise_values(self):
        # pair (1,2) fully consistent, pair (2,3) half consistent
        gt_sets = [{A, B}, {A, B}, {A, B}]
        det_sets = [{A, B}, {A, B}, {A}]
        video = library_consistency(gt_sets, det_sets)
        assert [p.value for p in video.pair_values] == [1.0, 0.5]
        assert video.value == 0.75
        assert video.defined_pair_count == 2

    def test_perfect_detector_scores_one(self):
        gt_sets = [{A, B, C}] * 4
        video = library_consistency(gt_sets, gt_sets)
        assert video.value == 1.0

    def test_alternating_detector_scores_zero(self):
        gt_sets = [{A, B}] * 3
        det_sets = [{B}, {A}, {B}]
        video = library_consistency(gt_sets, det_sets)
        assert video.value == 0.0

    def test_single_frame_rejected(self):
        seq = sequence_from_id_sets([{A}], [{A}])
        with pytest.raises(ValueError):
            video_consistency(seq, MatchConfig())

    def test_no_shared_ids_anywhere_gives_no_signal(self):
        video = library_consistency([{A}, {B}, {C}], [{A}, set(), {C}])
        assert video.value is None
        assert video.defined_pair_count == 0
        assert video.skipped_pair_count == 2

    def test_skipped_pairs_are_counted_but_not_averaged(self):
        video = library_consistency([{A}, {B}, {B}], [{A}, {B}, {B}])
        assert video.value == 1.0
        assert video.defined_pair_count == 1
        assert video.skipped_pair_count == 1

    def test_matches_brute_force_on_random_instances(self):
        rng = random.Random(99)
        for _ in range(300):
            gt_sets, det_sets = random_instance(rng)
            expected = brute_force_video_consistency(gt_sets, det_sets)
            assert library_consistency(gt_sets, det_sets).value == expected

    def test_reversal_invariance(self):
        rng = random.Random(3)
        for _ in range(100):
            gt_sets, det_sets = random_instance(rng)
            forward = library_consistency(gt_sets, det_sets).value
            backward = library_consistency(gt_sets[::-1], det_sets[::-1]).value
            assert forward == backward

    def test_consistent_misser_is_fully_consistent_with_low_recall(self):
        gt_sets = [{A, B}] * 5
        det_sets = [{A}] * 5
        seq = sequence_from_id_sets(gt_sets, det_sets)
        report = evaluate_sequence(seq)
        assert report.consistency == 1.0
        assert report.recall == 0.5

    def test_false_positives_do_not_change_consistency(self):
        rng = random.Random(21)
        for trial in range(30):
            gt_sets, det_sets = random_instance(rng)
            seq = sequence_from_id_sets(gt_sets, det_sets)
            noisy = inject_false_positives(seq, max_per_frame=5, seed=trial)
            clean = evaluate_sequence(seq)
            dirty = evaluate_sequence(noisy)
            assert dirty.consistency == clean.consistency
            assert [p.value for p in video_consistency(noisy, MatchConfig()).pair_values] == [
                p.value for p in video_consistency(seq, MatchConfig()).pair_values
            ]
            if clean.map is not None and dirty.map is not None:
                assert dirty.map <= clean.map


def exact_ap(outcomes, total_gt):
    """Independent AP oracle: each true positive contributes the envelope
    precision at its rank, divided by the ground-truth count (exact rationals)."""
    ranked = sorted(outcomes, key=lambda o: -o[0])
    tp = fp = 0
    precisions = []
    flags = []
    for _, is_tp in ranked:
        tp, fp = tp + is_tp, fp + (not is_tp)
        precisions.append(Fraction(tp, tp + fp))
        flags.append(is_tp)
    envelope = list(precisions)
    for k in range(len(envelope) - 2, -1, -1):
        envelope[k] = max(envelope[k], envelope[k + 1])
    total = sum((env for env, is_tp in zip(envelope, flags) if is_tp), Fraction(0))
    return total / total_gt


class TestAveragePrecision:
    def test_single_perfect_detection(self):
        curve = average_precision([(0.9, True)], total_gt=1)
        assert curve.ap == 1.0
        assert curve.recalls == (1.0,)
        assert curve.precisions == (1.0,)

    def test_one_of_two_found(self):
        curve = average_precision([(0.9, True)], total_gt=2)
        assert curve.ap == pytest.approx(0.5, abs=1e-12)
        assert curve.ap == pytest.approx(float(exact_ap([(0.9, True)], 2)), abs=1e-12)

    def test_tp_fp_tp_ranking(self):
        outcomes = [(0.9, True), (0.8, False), (0.7, True)]
        curve = average_precision(outcomes, total_gt=2)
        assert curve.ap == pytest.approx(5 / 6, abs=1e-12)
        assert curve.ap == pytest.approx(float(exact_ap(outcomes, 2)), abs=1e-12)
        assert curve.cum_tp == (1, 1, 2)
        assert curve.cum_fp == (0, 1, 1)

    def test_zero_ground_truth_is_undefined(self):
        curve = average_precision([(0.9, False)], total_gt=0)
        assert curve.ap is None
        assert curve.recalls == (0.0,)

    def test_no_detections_with_ground_truth_scores_zero(self):
        curve = average_precision([], total_gt=3)
        assert curve.ap == 0.0
        assert curve.recalls == ()

    def test_recall_non_decreasing(self):
        rng = random.Random(17)
        for _ in range(50):
            outcomes = [(rng.random(), rng.random() < 0.5) for _ in range(rng.randint(0, 12))]
            total_gt = sum(o[1] for o in outcomes) + rng.randint(0, 4)
            if total_gt == 0:
                continue
            curve = average_precision(outcomes, total_gt)
            assert all(r1 <= r2 for r1, r2 in zip(curve.recalls, curve.recalls[1:]))
            assert all(0.0 <= p <= 1.0 for p in curve.precisions)
            assert curve.ap == pytest.approx(float(exact_ap(outcomes, total_gt)), abs=1e-12)

    def test_eleven_point_variant(self):
        outcomes = [(0.9, True), (0.8, False), (0.7, True)]
        curve = average_precision(outcomes, total_gt=2, interpolation="eleven_point")
        # envelope is 1.0 up to recall 0.5, then 2/3 up to 1.0
        assert curve.ap == pytest.approx((6 * 1.0 + 5 * (2 / 3)) / 11, abs=1e-12)

    def test_unknown_interpolation_rejected(self):
        with pytest.raises(ValueError):
            average_precision([], 1, interpolation="101_point")

    @given(st.lists(st.tuples(st.floats(0, 1, allow_nan=False), st.booleans()), max_size=10), st.integers(1, 6))
    def test_adding_lowest_rank_tp_never_decreases_ap(self, outcomes, extra_gt):
        total_gt = sum(o[1] for o in outcomes) + extra_gt
        base = average_precision(outcomes, total_gt)
        lowest = min((o[0] for o in outcomes), default=1.0)
        extended = outcomes + [(lowest / 2, True)]
        grown = average_precision(extended, total_gt)
        assert grown.ap >= base.ap - 1e-12

    @given(st.lists(st.tuples(st.floats(0, 1, allow_nan=False), st.booleans()), min_size=1, max_size=10), st.integers(1, 6))
    def test_adding_top_rank_fp_never_increases_recall(self, outcomes, extra_gt):
        total_gt = sum(o[1] for o in outcomes) + extra_gt
        base = average_precision(outcomes, total_gt)
        extended = [(1.0, False)] + outcomes
        grown = average_precision(extended, total_gt)
        assert grown.recalls[-1] == base.recalls[-1]


class TestMeanAveragePrecision:
    def curve(self, ap):
        return PRCurve((), (), (), (), 1, ap)

    def test_single_class_pass_through(self):
        assert mean_average_precision([self.curve(0.63)]) == 0.63

    def test_mean_of_two_classes(self):
        assert mean_average_precision([self.curve(1.0), self.curve(0.0)]) == 0.5

    def test_undefined_class_excluded(self):
        curves = [self.curve(0.8), PRCurve((), (), (), (), 0, None)]
        assert mean_average_precision(curves) == 0.8

    def test_no_defined_class_gives_no_signal(self):
        assert mean_average_precision([PRCurve((), (), (), (), 0, None)]) is None
