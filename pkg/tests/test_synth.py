import hashlib

import pytest

from detcon.errors import ConfigurationError
from detcon.matching import MatchConfig, iou
from detcon.metrics import video_consistency
from detcon.mot import load_sequence
from detcon.report import evaluate_sequence
from detcon.synth import (
    HALF_CONSISTENT_IDS,
    AlternatingMisser,
    Bernoulli,
    ConsistentMisser,
    NoneDetected,
    Perfect,
    generate_scenario,
    half_consistent_pair,
    inject_false_positives,
    parse_scenario_spec,
    sequence_from_id_sets,
    write_scenario,
)

IDS = (1, 2)


class TestGenerateScenario:
    def test_perfect_detector(self):
        seq = generate_scenario(10, IDS, Perfect())
        report = evaluate_sequence(seq)
        assert report.consistency == 1.0
        assert report.recall == 1.0
        assert report.fp == 0 and report.fn == 0

    def test_consistent_misser(self):
        seq = generate_scenario(10, IDS, ConsistentMisser(frozenset({2})))
        report = evaluate_sequence(seq)
        assert report.consistency == 1.0
        assert report.recall == 0.5

    def test_alternating_misser(self):
        model = AlternatingMisser(frozenset({1}), frozenset({2}))
        seq = generate_scenario(10, IDS, model)
        report = evaluate_sequence(seq)
        assert report.consistency == 0.0
        assert report.recall == 0.5

    def test_none_detected(self):
        seq = generate_scenario(10, IDS, NoneDetected())
        report = evaluate_sequence(seq)
        assert report.consistency == 1.0
        assert report.recall == 0.0
        assert report.pooled_detections == 0
        assert report.map == 0.0

    def test_none_detected_with_stray_fp_keeps_consistency(self):
        seq = generate_scenario(6, IDS, NoneDetected())
        noisy = inject_false_positives(seq, max_per_frame=1, seed=4)
        assert evaluate_sequence(noisy).consistency == 1.0

    def test_bernoulli_p0_reduces_to_perfect(self):
        a = generate_scenario(8, IDS, Bernoulli(0.0), seed=123)
        b = generate_scenario(8, IDS, Perfect(), seed=123)
        assert a.detections == b.detections
        assert a.ground_truth == b.ground_truth

    def test_bernoulli_p1_reduces_to_none_detected(self):
        a = generate_scenario(8, IDS, Bernoulli(1.0), seed=123)
        b = generate_scenario(8, IDS, NoneDetected(), seed=123)
        assert a.detections == b.detections

    def test_bernoulli_probability_validated(self):
        with pytest.raises(ConfigurationError):
            generate_scenario(5, IDS, Bernoulli(1.5))

    def test_miss_subset_outside_universe_rejected(self):
        with pytest.raises(ConfigurationError):
            generate_scenario(5, IDS, ConsistentMisser(frozenset({9})))

    def test_too_few_frames_rejected(self):
        with pytest.raises(ValueError):
            generate_scenario(1, IDS, Perfect())

    def test_empty_ids_rejected(self):
        with pytest.raises(ValueError):
            generate_scenario(5, (), Perfect())

    def test_gt_boxes_never_overlap(self):
        seq = generate_scenario(3, (1, 2, 3, 4, 5), Perfect())
        for frame in seq.frames:
            boxes = [e.box for e in seq.ground_truth[frame]]
            for i, a in enumerate(boxes):
                for b in boxes[i + 1 :]:
                    assert iou(a, b) == 0.0

    def test_boxes_inside_image(self):
        seq = generate_scenario(2, (1, 2, 3), Perfect())
        for frame in seq.frames:
            for entry in seq.ground_truth[frame]:
                assert entry.box.right <= seq.meta.image_width
                assert entry.box.bottom <= seq.meta.image_height


class TestHalfConsistentPair:
    def test_pairwise_value_and_sets(self):
        seq = half_consistent_pair()
        video = video_consistency(seq, MatchConfig())
        (pair,) = video.pair_values
        a, b = HALF_CONSISTENT_IDS["A"], HALF_CONSISTENT_IDS["B"]
        assert pair.value == 0.5
        assert pair.shared_ids == {a, b}
        assert pair.detected_only_in_first == {b}
        assert pair.detected_only_in_second == frozenset()

    def test_report_consistency(self):
        assert evaluate_sequence(half_consistent_pair()).consistency == 0.5


def tree_digest(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestWriteScenario:
    def test_roundtrip_through_standard_loader(self, tmp_path):
        seq = generate_scenario(4, IDS, ConsistentMisser(frozenset({2})), seed=7)
        write_scenario(seq, tmp_path / "seq")
        loaded = load_sequence(tmp_path / "seq")
        assert loaded.meta == seq.meta
        assert loaded.ground_truth == seq.ground_truth
        assert loaded.detections == seq.detections

    def test_identical_seeds_give_byte_identical_files(self, tmp_path):
        for run in ("a", "b"):
            seq = generate_scenario(6, IDS, Bernoulli(0.4), seed=42)
            write_scenario(seq, tmp_path / run, emit_frames=True)
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")

    def test_emitted_frames_match_meta(self, tmp_path):
        seq = generate_scenario(3, IDS, Perfect())
        write_scenario(seq, tmp_path / "seq", emit_frames=True)
        frames = sorted((tmp_path / "seq" / "img1").glob("*.png"))
        assert len(frames) == 3


class TestInjectFalsePositives:
    def test_fps_never_overlap_ground_truth(self):
        seq = generate_scenario(5, (1, 2, 3), Perfect())
        noisy = inject_false_positives(seq, max_per_frame=10, seed=0)
        for frame in noisy.frames:
            gt_boxes = [e.box for e in noisy.ground_truth[frame]]
            original = set(map(id, seq.detections[frame]))
            for det in noisy.detections[frame]:
                if id(det) in original:
                    continue
                assert all(iou(det.box, g) == 0.0 for g in gt_boxes)
                assert det.confidence >= 0.7

    def test_injected_boxes_pairwise_disjoint(self):
        seq = generate_scenario(4, (1,), Perfect())
        noisy = inject_false_positives(seq, max_per_frame=10, seed=3)
        for frame in noisy.frames:
            extra = noisy.detections[frame][len(seq.detections[frame]) :]
            for i, a in enumerate(extra):
                for b in extra[i + 1 :]:
                    assert iou(a.box, b.box) == 0.0


class TestSequenceFromIdSets:
    def test_detected_must_be_subset(self):
        with pytest.raises(ValueError):
            sequence_from_id_sets([{1}], [{2}])

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            sequence_from_id_sets([{1}, {1}], [{1}])

    def test_empty_frames_allowed(self):
        seq = sequence_from_id_sets([set(), {1}], [set(), {1}])
        assert seq.ground_truth[1] == []
        assert len(seq.ground_truth[2]) == 1


class TestScenarioSpecParsing:
    def test_alternating_default_split_scores_zero(self, tmp_path):
        spec = parse_scenario_spec("alternating:ids=A,B:frames=10")
        seq = spec.build(seed=0)
        assert evaluate_sequence(seq).consistency == 0.0

    def test_bernoulli_p0_is_perfect(self):
        spec = parse_scenario_spec("bernoulli:p=0:ids=A:frames=2")
        report = evaluate_sequence(spec.build(seed=0))
        assert report.consistency == 1.0
        assert report.recall == 1.0

    def test_labels_map_in_order_of_appearance(self):
        spec = parse_scenario_spec("consistent:ids=A,B,C:miss=B")
        assert spec.ids == (1, 2, 3)
        assert spec.model.missed == {2}

    def test_numeric_ids_pass_through(self):
        spec = parse_scenario_spec("perfect:ids=3,7:frames=4")
        assert spec.ids == (3, 7)

    def test_half_consistent_kind(self):
        spec = parse_scenario_spec("half_consistent")
        assert evaluate_sequence(spec.build(seed=0)).consistency == 0.5

    @pytest.mark.parametrize(
        "bad",
        [
            "",
            "sometimes:ids=A",
            "perfect",
            "perfect:frames=5",
            "bernoulli:ids=A",
            "consistent:ids=A",
            "perfect:ids=A:unknown=3",
            "half_consistent:ids=A",
            "perfect:ids=A:frames=x",
        ],
    )
    def test_bad_specs_rejected(self, bad):
        with pytest.raises(ValueError):
            parse_scenario_spec(bad)
