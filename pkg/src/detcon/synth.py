"""Seeded synthetic scenarios with controlled miss patterns.

Ground truth places every object id in every frame on a fixed grid with
one-box gaps, so boxes never overlap and assignment is unambiguous.
Synthetic detections copy the ground-truth boxes exactly (IoU 1.0,
confidence 0.99), which isolates the set logic of the consistency metric
from geometry.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigurationError
from .mot import (
    BoundingBox,
    Detection,
    GroundTruthEntry,
    Sequence,
    SequenceMeta,
    write_sequence,
)

BOX_SIZE = 20.0
MARGIN = 20.0
DETECTION_CONFIDENCE = 0.99
SYNTH_CLASS = 1
PLACEHOLDER_GRAY = 128


@dataclass(frozen=True)
class Perfect:
    """Detects every object in every frame."""

    def missed_ids(self, frame: int, ids: tuple[int, ...], rng: random.Random) -> frozenset[int]:
        return frozenset()


@dataclass(frozen=True)
class ConsistentMisser:
    """Misses the same fixed id subset in every frame."""

    missed: frozenset[int]

    def missed_ids(self, frame, ids, rng) -> frozenset[int]:
        return self.missed


@dataclass(frozen=True)
class AlternatingMisser:
    """Misses one id subset on odd frames and another on even frames."""

    odd_missed: frozenset[int]
    even_missed: frozenset[int]

    def missed_ids(self, frame, ids, rng) -> frozenset[int]:
        return self.odd_missed if frame % 2 == 1 else self.even_missed


@dataclass(frozen=True)
class Bernoulli:
    """Misses each id independently with a fixed probability per frame."""

    miss_probability: float

    def missed_ids(self, frame, ids, rng) -> frozenset[int]:
        return frozenset(i for i in ids if rng.random() < self.miss_probability)


@dataclass(frozen=True)
class NoneDetected:
    """Detects nothing at all."""

    def missed_ids(self, frame, ids, rng) -> frozenset[int]:
        return frozenset(ids)


MissModel = Union[Perfect, ConsistentMisser, AlternatingMisser, Bernoulli, NoneDetected]


def grid_box(slot: int) -> BoundingBox:
    """Box for grid slot ``slot`` (0-based); slots are one box width apart."""
    return BoundingBox(
        left=MARGIN + slot * 2.0 * BOX_SIZE, top=MARGIN, width=BOX_SIZE, height=BOX_SIZE
    )


def _grid_meta(name: str, n_frames: int, n_slots: int) -> SequenceMeta:
    width = int(2 * MARGIN + (2 * max(n_slots, 1) - 1) * BOX_SIZE)
    height = int(2 * MARGIN + BOX_SIZE)
    return SequenceMeta(
        name=name,
        frame_count=n_frames,
        frame_rate=30.0,
        image_width=width,
        image_height=height,
        image_dir="img1",
    )


def _validate_model(model: MissModel, ids: tuple[int, ...]) -> None:
    universe = set(ids)
    if isinstance(model, ConsistentMisser):
        extra = model.missed - universe
        if extra:
            raise ConfigurationError(f"missed ids {sorted(extra)} not in id universe")
    elif isinstance(model, AlternatingMisser):
        extra = (model.odd_missed | model.even_missed) - universe
        if extra:
            raise ConfigurationError(f"missed ids {sorted(extra)} not in id universe")
    elif isinstance(model, Bernoulli):
        if not (0.0 <= model.miss_probability <= 1.0):
            raise ConfigurationError(
                f"miss probability must be in [0, 1], got {model.miss_probability}"
            )


def generate_scenario(
    n_frames: int,
    ids: Iterable[int],
    model: MissModel,
    seed: int = 0,
    name: str = "synthetic",
) -> Sequence:
    """Generate ground truth plus detections following a miss model.

    Every id appears in every frame; the model decides which ids the
    simulated detector misses per frame.  Deterministic for a given seed.
    """
    ids = tuple(sorted(set(ids)))
    if n_frames < 2:
        raise ValueError(f"n_frames must be >= 2, got {n_frames}")
    if not ids:
        raise ValueError("ids must be nonempty")
    _validate_model(model, ids)
    rng = random.Random(seed)
    boxes = {object_id: grid_box(slot) for slot, object_id in enumerate(ids)}
    ground_truth = []
    detections = []
    for frame in range(1, n_frames + 1):
        missed = model.missed_ids(frame, ids, rng)
        for object_id in ids:
            ground_truth.append(
                GroundTruthEntry(
                    frame=frame,
                    object_id=object_id,
                    box=boxes[object_id],
                    consider_flag=True,
                    class_id=SYNTH_CLASS,
                    visibility=1.0,
                )
            )
            if object_id not in missed:
                detections.append(
                    Detection(
                        frame=frame,
                        box=boxes[object_id],
                        confidence=DETECTION_CONFIDENCE,
                        class_id=SYNTH_CLASS,
                    )
                )
    meta = _grid_meta(name, n_frames, len(ids))
    return Sequence.from_flat(meta, ground_truth, detections)


def sequence_from_id_sets(
    gt_ids_per_frame: list[Iterable[int]],
    detected_ids_per_frame: list[Iterable[int]],
    name: str = "synthetic",
) -> Sequence:
    """Build a sequence from explicit per-frame ground-truth/detected id sets.

    Detected ids must be subsets of the frame's ground-truth ids; detections
    copy the ground-truth boxes.  Useful for driving the metric layer with
    arbitrary set patterns.
    """
    if len(gt_ids_per_frame) != len(detected_ids_per_frame):
        raise ValueError("per-frame lists must have equal length")
    n_frames = len(gt_ids_per_frame)
    if n_frames < 1:
        raise ValueError("need at least one frame")
    all_ids = sorted({i for frame_ids in gt_ids_per_frame for i in frame_ids})
    slots = {object_id: slot for slot, object_id in enumerate(all_ids)}
    ground_truth = []
    detections = []
    for index, (gt_ids, det_ids) in enumerate(
        zip(gt_ids_per_frame, detected_ids_per_frame)
    ):
        frame = index + 1
        gt_ids = set(gt_ids)
        det_ids = set(det_ids)
        if not det_ids <= gt_ids:
            raise ValueError(
                f"frame {frame}: detected ids {sorted(det_ids - gt_ids)} not in ground truth"
            )
        for object_id in sorted(gt_ids):
            box = grid_box(slots[object_id])
            ground_truth.append(
                GroundTruthEntry(frame, object_id, box, True, SYNTH_CLASS, 1.0)
            )
            if object_id in det_ids:
                detections.append(
                    Detection(frame, box, DETECTION_CONFIDENCE, SYNTH_CLASS)
                )
    meta = _grid_meta(name, n_frames, len(all_ids))
    return Sequence.from_flat(meta, ground_truth, detections)


def inject_false_positives(
    seq: Sequence, max_per_frame: int, seed: int = 0
) -> Sequence:
    """Add 0..max_per_frame spurious detections per frame, never overlapping
    ground truth (they sit on their own grid row below the annotated area).

    Confidences are drawn in [0.7, 0.99] so the injected boxes survive the
    default confidence threshold.
    """
    if max_per_frame < 0:
        raise ValueError("max_per_frame must be >= 0")
    rng = random.Random(seed)
    band_top = seq.meta.image_height + MARGIN
    detections = {f: list(seq.detections[f]) for f in seq.frames}
    for frame in seq.frames:
        count = rng.randint(0, max_per_frame)
        for slot in range(count):
            box = BoundingBox(
                left=MARGIN + slot * 2.0 * BOX_SIZE,
                top=band_top,
                width=BOX_SIZE,
                height=BOX_SIZE,
            )
            confidence = round(rng.uniform(0.7, 0.99), 6)
            detections[frame].append(
                Detection(frame, box, confidence, SYNTH_CLASS)
            )
    return Sequence(meta=seq.meta, ground_truth=seq.ground_truth, detections=detections)


HALF_CONSISTENT_IDS = {"A": 1, "B": 2, "C": 3, "D": 4}


def half_consistent_pair() -> Sequence:
    """Two-frame worked example with pairwise consistency exactly 0.5.

    Frame 1 contains objects A, B, C and the detector finds A and B; frame 2
    contains D, A, B and the detector finds only A.  A and B are shared, B
    flips from detected to missed, so the pair scores (2 - 1 - 0) / 2 = 0.5.
    Ids are mapped A=1, B=2, C=3, D=4.
    """
    a, b, c, d = (HALF_CONSISTENT_IDS[k] for k in "ABCD")
    return sequence_from_id_sets(
        gt_ids_per_frame=[{a, b, c}, {d, a, b}],
        detected_ids_per_frame=[{a, b}, {a}],
        name="half-consistent-pair",
    )


def write_scenario(seq: Sequence, out_dir: Path | str, emit_frames: bool = False) -> Path:
    """Write a scenario to disk in the standard sequence layout.

    With emit_frames, flat gray placeholder frames are written under the
    image directory so preprocessing pipelines have pixels to chew on.
    """
    out_dir = Path(out_dir)
    write_sequence(seq, out_dir)
    if emit_frames:
        frame_dir = out_dir / seq.meta.image_dir
        frame_dir.mkdir(parents=True, exist_ok=True)
        pixels = np.full(
            (seq.meta.image_height, seq.meta.image_width, 3),
            PLACEHOLDER_GRAY,
            dtype=np.uint8,
        )
        image = PILImage.fromarray(pixels, mode="RGB")
        for frame in seq.frames:
            image.save(frame_dir / f"{frame:06d}.png", format="PNG")
    return out_dir


@dataclass(frozen=True)
class ScenarioSpec:
    """Parsed form of a CLI scenario spec string."""

    kind: str
    n_frames: int
    ids: tuple[int, ...]
    model: MissModel | None  # None for the fixed worked example

    def build(self, seed: int) -> Sequence:
        if self.model is None:
            return half_consistent_pair()
        return generate_scenario(self.n_frames, self.ids, self.model, seed, name=self.kind)


_KIND_ALIASES = {
    "perfect": "perfect",
    "consistent": "consistent",
    "consistent_misser": "consistent",
    "alternating": "alternating",
    "alternating_misser": "alternating",
    "bernoulli": "bernoulli",
    "none": "none",
    "none_detected": "none",
    "half_consistent": "half_consistent",
}


def _parse_id_list(raw: str, label_map: dict[str, int]) -> tuple[int, ...]:
    out = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        if token.lstrip("-").isdigit():
            out.append(int(token))
        else:
            if token not in label_map:
                label_map[token] = len(label_map) + 1
            out.append(label_map[token])
    return tuple(out)


def parse_scenario_spec(spec: str) -> ScenarioSpec:
    """Parse specs like ``alternating:ids=A,B:frames=10``.

    Keys: ids (comma-separated labels or integers; labels map to 1, 2, ...
    in order of first appearance), frames (default 10), miss (consistent),
    miss_a / miss_b (alternating; default splits the id list in half), p
    (bernoulli miss probability).  The kind ``half_consistent`` takes no
    keys and yields the fixed two-frame worked example.
    """
    if not spec or not spec.strip():
        raise ValueError("empty scenario spec")
    head, *param_tokens = spec.strip().split(":")
    kind = _KIND_ALIASES.get(head.strip().lower())
    if kind is None:
        raise ValueError(
            f"unknown scenario kind {head!r}; expected one of {sorted(set(_KIND_ALIASES))}"
        )
    params: dict[str, str] = {}
    for token in param_tokens:
        name, eq, raw = token.partition("=")
        if not eq or not name.strip():
            raise ValueError(f"malformed scenario parameter {token!r}")
        params[name.strip().lower()] = raw.strip()

    if kind == "half_consistent":
        if params:
            raise ValueError("half_consistent takes no parameters")
        return ScenarioSpec(kind=kind, n_frames=2, ids=(1, 2, 3, 4), model=None)

    label_map: dict[str, int] = {}
    ids = _parse_id_list(params.pop("ids", ""), label_map)
    if not ids:
        raise ValueError(f"scenario spec {spec!r} needs ids=...")
    try:
        n_frames = int(params.pop("frames", "10"))
    except ValueError as exc:
        raise ValueError(f"bad frames value in {spec!r}") from exc

    model: MissModel
    if kind == "perfect":
        model = Perfect()
    elif kind == "none":
        model = NoneDetected()
    elif kind == "consistent":
        missed = _parse_id_list(params.pop("miss", ""), label_map)
        if not missed:
            raise ValueError("consistent scenario needs miss=...")
        model = ConsistentMisser(frozenset(missed))
    elif kind == "alternating":
        if "miss_a" in params or "miss_b" in params:
            odd = _parse_id_list(params.pop("miss_a", ""), label_map)
            even = _parse_id_list(params.pop("miss_b", ""), label_map)
        else:
            half = (len(ids) + 1) // 2
            odd, even = ids[:half], ids[half:]
        model = AlternatingMisser(frozenset(odd), frozenset(even))
    else:  # bernoulli
        try:
            p = float(params.pop("p"))
        except KeyError:
            raise ValueError("bernoulli scenario needs p=...") from None
        except ValueError as exc:
            raise ValueError("bad p value") from exc
        model = Bernoulli(p)

    if params:
        raise ValueError(f"unknown scenario parameters {sorted(params)}")
    return ScenarioSpec(kind=kind, n_frames=n_frames, ids=ids, model=model)
