"""MOT-style sequence ingestion: ground truth, detections, sequence metadata.

File formats (one object per comma-separated line):

* ground truth: ``frame,id,bb_left,bb_top,bb_width,bb_height,consider_flag,class,visibility``
* detections:   ``frame,-1,bb_left,bb_top,bb_width,bb_height,score[,...ignored]``

Lines with 7 fields are accepted for both layouts (ground truth then gets
class 1 / visibility 1.0 defaults); lines with 9 or more fields use fields
8 and 9 for class and visibility and ignore the rest.  8-field lines are
ambiguous between the two layouts and are rejected.

The metadata file (``seqinfo.ini``) is key-value text; section headers and
comments are ignored.  Required keys: name, seqLength, frameRate, imWidth,
imHeight, imDir.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError, IntegrityError, ParseError

SCORE_NORMALIZATIONS = ("identity", "minmax", "logistic")

SEQINFO_NAME = "seqinfo.ini"
GT_RELPATH = Path("gt") / "gt.txt"
DET_RELPATH = Path("det") / "det.txt"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates (real-valued, not rounded)."""

    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        for name in ("left", "top", "width", "height"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"box {name} must be finite, got {value!r}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"box sides must be positive, got {self.width}x{self.height}"
            )

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class GroundTruthEntry:
    """One annotated object in one frame, carrying its persistent object id."""

    frame: int
    object_id: int
    box: BoundingBox
    consider_flag: bool
    class_id: int
    visibility: float


@dataclass(frozen=True)
class Detection:
    """One predicted box with a confidence score in [0, 1] (after ingestion)."""

    frame: int
    box: BoundingBox
    confidence: float
    class_id: int = 1


@dataclass(frozen=True)
class SequenceMeta:
    name: str
    frame_count: int
    frame_rate: float
    image_width: int
    image_height: int
    image_dir: str

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be >= 1")


@dataclass(frozen=True)
class Sequence:
    """A loaded sequence: per-frame ground truth and detections for frames 1..N.

    Both mappings have exactly the keys 1..meta.frame_count; frames without
    annotations map to empty lists.  Instances are immutable after load and
    safe to share across threads.
    """

    meta: SequenceMeta
    ground_truth: dict[int, list[GroundTruthEntry]]
    detections: dict[int, list[Detection]]

    @classmethod
    def from_flat(
        cls,
        meta: SequenceMeta,
        ground_truth: list[GroundTruthEntry],
        detections: list[Detection],
    ) -> "Sequence":
        """Bucket flat entry lists by frame, validating frame indexes against meta."""
        gt_buckets: dict[int, list[GroundTruthEntry]] = {
            f: [] for f in range(1, meta.frame_count + 1)
        }
        det_buckets: dict[int, list[Detection]] = {
            f: [] for f in range(1, meta.frame_count + 1)
        }
        for entry in ground_truth:
            if entry.frame > meta.frame_count:
                raise IntegrityError(
                    f"ground-truth frame {entry.frame} beyond sequence "
                    f"length {meta.frame_count}"
                )
            gt_buckets[entry.frame].append(entry)
        for det in detections:
            if det.frame > meta.frame_count:
                raise IntegrityError(
                    f"detection frame {det.frame} beyond sequence "
                    f"length {meta.frame_count}"
                )
            det_buckets[det.frame].append(det)
        return cls(meta=meta, ground_truth=gt_buckets, detections=det_buckets)

    @property
    def frames(self) -> range:
        return range(1, self.meta.frame_count + 1)


def _read_lines(path: Path) -> list[tuple[int, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path)
    out = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line:
            out.append((number, line))
    return out


def parse_ground_truth(path: Path | str) -> list[GroundTruthEntry]:
    """Parse a ground-truth file into entries sorted by (frame, object_id).

    Entries with consider_flag = 0 are retained; filtering them out is the
    evaluator's job.  Duplicate (frame, object_id) pairs raise IntegrityError.
    """
    entries: list[GroundTruthEntry] = []
    seen: set[tuple[int, int]] = set()
    for line_number, line in _read_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 7:
            raise ParseError(
                f"expected at least 7 comma-separated fields, got {len(parts)}",
                path,
                line_number,
            )
        if len(parts) == 8:
            raise ParseError(
                "8-field lines are ambiguous (7, 9, or 10+ fields expected)",
                path,
                line_number,
            )
        try:
            frame = int(parts[0])
            object_id = int(parts[1])
            box = BoundingBox(
                float(parts[2]), float(parts[3]), float(parts[4]), float(parts[5])
            )
            consider_flag = int(parts[6]) != 0
            if len(parts) >= 9:
                class_id = int(parts[7])
                visibility = float(parts[8])
            else:
                class_id = 1
                visibility = 1.0
        except ValueError as exc:
            raise ParseError(str(exc), path, line_number) from exc
        if frame < 1:
            raise ParseError(f"frame index must be >= 1, got {frame}", path, line_number)
        if not (0.0 <= visibility <= 1.0):
            raise ParseError(
                f"visibility must be in [0, 1], got {visibility}", path, line_number
            )
        key = (frame, object_id)
        if key in seen:
            raise IntegrityError(
                f"{path}:{line_number}: duplicate (frame, object_id) = {key}"
            )
        seen.add(key)
        entries.append(
            GroundTruthEntry(frame, object_id, box, consider_flag, class_id, visibility)
        )
    entries.sort(key=lambda e: (e.frame, e.object_id))
    return entries


def _normalize_scores(scores: list[float], mode: str) -> list[float]:
    if mode == "identity":
        return [min(1.0, max(0.0, s)) for s in scores]
    if mode == "minmax":
        if not scores:
            return []
        lo, hi = min(scores), max(scores)
        if hi == lo:
            # constant scores carry no ranking information; park them mid-range
            return [0.5 for _ in scores]
        return [(s - lo) / (hi - lo) for s in scores]
    if mode == "logistic":
        out = []
        for s in scores:
            if s >= 0:
                out.append(1.0 / (1.0 + math.exp(-s)))
            else:
                e = math.exp(s)
                out.append(e / (1.0 + e))
        return out
    raise ValueError(
        f"unknown score normalization {mode!r}; expected one of {SCORE_NORMALIZATIONS}"
    )


def parse_detections(
    path: Path | str,
    score_normalization: str = "identity",
    class_id: int = 1,
) -> list[Detection]:
    """Parse a detection file; field 2 is ignored (conventionally -1).

    Raw scores are mapped into [0, 1] by the selected normalization mode
    (identity clamps; minmax rescales over the whole file; logistic applies
    a sigmoid).  Entries come back sorted by (frame, descending confidence).
    """
    if score_normalization not in SCORE_NORMALIZATIONS:
        raise ValueError(
            f"unknown score normalization {score_normalization!r}; "
            f"expected one of {SCORE_NORMALIZATIONS}"
        )
    rows: list[tuple[int, BoundingBox, float]] = []
    for line_number, line in _read_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 7:
            raise ParseError(
                f"expected at least 7 comma-separated fields, got {len(parts)}",
                path,
                line_number,
            )
        try:
            frame = int(parts[0])
            box = BoundingBox(
                float(parts[2]), float(parts[3]), float(parts[4]), float(parts[5])
            )
            score = float(parts[6])
        except ValueError as exc:
            raise ParseError(str(exc), path, line_number) from exc
        if frame < 1:
            raise ParseError(f"frame index must be >= 1, got {frame}", path, line_number)
        if not math.isfinite(score):
            raise ParseError(f"confidence must be finite, got {score}", path, line_number)
        rows.append((frame, box, score))
    confidences = _normalize_scores([score for _, _, score in rows], score_normalization)
    detections = [
        Detection(frame, box, confidence, class_id)
        for (frame, box, _), confidence in zip(rows, confidences)
    ]
    detections.sort(key=lambda d: (d.frame, -d.confidence))
    return detections


def parse_seqinfo(path: Path | str) -> SequenceMeta:
    """Parse a key-value metadata file (INI sections and comments are skipped)."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read metadata file {path}: {exc}") from exc
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(("[", "#", ";")):
            continue
        if "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    required = ("name", "seqLength", "frameRate", "imWidth", "imHeight", "imDir")
    missing = [k for k in required if k not in values]
    if missing:
        raise ConfigurationError(f"{path}: missing metadata keys {missing}")
    try:
        return SequenceMeta(
            name=values["name"],
            frame_count=int(values["seqLength"]),
            frame_rate=float(values["frameRate"]),
            image_width=int(values["imWidth"]),
            image_height=int(values["imHeight"]),
            image_dir=values["imDir"],
        )
    except ValueError as exc:
        raise ConfigurationError(f"{path}: invalid metadata value ({exc})") from exc


def load_sequence(
    root: Path | str,
    score_normalization: str = "identity",
    require_detections: bool = True,
) -> Sequence:
    """Load a sequence directory (seqinfo.ini, gt/gt.txt, det/det.txt).

    The detection file may be absent when require_detections is False, e.g.
    when the sequence is only being preprocessed.
    """
    root = Path(root)
    meta_path = root / SEQINFO_NAME
    if not meta_path.is_file():
        raise ConfigurationError(f"missing metadata file {meta_path}")
    meta = parse_seqinfo(meta_path)

    gt_path = root / GT_RELPATH
    if not gt_path.is_file():
        raise ConfigurationError(f"missing ground-truth file {gt_path}")
    ground_truth = parse_ground_truth(gt_path)

    det_path = root / DET_RELPATH
    if det_path.is_file():
        detections = parse_detections(det_path, score_normalization)
    elif require_detections:
        raise ConfigurationError(f"missing detection file {det_path}")
    else:
        detections = []

    return Sequence.from_flat(meta, ground_truth, detections)


def _format_number(x: float) -> str:
    # integers render without a decimal point; repr keeps exact round-trips
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def ground_truth_to_lines(entries: list[GroundTruthEntry]) -> list[str]:
    return [
        ",".join(
            [
                str(e.frame),
                str(e.object_id),
                _format_number(e.box.left),
                _format_number(e.box.top),
                _format_number(e.box.width),
                _format_number(e.box.height),
                str(int(e.consider_flag)),
                str(e.class_id),
                _format_number(e.visibility),
            ]
        )
        for e in entries
    ]


def detections_to_lines(detections: list[Detection]) -> list[str]:
    return [
        ",".join(
            [
                str(d.frame),
                "-1",
                _format_number(d.box.left),
                _format_number(d.box.top),
                _format_number(d.box.width),
                _format_number(d.box.height),
                _format_number(d.confidence),
            ]
        )
        for d in detections
    ]


def _write_lines(lines: list[str], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def write_ground_truth(entries: list[GroundTruthEntry], path: Path | str) -> None:
    _write_lines(ground_truth_to_lines(entries), Path(path))


def write_detections(detections: list[Detection], path: Path | str) -> None:
    _write_lines(detections_to_lines(detections), Path(path))


def write_seqinfo(meta: SequenceMeta, path: Path | str) -> None:
    lines = [
        "[Sequence]",
        f"name={meta.name}",
        f"imDir={meta.image_dir}",
        f"frameRate={_format_number(meta.frame_rate)}",
        f"seqLength={meta.frame_count}",
        f"imWidth={meta.image_width}",
        f"imHeight={meta.image_height}",
        "imExt=.png",
    ]
    _write_lines(lines, Path(path))


def write_sequence(seq: Sequence, root: Path | str) -> Path:
    """Write a sequence back out in the standard directory layout."""
    root = Path(root)
    write_seqinfo(seq.meta, root / SEQINFO_NAME)
    flat_gt = [e for f in seq.frames for e in seq.ground_truth[f]]
    flat_det = [d for f in seq.frames for d in seq.detections[f]]
    write_ground_truth(flat_gt, root / GT_RELPATH)
    write_detections(flat_det, root / DET_RELPATH)
    return root
