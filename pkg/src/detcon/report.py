"""Sequence evaluation, report schema, and run-to-run comparison.

Reports store full-precision fractions; percentage rendering happens only
at display time so comparisons never accumulate rounding error.  JSON is
the canonical output format (schema_version marks the layout).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

from .corrections import mirror_box
from .errors import ComparisonError, ConfigurationError
from .matching import GroundTruthFilter, MatchConfig, match_sequence
from .metrics import (
    AP_INTERPOLATIONS,
    average_precision,
    consistency_from_matches,
    mean_average_precision,
)
from .mot import SCORE_NORMALIZATIONS, Sequence, load_sequence

SCHEMA_VERSION = 1

AGGREGATE_WEIGHTINGS = ("unweighted", "pair_weighted")


@dataclass(frozen=True)
class EvalConfig:
    """Everything needed to reproduce an evaluation run bit for bit."""

    iou_threshold: float = 0.5
    confidence_threshold: float = 0.7
    nms_iou_threshold: float = 0.5
    assignment_strategy: str = "greedy_by_confidence"
    score_normalization: str = "identity"
    gt_classes: tuple[int, ...] | None = (1,)
    gt_require_consider: bool = True
    gt_min_visibility: float = 0.0
    class_map: tuple[tuple[int, int], ...] | None = None
    ap_interpolation: str = "all_points"
    aggregate_weighting: str = "unweighted"
    mirror_detections: bool = False
    manifest_path: str | None = None
    manifest_digest: str | None = None

    def __post_init__(self):
        self.match_config()  # validates thresholds and strategy
        if self.score_normalization not in SCORE_NORMALIZATIONS:
            raise ValueError(
                f"score_normalization must be one of {SCORE_NORMALIZATIONS}, "
                f"got {self.score_normalization!r}"
            )
        if self.ap_interpolation not in AP_INTERPOLATIONS:
            raise ValueError(
                f"ap_interpolation must be one of {AP_INTERPOLATIONS}, "
                f"got {self.ap_interpolation!r}"
            )
        if self.aggregate_weighting not in AGGREGATE_WEIGHTINGS:
            raise ValueError(
                f"aggregate_weighting must be one of {AGGREGATE_WEIGHTINGS}, "
                f"got {self.aggregate_weighting!r}"
            )

    def match_config(self) -> MatchConfig:
        return MatchConfig(
            iou_threshold=self.iou_threshold,
            confidence_threshold=self.confidence_threshold,
            nms_iou_threshold=self.nms_iou_threshold,
            assignment_strategy=self.assignment_strategy,
            class_map=dict(self.class_map) if self.class_map else None,
        )

    def gt_filter(self) -> GroundTruthFilter:
        classes = frozenset(self.gt_classes) if self.gt_classes is not None else None
        return GroundTruthFilter(
            classes=classes,
            require_consider=self.gt_require_consider,
            min_visibility=self.gt_min_visibility,
        )

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "confidence_threshold": self.confidence_threshold,
            "nms_iou_threshold": self.nms_iou_threshold,
            "assignment_strategy": self.assignment_strategy,
            "score_normalization": self.score_normalization,
            "gt_classes": list(self.gt_classes) if self.gt_classes is not None else None,
            "gt_require_consider": self.gt_require_consider,
            "gt_min_visibility": self.gt_min_visibility,
            "class_map": (
                {str(k): v for k, v in self.class_map} if self.class_map else None
            ),
            "ap_interpolation": self.ap_interpolation,
            "aggregate_weighting": self.aggregate_weighting,
            "mirror_detections": self.mirror_detections,
            "manifest_path": self.manifest_path,
            "manifest_digest": self.manifest_digest,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalConfig":
        defaults = cls()
        gt_classes = data.get("gt_classes", list(defaults.gt_classes))
        class_map = data.get("class_map")
        return cls(
            iou_threshold=data.get("iou_threshold", defaults.iou_threshold),
            confidence_threshold=data.get(
                "confidence_threshold", defaults.confidence_threshold
            ),
            nms_iou_threshold=data.get("nms_iou_threshold", defaults.nms_iou_threshold),
            assignment_strategy=data.get(
                "assignment_strategy", defaults.assignment_strategy
            ),
            score_normalization=data.get(
                "score_normalization", defaults.score_normalization
            ),
            gt_classes=tuple(gt_classes) if gt_classes is not None else None,
            gt_require_consider=data.get(
                "gt_require_consider", defaults.gt_require_consider
            ),
            gt_min_visibility=data.get("gt_min_visibility", defaults.gt_min_visibility),
            class_map=(
                tuple(sorted((int(k), int(v)) for k, v in class_map.items()))
                if class_map
                else None
            ),
            ap_interpolation=data.get("ap_interpolation", defaults.ap_interpolation),
            aggregate_weighting=data.get(
                "aggregate_weighting", defaults.aggregate_weighting
            ),
            mirror_detections=data.get("mirror_detections", defaults.mirror_detections),
            manifest_path=data.get("manifest_path"),
            manifest_digest=data.get("manifest_digest"),
        )


_CONFIG_BOOL_KEYS = {"gt_require_consider", "mirror_detections"}
_CONFIG_FLOAT_KEYS = {
    "iou_threshold",
    "confidence_threshold",
    "nms_iou_threshold",
    "gt_min_visibility",
}
_CONFIG_STR_KEYS = {
    "assignment_strategy",
    "score_normalization",
    "ap_interpolation",
    "aggregate_weighting",
    "manifest_path",
}


def parse_config_text(text: str, base: EvalConfig | None = None) -> EvalConfig:
    """Apply ``key=value`` lines on top of a base config.

    Recognized keys are the EvalConfig field names; gt_classes takes a
    comma-separated list or "all"; class_map takes det:gt pairs such as
    ``class_map=1:1,2:1``.  '#' starts a comment.
    """
    config = base or EvalConfig()
    updates: dict = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key:
            raise ConfigurationError(f"config line {number}: expected key=value, got {raw!r}")
        try:
            if key in _CONFIG_FLOAT_KEYS:
                updates[key] = float(value)
            elif key in _CONFIG_BOOL_KEYS:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(f"expected boolean, got {value!r}")
                updates[key] = value.lower() in ("true", "1")
            elif key in _CONFIG_STR_KEYS:
                updates[key] = value
            elif key == "gt_classes":
                updates[key] = (
                    None
                    if value.lower() == "all"
                    else tuple(int(v) for v in value.split(",") if v.strip())
                )
            elif key == "class_map":
                pairs = []
                for token in value.split(","):
                    det, colon, gt = token.partition(":")
                    if not colon:
                        raise ValueError(f"expected det:gt pair, got {token!r}")
                    pairs.append((int(det), int(gt)))
                updates[key] = tuple(sorted(pairs))
            else:
                raise ValueError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigurationError(f"config line {number}: {exc}") from exc
    try:
        return replace(config, **updates)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def parse_config_file(path: Path | str, base: EvalConfig | None = None) -> EvalConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, base)


def file_digest(path: Path | str) -> str:
    """sha256 hex digest of a file's bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class EvaluationReport:
    """Per-sequence consistency and accuracy results plus the full config echo."""

    name: str
    frame_count: int
    consistency: float | None
    defined_pair_count: int
    skipped_pair_count: int
    map: float | None
    per_class_ap: dict[int, float | None]
    tp: int
    fp: int
    fn: int
    pooled_detections: int
    config: EvalConfig

    @property
    def recall(self) -> float | None:
        denom = self.tp + self.fn
        return self.tp / denom if denom else None

    @property
    def precision(self) -> float | None:
        denom = self.tp + self.fp
        return self.tp / denom if denom else None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "frame_count": self.frame_count,
            "consistency": self.consistency,
            "defined_pair_count": self.defined_pair_count,
            "skipped_pair_count": self.skipped_pair_count,
            "map": self.map,
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "pooled_detections": self.pooled_detections,
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationReport":
        return cls(
            name=data["name"],
            frame_count=data["frame_count"],
            consistency=data["consistency"],
            defined_pair_count=data["defined_pair_count"],
            skipped_pair_count=data["skipped_pair_count"],
            map=data["map"],
            per_class_ap={int(k): v for k, v in data["per_class_ap"].items()},
            tp=data["tp"],
            fp=data["fp"],
            fn=data["fn"],
            pooled_detections=data["pooled_detections"],
            config=EvalConfig.from_dict(data["config"]),
        )


def evaluate_sequence(seq: Sequence, config: EvalConfig | None = None) -> EvaluationReport:
    """Evaluate one sequence: video consistency, per-class AP/mAP, TP/FP/FN totals.

    Consistency and accuracy are computed from the same filtered, NMS'd,
    assigned detections, so both describe one detector configuration.
    """
    config = config or EvalConfig()
    if config.mirror_detections:
        width = seq.meta.image_width
        mirrored = {
            f: [replace(d, box=mirror_box(d.box, width)) for d in seq.detections[f]]
            for f in seq.frames
        }
        seq = Sequence(meta=seq.meta, ground_truth=seq.ground_truth, detections=mirrored)

    match_config = config.match_config()
    gt_filter = config.gt_filter()
    results = match_sequence(seq, match_config, gt_filter)
    video = consistency_from_matches(results)

    gt_count: Counter[int] = Counter()
    for f in seq.frames:
        for entry in gt_filter.eligible(seq.ground_truth[f]):
            gt_count[entry.class_id] += 1
    outcomes: dict[int, list[tuple[float, bool]]] = defaultdict(list)
    for result in results:
        for _, det in result.matched_detections:
            outcomes[match_config.detection_class(det)].append((det.confidence, True))
        for det in result.unmatched_detections:
            outcomes[match_config.detection_class(det)].append((det.confidence, False))

    classes = sorted(set(gt_count) | set(outcomes))
    per_class_ap: dict[int, float | None] = {}
    curves = []
    for cls_id in classes:
        curve = average_precision(
            outcomes.get(cls_id, []), gt_count.get(cls_id, 0), config.ap_interpolation
        )
        per_class_ap[cls_id] = curve.ap
        curves.append(curve)
    map_value = mean_average_precision(curves)

    return EvaluationReport(
        name=seq.meta.name,
        frame_count=seq.meta.frame_count,
        consistency=video.value,
        defined_pair_count=video.defined_pair_count,
        skipped_pair_count=video.skipped_pair_count,
        map=map_value,
        per_class_ap=per_class_ap,
        tp=sum(r.tp_count for r in results),
        fp=sum(r.fp_count for r in results),
        fn=sum(r.fn_count for r in results),
        pooled_detections=sum(r.tp_count + r.fp_count for r in results),
        config=config,
    )


def evaluate_roots(
    roots: list[Path | str], config: EvalConfig | None = None
) -> tuple[list[EvaluationReport], list[dict]]:
    """Evaluate several sequence directories; failures isolate per sequence."""
    config = config or EvalConfig()
    reports: list[EvaluationReport] = []
    failures: list[dict] = []
    for root in roots:
        try:
            seq = load_sequence(root, score_normalization=config.score_normalization)
            reports.append(evaluate_sequence(seq, config))
        except Exception as exc:
            failures.append(
                {
                    "root": str(root),
                    "error_type": type(exc).__name__,
                    "error": str(exc),
                }
            )
    reports.sort(key=lambda r: r.name)
    failures.sort(key=lambda f: f["root"])
    return reports, failures


def _mean(values: list[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def aggregate_reports(
    reports: list[EvaluationReport], weighting: str = "unweighted"
) -> dict:
    """Cross-sequence aggregate; the weighting flag affects consistency only
    (pair_weighted weights each sequence by its defined pair count)."""
    if weighting not in AGGREGATE_WEIGHTINGS:
        raise ValueError(f"weighting must be one of {AGGREGATE_WEIGHTINGS}")
    consistent = [(r.consistency, r.defined_pair_count) for r in reports if r.consistency is not None]
    if not consistent:
        consistency = None
    elif weighting == "pair_weighted":
        total = sum(pairs for _, pairs in consistent)
        consistency = (
            math.fsum(value * pairs for value, pairs in consistent) / total
            if total
            else None
        )
    else:
        consistency = _mean([value for value, _ in consistent])
    return {
        "consistency": consistency,
        "map": _mean([r.map for r in reports if r.map is not None]),
        "sequence_count": len(reports),
        "defined_consistency_count": len(consistent),
        "defined_map_count": sum(1 for r in reports if r.map is not None),
    }


def run_to_dict(
    reports: list[EvaluationReport],
    failures: list[dict],
    config: EvalConfig,
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "evaluation",
        "config": config.to_dict(),
        "sequences": [r.to_dict() for r in reports],
        "failures": failures,
        "aggregate": aggregate_reports(reports, config.aggregate_weighting),
    }


def load_run(path: Path | str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"report {path} is not valid JSON: {exc}") from exc
    if data.get("kind") != "evaluation":
        raise ConfigurationError(f"report {path} is not an evaluation report")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(
            f"report {path} has schema_version {data.get('schema_version')}, "
            f"expected {SCHEMA_VERSION}"
        )
    return data


# config keys allowed to differ between compared runs: the correction
# manifest identity and the flip protocol that rides along with it
_COMPARE_IGNORED_KEYS = {"manifest_path", "manifest_digest", "mirror_detections"}


@dataclass(frozen=True)
class ComparisonReport:
    """Treatment-minus-baseline deltas in percentage points."""

    baseline: dict
    treatment: dict
    rows: tuple[dict, ...]
    delta_consistency_pp: float | None
    delta_map_pp: float | None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "comparison",
            "baseline": self.baseline,
            "treatment": self.treatment,
            "rows": list(self.rows),
            "delta_consistency_pp": self.delta_consistency_pp,
            "delta_map_pp": self.delta_map_pp,
        }


def _delta_pp(baseline: float | None, treatment: float | None) -> float | None:
    if baseline is None or treatment is None:
        return None
    return (treatment - baseline) * 100.0


def compare_runs(baseline: dict, treatment: dict) -> ComparisonReport:
    """Compare two evaluation runs sequence by sequence.

    Both runs must cover the same sequence set with the same config except
    the correction manifest (and its flip protocol); anything else raises
    ComparisonError listing the difference.
    """
    base_names = {s["name"] for s in baseline["sequences"]}
    treat_names = {s["name"] for s in treatment["sequences"]}
    if base_names != treat_names:
        raise ComparisonError(
            "sequence sets differ: "
            f"only in baseline {sorted(base_names - treat_names)}, "
            f"only in treatment {sorted(treat_names - base_names)}"
        )
    base_config = dict(baseline["config"])
    treat_config = dict(treatment["config"])
    differing = [
        key
        for key in sorted(set(base_config) | set(treat_config))
        if key not in _COMPARE_IGNORED_KEYS
        and base_config.get(key) != treat_config.get(key)
    ]
    if differing:
        raise ComparisonError(f"configs differ on keys {differing}")

    base_by_name = {s["name"]: s for s in baseline["sequences"]}
    treat_by_name = {s["name"]: s for s in treatment["sequences"]}
    rows = []
    for name in sorted(base_names):
        b, t = base_by_name[name], treat_by_name[name]
        rows.append(
            {
                "name": name,
                "baseline_consistency": b["consistency"],
                "treatment_consistency": t["consistency"],
                "delta_consistency_pp": _delta_pp(b["consistency"], t["consistency"]),
                "baseline_map": b["map"],
                "treatment_map": t["map"],
                "delta_map_pp": _delta_pp(b["map"], t["map"]),
            }
        )
    return ComparisonReport(
        baseline=baseline,
        treatment=treatment,
        rows=tuple(rows),
        delta_consistency_pp=_delta_pp(
            baseline["aggregate"]["consistency"], treatment["aggregate"]["consistency"]
        ),
        delta_map_pp=_delta_pp(
            baseline["aggregate"]["map"], treatment["aggregate"]["map"]
        ),
    )


def write_comparison_csv(comparison: ComparisonReport, path: Path | str) -> None:
    """Flat grid of per-sequence values and deltas, plus an AVERAGE row."""
    import csv

    columns = [
        "sequence",
        "baseline_consistency",
        "treatment_consistency",
        "delta_consistency_pp",
        "baseline_map",
        "treatment_map",
        "delta_map_pp",
    ]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in comparison.rows:
            writer.writerow(
                [
                    row["name"],
                    row["baseline_consistency"],
                    row["treatment_consistency"],
                    row["delta_consistency_pp"],
                    row["baseline_map"],
                    row["treatment_map"],
                    row["delta_map_pp"],
                ]
            )
        writer.writerow(
            [
                "AVERAGE",
                comparison.baseline["aggregate"]["consistency"],
                comparison.treatment["aggregate"]["consistency"],
                comparison.delta_consistency_pp,
                comparison.baseline["aggregate"]["map"],
                comparison.treatment["aggregate"]["map"],
                comparison.delta_map_pp,
            ]
        )


def _percent(value: float | None) -> str:
    return "n/a" if value is None else f"{value * 100.0:.1f}%"


def _pp(value: float | None) -> str:
    return "n/a" if value is None else f"{value:+.1f}pp"


def render_run_table(run: dict) -> str:
    """One line per sequence plus the aggregate, one-decimal percentages."""
    lines = [
        f"{'sequence':<24} {'consistency':>12} {'mAP':>8} {'pairs':>7} "
        f"{'skipped':>8} {'TP':>6} {'FP':>6} {'FN':>6}"
    ]
    for s in run["sequences"]:
        lines.append(
            f"{s['name']:<24} {_percent(s['consistency']):>12} {_percent(s['map']):>8} "
            f"{s['defined_pair_count']:>7} {s['skipped_pair_count']:>8} "
            f"{s['tp']:>6} {s['fp']:>6} {s['fn']:>6}"
        )
    agg = run["aggregate"]
    lines.append(
        f"{'AVERAGE':<24} {_percent(agg['consistency']):>12} {_percent(agg['map']):>8}"
    )
    for failure in run.get("failures", []):
        lines.append(
            f"FAILED {failure['root']}: {failure['error_type']}: {failure['error']}"
        )
    return "\n".join(lines)


def render_comparison_table(comparison: ComparisonReport) -> str:
    lines = [
        f"{'sequence':<24} {'base cons':>10} {'treat cons':>11} {'d_cons':>8} "
        f"{'base mAP':>9} {'treat mAP':>10} {'d_mAP':>8}"
    ]
    for row in comparison.rows:
        lines.append(
            f"{row['name']:<24} {_percent(row['baseline_consistency']):>10} "
            f"{_percent(row['treatment_consistency']):>11} "
            f"{_pp(row['delta_consistency_pp']):>8} "
            f"{_percent(row['baseline_map']):>9} {_percent(row['treatment_map']):>10} "
            f"{_pp(row['delta_map_pp']):>8}"
        )
    lines.append(
        f"{'AVERAGE':<24} "
        f"{_percent(comparison.baseline['aggregate']['consistency']):>10} "
        f"{_percent(comparison.treatment['aggregate']['consistency']):>11} "
        f"{_pp(comparison.delta_consistency_pp):>8} "
        f"{_percent(comparison.baseline['aggregate']['map']):>9} "
        f"{_percent(comparison.treatment['aggregate']['map']):>10} "
        f"{_pp(comparison.delta_map_pp):>8}"
    )
    return "\n".join(lines)
