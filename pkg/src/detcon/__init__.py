"""Temporal consistency and accuracy metrics for object detectors on video."""

from .corrections import (
    CorrectionPipeline,
    GammaCorrection,
    GaussianDenoise,
    HorizontalFlip,
    UnsharpMask,
    WebpCompress,
    apply_pipeline,
    gamma_correction,
    gaussian_denoise,
    horizontal_flip,
    mirror_box,
    unsharp_mask,
    webp_compress,
)
from .errors import (
    CodecError,
    ComparisonError,
    ConfigurationError,
    ContractError,
    DetconError,
    IntegrityError,
    ParseError,
)
from .matching import (
    FrameMatchResult,
    GroundTruthFilter,
    MatchConfig,
    filter_by_confidence,
    iou,
    match_frame,
    match_sequence,
    nms,
)
from .metrics import (
    InconsistencySets,
    PairwiseConsistency,
    PRCurve,
    VideoConsistency,
    average_precision,
    inconsistency_sets,
    mean_average_precision,
    pairwise_consistency,
    video_consistency,
)
from .mot import (
    BoundingBox,
    Detection,
    GroundTruthEntry,
    Sequence,
    SequenceMeta,
    load_sequence,
    parse_detections,
    parse_ground_truth,
)
from .report import (
    ComparisonReport,
    EvalConfig,
    EvaluationReport,
    compare_runs,
    evaluate_roots,
    evaluate_sequence,
)
from .synth import (
    AlternatingMisser,
    Bernoulli,
    ConsistentMisser,
    NoneDetected,
    Perfect,
    generate_scenario,
    half_consistent_pair,
    inject_false_positives,
    sequence_from_id_sets,
    write_scenario,
)

__version__ = "0.1.0"
