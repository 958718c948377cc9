"""Command-line interface: eval, preprocess, compare, synth.

Exit codes: 0 success, 2 usage error, 3 parse error, 4 integrity error,
5 configuration error, 6 partial failure (some inputs failed), 7 comparison
error, 8 codec error.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import click

from .corrections import CorrectionPipeline, apply_pipeline
from .errors import (
    CodecError,
    ComparisonError,
    ConfigurationError,
    DetconError,
    IntegrityError,
    ParseError,
)
from .matching import ASSIGNMENT_STRATEGIES
from .metrics import AP_INTERPOLATIONS
from .mot import SCORE_NORMALIZATIONS
from .report import (
    EvalConfig,
    compare_runs,
    evaluate_roots,
    file_digest,
    load_run,
    parse_config_file,
    render_comparison_table,
    render_run_table,
    run_to_dict,
    write_comparison_csv,
)
from .synth import parse_scenario_spec, write_scenario

EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INTEGRITY = 4
EXIT_CONFIGURATION = 5
EXIT_PARTIAL = 6
EXIT_COMPARISON = 7
EXIT_CODEC = 8

_ERROR_CODES = (
    (ParseError, EXIT_PARSE),
    (IntegrityError, EXIT_INTEGRITY),
    (ConfigurationError, EXIT_CONFIGURATION),
    (ComparisonError, EXIT_COMPARISON),
    (CodecError, EXIT_CODEC),
)

_TYPE_CODES = {
    "ParseError": EXIT_PARSE,
    "IntegrityError": EXIT_INTEGRITY,
    "ConfigurationError": EXIT_CONFIGURATION,
    "CodecError": EXIT_CODEC,
}


def _fail(exc: Exception) -> "SystemExit":
    click.echo(f"error: {exc}", err=True)
    for cls, code in _ERROR_CODES:
        if isinstance(exc, cls):
            return SystemExit(code)
    if isinstance(exc, DetconError):
        return SystemExit(EXIT_CONFIGURATION)
    return SystemExit(EXIT_USAGE)


@click.group()
def main():
    """Measure object-detector consistency and accuracy on video sequences.

    Sequences use the MOT directory layout (seqinfo.ini, gt/gt.txt,
    det/det.txt); detections are consumed from files, no model inference
    happens here.
    """


@main.command("eval")
@click.argument("roots", nargs=-1, required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--iou", type=float, default=None, help="IoU threshold for a detection to match a ground-truth box.")
@click.option("--conf", type=float, default=None, help="Confidence threshold applied before matching.")
@click.option("--nms-iou", type=float, default=None, help="IoU threshold for non-maximum suppression.")
@click.option("--normalization", type=click.Choice(SCORE_NORMALIZATIONS), default=None, help="Detection score normalization mode.")
@click.option("--assignment", type=click.Choice(ASSIGNMENT_STRATEGIES), default=None, help="Detection-to-ground-truth assignment strategy.")
@click.option("--ap-interpolation", type=click.Choice(AP_INTERPOLATIONS), default=None, help="AP integration method.")
@click.option("--gt-classes", default=None, help="Comma-separated ground-truth class ids to keep, or 'all'.")
@click.option("--min-visibility", type=float, default=None, help="Minimum ground-truth visibility to keep (0 keeps all).")
@click.option("--include-ignored", is_flag=True, help="Keep ground truth rows whose consider flag is 0.")
@click.option("--weighted-aggregate", is_flag=True, help="Weight the cross-sequence consistency mean by defined pair counts.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), envvar="DETCON_CONFIG", default=None, help="key=value config file (DETCON_CONFIG sets the default path).")
@click.option("--from-report", "from_report", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="Reuse the config echoed in a previous report.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None, help="Preprocessing manifest of the frames these detections were produced on.")
@click.option("--no-mirror-back", is_flag=True, help="Do not mirror detection boxes even when the manifest says frames were flipped.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the JSON report here.")
def cmd_eval(
    roots,
    iou,
    conf,
    nms_iou,
    normalization,
    assignment,
    ap_interpolation,
    gt_classes,
    min_visibility,
    include_ignored,
    weighted_aggregate,
    config_path,
    from_report,
    manifest_path,
    no_mirror_back,
    out_path,
):
    """Evaluate sequences and report consistency, mAP, and match totals."""
    try:
        config = EvalConfig()
        if config_path is not None:
            config = parse_config_file(config_path, config)
        if from_report is not None:
            # the echo already carries manifest path/digest and flip protocol
            config = EvalConfig.from_dict(load_run(from_report)["config"])
        overrides = {}
        if iou is not None:
            overrides["iou_threshold"] = iou
        if conf is not None:
            overrides["confidence_threshold"] = conf
        if nms_iou is not None:
            overrides["nms_iou_threshold"] = nms_iou
        if normalization is not None:
            overrides["score_normalization"] = normalization
        if assignment is not None:
            overrides["assignment_strategy"] = assignment
        if ap_interpolation is not None:
            overrides["ap_interpolation"] = ap_interpolation
        if gt_classes is not None:
            overrides["gt_classes"] = (
                None
                if gt_classes.lower() == "all"
                else tuple(int(v) for v in gt_classes.split(",") if v.strip())
            )
        if min_visibility is not None:
            overrides["gt_min_visibility"] = min_visibility
        if include_ignored:
            overrides["gt_require_consider"] = False
        if weighted_aggregate:
            overrides["aggregate_weighting"] = "pair_weighted"
        if manifest_path is not None:
            manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
            overrides["manifest_path"] = str(manifest_path)
            overrides["manifest_digest"] = file_digest(manifest_path)
            overrides["mirror_detections"] = (
                bool(manifest.get("mirror_boxes")) and not no_mirror_back
            )
        try:
            config = replace(config, **overrides)
        except ValueError as exc:
            raise click.UsageError(str(exc))

        reports, failures = evaluate_roots(list(roots), config)
        run = run_to_dict(reports, failures, config)
        click.echo(render_run_table(run))
        if out_path is not None:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(json.dumps(run, indent=2) + "\n", encoding="utf-8")
            click.echo(f"report written to {out_path}")
        if failures:
            # a lone failed sequence surfaces its own error class; mixed or
            # multiple failures report as a partial-failure run
            if not reports and len(failures) == 1:
                code = _TYPE_CODES.get(failures[0]["error_type"], EXIT_PARTIAL)
                raise SystemExit(code)
            raise SystemExit(EXIT_PARTIAL)
    except (click.ClickException, SystemExit):
        raise
    except Exception as exc:
        raise _fail(exc)


@main.command("preprocess")
@click.argument("frames_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--pipeline", "pipeline_spec", required=True, help="Stage spec, e.g. 'wc:quality=30,um:sigma=1.0:amount=1.0'.")
@click.option("--overwrite", is_flag=True, help="Replace existing output files.")
@click.option("--workers", type=int, default=1, show_default=True, help="Parallel frame workers (results are identical for any count).")
def cmd_preprocess(frames_dir, out_dir, pipeline_spec, overwrite, workers):
    """Apply a correction pipeline to every frame in a directory."""
    try:
        try:
            pipeline = CorrectionPipeline.parse(pipeline_spec)
        except ValueError as exc:
            raise click.UsageError(str(exc))
        manifest = apply_pipeline(
            frames_dir, pipeline, out_dir, overwrite=overwrite, workers=workers
        )
        click.echo(f"{len(manifest['files'])} frames written to {out_dir}")
        click.echo(f"manifest: {Path(out_dir) / 'manifest.json'}")
        if manifest["errors"]:
            for failure in manifest["errors"]:
                click.echo(f"FAILED {failure['input']}: {failure['error']}", err=True)
            raise SystemExit(EXIT_PARTIAL)
    except (click.ClickException, SystemExit):
        raise
    except Exception as exc:
        raise _fail(exc)


@main.command("compare")
@click.argument("baseline", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("treatment", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the JSON comparison here.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write the comparison grid as CSV.")
def cmd_compare(baseline, treatment, out_path, csv_path):
    """Compare two evaluation reports as percentage-point deltas."""
    try:
        comparison = compare_runs(load_run(baseline), load_run(treatment))
        click.echo(render_comparison_table(comparison))
        if out_path is not None:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            out_path.write_text(
                json.dumps(comparison.to_dict(), indent=2) + "\n", encoding="utf-8"
            )
            click.echo(f"comparison written to {out_path}")
        if csv_path is not None:
            write_comparison_csv(comparison, csv_path)
            click.echo(f"csv written to {csv_path}")
    except (click.ClickException, SystemExit):
        raise
    except Exception as exc:
        raise _fail(exc)


@main.command("synth")
@click.argument("spec")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed for stochastic miss models.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path), help="Directory to write the sequence into.")
@click.option("--frames", "emit_frames", is_flag=True, help="Also write flat placeholder frame images.")
def cmd_synth(spec, seed, out_dir, emit_frames):
    """Generate a synthetic sequence from a scenario spec.

    Examples: 'perfect:ids=A,B:frames=10', 'alternating:ids=A,B:frames=10',
    'consistent:ids=A,B:miss=B', 'bernoulli:p=0.3:ids=A,B', 'none:ids=A,B',
    'half_consistent'.
    """
    try:
        try:
            scenario = parse_scenario_spec(spec)
        except ValueError as exc:
            raise click.UsageError(str(exc))
        seq = scenario.build(seed)
        write_scenario(seq, out_dir, emit_frames=emit_frames)
        click.echo(
            f"wrote {seq.meta.name}: {seq.meta.frame_count} frames, "
            f"{sum(len(seq.ground_truth[f]) for f in seq.frames)} ground-truth rows, "
            f"{sum(len(seq.detections[f]) for f in seq.frames)} detections -> {out_dir}"
        )
    except (click.ClickException, SystemExit):
        raise
    except Exception as exc:
        raise _fail(exc)


if __name__ == "__main__":
    main()
