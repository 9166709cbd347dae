"""Command-line interface: ``gait <subcommand> ...``."""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .boxplot import fmt
from .cohort_stats import ANGLE, TIME_DISTANCE
from .dtw import mean_dtw_control, mean_dtw_patient
from .errors import GaitError
from .gait_cycle import DEFAULT_THRESHOLD, ankle_speed, detect_gait_events
from .kinematics import analyze_trial
from .pipeline import (
    EXIT_FATAL, EXIT_OK, EXIT_PARTIAL, PipelineConfig, analyze_cohort, run_pipeline,
    stats_table, subject_table,
)
from .reference import bundled_path, compare_stats, format_report, internal_consistency, load_reference
from .skeletal_io import (
    EXCLUDE_SEVERITY, SPEED_BOUND, LEG_JOINTS, interpolate_gaps, load_manifest, load_trial,
)
from .synthesis import synthesize_cohort

log = logging.getLogger("msgait")


def _reference(value):
    if value is None:
        return None
    return bundled_path() if value == "bundled" else Path(value)


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--manifest", type=Path, help="cohort manifest (JSON)")
    p.add_argument("--out", type=Path, help="output directory or file")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="stationary speed as a fraction of the trial maximum (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed for synthesis (default %(default)s)")
    p.add_argument("--speed-bound", type=float, default=SPEED_BOUND, help="artifact speed bound in m/s")
    p.add_argument("--exclude-above", type=float, default=EXCLUDE_SEVERITY,
                   help="exclude trials whose artifact severity exceeds this fraction")
    p.add_argument("--workers", type=int, default=1, help="threads for per-trial processing")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="gait", description="Gait indices from skeletal joint recordings.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", parents=[common], help="detect gait events in one trial")
    p.add_argument("trial", type=Path)
    p.add_argument("--leg", choices=("left", "right", "both"), default="both")

    p = sub.add_parser("indices", parents=[common], help="gait indices of a trial or a cohort")
    p.add_argument("trial", type=Path, nargs="?")
    p.add_argument("--subject", help="manifest subject id supplying height")
    p.add_argument("--cohort", type=Path, help="manifest; emit one CSV row per subject")

    p = sub.add_parser("dtw", parents=[common], help="mean DTW distance of one subject")
    who = p.add_mutually_exclusive_group(required=True)
    who.add_argument("--patient")
    who.add_argument("--control")
    p.add_argument("--joint", choices=("knee", "hip"), default="knee")
    p.add_argument("--dump-matrix", type=Path, help="write the per-leg distance matrices as CSV")

    p = sub.add_parser("cohort", parents=[common], help="statistics tables for a cohort")
    p.add_argument("cohort_manifest", type=Path, nargs="?")
    p.add_argument("--reference", help="reference table CSV, or 'bundled' for the packaged one")

    p = sub.add_parser("report", parents=[common], help="full pipeline: tables, plots and reports")
    p.add_argument("--reference", help="reference table CSV, or 'bundled' for the packaged one")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic cohort")
    p.add_argument("--patients", type=int, default=10)
    p.add_argument("--controls", type=int, default=10)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.002, help="position noise SD in m")
    p.add_argument("--trial-sd", type=float, default=0.02, help="relative trial-to-trial jitter")
    p.add_argument("--fps", type=float, default=30.0)
    return parser


def _config(args, manifest, reference=None):
    return PipelineConfig(
        manifest=manifest, out=args.out or Path("."), threshold=args.threshold,
        speed_bound=args.speed_bound, exclude_above=args.exclude_above,
        reference=reference, workers=args.workers,
    )


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="")


def cmd_segment(args):
    rec = interpolate_gaps(load_trial(args.trial, args.trial.stem, 1))
    legs = LEG_JOINTS if args.leg == "both" else (args.leg,)
    doc, code = {}, EXIT_OK
    for leg in legs:
        try:
            ev = detect_gait_events(ankle_speed(rec, leg), rec.t, args.threshold, leg)
            doc[leg] = ev.to_dict()
        except GaitError as exc:
            doc[leg] = {"error": f"{type(exc).__name__}: {exc}"}
            code = EXIT_PARTIAL
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return code if len(doc) > sum("error" in v for v in doc.values()) else EXIT_FATAL


def cmd_indices(args):
    if args.cohort is not None:
        result = analyze_cohort(load_manifest(args.cohort), _config(args, args.cohort))
        text = subject_table(result, "patient") + subject_table(result, "control").split("\n", 1)[1]
        _emit(text, args.out)
        return EXIT_PARTIAL if result.failures else EXIT_OK
    if args.trial is None or args.subject is None or args.manifest is None:
        raise SystemExit("indices needs TRIAL with --subject and --manifest, or --cohort")
    subject = load_manifest(args.manifest).subject(args.subject)
    rec = interpolate_gaps(load_trial(args.trial, subject.subject_id, 1))
    analysis = analyze_trial(rec, subject, args.threshold)
    doc = {k: (None if v is None else float(fmt(v))) for k, v in analysis.indices.as_dict().items()}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_dtw(args):
    if args.manifest is None:
        raise SystemExit("dtw needs --manifest")
    manifest = load_manifest(args.manifest)
    result = analyze_cohort(manifest, _config(args, args.manifest))
    series, numbers = {}, {}
    for s in manifest.subjects:
        outs = result.usable(s.subject_id)
        numbers[s.subject_id] = [o.trial_no for o in outs]
        series[s.subject_id] = [{leg: o.analysis.angles.get((args.joint, leg)) for leg in LEG_JOINTS} for o in outs]
    controls = {s.subject_id: series[s.subject_id] for s in manifest.controls if series[s.subject_id]}
    sid = args.patient or args.control
    if args.patient:
        res = mean_dtw_patient(series[sid], controls)
    else:
        res = mean_dtw_control(sid, controls)
    sys.stdout.write(f"{fmt(res.value)}\n")
    if args.dump_matrix is not None:
        lines = ["leg,trial,reference_subject,reference_trial,distance"]
        for leg in LEG_JOINTS:
            for r, j in enumerate(res.trial_index[leg]):
                for c, (rsid, rj) in enumerate(res.references[leg]):
                    lines.append(
                        f"{leg},{numbers[sid][j]},{rsid},{numbers[rsid][rj]},{fmt(res.distances[leg][r, c])}"
                    )
        _emit("\n".join(lines) + "\n", args.dump_matrix)
    return EXIT_OK


def cmd_cohort(args):
    manifest_path = args.cohort_manifest or args.manifest
    if manifest_path is None:
        raise SystemExit("cohort needs a manifest")
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    result = analyze_cohort(load_manifest(manifest_path), _config(args, manifest_path))
    (out / "stats_time_distance.csv").write_text(stats_table(result.stats, TIME_DISTANCE), encoding="utf-8")
    (out / "stats_angle.csv").write_text(stats_table(result.stats, ANGLE), encoding="utf-8")
    disc = []
    ref_path = _reference(args.reference)
    if ref_path is not None:
        ref = load_reference(ref_path)
        disc = internal_consistency(ref) + compare_stats(result.stats, ref)
    (out / "discrepancies.txt").write_text(format_report(disc), encoding="utf-8")
    return EXIT_PARTIAL if result.failures else EXIT_OK


def cmd_report(args):
    if args.manifest is None or args.out is None:
        raise SystemExit("report needs --manifest and --out")
    res = run_pipeline(_config(args, args.manifest, _reference(args.reference)))
    if res.message:
        log.error(res.message)
    return res.exit_code


def cmd_synth(args):
    if args.out is None:
        raise SystemExit("synth needs --out")
    synthesize_cohort(
        args.out, n_p=args.patients, n_c=args.controls, m=args.trials, noise_sd=args.noise,
        trial_sd=args.trial_sd, seed=args.seed, fps=args.fps,
    )
    sys.stdout.write(f"{args.out / 'manifest.json'}\n")
    return EXIT_OK


COMMANDS = {
    "segment": cmd_segment, "indices": cmd_indices, "dtw": cmd_dtw,
    "cohort": cmd_cohort, "report": cmd_report, "synth": cmd_synth,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (GaitError, OSError, KeyError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
