"""End-to-end cohort analysis: trials in, tables, plots and reports out."""
import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxplot import emit_boxplot, fmt
from .cohort_stats import ANGLE, TIME_DISTANCE, CellError, CohortStats, stats_tables
from .dtw import LEGS, cohort_mean_dtw
from .errors import GaitError, ManifestError
from .gait_cycle import DEFAULT_THRESHOLD
from .kinematics import TABLE_ORDER, analyze_trial, mean_index_set
from .reference import compare_stats, format_report, internal_consistency, load_reference
from .skeletal_io import EXCLUDE_SEVERITY, SPEED_BOUND, detect_artifacts, interpolate_gaps, load_manifest, load_trial

log = logging.getLogger(__name__)

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2

UNITS = {
    "v_n": "1/s", "l_n": "", "s": "", "w": "m",
    "rom_knee": "deg", "rom_hip": "deg", "d_k": "deg", "d_h": "deg",
}
GROUP_LABELS = {"patient": "MS", "control": "Control"}


@dataclass
class PipelineConfig:
    manifest: Path
    out: Path
    threshold: float = DEFAULT_THRESHOLD
    speed_bound: float = SPEED_BOUND
    exclude_above: float = EXCLUDE_SEVERITY
    max_gap: int = 3
    reference: Path = None
    workers: int = 1

    def validate(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if not self.speed_bound > 0:
            raise ValueError("speed_bound must be positive")
        if not 0 <= self.exclude_above <= 1:
            raise ValueError("exclude_above must lie in [0, 1]")
        if self.max_gap < 0:
            raise ValueError("max_gap must be non-negative")
        if not Path(self.manifest).is_file():
            raise ManifestError(f"manifest not found: {self.manifest}")
        if self.reference is not None and not Path(self.reference).is_file():
            raise ValueError(f"reference table not found: {self.reference}")


@dataclass
class TrialOutcome:
    subject_id: str
    trial_no: int
    analysis: object = None  # TrialAnalysis
    stage: str = None  # failing stage
    error: Exception = None
    artifacts: object = None


@dataclass
class CohortResult:
    """In-memory results of :func:`analyze_cohort`."""

    manifest: object
    outcomes: list  # TrialOutcome in (subject, trial) order
    subject_values: dict  # sid -> GaitIndexSet
    trial_values: dict  # sid -> [GaitIndexSet]
    dtw: dict  # joint -> (patients, controls) from cohort_mean_dtw
    stats: CohortStats
    failures: list = field(default_factory=list)

    def usable(self, sid):
        return [o for o in self.outcomes if o.subject_id == sid and o.analysis is not None]


def process_trial(path, subject, trial_no, config):
    """Load, clean, screen and analyse one trial; failures are captured, not raised."""
    sid = subject.subject_id
    out = TrialOutcome(sid, trial_no)
    stage = "load"
    try:
        rec = load_trial(path, sid, trial_no)
        stage = "gaps"
        rec = interpolate_gaps(rec, config.max_gap)
        stage = "artifacts"
        out.artifacts = detect_artifacts(rec, config.speed_bound, config.exclude_above)
        if out.artifacts.recommendation == "exclude":
            raise GaitError(f"artifact severity {out.artifacts.severity:.3f} above {config.exclude_above}")
        stage = "segment"
        out.analysis = analyze_trial(rec, subject, config.threshold)
    except (GaitError, OSError, ValueError) as exc:
        out.stage, out.error = stage, exc
    return out


def _angle_trials(outcomes, joint):
    return [{leg: o.analysis.angles.get((joint, leg)) for leg in LEGS} for o in outcomes]


def analyze_cohort(manifest, config):
    """Run every trial of ``manifest`` and compute indices, DTW and statistics."""
    jobs = [
        (manifest.root / path, s, trial_no)
        for s in manifest.subjects
        for trial_no, path in sorted(manifest.trials.get(s.subject_id, []), key=lambda t: t[0])
    ]
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            # map preserves submission order, which keeps the merge deterministic
            outcomes = list(pool.map(lambda j: process_trial(*j, config), jobs))
    else:
        outcomes = [process_trial(*j, config) for j in jobs]

    by_subject = {}
    for o in outcomes:
        if o.analysis is not None:
            by_subject.setdefault(o.subject_id, []).append(o)
    groups = {s.subject_id: s.group for s in manifest.subjects}

    dtw = {}
    for joint in ("knee", "hip"):
        pats = {sid: _angle_trials(v, joint) for sid, v in by_subject.items() if groups[sid] == "patient"}
        cons = {sid: _angle_trials(v, joint) for sid, v in by_subject.items() if groups[sid] == "control"}
        dtw[joint] = cohort_mean_dtw(pats, cons) if cons else ({}, {})

    subject_values, trial_values = {}, {}
    failures = [o for o in outcomes if o.error is not None]
    for sid, outs in by_subject.items():
        res = {}
        for joint, key in (("knee", "d_k"), ("hip", "d_h")):
            p, c = dtw[joint]
            r = (p if groups[sid] == "patient" else c).get(sid)
            res[key] = r if r is not None else CellError("MissingDtw")
        trials = []
        for j, o in enumerate(outs):
            d = {k: (None if isinstance(r, Exception) or isinstance(r, CellError) else float(r.per_trial[j]))
                 for k, r in res.items()}
            d = {k: (None if v is not None and not np.isfinite(v) else v) for k, v in d.items()}
            trials.append(o.analysis.indices.with_dtw(**d))
        trial_values[sid] = trials
        subj = {k: (None if isinstance(r, (Exception, CellError)) else r.value) for k, r in res.items()}
        subject_values[sid] = mean_index_set(t.with_dtw() for t in trials).with_dtw(**subj)

    stats = stats_tables(manifest.subjects, subject_values, trial_values)
    return CohortResult(manifest, outcomes, subject_values, trial_values, dtw, stats, failures)


# -- writers -----------------------------------------------------------------------------


def _num(v):
    if v is None:
        return ""
    if isinstance(v, (CellError, Exception)):
        return str(v) if isinstance(v, CellError) else f"error:{type(v).__name__}"
    return fmt(float(v))


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def segments_json(result):
    doc = {}
    for o in result.outcomes:
        entry = {}
        if o.analysis is None:
            entry["error"] = f"{o.stage}: {type(o.error).__name__}: {o.error}"
        else:
            for leg in LEGS:
                cyc = o.analysis.cycles.get(leg)
                entry[leg] = None if cyc is None else {k: float(fmt(v)) for k, v in cyc.ref_events.to_dict().items()}
        doc.setdefault(o.subject_id, {})[str(o.trial_no)] = entry
    return json.dumps(doc, indent=2) + "\n"


def subject_table(result, group):
    rows = []
    for s in result.manifest.subjects:
        if s.group != group:
            continue
        v = result.subject_values.get(s.subject_id)
        rows.append([s.subject_id] + [_num(getattr(v, k)) if v else "error:NoUsableTrial" for k in TABLE_ORDER])
    return _csv(("subject_id",) + TABLE_ORDER, rows)


def trial_table(result):
    rows = []
    for s in result.manifest.subjects:
        outs = result.usable(s.subject_id)
        for o, v in zip(outs, result.trial_values.get(s.subject_id, [])):
            rows.append([s.subject_id, s.group, o.trial_no] + [_num(getattr(v, k)) for k in TABLE_ORDER])
    return _csv(("subject_id", "group", "trial_no") + TABLE_ORDER, rows)


def stats_table(stats, indices):
    return _csv(("statistic",) + tuple(indices), [[row] + [_num(v) for v in vals] for row, vals in stats.table(indices)])


def error_log(result):
    lines = []
    for o in result.failures:
        lines.append(f"{o.subject_id}\t{o.trial_no}\t{o.stage}\t{type(o.error).__name__}: {o.error}")
    for (group, index), sids in sorted(result.stats.excluded.items()):
        lines.append(f"{group}\t-\ticc:{index}\tsubjects without a full trial set excluded: {','.join(sids)}")
    return "".join(line + "\n" for line in lines)


def write_outputs(result, out, reference=None):
    """Write the report bundle under ``out``; returns the written paths in order."""
    out = Path(out)
    (out / "boxplots").mkdir(parents=True, exist_ok=True)
    files = {
        "segments.json": segments_json(result),
        "indices_patients.csv": subject_table(result, "patient"),
        "indices_controls.csv": subject_table(result, "control"),
        "trial_indices.csv": trial_table(result),
        "stats_time_distance.csv": stats_table(result.stats, TIME_DISTANCE),
        "stats_angle.csv": stats_table(result.stats, ANGLE),
        "stats_metadata.json": json.dumps(
            {**CohortStats.metadata(), "quantiles": "linear interpolation (type 7)", "float_format": "6 significant digits"},
            indent=2, sort_keys=True,
        ) + "\n",
    }
    groups = {s.subject_id: s.group for s in result.manifest.subjects}
    for index in TABLE_ORDER:
        per_group = {}
        for g in ("patient", "control"):
            vals = [getattr(v, index) for sid, v in result.subject_values.items() if groups[sid] == g]
            vals = [x for x in vals if x is not None]
            if vals:
                per_group[GROUP_LABELS[g]] = vals
        if per_group:
            svg, text = emit_boxplot(per_group, index, UNITS[index])
            files[f"boxplots/{index}.svg"] = svg
            files[f"boxplots/{index}.csv"] = text

    disc = []
    if reference is not None:
        ref = load_reference(reference)
        disc = internal_consistency(ref) + compare_stats(result.stats, ref)
    files["discrepancies.txt"] = format_report(disc)
    files["errors.log"] = error_log(result)

    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8", newline="")
        written.append(path)
    return written


@dataclass
class PipelineResult:
    exit_code: int
    written: list
    cohort: CohortResult = None
    message: str = ""


def run_pipeline(config):
    """Run the full analysis and write the report bundle.

    Exit code 0 when every trial was analysed, 1 when some trials failed and
    2 when nothing usable remained or the inputs could not be read.
    """
    out = Path(config.out)
    try:
        config.validate()
        manifest = load_manifest(config.manifest)
    except (GaitError, ValueError) as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "errors.log").write_text(f"-\t-\tconfig\t{type(exc).__name__}: {exc}\n", encoding="utf-8")
        return PipelineResult(EXIT_FATAL, [out / "errors.log"], message=str(exc))
    result = analyze_cohort(manifest, config)
    if not result.subject_values:
        out.mkdir(parents=True, exist_ok=True)
        (out / "errors.log").write_text(error_log(result), encoding="utf-8")
        return PipelineResult(EXIT_FATAL, [out / "errors.log"], result, "no usable trial in the cohort")
    written = write_outputs(result, out, config.reference)
    code = EXIT_PARTIAL if result.failures else EXIT_OK
    return PipelineResult(code, written, result)
