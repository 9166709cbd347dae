import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msgait.errors import (
    GapAtBoundary,
    GapTooLong,
    InvalidParams,
    MalformedRow,
    ManifestError,
    MissingJoint,
    NonMonotoneTime,
    TooShort,
)
from msgait.skeletal_io import (
    MANDATORY_JOINTS,
    AXES,
    CohortDataset,
    SubjectRecord,
    TrialRecording,
    detect_artifacts,
    interpolate_gaps,
    load_manifest,
    load_trial,
    manifest_from_dict,
    parse_trial,
    parse_trial_json,
    serialize_trial,
    trial_to_json,
    write_trial,
)
from msgait.synthesis import GaitParams, synthesize_trial


def header(joints=MANDATORY_JOINTS):
    return "t," + ",".join(f"{j}_{a}" for j in joints for a in AXES)


def row(t, value=0.0, joints=MANDATORY_JOINTS):
    return f"{t}," + ",".join(str(value) for _ in range(3 * len(joints)))


def make_rec(pos, t=None, joints=MANDATORY_JOINTS):
    pos = np.asarray(pos, dtype=float)
    t = np.arange(pos.shape[0]) / 30.0 if t is None else t
    return TrialRecording("S1", 1, t, joints, pos)


class TestParse:
    def test_two_rows(self):
        text = "\n".join([header(), row("0.000"), row("0.033")])
        rec = parse_trial(text, "S1", 1)
        assert rec.n_frames == 2
        assert rec.nominal_fps == pytest.approx(30.0, rel=0.02)
        assert rec.joints == MANDATORY_JOINTS

    def test_missing_column(self):
        cols = header().split(",")
        cols.remove("ANKLE_LEFT_z")
        body = [",".join(["0"] * len(cols)), ",".join(["0.1"] + ["0"] * (len(cols) - 1))]
        with pytest.raises(MissingJoint):
            parse_trial("\n".join([",".join(cols)] + body), "S1", 1)

    def test_non_monotone(self):
        text = "\n".join([header(), row("0.1"), row("0.1")])
        with pytest.raises(NonMonotoneTime):
            parse_trial(text, "S1", 1)

    def test_malformed_cell(self):
        text = "\n".join([header(), row("0.0"), row("0.1", "abc")])
        with pytest.raises(MalformedRow):
            parse_trial(text, "S1", 1)

    def test_too_short(self):
        with pytest.raises(TooShort):
            parse_trial("\n".join([header(), row("0.0")]), "S1", 1)

    def test_empty_cell_marks_joint_missing(self):
        cells = row("0.1").split(",")
        cells[1] = ""  # HIP_LEFT_x
        text = "\n".join([header(), row("0.0"), ",".join(cells), row("0.2")])
        rec = parse_trial(text, "S1", 1)
        assert np.isnan(rec.joint("HIP_LEFT")[1]).all()
        assert not np.isnan(rec.joint("HIP_RIGHT")[1]).any()

    def test_synthesized_round_trip(self):
        rec = synthesize_trial(GaitParams(n_cycles=2), decimals=6).recording.slice(0, 90)
        assert rec.n_frames == 90
        back = parse_trial(serialize_trial(rec), rec.subject_id, rec.trial_no)
        assert back.nominal_fps == pytest.approx(rec.nominal_fps, rel=1e-12)
        assert back.replace(nominal_fps=rec.nominal_fps) == rec

    def test_quantised_round_trip_exact(self):
        rec = synthesize_trial(GaitParams(), decimals=6, noise_sd=0.003, seed=4).recording
        assert parse_trial(serialize_trial(rec), rec.subject_id, 1) == rec

    def test_json_round_trip(self):
        rec = synthesize_trial(GaitParams(), decimals=6).recording
        assert parse_trial_json(trial_to_json(rec)) == rec

    def test_load_dispatch(self, tmp_path):
        rec = synthesize_trial(GaitParams(), decimals=6).recording
        write_trial(rec, tmp_path / "a.csv")
        (tmp_path / "a.json").write_text(trial_to_json(rec))
        assert load_trial(tmp_path / "a.csv", rec.subject_id, 1) == rec
        assert load_trial(tmp_path / "a.json", rec.subject_id, 1) == rec


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2 * 18, max_size=6 * 18).filter(lambda v: len(v) % 18 == 0))
def test_serialize_parse_fixed_point(values):
    pos = np.array(values).reshape(-1, 6, 3)
    rec = make_rec(np.round(pos, 6))
    once = parse_trial(serialize_trial(rec), "S1", 1)
    twice = parse_trial(serialize_trial(once), "S1", 1)
    assert once == twice


class TestRecording:
    def test_immutable(self, clean_trial):
        with pytest.raises(ValueError):
            clean_trial.recording.pos[0, 0, 0] = 1.0

    def test_unknown_joint_rejected(self):
        with pytest.raises(MalformedRow):
            make_rec(np.zeros((3, 7, 3)), joints=MANDATORY_JOINTS + ("TAIL",))

    def test_frames_view(self):
        rec = make_rec(np.ones((3, 6, 3)))
        frames = list(rec.frames())
        assert len(frames) == 3 and frames[1].pos["KNEE_LEFT"] == (1.0, 1.0, 1.0)


class TestGaps:
    def test_no_gaps_identity(self, clean_trial):
        rec = clean_trial.recording
        assert interpolate_gaps(rec) is rec

    def test_midpoint(self):
        pos = np.zeros((3, 6, 3))
        pos[2, :, 1] = 0.2
        pos[1] = np.nan
        out = interpolate_gaps(make_rec(pos))
        np.testing.assert_allclose(out.pos[1, 0], [0.0, 0.1, 0.0])
        np.testing.assert_array_equal(out.t, make_rec(pos).t)

    def test_gap_too_long(self):
        pos = np.zeros((7, 6, 3))
        pos[1:5, 2] = np.nan
        with pytest.raises(GapTooLong):
            interpolate_gaps(make_rec(pos), max_gap=3)

    def test_gap_at_boundary(self):
        pos = np.zeros((5, 6, 3))
        pos[0, 1] = np.nan
        with pytest.raises(GapAtBoundary):
            interpolate_gaps(make_rec(pos))

    def test_uneven_timestamps(self):
        pos = np.zeros((3, 6, 3))
        pos[2, :, 2] = 1.0
        pos[1] = np.nan
        out = interpolate_gaps(make_rec(pos, t=np.array([0.0, 0.25, 1.0])))
        assert out.pos[1, 0, 2] == pytest.approx(0.25)

    @given(st.integers(0, 2**31), st.integers(1, 3))
    def test_idempotent(self, seed, gap):
        r = np.random.default_rng(seed)
        pos = r.normal(size=(12, 6, 3))
        start = int(r.integers(1, 12 - gap))
        pos[start:start + gap, int(r.integers(0, 6))] = np.nan
        once = interpolate_gaps(make_rec(pos))
        assert interpolate_gaps(once) == once


class TestArtifacts:
    def test_clean_trial(self, clean_trial):
        rep = detect_artifacts(clean_trial.recording)
        assert rep.n_flagged_frames == 0
        assert rep.recommendation == "keep"

    def test_teleported_knee(self, clean_trial):
        rec = clean_trial.recording
        pos = np.array(rec.pos)
        k = rec.joints.index("KNEE_LEFT")
        pos[20, k, 0] += 1.0
        rep = detect_artifacts(rec.replace(pos=pos))
        assert 20 in rep.flagged["KNEE_LEFT"]
        assert rep.recommendation == "keep"

    def test_randomised_hip(self, clean_trial, rng):
        rec = clean_trial.recording
        pos = np.array(rec.pos)
        k = rec.joints.index("HIP_RIGHT")
        hit = rng.choice(rec.n_frames, size=int(0.25 * rec.n_frames), replace=False)
        pos[hit, k] = rng.uniform(-2, 2, size=(hit.size, 3))
        rep = detect_artifacts(rec.replace(pos=pos))
        assert rep.severity > 0.2
        assert rep.recommendation == "exclude"


class TestSubjects:
    def test_patient_needs_scores(self):
        with pytest.raises(InvalidParams):
            SubjectRecord("P1", "patient", height=160.0)

    def test_control_has_no_scores(self):
        with pytest.raises(InvalidParams):
            SubjectRecord("C1", "control", height=160.0, msws=10.0)

    def test_height_positive(self):
        with pytest.raises(InvalidParams):
            SubjectRecord("C1", "control", height=0.0)

    def test_cohort_counts(self):
        s = [SubjectRecord("C1", "control", height=160.0)]
        rec = make_rec(np.zeros((2, 6, 3))).replace(subject_id="C1")
        CohortDataset(s, [rec], m_c=1)
        with pytest.raises(ManifestError):
            CohortDataset(s, [rec], m_c=2)


class TestManifest:
    def test_round_trip(self, synthetic_cohort):
        root, manifest, _ = synthetic_cohort
        again = manifest_from_dict(json.loads(manifest.to_json()), root)
        assert [s.subject_id for s in again.subjects] == [s.subject_id for s in manifest.subjects]
        assert again.trials == manifest.trials

    def test_count_mismatch(self, tmp_path):
        doc = {"m_c": 2, "subjects": [{"subject_id": "C1", "group": "control", "height": 170, "trials": ["a.csv"]}]}
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "m.json")

    def test_unreadable(self, tmp_path):
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "absent.json")
