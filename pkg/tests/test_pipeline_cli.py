import csv
import io
import json
import shutil

import numpy as np
import pytest

from msgait.cli import main
from msgait.pipeline import (
    EXIT_FATAL,
    EXIT_OK,
    EXIT_PARTIAL,
    PipelineConfig,
    analyze_cohort,
    run_pipeline,
)
from msgait.reference import bundled_path
from msgait.skeletal_io import load_manifest
from msgait.synthesis import synthesize_cohort

EXPECTED_FILES = {
    "segments.json", "indices_patients.csv", "indices_controls.csv", "trial_indices.csv",
    "stats_time_distance.csv", "stats_angle.csv", "stats_metadata.json", "discrepancies.txt", "errors.log",
}


@pytest.fixture(scope="module")
def report(synthetic_cohort, tmp_path_factory):
    root, _, _ = synthetic_cohort
    out = tmp_path_factory.mktemp("report")
    res = run_pipeline(PipelineConfig(manifest=root / "manifest.json", out=out, reference=bundled_path()))
    return res, out


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


class TestPipeline:
    def test_exit_and_files(self, report):
        res, out = report
        assert res.exit_code == EXIT_OK, res.message
        names = {p.name for p in out.iterdir()}
        assert EXPECTED_FILES <= names
        svgs = {p.name for p in (out / "boxplots").iterdir()}
        assert {"v_n.svg", "v_n.csv", "d_h.svg", "d_h.csv"} <= svgs

    def test_subject_tables(self, report):
        _, out = report
        pats = read_csv(out / "indices_patients.csv")
        cons = read_csv(out / "indices_controls.csv")
        assert [r["subject_id"] for r in pats] == [f"P{i}" for i in range(1, 11)]
        assert len(cons) == 10
        assert all(float(r["d_k"]) > 0 for r in pats)

    def test_stats_tables(self, report):
        _, out = report
        rows = {r["statistic"]: r for r in read_csv(out / "stats_time_distance.csv")}
        assert float(rows["ms_mean"]["v_n"]) < float(rows["control_mean"]["v_n"])
        assert float(rows["p"]["v_n"]) <= 0.05
        meta = json.loads((out / "stats_metadata.json").read_text())
        assert "ICC(2,1)" in meta["icc_model"]

    def test_discrepancy_report(self, report):
        _, out = report
        lines = (out / "discrepancies.txt").read_text().splitlines()
        assert any(line.startswith("reference-internal\tv_n\tms_mean") for line in lines)
        assert any(line.startswith("cohort-vs-reference") for line in lines)

    def test_segments(self, report):
        _, out = report
        seg = json.loads((out / "segments.json").read_text())
        assert seg
        first = seg[0] if isinstance(seg, list) else next(iter(seg.values()))
        assert "left" in json.dumps(first)

    def test_workers_do_not_change_results(self, synthetic_cohort):
        root, manifest, _ = synthetic_cohort
        a = analyze_cohort(manifest, PipelineConfig(manifest=root / "manifest.json", out=root, workers=1))
        b = analyze_cohort(manifest, PipelineConfig(manifest=root / "manifest.json", out=root, workers=4))
        assert a.subject_values == b.subject_values

    def test_partial_on_bad_trial(self, tmp_path):
        synthesize_cohort(tmp_path, n_p=3, n_c=3, m=2, seed=5)
        victim = tmp_path / "trials" / "P2_trial1.csv"
        victim.write_text(victim.read_text().replace("\n0.", "\nxyz", 1))
        res = run_pipeline(PipelineConfig(manifest=tmp_path / "manifest.json", out=tmp_path / "out"))
        assert res.exit_code == EXIT_PARTIAL
        log = (tmp_path / "out" / "errors.log").read_text()
        assert "P2\t1\tload\tMalformedRow" in log

    def test_fatal_on_missing_manifest(self, tmp_path):
        res = run_pipeline(PipelineConfig(manifest=tmp_path / "nope.json", out=tmp_path / "out"))
        assert res.exit_code == EXIT_FATAL
        assert (tmp_path / "out" / "errors.log").exists()

    def test_fatal_when_nothing_usable(self, tmp_path):
        synthesize_cohort(tmp_path, n_p=1, n_c=2, m=1, seed=6)
        for f in (tmp_path / "trials").iterdir():
            f.write_text("garbage\n")
        res = run_pipeline(PipelineConfig(manifest=tmp_path / "manifest.json", out=tmp_path / "out"))
        assert res.exit_code == EXIT_FATAL


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root), "--patients", "3", "--controls", "3", "--trials", "2", "--seed", "1"]) == EXIT_OK
    return root


class TestCli:
    def test_segment(self, small, capsys):
        trial = small / "trials" / "C1_trial1.csv"
        assert main(["segment", str(trial)]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["left"]["t_hs"] < doc["left"]["t_to"] < doc["left"]["t_ts"]

    def test_indices_single(self, small, capsys):
        trial = small / "trials" / "P1_trial1.csv"
        code = main(["indices", str(trial), "--subject", "P1", "--manifest", str(small / "manifest.json")])
        assert code == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["v_n"] > 0 and doc["d_k"] is None

    def test_indices_cohort(self, small, capsys):
        assert main(["indices", "--cohort", str(small / "manifest.json")]) == EXIT_OK
        rows = read_csv_text(capsys.readouterr().out)
        assert len(rows) == 6

    def test_dtw(self, small, capsys, tmp_path):
        dump = tmp_path / "m.csv"
        code = main(["dtw", "--manifest", str(small / "manifest.json"), "--patient", "P1", "--joint", "hip",
                     "--dump-matrix", str(dump)])
        assert code == EXIT_OK
        assert float(capsys.readouterr().out) > 0
        # 2 patient trials x 3 controls x 2 trials per leg
        assert len(dump.read_text().splitlines()) == 1 + 2 * 2 * 3 * 2

    def test_cohort(self, small, tmp_path):
        assert main(["cohort", str(small / "manifest.json"), "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "stats_angle.csv").exists()

    def test_report(self, small, tmp_path):
        out = tmp_path / "rep"
        assert main(["report", "--manifest", str(small / "manifest.json"), "--out", str(out)]) == EXIT_OK
        assert (out / "boxplots" / "rom_knee.svg").exists()

    def test_missing_file_is_fatal(self, tmp_path):
        assert main(["segment", str(tmp_path / "absent.csv")]) == EXIT_FATAL

    def test_bad_threshold_is_fatal(self, small, tmp_path):
        code = main(["report", "--manifest", str(small / "manifest.json"), "--out", str(tmp_path), "--threshold", "2"])
        assert code == EXIT_FATAL


def read_csv_text(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_manifest_relative_paths(synthetic_cohort, tmp_path):
    root, _, _ = synthetic_cohort
    moved = tmp_path / "moved"
    shutil.copytree(root, moved)
    m = load_manifest(moved / "manifest.json")
    assert m.root == moved
    assert np.all([(moved / rel).exists() for refs in m.trials.values() for _, rel in refs])
