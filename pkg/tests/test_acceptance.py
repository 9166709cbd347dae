"""Acceptance criteria, one test per criterion.

A pass/fail line per criterion is printed in the terminal summary.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from msgait import kernels
from msgait.cohort_stats import fisher_ci, group_summary, icc, pearson_ci
from msgait.distributions import f_cdf, f_quantile, t_cdf
from msgait.dtw import brute_force_dtw, dtw, mean_dtw_control, mean_dtw_patient, path_cost
from msgait.gait_cycle import GaitEvents, ankle_speed, cycle_from_events, detect_gait_events
from msgait.kinematics import (
    hip_angle_series,
    knee_angle_series,
    range_of_motion,
    time_distance_indices,
)
from msgait.pipeline import EXIT_OK, PipelineConfig, run_pipeline
from msgait.reference import agrees, format_report, internal_consistency, load_reference
from msgait.synthesis import GaitParams, synthesize_cohort, synthesize_trial

from test_distributions import T_CDF_REFERENCE


def acceptance(number, title):
    return pytest.mark.acceptance(number, title)


def is_valid_path(path, n, m):
    if tuple(path[0]) != (0, 0) or tuple(path[-1]) != (n - 1, m - 1):
        return False
    steps = {tuple(s) for s in np.diff(path, axis=0)}
    return steps <= {(1, 0), (0, 1), (1, 1)} and max(n, m) <= len(path) <= n + m - 1


@acceptance(1, "DTW equals brute force on 500 random pairs, under 5 s")
def test_dtw_brute_force_equivalence():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    for _ in range(500):
        a = rng.uniform(0, 50, int(rng.integers(1, 7)))
        b = rng.uniform(0, 50, int(rng.integers(1, 7)))
        assert dtw(a, b).distance == brute_force_dtw(a, b)
    assert time.perf_counter() - t0 < 5.0


@acceptance(2, "DTW identity, symmetry, duplication, path validity and path sum on 1000 cases each, under 10 s")
def test_dtw_properties():
    rng = np.random.default_rng(2)

    def seq():
        return rng.uniform(0, 50, int(rng.integers(1, 21)))

    t0 = time.perf_counter()
    for _ in range(1000):
        a = seq()
        assert dtw(a, a).distance == 0
    for _ in range(1000):
        a, b = seq(), seq()
        assert dtw(a, b).distance == dtw(b, a).distance
    for _ in range(1000):
        a = seq()
        k = int(rng.integers(0, len(a)))
        assert dtw(a, np.insert(a, k, a[k])).distance == 0
    for _ in range(1000):
        a, b = seq(), seq()
        assert is_valid_path(dtw(a, b).path, len(a), len(b))
    for _ in range(1000):
        a, b = seq(), seq()
        res = dtw(a, b)
        assert res.distance == path_cost(a, b, res.path)
    assert time.perf_counter() - t0 < 10.0


@acceptance(3, "Fisher interval for r = -0.69, n = 50")
def test_fisher_anchor():
    # data with sample correlation -0.69 by construction
    rng = np.random.default_rng(3)
    x, z = rng.normal(size=(2, 50))
    x = (x - x.mean()) / np.linalg.norm(x - x.mean())
    z = z - z.mean()
    z = z - (z @ x) * x
    z /= np.linalg.norm(z)
    y = -0.69 * x + math.sqrt(1 - 0.69**2) * z
    res = pearson_ci(x, y)
    assert res.r == pytest.approx(-0.69, abs=1e-12)
    lo, hi = fisher_ci(-0.69, 50)
    assert (res.ci_low, res.ci_high) == (pytest.approx(lo, abs=1e-12), pytest.approx(hi, abs=1e-12))
    assert lo == pytest.approx(-0.813, abs=1e-3)
    assert hi == pytest.approx(-0.509, abs=1e-3)
    assert round(lo, 2) == -0.81


@acceptance(4, "control velocity 1.2 (0.14) recomputed; patient mismatch reported")
def test_group_summary_anchor():
    ref = load_reference()
    vals = [ref.subject_values[s.subject_id].v_n for s in ref.controls]
    g = group_summary(vals, "control", "v_n")
    assert agrees(g.mean, ref.stats[("v_n", "control_mean")])
    assert agrees(g.sd, ref.stats[("v_n", "control_sd")])
    report = format_report(internal_consistency(ref))
    lines = [line.split("\t") for line in report.splitlines()]
    found = {(f[1], f[2]): f for f in lines}
    assert found[("v_n", "ms_mean")][3] == "recomputed=0.668"
    assert found[("v_n", "ms_mean")][4] == "reference=0.4"
    assert found[("v_n", "ms_sd")][4] == "reference=0.14"
    assert ("v_n", "control_mean") not in found and ("v_n", "control_sd") not in found


@acceptance(5, "segmentation within one frame on at least 95 of 100 noisy trials, under 5 s")
def test_segmentation_accuracy():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    hits = 0
    for k in range(100):
        p = GaitParams(fps=30.0, noise_sd=0.005, t_offset=float(rng.uniform(0, 1 / 30)))
        syn = synthesize_trial(p, seed=k)
        rec = syn.recording
        ev = detect_gait_events(ankle_speed(rec, "left"), rec.t, leg="left")
        err = np.abs(np.subtract((ev.hs_frame, ev.to_frame, ev.ts_frame), syn.truth.event_frames["left"][0]))
        hits += bool(err.max() <= 1)
    elapsed = time.perf_counter() - t0
    print(f"segmentation: {hits}/100 within one frame in {elapsed:.2f} s")
    assert hits >= 95
    assert elapsed < 5.0


CLOSED_FORM_CASES = [
    # stride, cycle time, stance, width: all events land on frames at 30 fps
    (1.2, 1.5, 0.6, 0.2),
    (1.0, 1.2, 0.75, 0.15),
    (0.8, 1.0, 0.6, 0.25),
    (1.4, 2.0, 0.65, 0.3),
]


@acceptance(6, "closed-form indices on zero-noise cycles, under 1 s")
def test_index_closed_form():
    t0 = time.perf_counter()
    for stride, T, stance, width in CLOSED_FORM_CASES:
        fps = 30.0
        p = GaitParams(stride_length=stride, cycle_time=T, stance_fraction=stance, step_width=width,
                       fps=fps, lead_in=14 / (fps * T))
        syn = synthesize_trial(p)
        rec, truth = syn.recording, syn.truth
        hs, to, ts = truth.event_frames["left"][0]
        ev = GaitEvents("left", float(rec.t[hs]), float(rec.t[to]), float(rec.t[ts]), hs, to, ts)
        cyc = cycle_from_events(rec, ev, truth.cycle_events("right"), truth.at_rest)
        td = time_distance_indices(cyc, p.height)
        h = p.height / 100
        assert td.l_n == pytest.approx(stride / h, rel=1e-9)
        assert td.v_n == pytest.approx(stride / T / h, rel=1e-9)
        assert td.s == pytest.approx(stance, rel=1e-9)
        assert td.w == pytest.approx(width, rel=0.005)
        assert range_of_motion(knee_angle_series(cyc, "left")) == pytest.approx(abs(p.knee.amplitude), rel=0.005)
        assert range_of_motion(hip_angle_series(cyc, "left")) == pytest.approx(abs(p.hip.amplitude), rel=0.005)
    assert time.perf_counter() - t0 < 1.0


def icc_anova_oracle(table):
    rows = [[Fraction(float(v)) for v in r] for r in table]
    n, k = len(rows), len(rows[0])
    gm = sum(sum(r) for r in rows) / (n * k)
    rm = [sum(r) / k for r in rows]
    cm = [sum(rows[i][j] for i in range(n)) / n for j in range(k)]
    sst = sum((v - gm) ** 2 for r in rows for v in r)
    ssr = k * sum((m - gm) ** 2 for m in rm)
    ssc = n * sum((m - gm) ** 2 for m in cm)
    msr, msc = ssr / (n - 1), ssc / (k - 1)
    mse = (sst - ssr - ssc) / ((n - 1) * (k - 1))
    return float((msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n))


@acceptance(7, "ICC equals an exact ANOVA oracle on 200 matrices; identical trials give 1")
def test_icc_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(200):
        n, k = int(rng.integers(3, 11)), int(rng.integers(2, 7))
        x = rng.normal(size=(n, 1)) * rng.uniform(0, 3) + rng.normal(size=(n, k)) * rng.uniform(0.1, 2)
        worst = max(worst, abs(icc(x).icc - icc_anova_oracle(x)))
    print(f"ICC worst absolute error {worst:.3g}")
    assert worst <= 1e-12
    for _ in range(20):
        n, k = int(rng.integers(3, 11)), int(rng.integers(2, 7))
        x = np.repeat(rng.normal(size=(n, 1)), k, axis=1)
        assert icc(x).icc == 1.0


@acceptance(8, "t CDF at 20 reference points within 1e-8; F quantile round trip within 1e-9")
def test_distribution_kernels():
    for t, df, expected in T_CDF_REFERENCE:
        assert abs(t_cdf(t, df) - expected) <= 1e-8
    worst = 0.0
    for p in (0.001, 0.025, 0.1, 0.5, 0.9, 0.975, 0.999):
        for d1 in (1, 2, 4, 9, 30, 120):
            for d2 in (1, 3, 9, 36, 200):
                worst = max(worst, abs(f_cdf(f_quantile(p, d1, d2), d1, d2) - p))
    print(f"F round trip worst error {worst:.3g}")
    assert worst <= 1e-9


def exhaustive_mean(subject_trials, refs):
    per_leg = []
    for leg in ("left", "right"):
        d = [brute_force_dtw(s[leg], r[leg]) for s in subject_trials for r in refs]
        per_leg.append(math.fsum(d) / len(d))
    return 0.5 * (per_leg[0] + per_leg[1])


@acceptance(9, "mean DTW equals exhaustive aggregation; 2 m_p n_c m_c = 500 evaluations")
def test_aggregation_oracle():
    rng = np.random.default_rng(9)

    def trial():
        return {leg: rng.uniform(0, 60, int(rng.integers(1, 7))) for leg in ("left", "right")}

    m_p, n_c, m_c = 5, 10, 5
    patient = [trial() for _ in range(m_p)]
    controls = {f"C{i}": [trial() for _ in range(m_c)] for i in range(1, n_c + 1)}

    with kernels.count_evaluations() as counter:
        res = mean_dtw_patient(patient, controls)
    n_patient = counter.count
    with kernels.count_evaluations() as counter:
        res_c = mean_dtw_control("C3", controls)
    n_control = counter.count
    assert n_patient == 2 * m_p * n_c * m_c == 500
    assert res.n_evaluations == 500
    assert n_control == 2 * m_c * (n_c - 1) * m_c
    refs = [t for ts in controls.values() for t in ts]
    assert res.value == exhaustive_mean(patient, refs)
    others = [t for sid, ts in controls.items() if sid != "C3" for t in ts]
    assert res_c.value == exhaustive_mean(controls["C3"], others)


@pytest.fixture(scope="module")
def acceptance_cohort(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    synthesize_cohort(root, n_p=10, n_c=10, m=5, noise_sd=0.002, trial_sd=0.02, seed=2024)
    return root


@acceptance(10, "full pipeline under 10 s with byte-identical outputs across runs")
def test_pipeline_determinism(acceptance_cohort, tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        t0 = time.perf_counter()
        res = run_pipeline(PipelineConfig(manifest=acceptance_cohort / "manifest.json", out=out))
        elapsed = time.perf_counter() - t0
        print(f"pipeline run {run}: {elapsed:.2f} s, exit {res.exit_code}")
        assert res.exit_code == EXIT_OK
        assert elapsed < 10.0
        outs.append(out)
    files_a = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
    assert files_a == files_b and len(files_a) > 10
    for rel in files_a:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


@acceptance(11, "patients slower, shorter strides, longer stance, larger DTW; p <= 0.05 on all indices")
def test_direction_of_effect(acceptance_cohort, tmp_path):
    res = run_pipeline(PipelineConfig(manifest=acceptance_cohort / "manifest.json", out=tmp_path))
    cells = res.cohort.stats.cells
    for index in ("v_n", "l_n"):
        assert cells[index]["ms_mean"] < cells[index]["control_mean"], index
    for index in ("s", "d_k", "d_h"):
        assert cells[index]["ms_mean"] > cells[index]["control_mean"], index
    for index in ("v_n", "l_n", "s", "w", "rom_knee", "rom_hip", "d_k", "d_h"):
        p = cells[index]["p"]
        print(f"{index}: p = {p:.3g}")
        assert p <= 0.05, index
