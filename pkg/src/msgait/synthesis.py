"""Synthetic walking trials with known ground truth.

Each ankle is planted during stance and travels one stride during swing with
a smooth velocity profile (raised-cosine ramps around a constant-speed
plateau). Hip and knee angles follow periodic profiles of the leg's cycle
phase; knee and hip positions are placed backwards from the ankle along the
shank and thigh so that the angles computed from positions reproduce the
profiles exactly. The right leg runs half a cycle behind the left.
"""
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidParams
from .gait_cycle import GaitEvents
from .skeletal_io import (
    LEG_JOINTS,
    Manifest,
    SubjectRecord,
    TrialRecording,
    write_trial,
)

LEG_PHASE = {"left": 0.0, "right": 0.5}
LATERAL_SIGN = {"left": 1.0, "right": -1.0}

THIGH_RATIO = 0.245  # segment length / body height
SHANK_RATIO = 0.246
ANKLE_HEIGHT = 0.08  # m
WALKWAY_START = 0.5  # m, y of the first left foot placement


def _bump(phase, peak):
    """Smooth 0 -> 1 -> 0 over one cycle with its maximum at ``peak``."""
    phase = np.asarray(phase, dtype=np.float64)
    rise = 0.5 * (1.0 - np.cos(np.pi * phase / peak))
    fall = 0.5 * (1.0 + np.cos(np.pi * (phase - peak) / (1.0 - peak)))
    return np.where(phase < peak, rise, fall)


@dataclass(frozen=True)
class AngleProfile:
    """Periodic joint angle in degrees as a function of cycle phase.

    The angle equals ``base`` at heel strike and reaches ``base + amplitude``
    at ``peak_phase``; ``amplitude`` may be negative. Range of motion is
    ``abs(amplitude)``.
    """

    base: float
    amplitude: float
    peak_phase: float = 0.5

    def __call__(self, phase):
        return self.base + self.amplitude * _bump(phase, self.peak_phase)

    @property
    def rom(self):
        return abs(self.amplitude)

    @property
    def low(self):
        return min(self.base, self.base + self.amplitude)


DEFAULT_HIP = AngleProfile(base=28.0, amplitude=-22.0, peak_phase=0.6)
DEFAULT_KNEE = AngleProfile(base=5.0, amplitude=40.0, peak_phase=0.72)


@dataclass(frozen=True)
class GaitParams:
    """Generator inputs; lengths in metres, times in seconds, height in cm."""

    stride_length: float = 1.2
    cycle_time: float = 1.5
    stance_fraction: float = 0.6
    step_width: float = 0.2
    hip: AngleProfile = DEFAULT_HIP
    knee: AngleProfile = DEFAULT_KNEE
    fps: float = 30.0
    n_cycles: int = 1
    noise_sd: float = 0.0
    height: float = 170.0
    ramp_fraction: float = 1.0 / 3.0  # share of the swing spent in each speed ramp
    lift: float = 0.05
    lead_in: float = 0.3  # fraction of a cycle before the first left heel strike
    t_offset: float = 0.0  # extra sub-frame delay of the gait clock, seconds

    def validate(self):
        positive = ("stride_length", "cycle_time", "step_width", "fps", "height", "ramp_fraction")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidParams(f"{name} must be positive")
        if not 0 < self.stance_fraction < 1:
            raise InvalidParams("stance_fraction must lie in (0, 1)")
        if int(self.n_cycles) != self.n_cycles or self.n_cycles < 1:
            raise InvalidParams("n_cycles must be a positive integer")
        if self.noise_sd < 0 or self.lift < 0 or self.lead_in < 0 or self.t_offset < 0:
            raise InvalidParams("noise_sd, lift, lead_in and t_offset must be non-negative")
        if self.ramp_fraction > 0.5:
            raise InvalidParams("ramp_fraction must not exceed 0.5")
        for name in ("hip", "knee"):
            prof = getattr(self, name)
            if not 0 < prof.peak_phase < 1:
                raise InvalidParams(f"{name} peak_phase must lie in (0, 1)")
            if prof.low < 0 or prof.low + prof.rom > 180:
                raise InvalidParams(f"{name} profile must stay within [0, 180] degrees")

    @property
    def swing_time(self):
        return self.cycle_time * (1.0 - self.stance_fraction)

    @property
    def peak_ankle_speed(self):
        """Horizontal ankle speed on the swing plateau, m/s."""
        return self.stride_length / (self.swing_time * (1.0 - self.ramp_fraction))

    @property
    def velocity(self):
        return self.stride_length / self.cycle_time


@dataclass
class GroundTruth:
    """What the generator put in.

    ``events[leg]`` lists the continuous-time events of every complete cycle
    inside the recording; ``event_frames[leg]`` the matching nearest frames.
    ``at_rest[leg]`` flags frames where that ankle is planted. ``angles`` maps
    ``(joint, leg)`` to the per-frame injected angle in degrees.
    """

    params: GaitParams
    events: dict
    event_frames: dict
    at_rest: dict
    angles: dict = field(repr=False)

    def cycle_events(self, leg, k=0):
        """``k``-th ground-truth cycle of ``leg`` as frame-aligned GaitEvents."""
        hs, to, ts = self.event_frames[leg][k]
        ev = self.events[leg][k]
        return GaitEvents(leg, ev.t_hs, ev.t_to, ev.t_ts, hs, to, ts)

    @property
    def v_n(self):
        return self.params.velocity / (self.params.height / 100.0)

    @property
    def l_n(self):
        return self.params.stride_length / (self.params.height / 100.0)


@dataclass
class SyntheticTrial:
    recording: TrialRecording
    truth: GroundTruth


def _swing_progress(u, r):
    """Normalised displacement after swing fraction ``u`` with ramp fraction ``r``."""
    u = np.asarray(u, dtype=np.float64)

    def head(x):
        return 0.5 * (x - (r / np.pi) * np.sin(np.pi * x / r))

    total = 1.0 - r
    mid = 0.5 * r + (u - r)
    out = np.where(u < r, head(u), np.where(u > 1.0 - r, total - head(1.0 - u), mid))
    return out / total


def _leg_clock(t, p, leg):
    """Cycle index and phase in [0, 1) of ``leg`` at times ``t``."""
    t0 = p.lead_in * p.cycle_time + p.t_offset
    x = (t - t0) / p.cycle_time - LEG_PHASE[leg]
    c = np.floor(x)
    return c, x - c


def _leg_positions(t, p, leg):
    c, phase = _leg_clock(t, p, leg)
    s = p.stance_fraction
    swing = phase > s
    u = np.where(swing, (phase - s) / (1.0 - s), 0.0)
    prog = np.where(swing, _swing_progress(u, p.ramp_fraction), 0.0)

    L = p.stride_length
    ankle = np.empty((t.shape[0], 3))
    ankle[:, 0] = LATERAL_SIGN[leg] * p.step_width / 2.0
    ankle[:, 1] = WALKWAY_START + L * (c + LEG_PHASE[leg] + prog)
    ankle[:, 2] = ANKLE_HEIGHT + p.lift * np.where(swing, np.sin(np.pi * u) ** 2, 0.0)

    hip_deg = p.hip(phase)
    knee_deg = p.knee(phase)
    th = np.radians(hip_deg)
    sh = np.radians(hip_deg - knee_deg)
    h = p.height / 100.0
    thigh = np.stack([np.zeros_like(th), np.sin(th), -np.cos(th)], axis=1)
    shank = np.stack([np.zeros_like(sh), np.sin(sh), -np.cos(sh)], axis=1)
    knee = ankle - SHANK_RATIO * h * shank
    hip = knee - THIGH_RATIO * h * thigh
    return hip, knee, ankle, ~swing, hip_deg, knee_deg


def _truth_events(p, leg, t_end, n_frames):
    events, frames = [], []
    c = -1
    while True:
        hs = p.lead_in * p.cycle_time + p.t_offset + (c + LEG_PHASE[leg]) * p.cycle_time
        c += 1
        if hs < 0:
            continue
        ts = hs + p.cycle_time
        if ts > t_end + 1e-12:
            break
        to = hs + p.stance_fraction * p.cycle_time
        ev = GaitEvents(leg, hs, to, ts)
        fr = tuple(min(n_frames - 1, int(round(x * p.fps))) for x in (hs, to, ts))
        events.append(ev)
        frames.append(fr)
    return events, frames


def _quantize(a, decimals):
    """Round through decimal text, exactly as a CSV round trip does."""
    flat = [float(f"{v:.{decimals}f}") for v in np.asarray(a, dtype=np.float64).ravel()]
    return np.array(flat).reshape(np.shape(a))


def synthesize_trial(params=None, seed=None, subject_id="SYN", trial_no=1, decimals=None, **overrides):
    """Generate one walking trial and its ground truth.

    Parameters
    ----------
    params : GaitParams, optional
        Defaults to ``GaitParams()``; keyword ``overrides`` replace fields.
    seed : int or numpy Generator, optional
        Source of the additive Gaussian position noise.
    decimals : int, optional
        Round timestamps and positions to this many decimals, which makes the
        recording survive a CSV round trip exactly.

    Returns
    -------
    SyntheticTrial
    """
    p = replace(params or GaitParams(), **overrides)
    p.validate()
    T = p.cycle_time
    duration = (p.lead_in + p.n_cycles + 0.5) * T + p.t_offset + max(0.2 * T, 4.0 / p.fps)
    n = int(math.floor(duration * p.fps)) + 1
    t = np.arange(n) / p.fps
    if decimals is not None:
        t = _quantize(t, decimals)

    joints, cols = [], []
    at_rest, angles, events, event_frames = {}, {}, {}, {}
    for leg in ("left", "right"):
        hip, knee, ankle, rest, hip_deg, knee_deg = _leg_positions(t, p, leg)
        for name, arr in zip(LEG_JOINTS[leg], (hip, knee, ankle)):
            joints.append(name)
            cols.append(arr)
        at_rest[leg] = rest
        angles[("hip", leg)] = np.abs(hip_deg)
        angles[("knee", leg)] = knee_deg
        events[leg], event_frames[leg] = _truth_events(p, leg, t[-1], n)

    pos = np.stack(cols, axis=1)
    if p.noise_sd > 0:
        rng = np.random.default_rng(seed)
        pos = pos + rng.normal(0.0, p.noise_sd, size=pos.shape)
    if decimals is not None:
        pos = _quantize(pos, decimals)
    # with quantised output the rate is inferred exactly as a parser would
    fps = None if decimals is not None else float(p.fps)
    rec = TrialRecording(subject_id, trial_no, t, tuple(joints), pos, nominal_fps=fps)
    return SyntheticTrial(rec, GroundTruth(p, events, event_frames, at_rest, angles))


# -- cohorts --------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupModel:
    """Between-subject distribution of generator parameters for one group."""

    v_n: tuple  # (mean, sd), 1/s
    l_n: tuple
    stance: tuple
    width: tuple  # m
    hip: AngleProfile
    knee: AngleProfile
    rom_sd: float = 2.0  # deg
    base_sd: float = 1.5  # deg
    height: tuple = (165.0, 6.0)


CONTROL_MODEL = GroupModel(
    v_n=(0.48, 0.02), l_n=(0.62, 0.025), stance=(0.61, 0.01), width=(0.18, 0.02),
    hip=AngleProfile(33.0, -24.0, 0.6), knee=AngleProfile(6.0, 45.0, 0.72),
)

PATIENT_MODEL = GroupModel(
    v_n=(0.30, 0.025), l_n=(0.47, 0.03), stance=(0.68, 0.015), width=(0.26, 0.025),
    hip=AngleProfile(36.0, -19.0, 0.66), knee=AngleProfile(14.0, 33.0, 0.78),
)


def _draw(rng, ms, lo=None):
    # truncated at two SDs so that no subject lands in an implausible tail
    v = ms[0] + ms[1] * float(np.clip(rng.normal(), -2.0, 2.0))
    return v if lo is None else max(lo, v)


def _subject_params(rng, model, fps):
    height = _draw(rng, model.height, 140.0)
    l_n = _draw(rng, model.l_n, 0.2)
    v_n = _draw(rng, model.v_n, 0.1)
    hip_amp = model.hip.amplitude + math.copysign(rng.normal(0, model.rom_sd), model.hip.amplitude)
    # keep the hip angle positive so the unsigned angle equals the profile
    hip_base = max(abs(hip_amp) + 2.0, model.hip.base + rng.normal(0, model.base_sd))
    hip = AngleProfile(hip_base, hip_amp, model.hip.peak_phase)
    knee = AngleProfile(
        max(0.0, model.knee.base + rng.normal(0, model.base_sd)),
        model.knee.amplitude + rng.normal(0, model.rom_sd),
        model.knee.peak_phase,
    )
    return GaitParams(
        stride_length=l_n * height / 100.0,
        cycle_time=l_n / v_n,
        stance_fraction=_draw(rng, model.stance),
        step_width=_draw(rng, model.width, 0.05),
        hip=hip, knee=knee, fps=fps, height=height, n_cycles=2,
    )


def synthesize_cohort(out_dir, n_p=10, n_c=10, m=5, noise_sd=0.0, trial_sd=0.0, seed=0,
                      fps=30.0, stagger=True, patient_model=PATIENT_MODEL, control_model=CONTROL_MODEL):
    """Write a synthetic cohort (trial CSVs plus ``manifest.json``) to ``out_dir``.

    ``trial_sd`` is the relative trial-to-trial jitter applied to stride,
    cycle time and step width. With ``stagger`` the gait clock of trial ``j``
    starts ``(j - 1) / (m * fps)`` seconds late, so trials sample the gait at
    different sub-frame phases. With ``stagger=False``, ``trial_sd = 0`` and
    ``noise_sd = 0`` all trials of a subject are identical.
    Returns the :class:`~msgait.skeletal_io.Manifest` and the per-subject
    generator parameters.
    """
    out = Path(out_dir)
    (out / "trials").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    subjects, trials, truth = [], {}, {}
    for group, model, count, prefix in (
        ("patient", patient_model, n_p, "P"),
        ("control", control_model, n_c, "C"),
    ):
        for i in range(1, count + 1):
            sid = f"{prefix}{i}"
            base = _subject_params(rng, model, fps)
            extra = {}
            if group == "patient":
                # clinical scores loosely track severity for a plausible fixture
                sev = float(np.clip((0.45 - base.velocity / (base.height / 100)) / 0.15, 0, 1))
                extra = dict(
                    ambulation_score=int(np.clip(round(1 + 7 * sev + rng.normal(0, 1)), 0, 9)),
                    msws=float(np.clip(round(30 + 60 * sev + rng.normal(0, 5), 1), 0, 100)),
                    match=f"C{i}" if i <= n_c else None,
                )
            subjects.append(SubjectRecord(
                subject_id=sid, group=group, sex="F", age=float(rng.integers(35, 80)),
                height=round(base.height, 1), weight=float(rng.integers(50, 95)), **extra,
            ))
            base = replace(base, height=round(base.height, 1))
            truth[sid] = base
            refs = []
            for j in range(1, m + 1):
                jit = (lambda: 1.0 + rng.normal(0, trial_sd)) if trial_sd > 0 else (lambda: 1.0)
                p = replace(
                    base,
                    stride_length=base.stride_length * jit(),
                    cycle_time=base.cycle_time * jit(),
                    step_width=base.step_width * jit(),
                    noise_sd=noise_sd,
                    t_offset=(j - 1) / (m * fps) if stagger else 0.0,
                )
                syn = synthesize_trial(p, seed=rng.integers(2**32), subject_id=sid, trial_no=j)
                rel = Path("trials") / f"{sid}_trial{j}.csv"
                write_trial(syn.recording, out / rel)
                refs.append((j, rel))
            trials[sid] = refs
    manifest = Manifest(subjects, trials, out, m_p=m if n_p else None, m_c=m if n_c else None)
    (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest, truth
