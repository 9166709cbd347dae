"""Joint angles and the time-distance gait indices of a segmented cycle.

Knee flexion is the angle between the thigh (hip to knee) and the shank
(knee to ankle), so a straight leg reads 0 degrees. The hip angle is the
angle between the thigh and the downward vertical, so standing upright reads
0 degrees; flexion and extension are not distinguished.
"""
import logging
import math
from collections import namedtuple
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .errors import DegenerateSegment, GaitError, NoDoubleSupport
from .gait_cycle import DEFAULT_THRESHOLD, GaitCycle, extract_cycle
from .skeletal_io import LEG_JOINTS

log = logging.getLogger(__name__)

MIN_SEGMENT = 0.01  # m
DOWN = np.array([0.0, 0.0, -1.0])

INDEX_NAMES = ("v_n", "l_n", "s", "w", "rom_hip", "rom_knee", "d_k", "d_h")
# column order of the per-subject tables
TABLE_ORDER = ("v_n", "l_n", "s", "w", "rom_knee", "rom_hip", "d_k", "d_h")

TimeDistance = namedtuple("TimeDistance", "v_n l_n s w")


@dataclass(frozen=True)
class AngleSeries:
    joint: str  # "hip" or "knee"
    leg: str
    values: np.ndarray  # degrees, one per cycle frame
    t: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("angle series contains non-finite values")
        if v.size and (v.min() < 0 or v.max() > 180):
            raise ValueError("angles must lie in [0, 180]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


def angle_between(u, v):
    """Angle in degrees between row vectors ``u`` and ``v``.

    Uses ``atan2(|u x v|, u . v)``, which stays accurate near 0 and 180
    degrees where ``arccos`` loses precision.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.broadcast_to(np.asarray(v, dtype=np.float64), u.shape)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def _segment(a, b, name):
    d = b - a
    length = np.linalg.norm(d, axis=-1)
    if np.any(length < MIN_SEGMENT):
        raise DegenerateSegment(f"{name} segment shorter than {MIN_SEGMENT} m")
    return d


def _frames(cycle_or_rec):
    return cycle_or_rec.frames if isinstance(cycle_or_rec, GaitCycle) else cycle_or_rec


def knee_angle_series(cycle, leg):
    """Knee flexion over the cycle; accepts a GaitCycle or a TrialRecording."""
    rec = _frames(cycle)
    hip, knee, ankle = (rec.joint(j) for j in LEG_JOINTS[leg])
    thigh = _segment(hip, knee, "thigh")
    shank = _segment(knee, ankle, "shank")
    return AngleSeries("knee", leg, angle_between(thigh, shank), rec.t)


def hip_angle_series(cycle, leg):
    """Thigh inclination from the downward vertical over the cycle."""
    rec = _frames(cycle)
    hip, knee, _ = (rec.joint(j) for j in LEG_JOINTS[leg])
    thigh = _segment(hip, knee, "thigh")
    return AngleSeries("hip", leg, angle_between(thigh, DOWN), rec.t)


def range_of_motion(series):
    v = np.asarray(getattr(series, "values", series), dtype=np.float64)
    return float(v.max() - v.min())


def _first_run(mask):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return idx
    stop = np.flatnonzero(np.diff(idx) > 1)
    return idx[: stop[0] + 1] if stop.size else idx


def step_width(cycle):
    """Mean lateral ankle separation over the first double-support window.

    Raises
    ------
    NoDoubleSupport
        Contralateral events are missing or the legs are never both planted.
    """
    if any(ev is None for ev in cycle.events.values()):
        raise NoDoubleSupport("contralateral gait events unavailable")
    both = cycle.stationary["left"] & cycle.stationary["right"]
    window = _first_run(both)
    if window.size == 0:
        raise NoDoubleSupport("no frame with both ankles stationary")
    xl = cycle.frames.joint(LEG_JOINTS["left"][2])[window, 0]
    xr = cycle.frames.joint(LEG_JOINTS["right"][2])[window, 0]
    return float(np.mean(np.abs(xl - xr)))


def time_distance_indices(cycle, height_cm, strict=False):
    """Normalised velocity, normalised stride, stance fraction and step width.

    Parameters
    ----------
    cycle : GaitCycle
    height_cm : float
        Body height in centimetres.
    strict : bool
        Raise :class:`NoDoubleSupport` instead of reporting ``w = None``.

    Returns
    -------
    TimeDistance
        ``(v_n, l_n, s, w)``; ``v_n`` in 1/s, ``w`` in metres.
    """
    if not height_cm > 0:
        raise ValueError("height must be positive")
    h = height_cm / 100.0
    ev = cycle.ref_events
    ankle = cycle.frames.joint(LEG_JOINTS[cycle.reference_leg][2])
    stride = float(np.linalg.norm(ankle[-1] - ankle[0]))
    try:
        w = step_width(cycle)
    except NoDoubleSupport:
        if strict:
            raise
        w = None
    return TimeDistance(
        v_n=stride / ev.cycle_time / h,
        l_n=stride / h,
        s=ev.stance_fraction,
        w=w,
    )


@dataclass(frozen=True)
class GaitIndexSet:
    v_n: float
    l_n: float
    s: float
    w: float = None
    rom_hip: float = None
    rom_knee: float = None
    d_k: float = None
    d_h: float = None

    def as_dict(self):
        return asdict(self)

    def with_dtw(self, d_k=None, d_h=None):
        return replace(self, d_k=d_k, d_h=d_h)


def index_set(cycle, subject):
    """Local indices of one cycle; ``d_k`` and ``d_h`` are left unset."""
    height = getattr(subject, "height", subject)
    try:
        td = time_distance_indices(cycle, height)
    except GaitError as exc:
        raise type(exc)(f"time-distance indices: {exc}") from exc
    leg = cycle.reference_leg
    try:
        rom_hip = range_of_motion(hip_angle_series(cycle, leg))
        rom_knee = range_of_motion(knee_angle_series(cycle, leg))
    except GaitError as exc:
        raise type(exc)(f"joint angles: {exc}") from exc
    return GaitIndexSet(td.v_n, td.l_n, td.s, td.w, rom_hip, rom_knee)


def _mean_field(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    # averaging deviations from the minimum keeps the result order-free and
    # makes the mean of identical values equal that value exactly
    lo = min(vals)
    return lo + math.fsum(v - lo for v in vals) / len(vals)


def mean_index_set(sets):
    """Field-wise mean of index sets, ignoring absent values."""
    sets = list(sets)
    if not sets:
        raise ValueError("no index sets to average")
    return GaitIndexSet(**{f.name: _mean_field(getattr(s, f.name) for s in sets) for f in fields(GaitIndexSet)})


@dataclass
class TrialAnalysis:
    """Both legs' cycles of one trial with their indices and angle series."""

    subject_id: str
    trial_no: int
    cycles: dict  # leg -> GaitCycle
    indices: GaitIndexSet  # averaged over the analysed legs
    angles: dict  # (joint, leg) -> AngleSeries


def analyze_trial(rec, subject, threshold=DEFAULT_THRESHOLD):
    """Segment one cycle per leg and compute the trial's local indices.

    Indices of the two legs are averaged. A leg whose cycle cannot be
    extracted is skipped; if neither leg yields a cycle the error of the left
    leg is raised.
    """
    cycles, sets, angles, errors = {}, [], {}, {}
    for leg in LEG_JOINTS:
        try:
            cyc = extract_cycle(rec, leg, threshold)
            sets.append(index_set(cyc, subject))
            angles[("knee", leg)] = knee_angle_series(cyc, leg)
            angles[("hip", leg)] = hip_angle_series(cyc, leg)
            cycles[leg] = cyc
        except GaitError as exc:
            errors[leg] = exc
    if not cycles:
        raise errors["left"]
    for leg, exc in errors.items():
        log.info("%s trial %s: %s leg skipped: %s", rec.subject_id, rec.trial_no, leg, exc)
    return TrialAnalysis(rec.subject_id, rec.trial_no, cycles, mean_index_set(sets), angles)


def subject_indices(trials, subject, threshold=DEFAULT_THRESHOLD):
    """Per-subject indices: the mean over every trial that could be analysed.

    Returns ``(GaitIndexSet, analyses, failures)`` where ``failures`` maps
    trial numbers to the exception that excluded them.
    """
    analyses, failures = [], {}
    for rec in trials:
        try:
            analyses.append(analyze_trial(rec, subject, threshold))
        except GaitError as exc:
            log.warning("%s trial %s excluded: %s", rec.subject_id, rec.trial_no, exc)
            failures[rec.trial_no] = exc
    if not analyses:
        raise GaitError(f"{getattr(subject, 'subject_id', subject)}: no usable trial")
    return mean_index_set(a.indices for a in analyses), analyses, failures
