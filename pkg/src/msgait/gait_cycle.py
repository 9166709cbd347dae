"""Gait event detection from ankle motion and single-cycle extraction.

A frame is *stationary* for a leg when its smoothed ankle speed is at most
``threshold * max(speed)``. A cycle runs from the start of a stationary run
(heel strike) over its end (toe-off) to the start of the next stationary run
(terminal swing).
"""
from dataclasses import dataclass

import numpy as np

from .errors import NoCycleFound, TooFewFrames
from .skeletal_io import LEG_JOINTS

DEFAULT_THRESHOLD = 0.15
SMOOTH_WINDOW = 5
MIN_CYCLE_FRAMES = 10
# peak speeds below this (m/s) are differentiation round-off, not motion
MOTION_FLOOR = 1e-6


def other_leg(leg):
    return "right" if leg == "left" else "left"


@dataclass(frozen=True)
class GaitEvents:
    leg: str
    t_hs: float
    t_to: float
    t_ts: float
    hs_frame: int = None
    to_frame: int = None
    ts_frame: int = None

    def __post_init__(self):
        if not self.t_hs < self.t_to < self.t_ts:
            raise ValueError(f"event order violated: {self.t_hs}, {self.t_to}, {self.t_ts}")

    @property
    def cycle_time(self):
        return self.t_ts - self.t_hs

    @property
    def stance_fraction(self):
        return (self.t_to - self.t_hs) / (self.t_ts - self.t_hs)

    def to_dict(self):
        return {"t_hs": self.t_hs, "t_to": self.t_to, "t_ts": self.t_ts}


@dataclass(frozen=True)
class GaitCycle:
    """One complete cycle of the reference leg plus both legs' stance masks.

    ``frames`` spans ``[t_hs, t_ts]`` of the reference leg inclusive.
    ``events`` maps each leg to its detected events, or ``None`` when the
    contralateral detection failed. ``stationary`` holds per-leg boolean masks
    aligned with ``frames``.
    """

    reference_leg: str
    events: dict
    frames: object
    stationary: dict

    @property
    def ref_events(self):
        return self.events[self.reference_leg]

    @property
    def cycle_time(self):
        return self.ref_events.cycle_time

    @property
    def t(self):
        return self.frames.t


def moving_average(x, window=SMOOTH_WINDOW):
    """Centred moving average whose window shrinks symmetrically at the edges.

    Keeping the window centred at the edges avoids shifting events that sit
    close to the start or end of a recording.
    """
    x = np.asarray(x, dtype=np.float64)
    half = window // 2
    n = x.shape[0]
    c = np.concatenate([[0.0], np.cumsum(x)])
    k = np.arange(n)
    h = np.minimum(np.minimum(k, n - 1 - k), half)
    return (c[k + h + 1] - c[k - h]) / (2 * h + 1)


def ankle_speed(rec, leg, window=SMOOTH_WINDOW):
    """Smoothed ankle speed (m/s) for ``leg``, one value per frame.

    Velocity is the central difference of the ankle position (one-sided at
    the two ends), its magnitude is then smoothed by :func:`moving_average`.
    """
    p = rec.joint(LEG_JOINTS[leg][2])
    v = np.gradient(p, rec.t, axis=0)
    return moving_average(np.linalg.norm(v, axis=1), window)


def stationary_mask(speed, threshold=DEFAULT_THRESHOLD):
    speed = np.asarray(speed, dtype=np.float64)
    # a frame exactly on the threshold counts as stationary
    return speed <= threshold * speed.max()


def _runs(mask):
    m = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(m))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def detect_gait_events(speed, t, threshold=DEFAULT_THRESHOLD, leg="left"):
    """Heel strike, toe-off and terminal swing from an ankle speed series.

    Stationary runs of a single frame are treated as moving unless they end
    the recording. A stationary run touching the first frame may be a stance
    already in progress when capture started, so it is used only if no later
    complete cycle exists.

    Raises
    ------
    NoCycleFound
        Fewer than two stationary runs separated by motion.
    """
    speed = np.asarray(speed, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if speed.shape != t.shape:
        raise ValueError("speed and t must have the same length")
    n = speed.shape[0]
    if n < 2 or not speed.max() > MOTION_FLOOR:
        raise NoCycleFound("ankle never moves")
    runs = [r for r in _runs(stationary_mask(speed, threshold)) if r[1] > r[0] or r[1] == n - 1]
    if len(runs) < 2:
        raise NoCycleFound(f"{leg}: need two stationary runs separated by motion, found {len(runs)}")
    pairs = list(zip(runs[:-1], runs[1:]))
    stance, nxt = next(((a, b) for a, b in pairs if a[0] > 0), pairs[0])
    hs, to, ts = stance[0], stance[1], nxt[0]
    return GaitEvents(leg, float(t[hs]), float(t[to]), float(t[ts]), hs, to, ts)


def _stationary_both(rec, threshold):
    return {leg: stationary_mask(ankle_speed(rec, leg), threshold) for leg in LEG_JOINTS}


def cycle_from_events(rec, events, contra_events=None, stationary=None,
                      threshold=DEFAULT_THRESHOLD, min_frames=MIN_CYCLE_FRAMES):
    """Build a :class:`GaitCycle` from known reference-leg events.

    ``stationary`` may supply full-length per-leg masks (for example from a
    generator's ground truth); otherwise they are derived from ankle speed.
    """
    hs, ts = events.hs_frame, events.ts_frame
    if hs is None or ts is None:
        hs = int(np.argmin(np.abs(rec.t - events.t_hs)))
        ts = int(np.argmin(np.abs(rec.t - events.t_ts)))
    if ts - hs + 1 < min_frames:
        raise TooFewFrames(f"cycle spans {ts - hs + 1} frames, need {min_frames}")
    if stationary is None:
        stationary = _stationary_both(rec, threshold)
    ref = events.leg
    return GaitCycle(
        reference_leg=ref,
        events={ref: events, other_leg(ref): contra_events},
        frames=rec.slice(hs, ts + 1),
        stationary={leg: np.asarray(m[hs:ts + 1], dtype=bool) for leg, m in stationary.items()},
    )


def extract_cycle(rec, leg="left", threshold=DEFAULT_THRESHOLD, min_frames=MIN_CYCLE_FRAMES):
    """Detect events on both legs and cut the first complete cycle of ``leg``.

    The contralateral events are only needed for the double-support window;
    if they cannot be detected they are recorded as ``None``.
    """
    speeds = {lg: ankle_speed(rec, lg) for lg in LEG_JOINTS}
    events = detect_gait_events(speeds[leg], rec.t, threshold, leg)
    try:
        contra = detect_gait_events(speeds[other_leg(leg)], rec.t, threshold, other_leg(leg))
    except NoCycleFound:
        contra = None
    stationary = {lg: stationary_mask(s, threshold) for lg, s in speeds.items()}
    return cycle_from_events(rec, events, contra, stationary, threshold, min_frames)
