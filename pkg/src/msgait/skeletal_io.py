"""Skeletal trial recordings: parsing, serialisation, gap filling, artifacts.

Positions are metres in a frame with ``y`` along the walkway, ``z`` vertical
up and ``x`` lateral. A joint is *missing* in a frame when any of its three
coordinates is empty in the source file; missing samples are held as NaN
until :func:`interpolate_gaps` fills them.
"""
import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    GapAtBoundary,
    GapTooLong,
    InvalidParams,
    MalformedRow,
    ManifestError,
    MissingJoint,
    NonMonotoneTime,
    TooShort,
)


class JointId(str, Enum):
    HIP_CENTER = "HIP_CENTER"
    SPINE = "SPINE"
    SHOULDER_CENTER = "SHOULDER_CENTER"
    HEAD = "HEAD"
    SHOULDER_LEFT = "SHOULDER_LEFT"
    ELBOW_LEFT = "ELBOW_LEFT"
    WRIST_LEFT = "WRIST_LEFT"
    HAND_LEFT = "HAND_LEFT"
    SHOULDER_RIGHT = "SHOULDER_RIGHT"
    ELBOW_RIGHT = "ELBOW_RIGHT"
    WRIST_RIGHT = "WRIST_RIGHT"
    HAND_RIGHT = "HAND_RIGHT"
    HIP_LEFT = "HIP_LEFT"
    KNEE_LEFT = "KNEE_LEFT"
    ANKLE_LEFT = "ANKLE_LEFT"
    FOOT_LEFT = "FOOT_LEFT"
    HIP_RIGHT = "HIP_RIGHT"
    KNEE_RIGHT = "KNEE_RIGHT"
    ANKLE_RIGHT = "ANKLE_RIGHT"
    FOOT_RIGHT = "FOOT_RIGHT"


JOINT_NAMES = tuple(j.value for j in JointId)

MANDATORY_JOINTS = (
    "HIP_LEFT", "KNEE_LEFT", "ANKLE_LEFT",
    "HIP_RIGHT", "KNEE_RIGHT", "ANKLE_RIGHT",
)

LOWER_EXTREMITY = MANDATORY_JOINTS + ("FOOT_LEFT", "FOOT_RIGHT")

LEG_JOINTS = {
    "left": ("HIP_LEFT", "KNEE_LEFT", "ANKLE_LEFT"),
    "right": ("HIP_RIGHT", "KNEE_RIGHT", "ANKLE_RIGHT"),
}

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class SkeletalFrame:
    t: float
    pos: dict


@dataclass(frozen=True, eq=False)
class TrialRecording:
    """One walking capture.

    ``pos`` has shape ``(n_frames, n_joints, 3)`` with joints ordered as in
    ``joints``. Arrays are made read-only on construction.
    """

    subject_id: str
    trial_no: int
    t: np.ndarray
    joints: tuple
    pos: np.ndarray
    nominal_fps: float = field(default=None)

    def __post_init__(self):
        t = np.array(self.t, dtype=np.float64)
        pos = np.array(self.pos, dtype=np.float64)
        joints = tuple(str(getattr(j, "value", j)) for j in self.joints)
        if t.ndim != 1 or pos.shape != (t.shape[0], len(joints), 3):
            raise InvalidParams(f"pos shape {pos.shape} does not match {t.shape[0]} frames x {len(joints)} joints")
        if t.shape[0] < 2:
            raise TooShort("a recording needs at least two frames")
        if not np.all(np.isfinite(t)):
            raise NonMonotoneTime("non-finite timestamp")
        if np.any(np.diff(t) <= 0):
            k = int(np.argmax(np.diff(t) <= 0)) + 1
            raise NonMonotoneTime(f"timestamps not strictly increasing at frame {k}")
        unknown = [j for j in joints if j not in JOINT_NAMES]
        if unknown:
            raise MalformedRow(f"unknown joints {unknown}")
        missing = [j for j in MANDATORY_JOINTS if j not in joints]
        if missing:
            raise MissingJoint(f"mandatory joints absent: {missing}")
        if int(self.trial_no) < 1:
            raise InvalidParams("trial_no must be a positive integer")
        t.setflags(write=False)
        pos.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "trial_no", int(self.trial_no))
        if self.nominal_fps is None:
            object.__setattr__(self, "nominal_fps", float(1.0 / np.median(np.diff(t))))

    def __eq__(self, other):
        if not isinstance(other, TrialRecording):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.trial_no == other.trial_no
            and self.joints == other.joints
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.pos, other.pos, equal_nan=True)
            and self.nominal_fps == other.nominal_fps
        )

    __hash__ = None

    @property
    def n_frames(self):
        return self.t.shape[0]

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0])

    def joint(self, name):
        """``(n_frames, 3)`` positions of one joint."""
        return self.pos[:, self.joints.index(str(getattr(name, "value", name)))]

    def frames(self):
        for k in range(self.n_frames):
            yield SkeletalFrame(
                t=float(self.t[k]),
                pos={j: tuple(self.pos[k, i]) for i, j in enumerate(self.joints)},
            )

    def slice(self, start, stop):
        """Sub-recording over frames ``start:stop``; keeps the nominal rate."""
        return TrialRecording(
            self.subject_id, self.trial_no, self.t[start:stop], self.joints,
            self.pos[start:stop], self.nominal_fps,
        )

    def replace(self, **changes):
        kw = dict(subject_id=self.subject_id, trial_no=self.trial_no, t=self.t,
                  joints=self.joints, pos=self.pos, nominal_fps=self.nominal_fps)
        kw.update(changes)
        return TrialRecording(**kw)

    def missing_mask(self):
        """``(n_frames, n_joints)`` True where a joint is untracked."""
        return np.isnan(self.pos).any(axis=2)


# -- subjects and cohorts ---------------------------------------------------

GROUPS = ("patient", "control")


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    group: str
    sex: str = None
    age: float = None
    height: float = None  # cm
    weight: float = None  # kg
    ambulation_score: int = None
    msws: float = None
    match: str = None  # control paired with this patient

    def __post_init__(self):
        if self.group not in GROUPS:
            raise InvalidParams(f"{self.subject_id}: group must be one of {GROUPS}")
        if self.height is None or not self.height > 0:
            raise InvalidParams(f"{self.subject_id}: height must be positive (cm)")
        if self.group == "patient":
            if self.ambulation_score is None or self.msws is None:
                raise InvalidParams(f"{self.subject_id}: patients need ambulation_score and msws")
            if not 0 <= self.ambulation_score <= 9:
                raise InvalidParams(f"{self.subject_id}: ambulation_score outside 0..9")
            if not 0 <= self.msws <= 100:
                raise InvalidParams(f"{self.subject_id}: msws outside 0..100")
        elif self.ambulation_score is not None or self.msws is not None:
            raise InvalidParams(f"{self.subject_id}: controls carry no clinical scores")

    @property
    def height_m(self):
        return self.height / 100.0

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class CohortDataset:
    subjects: list
    trials: list
    m_p: int = None
    m_c: int = None

    def __post_init__(self):
        ids = {s.subject_id: s for s in self.subjects}
        counts = {sid: 0 for sid in ids}
        for tr in self.trials:
            if tr.subject_id not in ids:
                raise ManifestError(f"trial for unknown subject {tr.subject_id}")
            counts[tr.subject_id] += 1
        for sid, s in ids.items():
            m = self.m_p if s.group == "patient" else self.m_c
            if m is not None and counts[sid] != m:
                raise ManifestError(f"{sid} has {counts[sid]} trials, expected {m}")

    @property
    def n_p(self):
        return sum(s.group == "patient" for s in self.subjects)

    @property
    def n_c(self):
        return sum(s.group == "control" for s in self.subjects)

    def trials_of(self, subject_id):
        return sorted((t for t in self.trials if t.subject_id == subject_id), key=lambda t: t.trial_no)


# -- CSV / JSON -----------------------------------------------------------------


def _header_joints(header):
    if not header or header[0].strip() != "t":
        raise MalformedRow("first column must be the time column 't'")
    cols = {}
    for k, name in enumerate(header[1:], start=1):
        name = name.strip()
        joint, _, axis = name.rpartition("_")
        if axis not in AXES or not joint:
            raise MalformedRow(f"column {name!r} is not of the form <JOINT>_<x|y|z>")
        if joint not in JOINT_NAMES:
            raise MalformedRow(f"unknown joint {joint!r}")
        cols.setdefault(joint, {})[axis] = k
    joints = []
    for joint in JOINT_NAMES:
        if joint not in cols:
            continue
        if len(cols[joint]) != 3:
            if joint in MANDATORY_JOINTS:
                raise MissingJoint(f"incomplete coordinate triple for {joint}")
            raise MalformedRow(f"incomplete coordinate triple for {joint}")
        joints.append(joint)
    missing = [j for j in MANDATORY_JOINTS if j not in cols]
    if missing:
        raise MissingJoint(f"mandatory joints absent: {missing}")
    index = [[cols[j][a] for a in AXES] for j in joints]
    return tuple(joints), index


def _cell(text, line, col):
    text = text.strip()
    if text == "":
        return np.nan
    try:
        v = float(text)
    except ValueError:
        raise MalformedRow(f"line {line}, column {col}: non-numeric cell {text!r}") from None
    if not np.isfinite(v):
        raise MalformedRow(f"line {line}, column {col}: non-finite cell {text!r}")
    return v


def parse_trial(text, subject_id, trial_no):
    """Parse a trial CSV document into a :class:`TrialRecording`.

    The header is ``t`` followed by ``<JOINT>_x,<JOINT>_y,<JOINT>_z`` triples.
    Empty cells mark an untracked joint.
    """
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise TooShort("empty trial document")
    joints, index = _header_joints(rows[0])
    body = rows[1:]
    if len(body) < 2:
        raise TooShort(f"need at least 2 frames, got {len(body)}")
    width = len(rows[0])
    t = np.empty(len(body))
    pos = np.empty((len(body), len(joints), 3))
    for k, row in enumerate(body):
        line = k + 2
        if len(row) != width:
            raise MalformedRow(f"line {line}: expected {width} cells, got {len(row)}")
        tk = _cell(row[0], line, 0)
        if np.isnan(tk):
            raise MalformedRow(f"line {line}: empty timestamp")
        t[k] = tk
        for i, cols in enumerate(index):
            for a, c in enumerate(cols):
                pos[k, i, a] = _cell(row[c], line, c)
    d = np.diff(t)
    if np.any(d <= 0):
        k = int(np.argmax(d <= 0)) + 1
        raise NonMonotoneTime(f"timestamp at line {k + 2} does not increase")
    # a joint counts as missing as a whole when any coordinate is empty
    pos[np.isnan(pos).any(axis=2)] = np.nan
    return TrialRecording(subject_id, trial_no, t, joints, pos)


def _fmt(v, decimals):
    return "" if np.isnan(v) else f"{v:.{decimals}f}"


def serialize_trial(rec, decimals=6):
    """Render a recording as trial CSV text with fixed decimals."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t"] + [f"{j}_{a}" for j in rec.joints for a in AXES])
    for k in range(rec.n_frames):
        row = [_fmt(rec.t[k], decimals)]
        row += [_fmt(v, decimals) for v in rec.pos[k].ravel()]
        w.writerow(row)
    return out.getvalue()


def trial_to_json(rec):
    frames = []
    for k in range(rec.n_frames):
        fr = {"t": float(rec.t[k])}
        for i, j in enumerate(rec.joints):
            for a, ax in enumerate(AXES):
                v = rec.pos[k, i, a]
                fr[f"{j}_{ax}"] = None if np.isnan(v) else float(v)
        frames.append(fr)
    return json.dumps({"subject_id": rec.subject_id, "trial_no": rec.trial_no, "frames": frames})


def parse_trial_json(text, subject_id=None, trial_no=None):
    """Parse the JSON container: the same column names as the CSV, one object per frame."""
    doc = json.loads(text)
    frames = doc["frames"] if isinstance(doc, dict) else doc
    if not frames:
        raise TooShort("empty trial document")
    header = ["t"] + [k for k in frames[0] if k != "t"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for fr in frames:
        w.writerow(["" if fr.get(k) is None else repr(float(fr[k])) for k in header])
    if isinstance(doc, dict):
        subject_id = subject_id or doc.get("subject_id")
        trial_no = trial_no or doc.get("trial_no")
    return parse_trial(buf.getvalue(), subject_id, trial_no)


def load_trial(path, subject_id, trial_no):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        return parse_trial_json(text, subject_id, trial_no)
    return parse_trial(text, subject_id, trial_no)


def write_trial(rec, path, decimals=6):
    Path(path).write_text(serialize_trial(rec, decimals), encoding="utf-8")


# -- gap filling -------------------------------------------------------------------


def _runs(mask):
    """(start, stop) of maximal True runs in a boolean vector."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(m.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


def interpolate_gaps(rec, max_gap=3):
    """Fill untracked runs of at most ``max_gap`` frames by linear interpolation.

    Interpolation is per joint, in time, between the tracked frames on either
    side of the run. Timestamps are untouched.

    Raises
    ------
    GapTooLong
        A run is longer than ``max_gap`` frames.
    GapAtBoundary
        A run touches the first or last frame, so it has no bracketing frame.
    """
    missing = rec.missing_mask()
    if not missing.any():
        return rec
    pos = np.array(rec.pos)
    t = rec.t
    n = rec.n_frames
    for i, joint in enumerate(rec.joints):
        for start, stop in _runs(missing[:, i]):
            if start == 0 or stop == n:
                raise GapAtBoundary(f"{joint}: untracked frames {start}..{stop - 1} reach the recording edge")
            if stop - start > max_gap:
                raise GapTooLong(f"{joint}: gap of {stop - start} frames exceeds {max_gap}")
            lo, hi = start - 1, stop
            w = (t[start:stop] - t[lo]) / (t[hi] - t[lo])
            pos[start:stop, i] = pos[lo, i] + w[:, None] * (pos[hi, i] - pos[lo, i])
    return rec.replace(pos=pos)


# -- artifacts -------------------------------------------------------------------------

SPEED_BOUND = 4.0  # m/s
EXCLUDE_SEVERITY = 0.2


@dataclass(frozen=True)
class ArtifactReport:
    flagged: dict  # joint -> sorted frame indices
    severity: float
    recommendation: str  # "keep" or "exclude"
    speed_bound: float = SPEED_BOUND

    @property
    def n_flagged_frames(self):
        frames = set()
        for v in self.flagged.values():
            frames.update(int(k) for k in v)
        return len(frames)


def detect_artifacts(rec, speed_bound=SPEED_BOUND, exclude_above=EXCLUDE_SEVERITY):
    """Flag physically implausible jumps of lower-extremity joints.

    Frame ``k`` is flagged for a joint when the displacement from frame
    ``k - 1`` implies a speed above ``speed_bound`` (m/s). Severity is the
    fraction of frames flagged for any joint; the trial is recommended for
    exclusion when severity exceeds ``exclude_above``.
    """
    dt = np.diff(rec.t)
    flagged = {}
    any_flag = np.zeros(rec.n_frames, dtype=bool)
    for joint in LOWER_EXTREMITY:
        if joint not in rec.joints:
            continue
        p = rec.joint(joint)
        speed = np.linalg.norm(np.diff(p, axis=0), axis=1) / dt
        hit = np.flatnonzero(np.nan_to_num(speed, nan=0.0) > speed_bound) + 1
        flagged[joint] = hit
        any_flag[hit] = True
    severity = float(any_flag.mean())
    return ArtifactReport(
        flagged=flagged,
        severity=severity,
        recommendation="exclude" if severity > exclude_above else "keep",
        speed_bound=speed_bound,
    )


# -- manifest ----------------------------------------------------------------------------


@dataclass
class Manifest:
    """A cohort manifest: subjects plus the trial files belonging to each."""

    subjects: list
    trials: dict  # subject_id -> [(trial_no, Path)]
    root: Path = Path(".")
    m_p: int = None
    m_c: int = None

    def subject(self, subject_id):
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise KeyError(subject_id)

    @property
    def patients(self):
        return [s for s in self.subjects if s.group == "patient"]

    @property
    def controls(self):
        return [s for s in self.subjects if s.group == "control"]

    def to_json(self):
        subs = []
        for s in self.subjects:
            d = s.to_dict()
            d["trials"] = [
                {"trial_no": n, "path": Path(p).as_posix()} for n, p in self.trials.get(s.subject_id, [])
            ]
            subs.append(d)
        doc = {"subjects": subs}
        if self.m_p is not None:
            doc["m_p"] = self.m_p
        if self.m_c is not None:
            doc["m_c"] = self.m_c
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"


_SUBJECT_FIELDS = ("subject_id", "group", "sex", "age", "height", "weight", "ambulation_score", "msws", "match")


def load_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    return manifest_from_dict(doc, root=path.parent)


def manifest_from_dict(doc, root=Path(".")):
    if "subjects" not in doc:
        raise ManifestError("manifest lacks a 'subjects' list")
    subjects, trials = [], {}
    for entry in doc["subjects"]:
        fields = {k: entry[k] for k in _SUBJECT_FIELDS if k in entry}
        try:
            s = SubjectRecord(**fields)
        except TypeError as exc:
            raise ManifestError(str(exc)) from exc
        if s.subject_id in trials:
            raise ManifestError(f"duplicate subject {s.subject_id}")
        subjects.append(s)
        refs = []
        for k, tr in enumerate(entry.get("trials", []), start=1):
            if isinstance(tr, str):
                refs.append((k, Path(tr)))
            else:
                refs.append((int(tr.get("trial_no", k)), Path(tr["path"])))
        trials[s.subject_id] = refs
    m = Manifest(subjects, trials, Path(root), doc.get("m_p"), doc.get("m_c"))
    for s in subjects:
        want = m.m_p if s.group == "patient" else m.m_c
        if want is not None and len(trials[s.subject_id]) != want:
            raise ManifestError(f"{s.subject_id} lists {len(trials[s.subject_id])} trials, expected {want}")
    return m
