"""Dynamic time warping and the cohort-level mean DTW distance.

Local cost is the absolute difference of samples, steps are ``(1, 0)``,
``(0, 1)`` and ``(1, 1)``, and the distance is the raw (unnormalised) sum of
local costs along the optimal warping path. Paths are 0-based here.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CohortTooSmall, EmptyCohort, EmptySequence, MissingLeg, TooLong

LEGS = ("left", "right")

BRUTE_FORCE_MAX_LEN = 10


def local_cost(a, b):
    """Mismatch between two samples: ``|a - b|``."""
    return abs(a - b)


def cost_matrix(a, b):
    """Matrix ``C[n, m] = local_cost(a[n], b[m])``."""
    a = _sequence(a)
    b = _sequence(b)
    return np.abs(a[:, None] - b[None, :])


@dataclass(frozen=True)
class DtwResult:
    distance: float
    path: np.ndarray  # (L, 2) int, 0-based index pairs

    def __len__(self):
        return len(self.path)


def _sequence(x):
    arr = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0:
        raise EmptySequence("DTW needs non-empty sequences")
    if not np.all(np.isfinite(arr)):
        raise ValueError("sequence contains non-finite values")
    return arr


def _backtrack(acc):
    # acc is padded: acc[i, j] holds the cost up to 1-based cell (i, j)
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    path = [(i - 1, j - 1)]
    while (i, j) != (1, 1):
        diag = acc[i - 1, j - 1] if i > 1 and j > 1 else np.inf
        vert = acc[i - 1, j] if i > 1 else np.inf
        horiz = acc[i, j - 1] if j > 1 else np.inf
        # ties: diagonal, then vertical, then horizontal
        if diag <= vert and diag <= horiz:
            i, j = i - 1, j - 1
        elif vert <= horiz:
            i -= 1
        else:
            j -= 1
        path.append((i - 1, j - 1))
    path.reverse()
    return np.asarray(path, dtype=np.int64)


def dtw(a, b):
    """Optimal warping path and DTW distance between two 1-D sequences.

    Parameters
    ----------
    a, b : array_like or AngleSeries
        Non-empty sequences of finite samples.

    Returns
    -------
    DtwResult
        ``distance`` is the accumulated cost at the last cell and ``path`` the
        optimal warping path recovered by backtracking.
    """
    a = _sequence(a)
    b = _sequence(b)
    acc = kernels.accumulate(a, b)
    return DtwResult(distance=float(acc[-1, -1]), path=_backtrack(acc))


def dtw_distance(a, b):
    """Distance only; skips the path and the full matrix."""
    return kernels.distance(_sequence(a), _sequence(b))


def path_cost(a, b, path):
    """Total cost along ``path``, summed in path order."""
    a = _sequence(a)
    b = _sequence(b)
    total = 0.0
    for n, m in path:
        total += local_cost(a[n], b[m])
    return total


def is_warping_path(path, n, m):
    """Check boundary, monotonicity and step-size conditions."""
    path = np.asarray(path)
    if path.ndim != 2 or path.shape[1] != 2 or len(path) == 0:
        return False
    if tuple(path[0]) != (0, 0) or tuple(path[-1]) != (n - 1, m - 1):
        return False
    steps = np.diff(path, axis=0)
    ok = {(1, 0), (0, 1), (1, 1)}
    if any(tuple(s) not in ok for s in steps):
        return False
    return max(n, m) <= len(path) <= n + m - 1


def brute_force_dtw(a, b):
    """Minimum total cost over every warping path, by exhaustive enumeration.

    Only intended as an oracle for :func:`dtw`; both sequences must have at
    most 10 samples since the number of paths grows exponentially.
    """
    a = _sequence(a)
    b = _sequence(b)
    n, m = len(a), len(b)
    if n > BRUTE_FORCE_MAX_LEN or m > BRUTE_FORCE_MAX_LEN:
        raise TooLong(f"brute force limited to {BRUTE_FORCE_MAX_LEN} samples, got {n}x{m}")
    a_list = a.tolist()
    b_list = b.tolist()
    best = math.inf
    # explicit stack of (i, j, cost-so-far); costs accumulate in path order
    stack = [(0, 0, abs(a_list[0] - b_list[0]))]
    while stack:
        i, j, total = stack.pop()
        if i == n - 1 and j == m - 1:
            if total < best:
                best = total
            continue
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < n and nj < m:
                stack.append((ni, nj, total + abs(a_list[ni] - b_list[nj])))
    return best


# -- mean DTW over a cohort ---------------------------------------------------


@dataclass
class MeanDtw:
    """Mean DTW distance of one subject against a reference set of controls.

    ``distances[leg]`` has one row per subject trial carrying that leg and one
    column per reference series, labelled by ``references[leg]`` as
    ``(subject_id, trial_index)``.
    """

    value: float
    per_leg: dict
    per_trial: np.ndarray
    distances: dict = field(repr=False)
    references: dict = field(repr=False)
    trial_index: dict = field(repr=False)

    @property
    def n_evaluations(self):
        return int(sum(d.size for d in self.distances.values()))


def _leg_series(trial, leg):
    s = trial.get(leg) if hasattr(trial, "get") else None
    if s is None:
        return None
    return _sequence(s)


def _reference_set(controls, exclude=None):
    refs = {leg: [] for leg in LEGS}
    labels = {leg: [] for leg in LEGS}
    for sid, trials in controls.items():
        if sid == exclude:
            continue
        for r, trial in enumerate(trials):
            for leg in LEGS:
                s = _leg_series(trial, leg)
                if s is not None:
                    refs[leg].append(s)
                    labels[leg].append((sid, r))
    return refs, labels


def _aggregate(trials, refs, labels, precomputed=None):
    distances = {}
    trial_index = {}
    per_leg = {}
    for leg in LEGS:
        rows = [(j, _leg_series(t, leg)) for j, t in enumerate(trials)]
        rows = [(j, s) for j, s in rows if s is not None]
        if not rows:
            raise MissingLeg(f"no subject series for the {leg} leg")
        if not refs[leg]:
            raise MissingLeg(f"no reference series for the {leg} leg")
        if precomputed is not None:
            mat = precomputed(leg, [j for j, _ in rows], labels[leg])
        else:
            mat = kernels.pairwise([s for _, s in rows], refs[leg])
        distances[leg] = mat
        trial_index[leg] = [j for j, _ in rows]
        # fsum is correctly rounded, so the mean does not depend on the
        # order in which trials or reference subjects are visited
        per_leg[leg] = math.fsum(mat.ravel().tolist()) / mat.size

    value = 0.5 * (per_leg["left"] + per_leg["right"])
    per_trial = np.full(len(trials), np.nan)
    for j in range(len(trials)):
        legs = []
        for leg in LEGS:
            if j in trial_index[leg]:
                row = distances[leg][trial_index[leg].index(j)]
                legs.append(math.fsum(row.tolist()) / row.size)
        if legs:
            per_trial[j] = sum(legs) / len(legs)
    return MeanDtw(
        value=value,
        per_leg=per_leg,
        per_trial=per_trial,
        distances=distances,
        references=labels,
        trial_index=trial_index,
    )


def mean_dtw_patient(patient_trials, controls):
    """Mean DTW distance of a patient's joint-angle series against all controls.

    Parameters
    ----------
    patient_trials : sequence of mapping
        One mapping per trial, ``{"left": series, "right": series}``, for a
        single joint (knee or hip).
    controls : mapping
        ``{subject_id: [trial mappings as above]}`` for every control subject.

    Left series are compared only with left series and right with right. Each
    leg's distances are averaged, then the two leg averages are averaged.
    """
    if not patient_trials:
        raise EmptyCohort("patient has no trials")
    if not controls:
        raise EmptyCohort("no control subjects")
    refs, labels = _reference_set(controls)
    return _aggregate(list(patient_trials), refs, labels)


def mean_dtw_control(subject_id, controls):
    """Leave-self-out mean DTW distance for control ``subject_id``.

    The subject's trials are compared with the trials of every *other*
    control subject; the aggregation is otherwise identical to
    :func:`mean_dtw_patient`.
    """
    if len(controls) < 2:
        raise CohortTooSmall("leave-self-out needs at least two control subjects")
    if subject_id not in controls:
        raise KeyError(subject_id)
    trials = list(controls[subject_id])
    if not trials:
        raise EmptyCohort(f"control {subject_id} has no trials")
    refs, labels = _reference_set(controls, exclude=subject_id)
    return _aggregate(trials, refs, labels)


def cohort_mean_dtw(patients, controls):
    """Mean DTW for every patient and (leave-self-out) every control.

    Evaluates one batched distance matrix per leg, each subject series
    against each control series, and slices it per subject. Returns
    ``(patient_results, control_results)`` keyed by subject id; subjects whose
    aggregation fails are mapped to the raised exception instead.
    """
    if not controls:
        raise EmptyCohort("no control subjects")
    ref_all, lab_all = _reference_set(controls)
    col = {leg: {lab: k for k, lab in enumerate(lab_all[leg])} for leg in LEGS}

    subjects = [("patient", sid, list(t)) for sid, t in patients.items()]
    subjects += [("control", sid, list(t)) for sid, t in controls.items()]
    row_series = {leg: [] for leg in LEGS}
    row_of = {leg: {} for leg in LEGS}
    for kind, sid, trials in subjects:
        for j, trial in enumerate(trials):
            for leg in LEGS:
                s = _leg_series(trial, leg)
                if s is not None:
                    row_of[leg][(kind, sid, j)] = len(row_series[leg])
                    row_series[leg].append(s)
    full = {
        leg: kernels.pairwise(row_series[leg], ref_all[leg]) if row_series[leg] and ref_all[leg]
        else np.empty((len(row_series[leg]), len(ref_all[leg])))
        for leg in LEGS
    }

    out_p, out_c = {}, {}
    for kind, sid, trials in subjects:
        exclude = sid if kind == "control" else None

        def sliced(leg, js, labels, kind=kind, sid=sid):
            rows = [row_of[leg][(kind, sid, j)] for j in js]
            cols = [col[leg][lab] for lab in labels]
            return full[leg][np.ix_(rows, cols)]

        try:
            if not trials:
                raise EmptyCohort(f"{sid} has no trials")
            if kind == "control" and len(controls) < 2:
                raise CohortTooSmall("leave-self-out needs at least two control subjects")
            refs, labels = _reference_set(controls, exclude=exclude)
            res = _aggregate(trials, refs, labels, precomputed=sliced)
        except (EmptyCohort, CohortTooSmall, MissingLeg) as exc:
            res = exc
        (out_p if kind == "patient" else out_c)[sid] = res
    return out_p, out_c
