"""Group statistics for the gait indices: summaries, reliability, correlation
with clinical scores and patient/control comparison.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import f_quantile, t_two_sided
from .errors import (
    DegenerateVariance,
    GaitError,
    IncompleteMatrix,
    LengthMismatch,
    TooFew,
    ZeroVariance,
    ZeroVarianceDifferences,
)
from .kinematics import TABLE_ORDER

Z95 = 1.96
ICC_MODEL = "ICC(2,1) two-way random, absolute agreement, single measure"
CI_METHOD = "Fisher z, z +/- 1.96/sqrt(n-3)"

TIME_DISTANCE = ("v_n", "l_n", "s", "w")
ANGLE = ("rom_knee", "rom_hip", "d_k", "d_h")
SCORES = ("ambulation_score", "msws")

STAT_ROWS = (
    "ms_mean", "ms_sd", "control_mean", "control_sd",
    "ms_icc", "ms_icc_low", "ms_icc_high",
    "control_icc", "control_icc_low", "control_icc_high",
    "corr_ambulation", "corr_ambulation_low", "corr_ambulation_high",
    "corr_msws", "corr_msws_low", "corr_msws_high",
    "t", "df", "p",
)


@dataclass(frozen=True)
class GroupSummary:
    group: str
    index: str
    mean: float
    sd: float
    n: int


@dataclass(frozen=True)
class IccResult:
    icc: float
    ci_low: float
    ci_high: float
    n_subjects: int
    n_trials: int
    msr: float
    msc: float
    mse: float
    model: str = ICC_MODEL


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    ci_low: float
    ci_high: float
    n: int


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    pairing: str = "order"
    n: int = 0
    mean_diff: float = 0.0


def _finite(values, name="values"):
    x = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contain non-finite entries")
    return x


def group_summary(values, group="", index=""):
    """Sample mean and sample (n-1) standard deviation."""
    x = _finite(values)
    if x.size < 2:
        raise TooFew(f"group summary needs at least 2 values, got {x.size}")
    mean = math.fsum(x.tolist()) / x.size
    sd = math.sqrt(math.fsum(((x - mean) ** 2).tolist()) / (x.size - 1))
    return GroupSummary(group, index, mean, sd, int(x.size))


def icc(table, alpha=0.05):
    """Two-way random-effects, absolute-agreement, single-measure ICC.

    Parameters
    ----------
    table : array_like, shape (n_subjects, n_trials)
        Complete matrix; trials play the role of raters.

    Returns
    -------
    IccResult
        Point estimate with a ``1 - alpha`` confidence interval from the
        F distribution, using a Satterthwaite approximation for the
        denominator degrees of freedom.

    Raises
    ------
    IncompleteMatrix
        Missing (NaN) entries.
    DegenerateVariance
        All entries equal, so the coefficient is 0/0.
    """
    x = np.asarray(table, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("table must be two-dimensional")
    n, k = x.shape
    if n < 2 or k < 2:
        raise TooFew(f"ICC needs at least 2 subjects and 2 trials, got {n}x{k}")
    if not np.all(np.isfinite(x)):
        raise IncompleteMatrix("table has missing entries")
    if np.all(x == x.flat[0]):
        raise DegenerateVariance("all entries are identical")

    if np.all(np.ptp(x, axis=1) == 0):
        # every subject measured identically on every trial
        row_means = x[:, 0]
        gm = row_means.mean()
        msr = k * np.sum((row_means - gm) ** 2) / (n - 1)
        return IccResult(1.0, 1.0, 1.0, n, k, float(msr), 0.0, 0.0)

    gm = x.mean()
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    ssr = k * np.sum((row_means - gm) ** 2)
    ssc = n * np.sum((col_means - gm) ** 2)
    resid = x - row_means[:, None] - col_means[None, :] + gm
    sse = np.sum(resid ** 2)
    msr = ssr / (n - 1)
    msc = ssc / (k - 1)
    mse = sse / ((n - 1) * (k - 1))

    value = (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)
    low, high = _icc_ci(value, msr, msc, mse, n, k, alpha)
    return IccResult(float(value), low, high, n, k, float(msr), float(msc), float(mse))


def _icc_ci(value, msr, msc, mse, n, k, alpha):
    if value >= 1.0:
        return 1.0, 1.0
    a = k * value / (n * (1.0 - value))
    b = 1.0 + k * value * (n - 1) / (n * (1.0 - value))
    num = (a * msc + b * mse) ** 2
    den = (a * msc) ** 2 / (k - 1) + (b * mse) ** 2 / ((n - 1) * (k - 1))
    v = num / den if den > 0 else float(k - 1)
    q = 1.0 - alpha / 2.0
    f_lo = f_quantile(q, n - 1, v)
    f_hi = f_quantile(q, v, n - 1)
    c = k * msc + (k * n - k - n) * mse
    low = n * (msr - f_lo * mse) / (f_lo * c + n * msr)
    high = n * (f_hi * msr - mse) / (c + n * f_hi * msr)
    # the construction can step outside the coefficient's range for tiny samples
    low = float(min(max(low, -1.0), value))
    high = float(max(min(high, 1.0), value))
    return low, high


def fisher_ci(r, n, z=Z95):
    """Confidence interval for a correlation ``r`` estimated from ``n`` pairs."""
    if n < 4:
        raise TooFew(f"Fisher interval needs n >= 4, got {n}")
    if not -1.0 <= r <= 1.0:
        raise ValueError("r must lie in [-1, 1]")
    if abs(r) == 1.0:
        return float(r), float(r)
    zr = math.atanh(r)
    half = z / math.sqrt(n - 3)
    return math.tanh(zr - half), math.tanh(zr + half)


def pearson_ci(x, y, z=Z95):
    """Pearson correlation with a Fisher-z confidence interval."""
    x = _finite(x, "x")
    y = _finite(y, "y")
    if x.shape != y.shape:
        raise LengthMismatch(f"x has {x.size} values, y has {y.size}")
    n = x.size
    if n < 4:
        raise TooFew(f"correlation needs at least 4 pairs, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = math.fsum((dx * dx).tolist())
    syy = math.fsum((dy * dy).tolist())
    if sxx == 0 or syy == 0:
        raise ZeroVariance("a variable is constant")
    r = math.fsum((dx * dy).tolist()) / math.sqrt(sxx * syy)
    r = min(1.0, max(-1.0, r))
    lo, hi = fisher_ci(r, n, z)
    return CorrelationResult(r, lo, hi, n)


def paired_t(x, y, pairing="order"):
    """Paired t-test on ``d = x - y`` with a two-sided p-value."""
    x = _finite(x, "x")
    y = _finite(y, "y")
    if x.shape != y.shape:
        raise LengthMismatch(f"x has {x.size} values, y has {y.size}")
    n = x.size
    if n < 2:
        raise TooFew("paired t-test needs at least 2 pairs")
    d = x - y
    mean = math.fsum(d.tolist()) / n
    sd = math.sqrt(math.fsum(((d - mean) ** 2).tolist()) / (n - 1))
    if sd == 0:
        raise ZeroVarianceDifferences("all paired differences are equal")
    t = mean / (sd / math.sqrt(n))
    # report a strictly positive p even when it underflows
    p = max(t_two_sided(t, n - 1), math.ulp(0.0))
    return TTestResult(t, n - 1, min(p, 1.0), pairing, n, mean)


# -- cohort tables -----------------------------------------------------------------


@dataclass(frozen=True)
class CellError:
    """A statistic that could not be computed."""

    kind: str
    message: str = ""

    def __str__(self):
        return f"error:{self.kind}"


@dataclass
class CohortStats:
    """Statistics for every index, keyed ``cells[index][row]``.

    Row names are listed in :data:`STAT_ROWS`. A value is a float or a
    :class:`CellError`.
    """

    cells: dict
    pairs: list = field(default_factory=list)
    excluded: dict = field(default_factory=dict)

    def value(self, index, row):
        return self.cells[index][row]

    def table(self, indices):
        """Rows of ``(statistic, value per index)`` for one output table."""
        return [(row, [self.cells[i][row] for i in indices]) for row in STAT_ROWS]

    @staticmethod
    def metadata():
        return {"icc_model": ICC_MODEL, "correlation_ci": CI_METHOD, "t_test": "paired, two-sided"}


def _cell(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (GaitError, ValueError) as exc:
        return CellError(type(exc).__name__, str(exc))


def pair_subjects(patients, controls):
    """Patient/control pairs: the ``match`` field when set, else list order."""
    by_id = {c.subject_id: c for c in controls}
    if patients and all(getattr(p, "match", None) for p in patients):
        return [(p, by_id[p.match]) for p in patients if p.match in by_id], "match"
    return list(zip(patients, controls)), "order"


def _trial_matrix(trial_values, sids, index):
    """Subjects x trials matrix; subjects lacking a full set of trials are dropped."""
    rows = {}
    for sid in sids:
        vals = [getattr(s, index) for s in trial_values.get(sid, [])]
        rows[sid] = [np.nan if v is None else v for v in vals]
    if not rows:
        return np.empty((0, 0)), []
    k = max(len(v) for v in rows.values())
    keep = [sid for sid in sids if len(rows[sid]) == k and np.all(np.isfinite(rows[sid]))]
    return np.array([rows[s] for s in keep], dtype=np.float64).reshape(len(keep), k), [
        s for s in sids if s not in keep
    ]


def _unpack(res, names):
    if isinstance(res, CellError):
        return {n: res for n in names}
    return dict(zip(names, res))


def stats_tables(subjects, subject_values, trial_values, indices=TABLE_ORDER):
    """Compute the statistics tables for a cohort.

    Parameters
    ----------
    subjects : sequence of SubjectRecord
        In manifest order; patient/control pairing falls back to this order.
    subject_values : mapping
        ``{subject_id: GaitIndexSet}`` with per-subject (trial mean) values.
    trial_values : mapping
        ``{subject_id: [GaitIndexSet, ...]}`` per analysed trial, in trial
        order. Used for ICC (subjects x trials) and for the correlations,
        where every patient trial is paired with that patient's score.
    indices : sequence of str
        Index names to evaluate.

    Returns
    -------
    CohortStats
        Cells that fail carry a :class:`CellError` instead of aborting.
    """
    patients = [s for s in subjects if s.group == "patient" and s.subject_id in subject_values]
    controls = [s for s in subjects if s.group == "control" and s.subject_id in subject_values]
    pairs, pairing = pair_subjects(patients, controls)
    cells, excluded = {}, {}

    for index in indices:
        row = {}

        def values(group):
            vals = [getattr(subject_values[s.subject_id], index) for s in group]
            return [v for v in vals if v is not None]

        for prefix, group in (("ms", patients), ("control", controls)):
            gs = _cell(group_summary, values(group), prefix, index)
            row[f"{prefix}_mean"] = gs if isinstance(gs, CellError) else gs.mean
            row[f"{prefix}_sd"] = gs if isinstance(gs, CellError) else gs.sd
            mat, dropped = _trial_matrix(trial_values, [s.subject_id for s in group], index)
            if dropped:
                excluded[(prefix, index)] = dropped
            res = _cell(icc, mat)
            row.update(_unpack(
                res if isinstance(res, CellError) else (res.icc, res.ci_low, res.ci_high),
                (f"{prefix}_icc", f"{prefix}_icc_low", f"{prefix}_icc_high"),
            ))

        for score, name in zip(SCORES, ("ambulation", "msws")):
            xs, ys = [], []
            for p in patients:
                sc = getattr(p, score)
                for s in trial_values.get(p.subject_id, []):
                    v = getattr(s, index)
                    if v is not None and sc is not None:
                        xs.append(v)
                        ys.append(sc)
            res = _cell(pearson_ci, xs, ys)
            row.update(_unpack(
                res if isinstance(res, CellError) else (res.r, res.ci_low, res.ci_high),
                (f"corr_{name}", f"corr_{name}_low", f"corr_{name}_high"),
            ))

        xs, ys = [], []
        for p, c in pairs:
            a = getattr(subject_values[p.subject_id], index)
            b = getattr(subject_values[c.subject_id], index)
            if a is not None and b is not None:
                xs.append(a)
                ys.append(b)
        res = _cell(paired_t, xs, ys, pairing)
        row.update(_unpack(
            res if isinstance(res, CellError) else (res.t, res.df, res.p),
            ("t", "df", "p"),
        ))
        cells[index] = row

    return CohortStats(cells, [(p.subject_id, c.subject_id) for p, c in pairs], excluded)
