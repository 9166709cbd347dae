"""Reference tables and the discrepancy report.

A reference CSV has the columns ``table,row,column,value``. Rows of table
``subjects`` carry subject metadata and per-subject index values (stance as a
fraction); rows of table ``stats`` carry group statistics as printed text,
keyed by statistic (``row``) and index (``column``). A printed value is
matched to half a unit in its last printed decimal; values printed as powers
of ten are matched within half a decade.
"""
import csv
import io
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .cohort_stats import CellError, fisher_ci, group_summary, paired_t, pair_subjects
from .errors import GaitError
from .kinematics import TABLE_ORDER, GaitIndexSet
from .skeletal_io import SubjectRecord

_NUMERIC_META = {"age": float, "height": float, "weight": float, "ambulation_score": int, "msws": float}


@dataclass
class Reference:
    subjects: list  # SubjectRecord
    subject_values: dict  # subject_id -> GaitIndexSet
    stats: dict  # (index, row) -> printed text

    @property
    def patients(self):
        return [s for s in self.subjects if s.group == "patient"]

    @property
    def controls(self):
        return [s for s in self.subjects if s.group == "control"]


@dataclass(frozen=True)
class Discrepancy:
    section: str
    index: str
    row: str
    recomputed: float
    reference: str
    note: str = ""

    def line(self):
        rec = self.recomputed if isinstance(self.recomputed, (str, CellError)) else f"{self.recomputed:.6g}"
        text = f"{self.section}\t{self.index}\t{self.row}\trecomputed={rec}\treference={self.reference}"
        return text + (f"\t{self.note}" if self.note else "")


def bundled_path():
    return Path(str(resources.files("msgait") / "data" / "reference_tables.csv"))


def parse_reference(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    meta, values, stats, order = {}, {}, {}, []
    for r in rows:
        table, key, col, val = r["table"], r["row"], r["column"], r["value"]
        if table == "subjects":
            if key not in meta:
                order.append(key)
                meta[key] = {}
                values[key] = {}
            if col in TABLE_ORDER:
                values[key][col] = float(val)
            elif col in _NUMERIC_META:
                meta[key][col] = _NUMERIC_META[col](val)
            else:
                meta[key][col] = val
        elif table == "stats":
            stats[(col, key)] = val.strip()
        else:
            raise ValueError(f"unknown reference table {table!r}")
    subjects = [SubjectRecord(subject_id=sid, **meta[sid]) for sid in order]
    subject_values = {sid: GaitIndexSet(**values[sid]) for sid in order if values[sid]}
    return Reference(subjects, subject_values, stats)


def load_reference(path=None):
    """Load a reference CSV; defaults to the bundled reference tables."""
    path = Path(path) if path is not None else bundled_path()
    return parse_reference(path.read_text(encoding="utf-8"))


def printed_tolerance(text):
    """``("log", 0.5)`` for power-of-ten notation, else ``("abs", half unit)``."""
    t = text.strip().lower()
    if "e" in t:
        return "log", 0.5
    decimals = len(t.split(".")[1]) if "." in t else 0
    return "abs", 0.5 * 10.0 ** -decimals


def agrees(value, text):
    """Whether ``value`` is consistent with the printed ``text``."""
    if isinstance(value, CellError) or value is None or not math.isfinite(value):
        return False
    kind, tol = printed_tolerance(text)
    ref = float(text)
    if kind == "log":
        return value > 0 and abs(math.log10(value) - math.log10(ref)) <= tol
    # a hair of slack for values sitting exactly on a rounding boundary
    return abs(value - ref) <= tol * (1 + 1e-9)


def _compare(section, index, row, value, text, note=""):
    if agrees(value, text):
        return None
    return Discrepancy(section, index, row, value, text, note)


def internal_consistency(ref, trials_per_patient=5):
    """Recompute what the reference's own subject rows imply about its statistics.

    Group means and SDs and paired t-test p-values are recomputed from the
    per-subject rows. Correlation intervals are recomputed from the printed
    ``r`` with ``n = n_patients * trials_per_patient``.
    """
    out = []
    section = "reference-internal"
    pairs, pairing = pair_subjects(ref.patients, ref.controls)
    for index in TABLE_ORDER:
        for prefix, group in (("ms", ref.patients), ("control", ref.controls)):
            vals = [getattr(ref.subject_values[s.subject_id], index) for s in group
                    if s.subject_id in ref.subject_values]
            try:
                gs = group_summary(vals, prefix, index)
            except GaitError:
                continue
            for row, v in ((f"{prefix}_mean", gs.mean), (f"{prefix}_sd", gs.sd)):
                if (index, row) in ref.stats:
                    out.append(_compare(section, index, row, v, ref.stats[(index, row)]))
        if (index, "p") in ref.stats:
            xs = [getattr(ref.subject_values[p.subject_id], index) for p, _ in pairs]
            ys = [getattr(ref.subject_values[c.subject_id], index) for _, c in pairs]
            try:
                res = paired_t(xs, ys, pairing)
                out.append(_compare(section, index, "p", res.p, ref.stats[(index, "p")],
                                    f"t={res.t:.4g} df={res.df} subject-level"))
            except GaitError as exc:
                out.append(Discrepancy(section, index, "p", CellError(type(exc).__name__), ref.stats[(index, "p")]))
        n = len(ref.patients) * trials_per_patient
        for score in ("ambulation", "msws"):
            key = (index, f"corr_{score}")
            if key not in ref.stats:
                continue
            lo, hi = fisher_ci(float(ref.stats[key]), n)
            for row, v in ((f"corr_{score}_low", lo), (f"corr_{score}_high", hi)):
                if (index, row) in ref.stats:
                    out.append(_compare(section, index, row, v, ref.stats[(index, row)],
                                        f"Fisher interval from printed r, n={n}"))
    return [d for d in out if d is not None]


def compare_stats(stats, ref, section="cohort-vs-reference"):
    """Every cohort statistic that disagrees with the reference's printed value."""
    out = []
    for (index, row), text in sorted(ref.stats.items(), key=lambda kv: (TABLE_ORDER.index(kv[0][0]), kv[0][1])):
        if index not in stats.cells or row not in stats.cells[index]:
            continue
        d = _compare(section, index, row, stats.cells[index][row], text)
        if d is not None:
            out.append(d)
    return out


def format_report(discrepancies):
    """Tab-separated discrepancy lines; an empty list gives an empty report."""
    return "".join(d.line() + "\n" for d in discrepancies)
