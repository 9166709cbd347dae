"""Box plots as standalone SVG documents with a backing CSV.

Quartiles use linear interpolation between order statistics (numpy's default
``linear`` method). Whiskers reach the most extreme observations within
1.5 IQR of the box, or stop at the box edge when no observation lies between;
anything beyond the fences is drawn as an outlier. Every number
printed in the SVG is taken from the CSV text, so the two always agree.
"""
import csv
import io
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .errors import EmptyGroup

QUANTILE_METHOD = "linear"
WHISKER_IQR = 1.5

CSV_FIELDS = ("group", "n", "min", "q1", "median", "q3", "max", "whisker_low", "whisker_high", "outliers")


def fmt(x):
    return f"{x:.6g}"


@dataclass(frozen=True)
class BoxStats:
    group: str
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    whisker_low: float
    whisker_high: float
    outliers: tuple

    def row(self):
        return {
            "group": self.group,
            "n": str(self.n),
            **{k: fmt(getattr(self, k)) for k in CSV_FIELDS[2:-1]},
            "outliers": ";".join(fmt(v) for v in self.outliers),
        }


def box_stats(values, group=""):
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise EmptyGroup(f"group {group!r} has no values")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method=QUANTILE_METHOD)
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - WHISKER_IQR * iqr, q3 + WHISKER_IQR * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = tuple(float(v) for v in x[(x < lo_fence) | (x > hi_fence)])
    # a whisker never starts inside the box
    w_lo, w_hi = min(inside[0], q1), max(inside[-1], q3)
    return BoxStats(
        group, int(x.size), float(x[0]), float(q1), float(med), float(q3), float(x[-1]),
        float(w_lo), float(w_hi), outliers,
    )


def boxplot_csv(stats):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for s in stats:
        w.writerow(s.row())
    return buf.getvalue()


def _svg(stats, rows, title, width=360, height=300):
    pad_l, pad_r, pad_t, pad_b = 50, 20, 40, 40
    lo = min(s.min for s in stats)
    hi = max(s.max for s in stats)
    span = hi - lo if hi > lo else (abs(hi) or 1.0)
    lo, hi = lo - 0.08 * span, hi + 0.08 * span

    def y(v):
        return pad_t + (hi - v) / (hi - lo) * (height - pad_t - pad_b)

    slot = (width - pad_l - pad_r) / len(stats)
    half = min(30.0, slot / 4)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<title>{escape(title)}</title>",
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    for k, (s, r) in enumerate(zip(stats, rows)):
        cx = pad_l + slot * (k + 0.5)
        data = " ".join(f"data-{f.replace('_', '-')}={quoteattr(r[f])}" for f in CSV_FIELDS[1:])
        out.append(f'<g class="box" data-group={quoteattr(s.group)} {data}>')
        out.append(f"<title>{escape(s.group)}: median {r['median']}, IQR {r['q1']} to {r['q3']}</title>")
        out.append(
            f'<line x1="{cx:.1f}" y1="{y(s.whisker_low):.1f}" x2="{cx:.1f}" y2="{y(s.whisker_high):.1f}" stroke="black"/>'
        )
        for v in (s.whisker_low, s.whisker_high):
            out.append(
                f'<line x1="{cx - half / 2:.1f}" y1="{y(v):.1f}" x2="{cx + half / 2:.1f}" y2="{y(v):.1f}" stroke="black"/>'
            )
        top, bottom = y(s.q3), y(s.q1)
        out.append(
            f'<rect x="{cx - half:.1f}" y="{top:.1f}" width="{2 * half:.1f}" height="{max(bottom - top, 0.0):.1f}" '
            f'fill="#cfe0f3" stroke="black"/>'
        )
        out.append(
            f'<line x1="{cx - half:.1f}" y1="{y(s.median):.1f}" x2="{cx + half:.1f}" y2="{y(s.median):.1f}" '
            f'stroke="#b22222" stroke-width="2"/>'
        )
        for v, txt in zip(s.outliers, r["outliers"].split(";") if r["outliers"] else []):
            out.append(f'<circle cx="{cx:.1f}" cy="{y(v):.1f}" r="3" fill="none" stroke="black"><title>{txt}</title></circle>')
        out.append(f'<text x="{cx + half + 4:.1f}" y="{y(s.median) + 4:.1f}">{r["median"]}</text>')
        out.append(f'<text x="{cx:.1f}" y="{height - pad_b + 16:.1f}" text-anchor="middle">{escape(s.group)} (n={r["n"]})</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_boxplot(values_per_group, index_name, unit=""):
    """Build the SVG document and its backing CSV for one index.

    Parameters
    ----------
    values_per_group : mapping
        Group label to values, drawn in the mapping's order.
    index_name : str
    unit : str, optional
        Appended to the title in brackets.

    Returns
    -------
    (str, str)
        SVG text and CSV text.
    """
    if not values_per_group:
        raise EmptyGroup("no groups to plot")
    stats = [box_stats(v, g) for g, v in values_per_group.items()]
    text = boxplot_csv(stats)
    rows = list(csv.DictReader(io.StringIO(text)))
    title = f"{index_name} [{unit}]" if unit else index_name
    return _svg(stats, rows, title), text
