"""
Writing reports to disk: full JSON, tabular CSV series and an optional
self-contained SVG histogram.

CSV column orders:

* histograms: ``k_over_n, count``
* statistics: ``statistic, estimate, se, ci95_low, ci95_high, samples``
* bound curves: ``alpha, theta, kstar_limit, expected_count, lower_L``
* flows: ``t, rho_min, rho_max``
* experiment tables (fatou, scaling): keys of the first row, in order
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

HISTOGRAM_COLUMNS = ("k_over_n", "count")
STATS_COLUMNS = ("statistic", "estimate", "se", "ci95_low", "ci95_high", "samples")
CURVE_COLUMNS = ("alpha", "theta", "kstar_limit", "expected_count", "lower_L")
FLOW_COLUMNS = ("t", "rho_min", "rho_max")

OUTPUT_ENV = "MFGSTOP_OUTPUT_DIR"


def output_dir(flag: Optional[str], default: str = ".") -> Path:
    """``--out`` wins, then ``$MFGSTOP_OUTPUT_DIR``, then ``default``."""
    return Path(flag or os.environ.get(OUTPUT_ENV) or default)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


def csv_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def stats_rows(stats: dict) -> list[dict]:
    rows = []
    for name, est in stats.items():
        d = est if isinstance(est, dict) else est.to_dict()
        rows.append({"statistic": name, "estimate": d["estimate"], "se": d["se"],
                     "ci95_low": d["ci95"][0], "ci95_high": d["ci95"][1],
                     "samples": d["samples"]})
    return rows


# -- SVG ---------------------------------------------------------------------

def _nice_step(top: float) -> float:
    raw = top / 5.0
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        if m * mag >= raw:
            return m * mag
    return 10 * mag


def histogram_svg(rows: Sequence[dict], title: str = "", width: int = 640,
                  height: int = 400, bin_width: Optional[float] = None) -> str:
    """
    Bars of sample counts over ``k/n`` in ``[0, 1]``.

    :param rows: dicts with ``k_over_n`` and ``count``
    :param bin_width: bar width in ``k/n`` units; thin bars when None
    """
    left, right, top, bottom = 70, 20, 30, 55
    pw, ph = width - left - right, height - top - bottom
    peak = max((r["count"] for r in rows), default=0)
    ymax = max(peak, 1)
    step = _nice_step(ymax)
    ymax = step * math.ceil(ymax / step)

    def xp(v):
        return left + v * pw

    def yp(v):
        return top + ph - v / ymax * ph

    bar_w = max((bin_width or 0.0) * pw, 1.0)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">'
                   f'{escape(title)}</text>')
    for r in rows:
        if r["count"] <= 0:
            continue
        x = xp(r["k_over_n"]) - bar_w / 2
        y = yp(r["count"])
        out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" '
                   f'height="{top + ph - y:.2f}" fill="#3b6ea5"/>')
    # axes
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" '
               f'y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" '
               f'stroke="black"/>')
    for i in range(5):
        v = i / 4
        out.append(f'<line x1="{xp(v):.1f}" y1="{top + ph}" x2="{xp(v):.1f}" '
                   f'y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{xp(v):.1f}" y="{top + ph + 18}" '
                   f'text-anchor="middle">{v:g}</text>')
    tick = 0.0
    while tick <= ymax + 1e-9:
        out.append(f'<line x1="{left - 5}" y1="{yp(tick):.1f}" x2="{left}" '
                   f'y2="{yp(tick):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{yp(tick) + 4:.1f}" '
                   f'text-anchor="end">{tick:g}</text>')
        tick += step
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" '
               f'text-anchor="middle">Locations k/n</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">'
               f'number of samples</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# -- emission ----------------------------------------------------------------

def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def emit_report(report, out: Path, stem: str, formats: Sequence[str] = ("json", "csv", "svg")
                ) -> list[Path]:
    """
    Write a Monte Carlo report as ``<stem>.json``, CSV files and SVG
    histograms. I/O errors propagate to the caller.
    """
    doc = report.to_dict() if hasattr(report, "to_dict") else report
    written = []
    if "json" in formats:
        written.append(_write(out / f"{stem}.json", json_text(doc)))
    hists = doc.get("histograms", {})
    for name, h in hists.items():
        suffix = "" if name == "main" else f"_{name}"
        if "csv" in formats:
            written.append(_write(out / f"{stem}{suffix}.csv",
                                  csv_text(h["rows"], HISTOGRAM_COLUMNS)))
        if "svg" in formats:
            bw = 1.0 / h["n"] if h["bins"] == "exact" else 1.0 / 1000
            title = f"{doc.get('experiment', '')} {name} (n={h['n']})"
            written.append(_write(out / f"{stem}{suffix}.svg",
                                  histogram_svg(h["rows"], title, bin_width=bw)))
    if "csv" in formats:
        if doc.get("stats"):
            written.append(_write(out / f"{stem}_stats.csv",
                                  csv_text(stats_rows(doc["stats"]), STATS_COLUMNS)))
        table = doc.get("table") or []
        if table:
            written.append(_write(out / f"{stem}_table.csv",
                                  csv_text(table, list(table[0]))))
    return written
