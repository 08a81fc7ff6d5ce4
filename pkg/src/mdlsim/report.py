"""CSV tables and self-contained SVG charts for sweep results.

Output is a pure function of the :class:`SweepResult`: no timestamps, fixed
float formatting, rows in grid order. Two runs of the same configuration
therefore produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from statistics import median
from typing import Sequence

from .sweep import PLACEMENTS, SweepResult, SweepRow

ROW_COLUMNS = (
    "placement",
    "ratio_db",
    "replicate",
    "row_type",
    "snr_db",
    "seed",
    "status",
    "attenuation_db",
    "true_mdl_db",
    "reference_mdl_db",
    "uncorrected_mdl_db",
    "corrected_mdl_db",
    "uncorrected_error_db",
    "corrected_error_db",
    "correction_snr_db",
    "failed_bins",
    "noise_dominated",
)

SUMMARY_COLUMNS = (
    "placement",
    "ratio_db",
    "snr_db",
    "n_seeds",
    "true_mdl_db",
    "ground_truth_mdl_db",
    "uncorrected_mdl_db",
    "corrected_mdl_db",
    "uncorrected_error_db",
    "corrected_error_db",
)

RATIO_COLUMNS = ("placement", "ratio_db", "statistic", "replicate", "reference_mdl_db", "true_mdl_db")

PLACEMENT_COLORS = {"tx": "#1f77b4", "in-span": "#d62728"}
PLACEMENT_NAMES = {"tx": "Transmitter-side", "in-span": "In-span"}


def fmt(value) -> str:
    """Six significant digits; blank for NaN/None."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        out = format(value, ".6g")
        return "0" if out == "-0" else out
    if isinstance(value, (tuple, list)):
        return ";".join(fmt(float(v)) for v in value)
    return str(value)


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _row_values(r: SweepRow) -> list:
    return [getattr(r, c) for c in ROW_COLUMNS]


def emit_csv(result: SweepResult, out_dir) -> list:
    """Write ``sweep.csv`` (one row per run), ``summary.csv`` (medians) and ``manifest.json``."""
    out = Path(out_dir)
    paths = [
        _write_csv(out / "sweep.csv", ROW_COLUMNS, [_row_values(r) for r in result.rows]),
        _write_csv(
            out / "summary.csv",
            SUMMARY_COLUMNS,
            [
                (
                    c.placement, c.ratio_db, c.snr_db, len(c.seeds), c.true_mdl_db, c.ground_truth_mdl_db,
                    c.uncorrected_mdl_db, c.corrected_mdl_db, c.uncorrected_error_db, c.corrected_error_db,
                )
                for c in result.summary()
            ],
        ),
    ]
    manifest = {
        "tool": "mdlsim",
        "tool_version": result.tool_version,
        "config_hash": result.config_hash,
        "seed_root": result.config.seed_root(),
        "reference_only": result.reference_only,
        "config": result.config.to_dict(),
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths.append(mpath)
    return paths


# --------------------------------------------------------------------------
# SVG
# --------------------------------------------------------------------------


def _esc(text) -> str:
    return (
        str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
    )


def _n(x: float) -> str:
    out = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if out in ("-0", "") else out


class _Svg:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts = []

    def add(self, element: str):
        self.parts.append(element)

    def rect(self, x, y, w, h, fill, stroke="none", **extra):
        attrs = "".join(f' {k.replace("_", "-")}="{_esc(v)}"' for k, v in extra.items())
        self.add(
            f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" fill="{fill}" stroke="{stroke}"{attrs}/>'
        )

    def line(self, x1, y1, x2, y2, stroke="#333", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(
            f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" stroke="{stroke}" stroke-width="{_n(width)}"{d}/>'
        )

    def text(self, x, y, s, size=12, anchor="middle", fill="#000", rotate=None, weight=None, cls=None):
        tr = f' transform="rotate({rotate} {_n(x)} {_n(y)})"' if rotate is not None else ""
        w = f' font-weight="{weight}"' if weight else ""
        c = f' class="{cls}"' if cls else ""
        self.add(
            f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" text-anchor="{anchor}" fill="{fill}"{w}{tr}{c}>{_esc(s)}</text>'
        )

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif">\n'
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>\n'
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


def diverging_color(value: float, vmax: float) -> str:
    """Blue (negative) through white to red (positive), symmetric in ``vmax``."""
    if math.isnan(value):
        return "#cccccc"
    t = max(-1.0, min(1.0, value / vmax)) if vmax > 0 else 0.0
    lo, mid, hi = (33, 102, 172), (247, 247, 247), (178, 24, 43)
    end = hi if t >= 0 else lo
    a = abs(t)
    rgb = [round(m + (e - m) * a) for m, e in zip(mid, end)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _heatmap_grid(result: SweepResult, placement: str):
    cells = [c for c in result.summary() if c.placement == placement]
    ratios = sorted({c.ratio_db for c in cells})
    snrs = sorted({c.snr_db for c in cells})
    lookup = {(c.ratio_db, c.snr_db): c for c in cells}
    return ratios, snrs, lookup


def _symmetric_scale(result: SweepResult, placement: str) -> float:
    vals = [
        abs(v)
        for c in result.summary()
        if c.placement == placement
        for v in (c.uncorrected_error_db, c.corrected_error_db)
        if not math.isnan(v)
    ]
    return max([0.5] + vals)


def heatmap_svg(result: SweepResult, placement: str, which: str) -> str:
    """Median error surface: x = SNR, y = true MDL, one labelled cell per grid point.

    The colour scale is shared between the corrected and uncorrected maps of
    one placement so they can be compared side by side.
    """
    if which not in ("corrected", "uncorrected"):
        raise ValueError("which must be 'corrected' or 'uncorrected'")
    ratios, snrs, lookup = _heatmap_grid(result, placement)
    vmax = _symmetric_scale(result, placement)
    cw, chh = 64, 40
    left, top, right, bottom = 110, 60, 120, 70
    width = left + cw * max(len(snrs), 1) + right
    height = top + chh * max(len(ratios), 1) + bottom
    svg = _Svg(width, height)
    title = f"{PLACEMENT_NAMES[placement]} MDL estimation error, {which}"
    svg.text(width / 2, 28, title, size=15, weight="bold")
    # rows drawn top-down from the largest ratio (largest MDL)
    for i, ratio in enumerate(reversed(ratios)):
        y = top + i * chh
        true_db = result.reference_median(placement, ratio)
        svg.text(left - 8, y + chh / 2 + 4, f"{true_db:.2f}", size=11, anchor="end")
        for j, snr in enumerate(snrs):
            x = left + j * cw
            c = lookup.get((ratio, snr))
            v = math.nan if c is None else (c.corrected_error_db if which == "corrected" else c.uncorrected_error_db)
            svg.rect(x, y, cw, chh, diverging_color(v, vmax), stroke="#ffffff")
            label = "" if math.isnan(v) else f"{v:.2f}"
            ink = "#ffffff" if not math.isnan(v) and abs(v) / vmax > 0.6 else "#000000"
            svg.text(x + cw / 2, y + chh / 2 + 4, label, size=11, fill=ink, cls="value")
    for j, snr in enumerate(snrs):
        svg.text(left + j * cw + cw / 2, top + chh * len(ratios) + 18, _n(snr), size=11)
    svg.text(left + cw * len(snrs) / 2, height - 22, "SNR (dB)", size=13)
    svg.text(30, top + chh * len(ratios) / 2, "True MDL (dB)", size=13, rotate=-90)
    # colour bar
    bx, bh = left + cw * len(snrs) + 30, max(chh * len(ratios), 100)
    steps = 20
    for k in range(steps):
        v = vmax - (2 * vmax) * (k + 0.5) / steps
        svg.rect(bx, top + k * bh / steps, 18, bh / steps + 0.5, diverging_color(v, vmax))
    svg.text(bx + 24, top + 10, f"{vmax:+.2f}", size=10, anchor="start")
    svg.text(bx + 24, top + bh / 2 + 4, "0", size=10, anchor="start")
    svg.text(bx + 24, top + bh, f"{-vmax:+.2f}", size=10, anchor="start")
    svg.text(bx + 9, top + bh + 22, "error (dB)", size=10)
    return svg.render()


def emit_heatmap(result: SweepResult, out_dir, which: str) -> list:
    """One SVG per placement: ``heatmap_<placement>_<which>.svg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for placement in PLACEMENTS:
        if placement not in result.config.placements:
            continue
        p = out / f"heatmap_{placement}_{which}.svg"
        p.write_text(heatmap_svg(result, placement, which), encoding="utf-8")
        paths.append(p)
    return paths


def _ratio_series(result: SweepResult):
    series = {}
    for r in result.ok_rows("reference"):
        series.setdefault(r.placement, {}).setdefault(r.ratio_db, []).append(r)
    return series


def mdl_vs_ratio_svg(result: SweepResult) -> str:
    series = _ratio_series(result)
    all_rows = [r for per in series.values() for rows in per.values() for r in rows]
    ratios = sorted({r.ratio_db for r in all_rows}) or [0.0]
    ys = [r.reference_mdl_db for r in all_rows] or [0.0]
    xmin, xmax = min(ratios), max(ratios)
    if xmax == xmin:
        xmin, xmax = xmin - 1, xmax + 1
    ymax = math.ceil(max(ys) + 0.5)
    ymin = 0.0
    width, height = 640, 440
    left, top, right, bottom = 70, 50, 30, 60
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - xmin) / (xmax - xmin) * pw

    def py(y):
        return top + ph - (y - ymin) / (ymax - ymin) * ph

    svg = _Svg(width, height)
    svg.text(width / 2, 28, "MDL versus LP01:LP11 attenuation ratio", size=15, weight="bold")
    svg.line(left, top + ph, left + pw, top + ph)
    svg.line(left, top, left, top + ph)
    for x in ratios:
        svg.line(px(x), top + ph, px(x), top + ph + 5)
        svg.text(px(x), top + ph + 20, _n(x), size=11)
    step = 1 if ymax <= 8 else 2
    y = 0
    while y <= ymax:
        svg.line(left - 5, py(y), left, py(y))
        svg.line(left, py(y), left + pw, py(y), stroke="#e0e0e0", width=0.5)
        svg.text(left - 8, py(y) + 4, str(y), size=11, anchor="end")
        y += step
    svg.text(left + pw / 2, height - 18, "Attenuation ratio (dB)", size=13)
    svg.text(20, top + ph / 2, "Estimated MDL, no noise loading (dB)", size=13, rotate=-90)
    legend_y = top + 12
    for placement in PLACEMENTS:
        if placement not in series:
            continue
        color = PLACEMENT_COLORS[placement]
        per = series[placement]
        pts = []
        for ratio in sorted(per):
            rows = per[ratio]
            for r in rows:
                svg.add(
                    f'<circle cx="{_n(px(ratio))}" cy="{_n(py(r.reference_mdl_db))}" r="2.5" '
                    f'fill="{color}" fill-opacity="0.35" class="seed-{placement}"/>'
                )
            pts.append((px(ratio), py(median(r.reference_mdl_db for r in rows))))
        path = " ".join(f"{_n(x)},{_n(y)}" for x, y in pts)
        svg.add(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            svg.add(f'<rect x="{_n(x - 3.5)}" y="{_n(y - 3.5)}" width="7" height="7" fill="{color}"/>')
        svg.line(left + 14, legend_y, left + 36, legend_y, stroke=color, width=2)
        svg.text(left + 42, legend_y + 4, f"{PLACEMENT_NAMES[placement]} (median)", size=11, anchor="start")
        legend_y += 18
    return svg.render()


def emit_mdl_vs_ratio(result: SweepResult, out_dir) -> list:
    """``mdl_vs_ratio.csv`` (per-seed and median rows) and ``mdl_vs_ratio.svg``."""
    out = Path(out_dir)
    rows = []
    series = _ratio_series(result)
    for placement in PLACEMENTS:
        for ratio in sorted(series.get(placement, {})):
            group = series[placement][ratio]
            for r in group:
                rows.append((placement, ratio, "seed", r.replicate, r.reference_mdl_db, r.true_mdl_db))
            rows.append(
                (
                    placement, ratio, "median", None,
                    median(r.reference_mdl_db for r in group),
                    median(r.true_mdl_db for r in group),
                )
            )
    csv_path = _write_csv(out / "mdl_vs_ratio.csv", RATIO_COLUMNS, rows)
    svg_path = out / "mdl_vs_ratio.svg"
    svg_path.write_text(mdl_vs_ratio_svg(result), encoding="utf-8")
    return [csv_path, svg_path]
