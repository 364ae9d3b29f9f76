"""Static SVG line charts with a logarithmic y-axis.

Written directly as XML text so no plotting library is needed. Non-positive
and non-finite values are dropped, since they have no place on a log axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .errors import ValidationError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")

WIDTH, HEIGHT = 720, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 170, 40, 60
MAX_POINTS = 4000


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


@dataclass
class PlotDocument:
    """One chart: labeled series against shared axes."""

    title: str = ""
    xlabel: str = "k"
    ylabel: str = "f(x_k) - f*"
    log_y: bool = True
    series: list[Series] = field(default_factory=list)
    hline: float | None = None

    def add(self, label, x, y) -> None:
        self.series.append(Series(str(label), np.asarray(x, dtype=float), np.asarray(y, dtype=float)))

    def render(self) -> str:
        return render_svg(self)

    def save(self, path) -> None:
        from ._files import atomic_write
        atomic_write(path, self.render())


def _thin(x, y):
    # keep the shape of long traces while bounding file size
    if len(x) <= MAX_POINTS:
        return x, y
    idx = np.unique(np.linspace(0, len(x) - 1, MAX_POINTS).astype(np.int64))
    return x[idx], y[idx]


def _clean(s: Series, log_y: bool):
    ok = np.isfinite(s.x) & np.isfinite(s.y)
    if log_y:
        ok &= s.y > 0
    return _thin(s.x[ok], s.y[ok])


def _nice_ticks(lo, hi, n=6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt_tick(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e5 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def render_svg(doc: PlotDocument) -> str:
    if not doc.series:
        raise ValidationError("a plot needs at least one series")
    cleaned = [_clean(s, doc.log_y) for s in doc.series]
    xs = [x for x, _ in cleaned if x.size]
    ys = [y for _, y in cleaned if y.size]
    if xs:
        x_lo = min(float(x.min()) for x in xs)
        x_hi = max(float(x.max()) for x in xs)
    else:
        x_lo, x_hi = 0.0, 1.0
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0

    def ty(v):
        return math.log10(v) if doc.log_y else v

    if ys:
        y_lo = min(ty(float(y.min())) for y in ys)
        y_hi = max(ty(float(y.max())) for y in ys)
    else:
        y_lo, y_hi = 0.0, 1.0
    if doc.hline is not None and (doc.hline > 0 or not doc.log_y):
        y_lo = min(y_lo, ty(doc.hline))
        y_hi = max(y_hi, ty(doc.hline))
    if doc.log_y:
        y_lo, y_hi = math.floor(y_lo), math.ceil(y_hi)
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return MARGIN_T + (1.0 - (v - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if doc.title:
        out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="22" text-anchor="middle" '
                   f'font-size="14">{escape(doc.title)}</text>')

    # grid and ticks
    for xv in _nice_ticks(x_lo, x_hi):
        x = px(xv)
        out.append(f'<line x1="{x:.1f}" y1="{MARGIN_T}" x2="{x:.1f}" y2="{MARGIN_T + ph}" stroke="#eee"/>')
        out.append(f'<text x="{x:.1f}" y="{MARGIN_T + ph + 16}" text-anchor="middle">{_fmt_tick(xv)}</text>')
    if doc.log_y:
        span = int(y_hi - y_lo)
        every = max(1, math.ceil(span / 10))
        yticks = [(e, f"1e{e}") for e in range(int(y_lo), int(y_hi) + 1, every)]
    else:
        yticks = [(v, _fmt_tick(v)) for v in _nice_ticks(y_lo, y_hi)]
    for yv, text in yticks:
        y = py(yv)
        out.append(f'<line x1="{MARGIN_L}" y1="{y:.1f}" x2="{MARGIN_L + pw}" y2="{y:.1f}" stroke="#eee"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{y + 4:.1f}" text-anchor="end">{text}</text>')
    out.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="black"/>')

    if doc.hline is not None and (doc.hline > 0 or not doc.log_y):
        y = py(ty(doc.hline))
        out.append(f'<line x1="{MARGIN_L}" y1="{y:.1f}" x2="{MARGIN_L + pw}" y2="{y:.1f}" '
                   f'stroke="black" stroke-dasharray="4 3"/>')

    for i, (s, (x, y)) in enumerate(zip(doc.series, cleaned)):
        color = PALETTE[i % len(PALETTE)]
        if x.size:
            pts = " ".join(f"{px(a):.2f},{py(ty(b)):.2f}" for a, b in zip(x.tolist(), y.tolist()))
            out.append(f'<polyline class="series" data-label="{escape(s.label, {chr(34): "&quot;"})}" '
                       f'fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN_T + 14 + 18 * i
        lx = MARGIN_L + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(s.label)}</text>')

    out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 16}" text-anchor="middle">{escape(doc.xlabel)}</text>')
    out.append(f'<text transform="translate(18,{MARGIN_T + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(doc.ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trace_plot(traces, title: str = "", hline: float | None = None) -> PlotDocument:
    """Gap against k, one series per trace."""
    doc = PlotDocument(title=title, hline=hline)
    for name, tr in (traces.items() if isinstance(traces, dict) else ((t.label, t) for t in traces)):
        doc.add(name, tr.k, tr.f_gap)
    return doc


def radius_plot(report, title: str = "") -> PlotDocument:
    """Spectral radius of the stiffest mode against k, with the unit line."""
    doc = PlotDocument(title=title, ylabel="R(M_k)", hline=1.0)
    doc.add(report.scheme.value, report.ks, report.radii)
    return doc
