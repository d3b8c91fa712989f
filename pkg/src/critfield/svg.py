"""Small SVG 1.1 line/scatter plots built with ElementTree."""
from __future__ import annotations

import math
import xml.etree.ElementTree as ET

W, H = 480, 360
MARGIN = 56
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


class _Axes:
    def __init__(self, xs, ys, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        tx = [self._t(x, logx) for x in xs]
        ty = [self._t(y, logy) for y in ys]
        tx = [v for v in tx if math.isfinite(v)] or [0.0, 1.0]
        ty = [v for v in ty if math.isfinite(v)] or [0.0, 1.0]
        self.x0, self.x1 = self._pad(min(tx), max(tx))
        self.y0, self.y1 = self._pad(min(ty), max(ty))

    @staticmethod
    def _t(v, log):
        if log:
            return math.log10(v) if v > 0 else math.nan
        return float(v)

    @staticmethod
    def _pad(lo, hi):
        if hi - lo < 1e-12:
            return lo - 0.5, hi + 0.5
        p = 0.05 * (hi - lo)
        return lo - p, hi + p

    def px(self, x):
        t = self._t(x, self.logx)
        return MARGIN + (t - self.x0) / (self.x1 - self.x0) * (W - 2 * MARGIN)

    def py(self, y):
        t = self._t(y, self.logy)
        return H - MARGIN - (t - self.y0) / (self.y1 - self.y0) * (H - 2 * MARGIN)

    def ticks(self, axis, n=5):
        lo, hi = (self.x0, self.x1) if axis == "x" else (self.y0, self.y1)
        log = self.logx if axis == "x" else self.logy
        out = []
        for k in range(n):
            t = lo + (hi - lo) * (k + 0.5) / n
            v = 10**t if log else t
            out.append((v, f"{v:.2g}"))
        return out


def _frame(title, xlabel, ylabel):
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", version="1.1", width=str(W), height=str(H))
    ET.SubElement(svg, "rect", x="0", y="0", width=str(W), height=str(H), fill="white")
    ET.SubElement(svg, "text", x=str(W / 2), y="20", **{"text-anchor": "middle", "font-size": "14"}).text = title
    ET.SubElement(svg, "text", x=str(W / 2), y=str(H - 10), **{"text-anchor": "middle", "font-size": "12"}).text = xlabel
    ET.SubElement(svg, "text", x="14", y=str(H / 2), transform=f"rotate(-90 14 {H / 2})",
                  **{"text-anchor": "middle", "font-size": "12"}).text = ylabel
    ET.SubElement(svg, "rect", x=str(MARGIN), y=str(MARGIN), width=str(W - 2 * MARGIN), height=str(H - 2 * MARGIN),
                  fill="none", stroke="black")
    return svg


def _ticks(svg, ax):
    for v, lab in ax.ticks("x"):
        x = ax.px(v)
        ET.SubElement(svg, "line", x1=f"{x:.2f}", x2=f"{x:.2f}", y1=str(H - MARGIN), y2=str(H - MARGIN + 4), stroke="black")
        ET.SubElement(svg, "text", x=f"{x:.2f}", y=str(H - MARGIN + 16),
                      **{"text-anchor": "middle", "font-size": "10"}).text = lab
    for v, lab in ax.ticks("y"):
        y = ax.py(v)
        ET.SubElement(svg, "line", x1=str(MARGIN - 4), x2=str(MARGIN), y1=f"{y:.2f}", y2=f"{y:.2f}", stroke="black")
        ET.SubElement(svg, "text", x=str(MARGIN - 6), y=f"{y + 3:.2f}",
                      **{"text-anchor": "end", "font-size": "10"}).text = lab


def _legend(svg, labels):
    for k, lab in enumerate(labels):
        y = MARGIN + 14 + 14 * k
        ET.SubElement(svg, "rect", x=str(W - MARGIN - 120), y=str(y - 8), width="8", height="8",
                      fill=COLORS[k % len(COLORS)])
        ET.SubElement(svg, "text", x=str(W - MARGIN - 108), y=str(y), **{"font-size": "10"}).text = lab


def _polyline(svg, ax, xs, ys, color, dash=None):
    pts = " ".join(f"{ax.px(x):.2f},{ax.py(y):.2f}" for x, y in zip(xs, ys))
    attrs = {"points": pts, "fill": "none", "stroke": color}
    if dash:
        attrs["stroke-dasharray"] = dash
    ET.SubElement(svg, "polyline", **attrs)


def _render(svg) -> str:
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"


def loglog_plot(series, title="", xlabel="x", ylabel="y") -> str:
    """``series``: list of ``(label, xs, ys, fit)``; ``fit`` (a ScalingFit or None) is drawn dashed."""
    allx = [x for _, xs, _, _ in series for x in xs if x > 0]
    ally = [y for _, _, ys, _ in series for y in ys if y > 0]
    ax = _Axes(allx or [1.0], ally or [1.0], logx=True, logy=True)
    svg = _frame(title, xlabel, ylabel)
    _ticks(svg, ax)
    for k, (label, xs, ys, fit) in enumerate(series):
        c = COLORS[k % len(COLORS)]
        for x, y in zip(xs, ys):
            if x > 0 and y > 0:
                ET.SubElement(svg, "circle", cx=f"{ax.px(x):.2f}", cy=f"{ax.py(y):.2f}", r="3", fill=c)
        if fit is not None and len(fit.xs) >= 2:
            lo, hi = min(fit.xs), max(fit.xs)
            _polyline(svg, ax, [lo, hi], fit.predict([lo, hi]), c, dash="4 3")
    _legend(svg, [s[0] if s[3] is None else f"{s[0]} (slope {s[3].slope:.3f})" for s in series])
    return _render(svg)


def step_plot(xs, series, title="", xlabel="x", ylabel="y", markers=()) -> str:
    """Piecewise-constant curves ``series = [(label, ys), ...]`` over shared ``xs``; ``markers`` are vertical lines."""
    ally = [y for _, ys in series for y in ys]
    ax = _Axes(list(xs), ally + [0])
    svg = _frame(title, xlabel, ylabel)
    _ticks(svg, ax)
    for k, (_, ys) in enumerate(series):
        px, py = [], []
        for i, (x, y) in enumerate(zip(xs, ys)):
            if i:
                px.append(x)
                py.append(ys[i - 1])
            px.append(x)
            py.append(y)
        _polyline(svg, ax, px, py, COLORS[k % len(COLORS)])
    for m in markers:
        x = ax.px(m)
        ET.SubElement(svg, "line", x1=f"{x:.2f}", x2=f"{x:.2f}", y1=str(MARGIN), y2=str(H - MARGIN),
                      stroke="gray", **{"stroke-dasharray": "2 2"})
    _legend(svg, [s[0] for s in series])
    return _render(svg)


def scene_plot(curves, points=(), title="") -> str:
    """Curves (point arrays drawn as polylines) plus labelled point markers ``(label, (N, 2) array)``."""
    allp = [p for c in curves for p in c] + [p for _, P in points for p in P]
    xs = [p[0] for p in allp] or [0.0]
    ys = [p[1] for p in allp] or [0.0]
    span = max(max(xs) - min(xs), max(ys) - min(ys), 1e-9)
    cx, cy = (max(xs) + min(xs)) / 2, (max(ys) + min(ys)) / 2
    ax = _Axes([cx - span / 2, cx + span / 2], [cy - span / 2, cy + span / 2])
    svg = _frame(title, "x", "y")
    for c in curves:
        _polyline(svg, ax, [p[0] for p in c], [p[1] for p in c], "black")
    for k, (_, P) in enumerate(points):
        for p in P:
            ET.SubElement(svg, "circle", cx=f"{ax.px(p[0]):.2f}", cy=f"{ax.py(p[1]):.2f}", r="3",
                          fill=COLORS[k % len(COLORS)])
    _legend(svg, [lab for lab, _ in points])
    return _render(svg)
