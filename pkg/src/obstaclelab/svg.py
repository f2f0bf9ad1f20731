"""Minimal SVG writer: line charts (optionally log-x) and scatter plots."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

__all__ = ["line_chart", "scatter_plot"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
W, H = 640, 420
ML, MR, MT, MB = 70, 150, 40, 50


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(step):
        out.append(round(v, 12))
        v += step
    return out


def _frame(title, xlabel, ylabel, comment):
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">']
    if comment:
        head.append(f"<!-- {escape(comment)} -->")
    head += [f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">'
             f"{escape(title)}</text>",
             f'<text x="{ML + (W - ML - MR) / 2}" y="{H - 10}" text-anchor="middle" font-size="12" '
             f'font-family="sans-serif">{escape(xlabel)}</text>',
             f'<text x="16" y="{MT + (H - MT - MB) / 2}" text-anchor="middle" font-size="12" font-family="sans-serif" '
             f'transform="rotate(-90 16 {MT + (H - MT - MB) / 2})">{escape(ylabel)}</text>']
    return head


def _axes(out, xr, yr, sx, sy, logx):
    x0, x1 = ML, W - MR
    y0, y1 = H - MB, MT
    out.append(f'<polyline points="{x0},{y1} {x0},{y0} {x1},{y0}" fill="none" stroke="black"/>')
    if logx:
        xt = [10.0**k for k in range(math.floor(xr[0]), math.ceil(xr[1]) + 1) if xr[0] <= k <= xr[1]]
        if not xt:
            xt = [10 ** xr[0], 10 ** xr[1]]
        xpos = [(math.log10(v), v) for v in xt]
    else:
        xpos = [(v, v) for v in _ticks(*xr)]
    for pos, lab in xpos:
        px = sx(pos)
        out.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px)}" y="{y0 + 18}" text-anchor="middle" font-size="11" '
                   f'font-family="sans-serif">{_fmt(lab)}</text>')
    for v in _ticks(*yr):
        py = sy(v)
        out.append(f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{_fmt(py + 4)}" text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{_fmt(v)}</text>')


def _legend(out, labels):
    for k, (lab, color) in enumerate(labels):
        y = MT + 10 + 18 * k
        out.append(f'<line x1="{W - MR + 10}" y1="{y}" x2="{W - MR + 30}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - MR + 35}" y="{y + 4}" font-size="11" font-family="sans-serif">{escape(lab)}</text>')


def _scales(xs, ys, logx):
    xs = [math.log10(v) for v in xs] if logx else list(xs)
    xr = (min(xs), max(xs))
    yr = (min(ys), max(ys))
    if xr[1] == xr[0]:
        xr = (xr[0] - 0.5, xr[1] + 0.5)
    pad = 0.05 * (yr[1] - yr[0]) or 0.05 * max(abs(yr[0]), 1e-12)
    yr = (yr[0] - pad, yr[1] + pad)

    def sx(v):
        return ML + (v - xr[0]) / (xr[1] - xr[0]) * (W - ML - MR)

    def sy(v):
        return H - MB - (v - yr[0]) / (yr[1] - yr[0]) * (H - MT - MB)
    return xr, yr, sx, sy


def line_chart(path, series, title="", xlabel="", ylabel="", logx=False, comment=None) -> None:
    """``series``: list of ``(label, xs, ys)``."""
    allx = [x for _, xs, _ in series for x in xs]
    ally = [y for _, _, ys in series for y in ys if math.isfinite(y)]
    out = _frame(title, xlabel, ylabel, comment)
    if allx and ally:
        xr, yr, sx, sy = _scales(allx, ally, logx)
        _axes(out, xr, yr, sx, sy, logx)
        labels = []
        for k, (lab, xs, ys) in enumerate(series):
            color = PALETTE[k % len(PALETTE)]
            pts = " ".join(f"{_fmt(sx(math.log10(x) if logx else x))},{_fmt(sy(y))}"
                           for x, y in zip(xs, ys) if math.isfinite(y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            labels.append((lab, color))
        _legend(out, labels)
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def scatter_plot(path, groups, title="", xlabel="x", ylabel="y", comment=None) -> None:
    """``groups``: list of ``(label, points)`` with points a list of ``(x, y)``."""
    allx = [p[0] for _, pts in groups for p in pts]
    ally = [p[1] for _, pts in groups for p in pts]
    out = _frame(title, xlabel, ylabel, comment)
    if allx:
        xr, yr, sx, sy = _scales(allx, ally, False)
        _axes(out, xr, yr, sx, sy, False)
        labels = []
        for k, (lab, pts) in enumerate(groups):
            color = PALETTE[k % len(PALETTE)]
            for x, y in pts:
                out.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2" fill="{color}"/>')
            labels.append((f"{lab} ({len(pts)})", color))
        _legend(out, labels)
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
