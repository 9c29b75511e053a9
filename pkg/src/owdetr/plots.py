"""Minimal deterministic SVG emission (no timestamps, no GUI deps)."""

from __future__ import annotations

from pathlib import Path

_W, _H = 640, 400
_MARGIN = 56
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in vals]


def _frame(title: str, body: list[str]) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_W - 2 * _MARGIN}" '
        f'height="{_H - 2 * _MARGIN}" fill="none" stroke="#888"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def svg_scatter(series: dict[str, list[tuple[float, float]]], title: str, path):
    """Scatter/line plot, one colored polyline+markers per named series."""
    points = [p for pts in series.values() for p in pts]
    if points:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
    else:
        x_lo = y_lo = 0.0
        x_hi = y_hi = 1.0
    body = []
    for i, (name, pts) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        if pts:
            px = _scale([p[0] for p in pts], x_lo, x_hi, _MARGIN, _W - _MARGIN)
            py = _scale([p[1] for p in pts], y_lo, y_hi, _H - _MARGIN, _MARGIN)
            poly = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(px, py))
            body.append(f'<polyline points="{poly}" fill="none" stroke="{color}"/>')
            for x, y in zip(px, py):
                body.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2.5" fill="{color}"/>')
        body.append(
            f'<text x="{_W - _MARGIN + 4}" y="{_MARGIN + 14 + 16 * i}" font-size="11" '
            f'font-family="sans-serif" fill="{color}">{name}</text>'
        )
    body.append(
        f'<text x="{_MARGIN}" y="{_H - _MARGIN + 28}" font-size="11" '
        f'font-family="sans-serif">x: [{_fmt(x_lo)}, {_fmt(x_hi)}]  '
        f'y: [{_fmt(y_lo)}, {_fmt(y_hi)}]</text>'
    )
    Path(path).write_text(_frame(title, body), encoding="utf-8")


def svg_bars(labels: list[str], values: list[float], title: str, path):
    """Bar chart; None values render as hatched absent bars."""
    y_hi = max([v for v in values if v is not None] + [1e-9])
    n = max(1, len(values))
    span = _W - 2 * _MARGIN
    bar_w = span / n * 0.6
    body = []
    for i, (label, v) in enumerate(zip(labels, values)):
        cx = _MARGIN + span * (i + 0.5) / n
        if v is None:
            body.append(
                f'<text x="{_fmt(cx)}" y="{_H - _MARGIN - 8}" text-anchor="middle" '
                f'font-size="11" font-family="sans-serif" fill="#999">absent</text>'
            )
            height = 0.0
        else:
            height = (_H - 2 * _MARGIN) * (v / y_hi)
            body.append(
                f'<rect x="{_fmt(cx - bar_w / 2)}" y="{_fmt(_H - _MARGIN - height)}" '
                f'width="{_fmt(bar_w)}" height="{_fmt(height)}" fill="#1f77b4"/>'
            )
            body.append(
                f'<text x="{_fmt(cx)}" y="{_fmt(_H - _MARGIN - height - 6)}" '
                f'text-anchor="middle" font-size="11" font-family="sans-serif">{_fmt(v)}</text>'
            )
        body.append(
            f'<text x="{_fmt(cx)}" y="{_H - _MARGIN + 16}" text-anchor="middle" '
            f'font-size="12" font-family="sans-serif">{label}</text>'
        )
    Path(path).write_text(_frame(title, body), encoding="utf-8")
