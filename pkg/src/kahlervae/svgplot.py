"""Minimal deterministic SVG plotter: lines, scatters, histograms.

No GUI and no plotting dependency; output is a plain SVG string whose bytes
depend only on the data, so plot files can be diffed across reruns.
"""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _axes(x_lo, x_hi, y_lo, y_hi, title, xlabel, ylabel) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{_fmt(x_lo)}</text>',
        f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{_fmt(x_hi)}</text>',
        f'<text x="{MARGIN - 6}" y="{HEIGHT - MARGIN}" text-anchor="end">{_fmt(y_lo)}</text>',
        f'<text x="{MARGIN - 6}" y="{MARGIN + 4}" text-anchor="end">{_fmt(y_hi)}</text>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 12}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {HEIGHT // 2})">{ylabel}</text>',
    ]
    return parts


def _scale(vals, lo, hi, out_lo, out_hi):
    vals = np.asarray(vals, dtype=float)
    span = hi - lo if hi > lo else 1.0
    return out_lo + (vals - lo) / span * (out_hi - out_lo)


def _bounds(series):
    xs = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    pad = lambda lo, hi: (lo - 0.05 * (hi - lo or 1.0), hi + 0.05 * (hi - lo or 1.0))
    return *pad(xs.min(), xs.max()), *pad(ys.min(), ys.max())


def _legend(parts, labels):
    for i, label in enumerate(labels):
        if not label:
            continue
        y = MARGIN + 16 * (i + 1)
        parts.append(
            f'<rect x="{WIDTH - MARGIN - 130}" y="{y - 9}" width="10" height="10" '
            f'fill="{PALETTE[i % len(PALETTE)]}"/>'
        )
        parts.append(f'<text x="{WIDTH - MARGIN - 115}" y="{y}">{label}</text>')


def line_plot(series, title="", xlabel="", ylabel="") -> str:
    """series: iterable of (xs, ys, label) tuples."""
    series = list(series)
    x_lo, x_hi, y_lo, y_hi = _bounds(series)
    parts = _axes(x_lo, x_hi, y_lo, y_hi, title, xlabel, ylabel)
    for i, (xs, ys, _) in enumerate(series):
        px = _scale(xs, x_lo, x_hi, MARGIN, WIDTH - MARGIN)
        py = _scale(ys, y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        parts.append(
            f'<polyline points="{pts}" fill="none" '
            f'stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.5"/>'
        )
    _legend(parts, [s[2] for s in series])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_plot(series, title="", xlabel="", ylabel="") -> str:
    series = list(series)
    x_lo, x_hi, y_lo, y_hi = _bounds(series)
    parts = _axes(x_lo, x_hi, y_lo, y_hi, title, xlabel, ylabel)
    for i, (xs, ys, _) in enumerate(series):
        px = _scale(xs, x_lo, x_hi, MARGIN, WIDTH - MARGIN)
        py = _scale(ys, y_lo, y_hi, HEIGHT - MARGIN, MARGIN)
        color = PALETTE[i % len(PALETTE)]
        for a, b in zip(px, py):
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.2" fill="{color}" fill-opacity="0.7"/>')
    _legend(parts, [s[2] for s in series])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram(values, bins=20, title="", xlabel="", ylabel="count") -> str:
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=bins)
    x_lo, x_hi = float(edges[0]), float(edges[-1])
    y_lo, y_hi = 0.0, float(counts.max() or 1)
    parts = _axes(x_lo, x_hi, y_lo, y_hi, title, xlabel, ylabel)
    for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
        px0 = _scale([e0], x_lo, x_hi, MARGIN, WIDTH - MARGIN)[0]
        px1 = _scale([e1], x_lo, x_hi, MARGIN, WIDTH - MARGIN)[0]
        py = _scale([c], y_lo, y_hi, HEIGHT - MARGIN, MARGIN)[0]
        parts.append(
            f'<rect x="{px0:.2f}" y="{py:.2f}" width="{max(px1 - px0 - 1, 0.5):.2f}" '
            f'height="{HEIGHT - MARGIN - py:.2f}" fill="{PALETTE[0]}" fill-opacity="0.8"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
