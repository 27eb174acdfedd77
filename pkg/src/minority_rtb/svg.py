"""Minimal SVG line and scatter charts (no plotting dependency)."""
from __future__ import annotations

from html import escape

import numpy as np

W, H = 640, 420
PAD_L, PAD_R, PAD_T, PAD_B = 64, 20, 36, 48
PALETTE = ("#5b2a86", "#e0b100", "#1f77b4", "#d62728", "#2ca02c", "#8c564b")


def _scale(lo, hi, a, b):
    if hi == lo:
        hi = lo + 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) * (b - a) / (hi - lo)


def _frame(title, xlabel, ylabel, xlim, ylim):
    x0, x1 = PAD_L, W - PAD_R
    y0, y1 = H - PAD_B, PAD_T
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2}" y="{H - 10}" text-anchor="middle" font-size="12" font-family="sans-serif">{escape(xlabel)}</text>',
        f'<text x="14" y="{(y0 + y1) / 2}" text-anchor="middle" font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 14 {(y0 + y1) / 2})">{escape(ylabel)}</text>',
    ]
    for t in np.linspace(*xlim, 5):
        px = float(_scale(*xlim, x0, x1)(t))
        parts.append(f'<text x="{px:.1f}" y="{y0 + 16}" text-anchor="middle" font-size="10" font-family="sans-serif">{t:.4g}</text>')
    for t in np.linspace(*ylim, 5):
        py = float(_scale(*ylim, y0, y1)(t))
        parts.append(f'<text x="{x0 - 6}" y="{py + 3:.1f}" text-anchor="end" font-size="10" font-family="sans-serif">{t:.4g}</text>')
    return parts, _scale(*xlim, x0, x1), _scale(*ylim, y0, y1)


def _limits(arrays):
    flat = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    flat = flat[np.isfinite(flat)]
    if flat.size == 0:
        return 0.0, 1.0
    return float(flat.min()), float(flat.max())


def line_chart(series, title="", xlabel="", ylabel=""):
    """``series`` maps a label to ``(x, y)``."""
    xs = [s[0] for s in series.values()]
    ys = [s[1] for s in series.values()]
    parts, sx, sy = _frame(title, xlabel, ylabel, _limits(xs), _limits(ys))
    for i, (label, (x, y)) in enumerate(series.items()):
        colour = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(x), sy(y)) if np.isfinite(b))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.8" points="{pts}"/>')
        parts.append(f'<text x="{W - PAD_R - 4}" y="{PAD_T + 14 * (i + 1)}" text-anchor="end" font-size="11" '
                     f'font-family="sans-serif" fill="{colour}">{escape(str(label))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter(x, y, groups=None, title="", xlabel="", ylabel="", max_points=20_000):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = np.zeros(x.size, dtype=int) if groups is None else np.asarray(groups)
    if x.size > max_points:
        # deterministic thinning keeps files small
        keep = np.linspace(0, x.size - 1, max_points).astype(int)
        x, y, g = x[keep], y[keep], g[keep]
    parts, sx, sy = _frame(title, xlabel, ylabel, _limits([x]), _limits([y]))
    px, py = sx(x), sy(y)
    for a, b, c in zip(px, py, g.tolist()):
        parts.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="1.6" fill="{PALETTE[int(c) % len(PALETTE)]}" fill-opacity="0.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
