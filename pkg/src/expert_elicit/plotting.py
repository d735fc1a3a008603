"""Static SVG line charts of loss curves (mean with SEM error bars)."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

STRATEGY_COLORS = {
    "NoInteraction": "#1f77b4",
    "Random": "#d62728",
    "LargestTargetFeature": "#2ca02c",
    "LargestProductFeature": "#9467bd",
    "LargestProductFeatureSubset": "#e377c2",
    "LargestTargetFeatureSubset": "#8c564b",
    "RandomSubset": "#ff7f0e",
    "NoInteractionSubset": "#7f7f7f",
}
_FALLBACK = "#17becf"

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 200, 40, 55


def _nice_ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v):
    return f"{v:.6g}"


def render_svg(curves, title: str = "") -> str:
    """One chart: x = feedback budget, y = mean loss, bars = SEM, one series per curve."""
    if not curves:
        raise ValueError("nothing to plot")
    budgets = [pt.budget for c in curves for pt in c.points]
    lows = [pt.mean_loss - pt.sem for c in curves for pt in c.points]
    highs = [pt.mean_loss + pt.sem for c in curves for pt in c.points]
    x_max = max(max(budgets), 1)
    yticks = _nice_ticks(min(0.0, min(lows)), max(highs))
    y_lo, y_hi = yticks[0], yticks[-1]
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(b):
        return LEFT + pw * b / x_max

    def sy(v):
        return TOP + ph * (1.0 - (v - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    xstep = max(1, x_max // 10)
    for b in range(0, x_max + 1, xstep):
        x = sx(b)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{b}</text>')
    for t in yticks:
        y = sy(t)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">feedback budget</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.1f})">target loss</text>')

    for k, c in enumerate(curves):
        color = STRATEGY_COLORS.get(c.strategy, _FALLBACK)
        pts = " ".join(f"{sx(pt.budget):.2f},{sy(pt.mean_loss):.2f}" for pt in c.points)
        out.append(f'<g stroke="{color}" fill="{color}">')
        out.append(f'<polyline points="{pts}" fill="none" stroke-width="2"/>')
        for pt in c.points:
            x, y0, y1 = sx(pt.budget), sy(pt.mean_loss - pt.sem), sy(pt.mean_loss + pt.sem)
            out.append(f'<line x1="{x:.2f}" y1="{y0:.2f}" x2="{x:.2f}" y2="{y1:.2f}"/>')
            out.append(f'<line x1="{x - 3:.2f}" y1="{y0:.2f}" x2="{x + 3:.2f}" y2="{y0:.2f}"/>')
            out.append(f'<line x1="{x - 3:.2f}" y1="{y1:.2f}" x2="{x + 3:.2f}" y2="{y1:.2f}"/>')
            out.append(f'<circle cx="{x:.2f}" cy="{sy(pt.mean_loss):.2f}" r="2.5"/>')
        out.append("</g>")
        ly = TOP + 10 + 20 * k
        lx = LEFT + pw + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(c.strategy)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _cell_label(value):
    return repr(float(value)).replace(".", "p")


def write_plots(curves, out_prefix) -> list[Path]:
    """One SVG per (n_train, noise, knowledge fraction) cell; returns the paths."""
    cells = {}
    for c in curves:
        cells.setdefault((c.scenario, c.n_train, c.noise_variance, c.knowledge_fraction), []).append(c)
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for (scenario, n, var, frac), group in cells.items():
        title = f"{scenario}: n={n}, noise var={var:g}, known fraction={frac:g}"
        path = prefix.parent / (
            f"{prefix.name}_n{n}_noise{_cell_label(var)}_frac{_cell_label(frac)}.svg"
        )
        path.write_text(render_svg(group, title))
        paths.append(path)
    return paths
