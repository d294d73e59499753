"""Deterministic SVG charts of the three headline metrics, one file per
panel: normalized cumulative reward, novelty of selected actives, and their
mean. SVG is written directly (no plotting library) so repeated invocations
on the same inputs are byte-identical.
"""

from __future__ import annotations

from pathlib import Path

from .harness import aggregate_curves

WIDTH = 720
HEIGHT = 480
MARGIN_L = 64
MARGIN_R = 168
MARGIN_T = 40
MARGIN_B = 48

PALETTE = (
    "#1b6ca8",
    "#d1495b",
    "#3d8f5f",
    "#b46a00",
    "#6b4fa0",
    "#6d6d6d",
)


def _x(t, t_max):
    span = WIDTH - MARGIN_L - MARGIN_R
    if t_max <= 1:
        return MARGIN_L + span / 2.0
    return MARGIN_L + span * (t - 1) / (t_max - 1)


def _y(v):
    span = HEIGHT - MARGIN_T - MARGIN_B
    return MARGIN_T + span * (1.0 - v)


def _f(v) -> str:
    return f"{v:.2f}"


def _polyline(points, color, dash=None):
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="1.6"{extra} '
        f'points="{pts}"/>'
    )


def _band(upper, lower, color):
    pts = upper + lower[::-1]
    path = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
    return f'<polygon fill="{color}" fill-opacity="0.15" stroke="none" points="{path}"/>'


def _axes(title, t_max):
    parts = [
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="22" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
        f'<line x1="{MARGIN_L}" y1="{_f(_y(0))}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{_f(_y(0))}" stroke="black" stroke-width="1"/>',
        f'<line x1="{MARGIN_L}" y1="{_f(_y(0))}" x2="{MARGIN_L}" '
        f'y2="{_f(_y(1))}" stroke="black" stroke-width="1"/>',
    ]
    for k in range(6):
        v = k / 5.0
        y = _y(v)
        parts.append(
            f'<line x1="{MARGIN_L - 4}" y1="{_f(y)}" x2="{MARGIN_L}" y2="{_f(y)}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{_f(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{v:.1f}</text>'
        )
    n_ticks = min(10, max(1, t_max))
    for k in range(n_ticks + 1):
        t = 1 + (t_max - 1) * k / n_ticks if t_max > 1 else 1
        x = _x(t, t_max)
        parts.append(
            f'<line x1="{_f(x)}" y1="{_f(_y(0))}" x2="{_f(x)}" y2="{_f(_y(0) + 4)}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_f(x)}" y="{_f(_y(0) + 18)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{int(round(t))}</text>'
        )
    parts.append(
        f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) // 2}" y="{HEIGHT - 10}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="12">cycle</text>'
    )
    return parts


def _legend(names):
    parts = []
    x0 = WIDTH - MARGIN_R + 12
    for i, name in enumerate(names):
        y = MARGIN_T + 16 + 20 * i
        color = PALETTE[i % len(PALETTE)]
        parts.append(
            f'<line x1="{x0}" y1="{y - 4}" x2="{x0 + 22}" y2="{y - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{x0 + 28}" y="{y}" font-family="sans-serif" font-size="11">{name}</text>'
        )
    return parts


def _panel_svg(title, series, t_max, with_band: bool):
    """series: name -> list of (t, mean, lo, hi) with None means skipped."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    ]
    parts.extend(_axes(title, t_max))
    names = sorted(series)
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        pts = [(t, m, lo, hi) for t, m, lo, hi in series[name] if m is not None]
        if not pts:
            continue
        if with_band:
            upper = [(_x(t, t_max), _y(min(1.0, hi))) for t, _, _, hi in pts]
            lower = [(_x(t, t_max), _y(max(0.0, lo))) for t, _, lo, _ in pts]
            parts.append(_band(upper, lower, color))
        line = [(_x(t, t_max), _y(m)) for t, m, _, _ in pts]
        parts.append(_polyline(line, color))
    parts.extend(_legend(names))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


PANELS = (
    ("normalized_cumulative_reward.svg", "Normalized cumulative reward", "norm", True),
    ("novelty_selected_actives.svg", "Novelty of selected actives", "nov", True),
    ("mean_reward_novelty.svg", "Mean of cumulative reward and novelty", "combined", False),
)


def emit_plots(runs, out_dir) -> list[Path]:
    """Write the three metric panels as SVG files; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = aggregate_curves(runs)
    t_max = max((len(rows) for rows in curves.values()), default=1)
    written = []
    for filename, title, kind, with_band in PANELS:
        series = {}
        for name, rows in curves.items():
            pts = []
            for row in rows:
                if kind == "norm":
                    pts.append((row["t"], row["norm_mean"], row["norm_ci"][0], row["norm_ci"][1]))
                elif kind == "nov":
                    lo, hi = row["nov_ci"]
                    pts.append((row["t"], row["nov_mean"], lo, hi))
                else:
                    pts.append((row["t"], row["combined_mean"], None, None))
            series[name] = pts
        path = out_dir / filename
        path.write_text(_panel_svg(title, series, t_max, with_band))
        written.append(path)
    return written
