"""Minimal SVG line charts.

Every plotted point is also emitted as a ``<circle>`` carrying ``data-series``,
``data-x`` and ``data-y`` attributes with the exact values, so a chart can be
checked against its CSV.
"""

from __future__ import annotations

from xml.sax.saxutils import escape, quoteattr

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def line_chart(
    series: dict[str, list[tuple[str, float | None]]],
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: int = 720,
    height: int = 360,
) -> str:
    """Categorical x axis (shared, in first-seen order); ``None`` breaks a line."""
    xs: list[str] = []
    for points in series.values():
        for x, _ in points:
            if x not in xs:
                xs.append(x)
    ys = [y for points in series.values() for _, y in points if y is not None]
    lo, hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi == lo:
        hi = lo + 1.0
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        i = xs.index(x)
        return left + (pw * i / (len(xs) - 1) if len(xs) > 1 else pw / 2)

    def py(y):
        return top + ph * (hi - y) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{py(0.0):.2f}" x2="{left + pw}" y2="{py(0.0):.2f}" stroke="#bbb" stroke-dasharray="3,3"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        y = lo + frac * (hi - lo)
        out.append(f'<text x="{left - 6}" y="{py(y) + 4:.2f}" text-anchor="end">{y:.4g}</text>')
    step = max(1, len(xs) // 12)
    for i, x in enumerate(xs):
        if i % step == 0:
            out.append(f'<text x="{px(x):.2f}" y="{top + ph + 16}" text-anchor="middle">{escape(x)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for n, (name, points) in enumerate(series.items()):
        color = PALETTE[n % len(PALETTE)]
        segment: list[str] = []
        segments = [segment]
        for x, y in points:
            if y is None:
                segment = []
                segments.append(segment)
            else:
                segment.append(f"{px(x):.2f},{py(y):.2f}")
        for seg in segments:
            if len(seg) > 1:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(seg)}"/>')
        for x, y in points:
            # missing values keep an invisible marker so the point set matches the CSV
            cy, r = (py(y), 2.5) if y is not None else (py(0.0), 0)
            out.append(
                f'<circle cx="{px(x):.2f}" cy="{cy:.2f}" r="{r}" fill="{color}" '
                f"data-series={quoteattr(name)} data-x={quoteattr(x)} data-y={quoteattr(fmt(y))}/>"
            )
        ly = top + 14 * n
        out.append(f'<rect x="{left + pw + 12}" y="{ly}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{left + pw + 26}" y="{ly + 9}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
