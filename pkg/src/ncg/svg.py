"""Dependency-free SVG charts: overlaid histograms, bar charts and line charts."""

from __future__ import annotations

from html import escape

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 50, 60


class _Canvas:
    def __init__(self, title, x_label, y_label, x_range, y_range):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
            f'<text x="{WIDTH / 2:.1f}" y="28" text-anchor="middle" font-size="16" font-family="sans-serif">{escape(title)}</text>',
        ]
        pl, pr, pt, pb = LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM
        self.parts.append(f'<line x1="{pl}" y1="{pb}" x2="{pr}" y2="{pb}" stroke="#000"/>')
        self.parts.append(f'<line x1="{pl}" y1="{pt}" x2="{pl}" y2="{pb}" stroke="#000"/>')
        for k in range(5):
            fx = self.x0 + (self.x1 - self.x0) * k / 4
            fy = self.y0 + (self.y1 - self.y0) * k / 4
            self.parts.append(
                f'<text x="{self.px(fx):.1f}" y="{pb + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">{fx:.3g}</text>'
            )
            self.parts.append(
                f'<text x="{pl - 6}" y="{self.py(fy) + 4:.1f}" text-anchor="end" font-size="11" font-family="sans-serif">{fy:.3g}</text>'
            )
        self.parts.append(
            f'<text x="{(pl + pr) / 2:.1f}" y="{HEIGHT - 18}" text-anchor="middle" font-size="13" font-family="sans-serif">{escape(x_label)}</text>'
        )
        self.parts.append(
            f'<text x="18" y="{(pt + pb) / 2:.1f}" text-anchor="middle" font-size="13" font-family="sans-serif" '
            f'transform="rotate(-90 18 {(pt + pb) / 2:.1f})">{escape(y_label)}</text>'
        )
        self.legend_rows = 0

    def px(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - RIGHT - LEFT)

    def py(self, y):
        return HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - BOTTOM - TOP)

    def legend(self, label, color):
        y = TOP + 16 * self.legend_rows
        x = WIDTH - RIGHT + 12
        self.parts.append(f'<rect x="{x}" y="{y}" width="10" height="10" fill="{color}"/>')
        self.parts.append(
            f'<text x="{x + 16}" y="{y + 9}" font-size="11" font-family="sans-serif">{escape(label)}</text>'
        )
        self.legend_rows += 1

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def histogram_chart(series, title="", x_label="", y_label="count") -> str:
    """``series``: list of (label, edges, counts); bars drawn semi-transparent."""
    lo = min(float(e[0]) for _, e, _ in series)
    hi = max(float(e[-1]) for _, e, _ in series)
    top = max([float(max(c)) for _, _, c in series if len(c)] + [1.0])
    cv = _Canvas(title, x_label, y_label, (lo, hi), (0.0, top * 1.1))
    for n, (label, edges, counts) in enumerate(series):
        color = COLORS[n % len(COLORS)]
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            x, w = cv.px(float(a)), cv.px(float(b)) - cv.px(float(a))
            y = cv.py(float(c))
            cv.parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{cv.py(0.0) - y:.2f}" '
                f'fill="{color}" fill-opacity="0.5"/>'
            )
        cv.legend(label, color)
    return cv.render()


def bar_chart(labels, values, title="", x_label="", y_label="", y_max=1.0) -> str:
    n = max(len(labels), 1)
    cv = _Canvas(title, x_label, y_label, (0.0, float(n)), (0.0, y_max))
    for k, (lab, v) in enumerate(zip(labels, values)):
        if v is None:
            continue
        x = cv.px(k + 0.15)
        w = cv.px(k + 0.85) - x
        y = cv.py(float(v))
        cv.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{cv.py(0.0) - y:.2f}" fill="{COLORS[0]}"/>')
        cv.parts.append(
            f'<text x="{cv.px(k + 0.5):.2f}" y="{HEIGHT - BOTTOM + 32}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{escape(str(lab))}</text>'
        )
    return cv.render()


def line_chart(xs, series, title="", x_label="", y_label="", y_range=(0.0, 1.0)) -> str:
    """``series``: list of (label, ys); ``None`` values break the line."""
    cv = _Canvas(title, x_label, y_label, (float(min(xs)), float(max(xs))), y_range)
    for n, (label, ys) in enumerate(series):
        color = COLORS[n % len(COLORS)]
        pts = [f"{cv.px(float(x)):.2f},{cv.py(float(y)):.2f}" for x, y in zip(xs, ys) if y is not None]
        cv.parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" stroke-width="2"/>')
        for p in pts:
            cx, cy = p.split(",")
            cv.parts.append(f'<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>')
        cv.legend(label, color)
    return cv.render()
