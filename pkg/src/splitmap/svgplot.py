"""Minimal deterministic SVG emitters: line plot, heat map, histogram.

Plots are derived views; the adjacent CSV files are canonical.  The
documents are self-contained, text-stable (fixed float formatting, no
timestamps or random ids), so identical inputs give identical bytes.
"""

from __future__ import annotations

import math

W, H = 640, 420
MARGIN = 60


def _fmt(x: float) -> str:
    return format(x, ".6g")


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2}" y="24" text-anchor="middle" font-family="monospace" font-size="15">{title}</text>',
    ]


def _axes(xlo, xhi, ylo, yhi, xlabel, ylabel) -> list[str]:
    out = [
        f'<line x1="{MARGIN}" y1="{H-MARGIN}" x2="{W-20}" y2="{H-MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{H-MARGIN}" x2="{MARGIN}" y2="40" stroke="black"/>',
        f'<text x="{(W+MARGIN)/2}" y="{H-16}" text-anchor="middle" font-family="monospace" font-size="12">{xlabel}</text>',
        f'<text x="16" y="{(H)/2}" text-anchor="middle" font-family="monospace" font-size="12" transform="rotate(-90 16 {H/2})">{ylabel}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = xlo + frac * (xhi - xlo)
        yv = ylo + frac * (yhi - ylo)
        px = MARGIN + frac * (W - 20 - MARGIN)
        py = H - MARGIN - frac * (H - MARGIN - 40)
        out.append(
            f'<text x="{_fmt(px)}" y="{H-MARGIN+16}" text-anchor="middle" font-family="monospace" font-size="10">{_fmt(xv)}</text>'
        )
        out.append(
            f'<text x="{MARGIN-6}" y="{_fmt(py+3)}" text-anchor="end" font-family="monospace" font-size="10">{_fmt(yv)}</text>'
        )
    return out


def _map(x, lo, hi, plo, phi):
    if hi <= lo:
        return 0.5 * (plo + phi)
    return plo + (x - lo) / (hi - lo) * (phi - plo)


def line_plot(points: list[tuple[float, float]], title: str, xlabel: str, ylabel: str,
              annotations: list[str] = ()) -> str:
    pts = [(x, y) for x, y in points if math.isfinite(x) and math.isfinite(y)]
    if not pts:
        return "\n".join(_header(title + " (no finite data)") + ["</svg>"])
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(0.0, min(ys)), max(ys) * 1.05 if max(ys) > 0 else 1.0
    out = _header(title) + _axes(xlo, xhi, ylo, yhi, xlabel, ylabel)
    coords = [
        (_map(x, xlo, xhi, MARGIN, W - 20), _map(y, ylo, yhi, H - MARGIN, 40)) for x, y in pts
    ]
    path = " ".join(f"{_fmt(cx)},{_fmt(cy)}" for cx, cy in coords)
    out.append(f'<polyline points="{path}" fill="none" stroke="#1f5fa8" stroke-width="2"/>')
    for cx, cy in coords:
        out.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="4" fill="#1f5fa8"/>')
    for i, note in enumerate(annotations):
        out.append(
            f'<text x="{W-24}" y="{44+14*i}" text-anchor="end" font-family="monospace" font-size="11" fill="#a83232">{note}</text>'
        )
    out.append("</svg>")
    return "\n".join(out)


def heat_map(matrix: list[list[float]], title: str, annotations: list[str] = ()) -> str:
    n = len(matrix)
    out = _header(title)
    finite = [v for row in matrix for v in row if v is not None and math.isfinite(v)]
    vmax = max(finite) if finite else 1.0
    vmax = vmax if vmax > 0 else 1.0
    cell = min((W - 2 * MARGIN) / max(n, 1), (H - 2 * MARGIN) / max(n, 1))
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            x = MARGIN + j * cell
            y = 60 + i * cell
            if v is None or not math.isfinite(v):
                color = "#cccccc"
                label = "nan"
            else:
                t = max(0.0, min(1.0, v / vmax))
                r = int(255 * t)
                b = int(255 * (1 - t))
                color = f"rgb({r},60,{b})"
                label = _fmt(v)
            out.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cell)}" height="{_fmt(cell)}" fill="{color}" stroke="white"/>'
            )
            out.append(
                f'<text x="{_fmt(x+cell/2)}" y="{_fmt(y+cell/2+4)}" text-anchor="middle" font-family="monospace" font-size="11" fill="white">{label}</text>'
            )
    for i, note in enumerate(annotations):
        out.append(
            f'<text x="{W-24}" y="{44+14*i}" text-anchor="end" font-family="monospace" font-size="11" fill="#a83232">{note}</text>'
        )
    out.append("</svg>")
    return "\n".join(out)


def histogram(edges: list[float], counts: list[int], title: str, xlabel: str,
              annotations: list[str] = ()) -> str:
    out = _header(title)
    if not counts or max(counts) == 0:
        out.append("</svg>")
        return "\n".join(out)
    cmax = max(counts)
    xlo, xhi = edges[0], edges[-1]
    out += _axes(xlo, xhi, 0, cmax, xlabel, "count")
    for k, c in enumerate(counts):
        x0 = _map(edges[k], xlo, xhi, MARGIN, W - 20)
        x1 = _map(edges[k + 1], xlo, xhi, MARGIN, W - 20)
        y = _map(c, 0, cmax, H - MARGIN, 40)
        out.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(y)}" width="{_fmt(max(x1-x0-0.5, 0.5))}" height="{_fmt(H-MARGIN-y)}" fill="#3a8f5f"/>'
        )
    for i, note in enumerate(annotations):
        out.append(
            f'<text x="{W-24}" y="{44+14*i}" text-anchor="end" font-family="monospace" font-size="11" fill="#a83232">{note}</text>'
        )
    out.append("</svg>")
    return "\n".join(out)
