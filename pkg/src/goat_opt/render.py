"""Dependency-free SVG drawings of linkage poses and graspable regions."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .environment import BivariateLogNormal, pdf
from .linkage import Configuration, LinkageTopology

_BODY_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22")


def _num(v: float) -> str:
    return repr(float(v))


def linkage_svg(topo: LinkageTopology, config: Configuration, title: str = "", margin: float = 15.0) -> str:
    """Pose drawing in millimetre coordinates (y up) with labelled D, M and N.

    Each named point is emitted as ``<circle id="pt-NAME">`` whose ``cx``/``cy``
    are the exact model coordinates.
    """
    pts = np.array([p for p in config.points.values()])
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    w, h = hi - lo
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_num(lo[0])} {_num(-hi[1])} {_num(w)} {_num(h)}" '
        f'width="{int(4 * w)}" height="{int(4 * h)}">',
        f"<title>{escape(title)}</title>",
        '<g transform="scale(1,-1)" fill="none" stroke-linecap="round">',
    ]
    for k, body in enumerate(topo.bodies):
        color = "#000000" if body == topo.ground else _BODY_COLORS[k % len(_BODY_COLORS)]
        for p in topo.body_points[body]:
            if p.base is None:
                continue
            a = config.points[f"{body}.{p.base}"]
            b = config.points[f"{body}.{p.name}"]
            out.append(
                f'<line class="link" data-body="{body}" data-link="{p.link}" x1="{_num(a[0])}" y1="{_num(a[1])}" '
                f'x2="{_num(b[0])}" y2="{_num(b[1])}" stroke="{color}" stroke-width="1.2"/>'
            )
    for j in topo.joints:
        c = config.points["{}.{}".format(*j["a"])]
        out.append(f'<circle class="joint" cx="{_num(c[0])}" cy="{_num(c[1])}" r="1.1" stroke="#000" stroke-width="0.4"/>')
    for name in ("D", "M", "N"):
        c = config.points[name]
        out.append(f'<circle id="pt-{name}" cx="{_num(c[0])}" cy="{_num(c[1])}" r="1.6" fill="#d62728"/>')
    out.append("</g>")
    for name in ("D", "M", "N"):
        c = config.points[name]
        out.append(f'<text x="{_num(c[0] + 2)}" y="{_num(-c[1] - 2)}" font-size="5">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _shade(t: float) -> str:
    # white to dark blue
    t = min(max(t, 0.0), 1.0)
    r = int(round(255 * (1 - t) + 8 * t))
    g = int(round(255 * (1 - t) + 48 * t))
    b = int(round(255 * (1 - t) + 107 * t))
    return f"#{r:02x}{g:02x}{b:02x}"


def coverage_svg(
    env: BivariateLogNormal,
    omegas,
    heights,
    coverage: float,
    w_max: float | None = None,
    h_max: float | None = None,
    cells: int = 60,
) -> str:
    """Density heat map over (width, height) with the graspable boundary.

    The boundary polyline ``id="boundary"`` has one vertex per workspace sample
    at ``(omega_i, H_i)``; the graspable region lies above it. ``coverage`` is
    written into the legend.
    """
    omegas = np.asarray(omegas, float)
    heights = np.asarray(heights, float)
    w_max = w_max or float(max(omegas.max() * 1.3, np.exp(env.mu[0] + 2.5 * env.sigma[0])))
    h_max = h_max or float(np.exp(env.mu[1] + 2.5 * env.sigma[1]))
    size, pad = 400.0, 50.0
    sx, sy = size / w_max, size / h_max

    def px(w, hgt):
        return pad + w * sx, pad + size - hgt * sy

    ws = (np.arange(cells) + 0.5) * w_max / cells
    hs = (np.arange(cells) + 0.5) * h_max / cells
    dens = pdf(env, ws[:, None], hs[None, :])
    top = dens.max() or 1.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(size + 2 * pad)}" height="{int(size + 2 * pad + 30)}">',
        "<title>graspable range over hold-size density</title>",
        '<g id="heatmap">',
    ]
    cw, ch = size / cells, size / cells
    for i in range(cells):
        for j in range(cells):
            x0, y0 = px(i * w_max / cells, (j + 1) * h_max / cells)
            out.append(f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{cw:.3f}" height="{ch:.3f}" fill="{_shade(dens[i, j] / top)}"/>')
    out.append("</g>")
    verts = " ".join("{:.6f},{:.6f}".format(*px(w, min(hgt, h_max))) for w, hgt in zip(omegas, heights))
    out.append(f'<polyline id="boundary" points="{verts}" fill="none" stroke="#d62728" stroke-width="2"/>')
    for w, hgt in zip(omegas, heights):
        x, y = px(w, min(hgt, h_max))
        out.append(f'<circle class="sample" cx="{x:.6f}" cy="{y:.6f}" r="2.5" fill="#d62728"/>')
    x0, y0 = px(0, 0)
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + size}" y2="{y0}" stroke="#000"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 - size}" stroke="#000"/>')
    out.append(f'<text x="{x0 + size / 2}" y="{y0 + 30}" font-size="12" text-anchor="middle">width (mm), max {w_max:.1f}</text>')
    out.append(f'<text x="{x0 - 35}" y="{y0 - size / 2}" font-size="12" transform="rotate(-90 {x0 - 35} {y0 - size / 2})">height (mm), max {h_max:.1f}</text>')
    out.append(f'<text id="legend" x="{pad}" y="{pad - 15}" font-size="13">graspable coverage CDF = {100 * coverage:.1f}%</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
