"""Deterministic SVG rendering of transport maps."""
from __future__ import annotations

import numpy as np

DEFAULT_STYLE = {
    "width": 640,
    "margin": 16,
    "cell_stroke": "#9a9a9a",
    "cell_width": 0.4,
    "arrow_color": "#c0392b",
    "arrow_width": 0.8,
    "max_arrows": 600,
    "source_stroke": "#222222",
    "target_stroke": "#1f6fb2",
    "probe_color": "#f39c12",
    "probe_width": 2.5,
}


def _f(x: float) -> str:
    return format(float(x), ".6g")


class _Frame:
    def __init__(self, pts: np.ndarray, width: int, margin: int):
        lo, hi = pts.min(0), pts.max(0)
        span = np.maximum(hi - lo, 1e-12)
        self.s = (width - 2 * margin) / max(span)
        self.lo, self.margin = lo, margin
        self.height = int(round(span[1] * self.s + 2 * margin))
        self.width = int(round(span[0] * self.s + 2 * margin))

    def __call__(self, p) -> tuple[str, str]:
        x = self.margin + (p[0] - self.lo[0]) * self.s
        y = self.height - self.margin - (p[1] - self.lo[1]) * self.s
        return _f(x), _f(y)


def _path(frame: _Frame, poly) -> str:
    pts = [frame(p) for p in poly]
    return "M" + " L".join(f"{x},{y}" for x, y in pts) + " Z"


def _arrow_stride(n: int, cap: int) -> int:
    return max(1, int(np.ceil(n / cap)))


def render_svg(artifact: dict, style: dict | None = None) -> str:
    """SVG text for a diagram or transport-sample artifact.

    A diagram artifact carries "cells", "sites" and a "source" polygon; sample
    artifacts carry "sources" and "images". Optional keys "target" (polygon)
    and "probes" (list of segments) are drawn on top.
    """
    st = dict(DEFAULT_STYLE)
    st.update(style or {})
    groups = []
    pts = []
    if "cells" in artifact:
        cells = [np.asarray(c, float).reshape(-1, 2) for c in artifact["cells"]]
        sites = np.asarray(artifact["sites"], float).reshape(-1, 2)
        starts = np.array([c.mean(0) if len(c) else s for c, s in zip(cells, sites)])
        ends = sites
        pts += [c for c in cells if len(c)] + [sites]
    else:
        cells = []
        starts = np.asarray(artifact["sources"], float).reshape(-1, 2)
        ends = np.asarray(artifact["images"], float).reshape(-1, 2)
        pts += [starts, ends]
    source = np.asarray(artifact.get("source", {}).get("vertices", []), float).reshape(-1, 2)
    target = np.asarray(artifact.get("target", {}).get("vertices", []), float).reshape(-1, 2)
    probes = [np.asarray(s, float).reshape(2, 2) for s in artifact.get("probes", [])]
    pts += [p for p in (source, target) if len(p)] + probes
    frame = _Frame(np.vstack(pts), st["width"], st["margin"])

    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{frame.width}" height="{frame.height}" '
            f'viewBox="0 0 {frame.width} {frame.height}">')
    defs = ('<defs><marker id="tip" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" '
            f'orient="auto"><path d="M0,0 L10,5 L0,10 Z" fill="{st["arrow_color"]}"/></marker></defs>')
    if cells:
        d = " ".join(_path(frame, c) for c in cells if len(c) >= 3)
        groups.append(f'<path d="{d}" fill="none" stroke="{st["cell_stroke"]}" stroke-width="{st["cell_width"]}"/>')
    for poly, color in ((source, st["source_stroke"]), (target, st["target_stroke"])):
        if len(poly) >= 3:
            groups.append(f'<path d="{_path(frame, poly)}" fill="none" stroke="{color}" stroke-width="1.2"/>')
    stride = _arrow_stride(len(starts), int(st["max_arrows"]))
    lines = []
    for a, b in zip(starts[::stride], ends[::stride]):
        (x1, y1), (x2, y2) = frame(a), frame(b)
        lines.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}"/>')
    groups.append(f'<g stroke="{st["arrow_color"]}" stroke-width="{st["arrow_width"]}" marker-end="url(#tip)">'
                  + "".join(lines) + "</g>")
    for seg in probes:
        (x1, y1), (x2, y2) = frame(seg[0]), frame(seg[1])
        groups.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{st["probe_color"]}" '
                      f'stroke-width="{st["probe_width"]}"/>')
    return "\n".join([head, defs, *groups, "</svg>"]) + "\n"
