"""Deterministic SVG 1.1 rendering of landscape geometry.

Output depends only on the input data: elements are written in a fixed order
and every coordinate is printed with six decimals, so files can be compared
byte for byte.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .landscape import LandscapeData

WIDTH = 480.0
HEIGHT = 480.0
MARGIN = 24.0

REGION_FILLS = ("#dfe9f5", "#f6dfc7", "#d8efd2", "#eed6ee", "#f3efc2")
PRE_FILL = "#ececec"


def _num(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


class _Mapper:
    def __init__(self, bbox):
        t0, t1, x0, x1 = bbox
        self.t0, self.t1, self.x0, self.x1 = t0, t1, x0, x1
        self.sx = (WIDTH - 2 * MARGIN) / (x1 - x0)
        self.st = (HEIGHT - 2 * MARGIN) / (t1 - t0)

    def __call__(self, x: float, t: float) -> tuple[str, str]:
        # time runs up the page
        return _num(MARGIN + (x - self.x0) * self.sx), _num(HEIGHT - MARGIN - (t - self.t0) * self.st)


def _fill(label) -> str:
    if label is None or label == "pre":
        return PRE_FILL
    return REGION_FILLS[int(label) % len(REGION_FILLS)]


def render_svg(data: LandscapeData, title: str = "collapse landscape") -> str:
    m = _Mapper(data.bbox)
    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_num(WIDTH)}" height="{_num(HEIGHT)}" '
        f'viewBox="0 0 {_num(WIDTH)} {_num(HEIGHT)}">',
        f"<title>{escape(title)}</title>",
        '<g id="regions">',
    ]
    for reg in data.regions:
        label = reg["label"]
        for ring in reg["polygons"]:
            pts = " ".join(",".join(m(x, t)) for x, t in ring)
            out.append(
                f'<polygon points="{pts}" fill="{_fill(label)}" stroke="none" '
                f'data-region="{escape(str(label if label is not None else ""))}"/>'
            )
    out.append("</g>")
    out.append('<g id="cones" fill="none" stroke="#333333" stroke-width="1.000000">')
    for cone in data.cones:
        for line in cone["polylines"]:
            pts = " ".join(",".join(m(x, t)) for x, t in line)
            out.append(f'<polyline points="{pts}" data-record="{cone["record"]}"/>')
    out.append("</g>")
    out.append('<g id="vertices">')
    for mk in data.markers:
        cx, cy = m(mk["x"], mk["t"])
        out.append(f'<circle cx="{cx}" cy="{cy}" r="{_num(4.0)}" fill="#b22222" data-record="{mk["record"]}"/>')
        out.append(
            f'<text x="{_num(float(cx) + 6.0)}" y="{_num(float(cy) - 6.0)}" font-family="sans-serif" '
            f'font-size="{_num(12.0)}">{escape(mk["label"])}</text>'
        )
    out.append("</g>")
    if data.double_peaked:
        out.append(f'<text x="{_num(MARGIN)}" y="{_num(MARGIN - 8.0)}" font-family="sans-serif" '
                   f'font-size="{_num(12.0)}">double-peaked</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(data: LandscapeData, path: str | Path, title: str = "collapse landscape") -> Path:
    path = Path(path)
    path.write_text(render_svg(data, title), encoding="utf-8")
    return path
