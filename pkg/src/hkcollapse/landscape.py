"""Spacetime partition into collapse peaks, plus diagram geometry.

A peak is the set of events whose state version is governed by one ledger
record. The default rule is front limited: collapses earlier in the causal
order bound the influence of later ones, so an event sits in peak ``k`` when
records ``0..k`` all affect it and record ``k+1`` does not.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from shapely.geometry import LineString, MultiPolygon, Polygon, box
from shapely.ops import unary_union

from .minkowski import Boost, Event, boost, classify
from .qrules import FRONT_LIMITED, LATEST, CausalLedger, version_index

PRE = "pre"


class RenderError(ValueError):
    pass


def assign_peak(e: Event, ledger: CausalLedger, rule: str = FRONT_LIMITED) -> int | None:
    """Priority index of the peak containing ``e``; None in the pre-collapse region."""
    return version_index(e, ledger, rule)


def region_label(k: int | None) -> str:
    return PRE if k is None else str(k)


@dataclass(frozen=True)
class LandscapeCell:
    """Events sharing one owning record. ``pattern`` is the affected-by tuple."""

    owning_record: int | None
    pattern: tuple[bool, ...]

    def contains(self, e: Event, ledger: CausalLedger) -> bool:
        return tuple(r.affects(e) for r in ledger) == self.pattern


def vertex_bbox(ledger: CausalLedger, pad: float = 1.0) -> tuple[float, float, float, float]:
    """(t_min, t_max, x_min, x_max) enclosing every vertex with margin ``pad``."""
    vs = [v for r in ledger for v in r.vertices]
    if not vs:
        return (-pad, pad, -pad, pad)
    ts = [v.t for v in vs]
    xs = [v.x for v in vs]
    return (min(ts) - pad, max(ts) + pad, min(xs) - pad, max(xs) + pad)


def spacetime_grid(
    ledger: CausalLedger, n: int = 100, bbox: Sequence[float] | None = None, frame: str | None = None
) -> list[Event]:
    """n x n events over ``bbox`` (t_min, t_max, x_min, x_max) in the ledger's frame."""
    t0, t1, x0, x1 = bbox if bbox is not None else vertex_bbox(ledger)
    fr = frame or ledger.frame or "lab"
    return [
        Event("g", (float(t), float(x), 0.0, 0.0), fr)
        for t in np.linspace(t0, t1, n)
        for x in np.linspace(x0, x1, n)
    ]


def tile(events: Iterable[Event], ledger: CausalLedger, rule: str = FRONT_LIMITED) -> dict[str, list[Event]]:
    """Group events by state version. Each event lands in exactly one group."""
    out: dict[str, list[Event]] = {}
    for e in events:
        out.setdefault(region_label(assign_peak(e, ledger, rule)), []).append(e)
    return out


def check_influence_limitation(
    ledger: CausalLedger, n: int = 100, bbox: Sequence[float] | None = None, rule: str = FRONT_LIMITED
) -> bool:
    """No grid event inside an earlier collapse's backward cone takes a later version.

    Vacuously true for fewer than two records.
    """
    if len(ledger) < 2:
        return True
    for e in spacetime_grid(ledger, n, bbox):
        k = assign_peak(e, ledger, rule)
        if k is None:
            continue
        for r in ledger.records[:k]:
            if not r.affects(e):
                return False
    return True


def random_boosts(n: int, vmax: float = 0.99, seed: int = 0, dim: int = 3) -> list[Boost]:
    """``n`` boosts with speed uniform on [0, vmax] and isotropic direction."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        d = rng.normal(size=dim)
        d = d / np.linalg.norm(d)
        v = np.zeros(3)
        v[:dim] = d * rng.uniform(0.0, vmax)
        out.append(Boost(tuple(float(c) for c in v)))
    return out


def frame_invariance_report(
    ledger: CausalLedger,
    boosts: Sequence[Boost],
    grid: int = 24,
    bbox: Sequence[float] | None = None,
    rule: str = FRONT_LIMITED,
) -> dict[str, Any]:
    """Re-express every vertex and a grid of events under each boost and compare."""
    vs = [v for r in ledger for v in r.vertices]
    events = spacetime_grid(ledger, grid, bbox) if len(ledger) else []
    base_peaks = [assign_peak(e, ledger, rule) for e in events]
    base_cls = [classify(vs[i], vs[j]) for i in range(len(vs)) for j in range(i + 1, len(vs))]
    flips = peak_changes = order_changes = 0
    for b in boosts:
        bl = ledger.map_vertices(lambda e: boost(e, b))
        if bl.order() != ledger.order():
            order_changes += 1
        bvs = [v for r in bl for v in r.vertices]
        cls = [classify(bvs[i], bvs[j]) for i in range(len(bvs)) for j in range(i + 1, len(bvs))]
        flips += sum(a is not c for a, c in zip(base_cls, cls))
        peak_changes += sum(assign_peak(boost(e, b), bl, rule) != k for e, k in zip(events, base_peaks))
    return {
        "boosts": len(boosts),
        "grid_points": len(events),
        "classification_flips": flips,
        "peak_changes": peak_changes,
        "order_changes": order_changes,
        "pass": flips == 0 and peak_changes == 0 and order_changes == 0,
    }


# Diagram geometry ------------------------------------------------------------------

@dataclass
class LandscapeData:
    bbox: tuple[float, float, float, float]
    cones: list[dict] = field(default_factory=list)
    regions: list[dict] = field(default_factory=list)
    markers: list[dict] = field(default_factory=list)
    double_peaked: bool = False
    rule: str = FRONT_LIMITED

    def to_dict(self) -> dict:
        return {
            "bbox": list(self.bbox),
            "rule": self.rule,
            "double_peaked": self.double_peaked,
            "cones": self.cones,
            "regions": self.regions,
            "markers": self.markers,
        }

    @property
    def labels(self) -> list[str | None]:
        return [r["label"] for r in self.regions]


# shapely works in (x, t) plane coordinates
def _cone_polygon(v: Event, t_min: float) -> Polygon:
    h = v.t - t_min
    return Polygon([(v.x, v.t), (v.x - h, t_min), (v.x + h, t_min)])


def _rings(geom) -> list[list[list[float]]]:
    if geom.is_empty:
        return []
    polys = list(geom.geoms) if isinstance(geom, MultiPolygon) else [geom] if isinstance(geom, Polygon) else [
        g for g in getattr(geom, "geoms", []) if isinstance(g, Polygon)
    ]
    polys.sort(key=lambda p: (round(p.bounds[1], 9), round(p.bounds[0], 9)))
    out = []
    for p in polys:
        p = p.normalize()
        out.append([[float(x), float(t)] for x, t in p.exterior.coords])
    return out


def emit_landscape(
    ledger: CausalLedger, bbox: Sequence[float] | None = None, rule: str = FRONT_LIMITED
) -> LandscapeData:
    """Cone boundaries, peak regions and vertex markers for a 1+1D ledger.

    ``bbox`` is (t_min, t_max, x_min, x_max). Regions are polygons whose
    points are (x, t) pairs; region labels are "pre", "0", "1", ... and a
    ledger with no records yields one region labelled None.
    """
    t0, t1, x0, x1 = tuple(float(b) for b in (bbox if bbox is not None else vertex_bbox(ledger)))
    if not (t1 > t0 and x1 > x0):
        raise RenderError("bounding box must have positive extent")
    for r in ledger:
        for v in r.vertices:
            if v.coords[2] != 0.0 or v.coords[3] != 0.0:
                raise RenderError(f"vertex {v.label!r} leaves the t-x plane; only 1+1D can be rendered")
    frame = box(x0, t0, x1, t1)
    data = LandscapeData((t0, t1, x0, x1), rule=rule)
    if not len(ledger):
        data.regions.append({"label": None, "polygons": _rings(frame)})
        return data
    backs = []
    for r in ledger:
        cones = [_cone_polygon(v, t0) for v in r.vertices]
        backs.append(unary_union(cones).intersection(frame))
        for v in r.vertices:
            h = v.t - t0
            left = LineString([(v.x - h, t0), (v.x, v.t)]).intersection(frame)
            right = LineString([(v.x, v.t), (v.x + h, t0)]).intersection(frame)
            data.cones.append({
                "record": r.priority_index,
                "vertex": v.label,
                "polylines": [[[float(a), float(b)] for a, b in seg.coords] for seg in (left, right) if not seg.is_empty],
            })
            data.markers.append({"record": r.priority_index, "label": v.label, "x": v.x, "t": v.t})
        if r.is_dual:
            data.double_peaked = True
    affected = [frame.difference(b) for b in backs]
    n = len(affected)
    if rule == FRONT_LIMITED:
        regions = [(None, backs[0])]
        inter = frame
        for k in range(n):
            inter = inter.intersection(affected[k])
            region = inter.difference(affected[k + 1]) if k + 1 < n else inter
            regions.append((k, region))
    elif rule == LATEST:
        regions = []
        covered = None
        for k in range(n - 1, -1, -1):
            region = affected[k] if covered is None else affected[k].difference(covered)
            regions.append((k, region))
            covered = affected[k] if covered is None else covered.union(affected[k])
        regions.append((None, frame.difference(covered)))
        regions.sort(key=lambda kr: -1 if kr[0] is None else kr[0])
    else:
        raise ValueError(f"unknown rule {rule!r}")
    for k, geom in regions:
        data.regions.append({"label": region_label(k), "polygons": _rings(geom)})
    return data
