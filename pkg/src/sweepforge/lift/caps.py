"""End caps: the parts of the solid at t0 and t1 that stay on the boundary of the swept volume."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..brep import SourceRef
from ..contact import outward_normal, sweep_map
from ..errors import OrphanLoop
from .core import LEFT, Piece, SweepContext, coc_pieces, edge_function
from .loops import build_loops

CAP_EDGE_SAMPLES = 33


@dataclass
class CapFace:
    """A region of one input face, placed at the pose of an end time.

    The left cap (t0) keeps the region where points move into the solid
    (f <= 0); the right cap (t1) keeps the region where they move out.
    """

    face: int
    end: int
    component: int
    patch: object
    traj: object
    t: float
    loops: list = field(default_factory=list)  # first entry is the outer loop

    def eval(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return sweep_map(self.patch, self.traj, u, v, np.full(u.shape, self.t), check=False).sigma

    def normal(self, u, v):
        u = np.asarray(u, dtype=float)
        return outward_normal(self.patch, self.traj, u, v, np.full(u.shape, self.t))

    def domain_loops(self) -> list[np.ndarray]:
        return [np.concatenate([p.uvt[:-1, :2] for p in loop]) for loop in self.loops]


def _keep(end: int, f: float) -> bool:
    return f < 0 if end == LEFT else f > 0


def _end_vertex(ctx: SweepContext, z: int, end: int) -> int:
    key = (z, end)
    if key not in ctx.end_vertices:
        t = ctx.times[end]
        jet = ctx.traj.pose(t)
        x = ctx.solid.vertices[z].position
        ctx.end_vertices[key] = ctx.out.add_vertex(jet.A @ x + jet.b, SourceRef("vertex", z, 0, "cap"), time=t)
    return ctx.end_vertices[key]


def cap_segments(ctx: SweepContext, d: int, end: int) -> list[tuple[int, float, float]]:
    """Kept intervals of input edge ``d`` at an end time, as (output edge, s_lo, s_hi).

    Output edges are created once and shared by the two cap faces that use them.
    """
    cache = ctx.diagnostics.setdefault("_capseg", {})
    if (d, end) in cache:
        return cache[(d, end)]
    edge = ctx.solid.edges[d]
    patch, pcurve, fun = edge_function(ctx, d)
    s0, s1 = pcurve.interval
    t = ctx.times[end]
    crossings = sorted(ctx.cap_vertices[(d, end)], key=lambda c: c.s)
    cuts = [(s0, None)] + [(c.s, c.out) for c in crossings] + [(s1, None)]
    out = []
    for k in range(len(cuts) - 1):
        (sa, va), (sb, vb) = cuts[k], cuts[k + 1]
        f_mid = float(fun(np.array([0.5 * (sa + sb)]), np.array([t]))[0][0])
        if not _keep(end, f_mid):
            continue
        if va is None:
            va = _end_vertex(ctx, edge.start, end)
        if vb is None:
            vb = _end_vertex(ctx, edge.end, end)
        s = np.linspace(sa, sb, CAP_EDGE_SAMPLES)
        uv = pcurve.point(s)
        pts = sweep_map(patch, ctx.traj, uv[:, 0], uv[:, 1], np.full(len(s), t), check=False).sigma
        pts[0] = ctx.out.vertices[va].position
        pts[-1] = ctx.out.vertices[vb].position
        eid = ctx.out.add_edge(va, vb, pts, SourceRef("edge", d, k, "cap"), params=s[:, None])
        out.append((eid, sa, sb))
    cache[(d, end)] = out
    return out


def capseg_pieces(ctx: SweepContext, face: int, end: int) -> list[Piece]:
    """Kept input-edge intervals around ``face``, oriented like the input co-edges."""
    pieces = []
    t = ctx.times[end]
    for cid in ctx.face_coedges(face):
        c = ctx.solid.coedges[cid]
        for eid, sa, sb in cap_segments(ctx, c.edge, end):
            s = np.linspace(sa, sb, CAP_EDGE_SAMPLES)
            uv = c.pcurve.point(s)
            uvt = np.column_stack([uv, np.full(len(s), t)])
            e = ctx.out.edges[eid]
            start, stop = (e.start, e.end) if c.sense > 0 else (e.end, e.start)
            if c.sense < 0:
                uvt = uvt[::-1]
            pieces.append(Piece("capseg", face, eid, c.sense, start, stop, uvt, coedge=cid, end_time=end))
    return pieces


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def point_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd containment of points in a closed polygon."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0:1], pts[:, 1:2]
    a = poly
    b = np.roll(poly, -1, axis=0)
    cond = (a[:, 1] > y) != (b[:, 1] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
    return np.sum(cond & (x < xint), axis=1) % 2 == 1


def build_end_caps(ctx: SweepContext, face: int, end: int) -> list[CapFace]:
    """Cap faces of one input face at one end time (possibly none)."""
    pieces = coc_pieces(ctx, face, cap=True)
    pieces = [p for p in pieces if p.end_time == end] + capseg_pieces(ctx, face, end)
    if not pieces:
        return []
    loops = build_loops(ctx, pieces)
    polys = [np.concatenate([p.uvt[:-1, :2] for p in loop]) for loop in loops]
    areas = [signed_area(p) for p in polys]
    outer = [k for k, a in enumerate(areas) if a > 0]
    outer.sort(key=lambda k: -areas[k])
    caps = [CapFace(face, end, i, ctx.patch(face), ctx.traj, ctx.times[end], [loops[k]])
            for i, k in enumerate(outer)]
    for k, a in enumerate(areas):
        if a > 0:
            continue
        probe = polys[k][:1]
        owners = [i for i, j in enumerate(outer) if point_in_polygon(probe, polys[j])[0]]
        if not owners:
            raise OrphanLoop("inner cap loop lies in no outer loop", stage="caps", entity=("face", face))
        # innermost containing outer loop is the one with the smallest area
        i = min(owners, key=lambda i: areas[outer[i]])
        caps[i].loops.append(loops[k])
    return caps
