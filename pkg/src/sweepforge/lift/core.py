"""Shared state of one sweep and the first pipeline stages: vertex lifts, edge lifts, end-time curves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..brep import BrepSolid, SourceRef, vertex_uses
from ..config import FT_DEADBAND, SolverConfig
from ..contact import funnel_jet, grazing, sweep_map, theta_values
from ..errors import DegenerateVertex, EndpointMismatch, NonSimpleSweepSuspected, OrientationUndetermined
from ..motion import Trajectory
from ..solve import (TracedCurve, edge_funnel_function, roots_1d, trace_implicit, trace_p_coc)

LEFT, RIGHT = 0, 1  # end index: t0 / t1


@dataclass
class VertexLift:
    vertex: int
    comp: int
    t: float
    out: int


@dataclass
class CapVertex:
    """Point where the lift of an input edge meets an end time."""

    edge: int
    end: int
    s: float
    out: int


@dataclass
class EdgeLift:
    edge: int
    comp: int
    st: np.ndarray  # traced (s, t) samples
    v_start: int
    v_end: int
    out: int
    closed: bool = False


@dataclass
class CocCurve:
    """Component of the fixed-time contact curve of one face at an end time."""

    face: int
    end: int
    comp: int
    t: float
    uv: np.ndarray
    v_start: int
    v_end: int
    out: int
    closed: bool = False


@dataclass
class Piece:
    """An oriented boundary piece of a face loop.

    ``kind`` is "lift" (edge lift), "coc" (end-time contact curve) or
    "capseg" (input edge at an end time).  ``uvt`` lists (u, v, t) in the owning
    input face's prism, ordered along the piece.
    """

    kind: str
    face: int
    out_edge: int
    sense: int
    start: int
    end: int
    uvt: np.ndarray
    coedge: int = -1  # input co-edge (lift, capseg)
    end_time: int = -1  # LEFT/RIGHT for coc and capseg
    ref: object = None

    def key(self):
        return (self.kind, self.out_edge, self.sense, self.face)


@dataclass
class SweepContext:
    solid: BrepSolid
    traj: Trajectory
    config: SolverConfig = field(default_factory=SolverConfig)
    out: BrepSolid = field(default_factory=BrepSolid)
    vertex_lifts: dict = field(default_factory=dict)  # input vertex -> [VertexLift]
    cap_vertices: dict = field(default_factory=dict)  # (edge, end) -> [CapVertex]
    edge_lifts: dict = field(default_factory=dict)  # input edge -> [EdgeLift]
    cocs: dict = field(default_factory=dict)  # (face, end) -> [CocCurve]
    end_vertices: dict = field(default_factory=dict)  # (input vertex, end) -> output vertex
    theta_min: float = np.inf
    theta_samples: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.traj.interval

    def patch(self, face: int):
        return self.solid.faces[face].geometry

    def face_coedges(self, face: int) -> list[int]:
        return [c for lid in self.solid.face_loops(face) for c in self.solid.loops[lid].coedges]

    def coedge_face(self, c: int) -> int:
        return self.solid.loops[self.solid.coedges[c].loop].face

    def vertex_normal(self, z: int):
        face, uv = vertex_uses(self.solid, z)[0]
        N, _, _ = self.patch(face).normal_jet(uv[0], uv[1])
        return N

    def check_theta(self, face: int, u, v, t, where: str):
        """Record theta over funnel samples; abort when the sweep is not simple."""
        u, v, t = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (u, v, t))
        if u.size == 0:
            return
        th, _ = theta_values(self.patch(face), self.traj, u, v, t)
        self.theta_samples += int(th.size)
        k = int(np.argmin(th))
        self.theta_min = min(self.theta_min, float(th[k]))
        if th[k] <= 0:
            raise NonSimpleSweepSuspected(
                f"theta = {th[k]:.3g} <= 0 at (u, v, t) = ({u[k]:.6g}, {v[k]:.6g}, {t[k]:.6g})",
                stage=where, entity=("face", face))


# -- vertices -------------------------------------------------------------------

def compute_vertices(ctx: SweepContext, z: int) -> list[VertexLift]:
    """Lift an input vertex: one output vertex per root of t -> g(z, t) in the open interval."""
    x = ctx.solid.vertices[z].position
    N = ctx.vertex_normal(z)
    t0, t1 = ctx.times
    roots = roots_1d(lambda t: grazing(ctx.traj, N, x, t), (t0, t1), ctx.config)
    if roots.tangential:
        raise DegenerateVertex(f"tangential contact times {roots.tangential}", stage="vertices", entity=z)
    span = t1 - t0
    out = []
    for t in roots:
        if t - t0 < 1e-12 * span or t1 - t < 1e-12 * span:
            ctx.diagnostics.setdefault("vertex_lift_at_end_time", []).append((z, t))
            continue
        pos, _ = _moved_point(ctx.traj, x, t)
        vid = ctx.out.add_vertex(pos, SourceRef("vertex", z, len(out), "contact"), time=t)
        out.append(VertexLift(z, len(out), float(t), vid))
    ctx.vertex_lifts[z] = out
    return out


def _moved_point(traj, x, t):
    jet = traj.pose(t)
    return jet.A @ x + jet.b, jet.A_dot @ x + jet.b_dot


# -- edges ----------------------------------------------------------------------

def edge_function(ctx: SweepContext, d: int):
    from ..solve import edge_carrier

    patch, pcurve = edge_carrier(ctx.solid, d)
    return patch, pcurve, edge_funnel_function(patch, pcurve, ctx.traj)


def compute_cap_crossings(ctx: SweepContext, d: int) -> None:
    """Roots of s -> f(delta(s), t_end) on an input edge; each becomes an output vertex."""
    patch, pcurve, fun = edge_function(ctx, d)
    s0, s1 = pcurve.interval
    for end, t in enumerate(ctx.times):
        phi = lambda s, t=t: fun(s, np.full_like(s, t))[0]  # noqa: E731
        roots = roots_1d(phi, (s0, s1), ctx.config)
        lst = []
        for k, s in enumerate(roots):
            if s - s0 < 1e-12 or s1 - s < 1e-12:
                ctx.diagnostics.setdefault("contact_at_vertex_at_end_time", []).append((d, end, s))
                continue
            uv = pcurve.point(s)
            pos = sweep_map(patch, ctx.traj, uv[0], uv[1], t).sigma
            vid = ctx.out.add_vertex(pos, SourceRef("edge", d, k, "cap"), time=t)
            lst.append(CapVertex(d, end, float(s), vid))
        ctx.cap_vertices[(d, end)] = lst


def compute_coedges(ctx: SweepContext, d: int) -> list[EdgeLift]:
    """Trace every component of the edge funnel of input edge ``d`` and lift it to an output edge."""
    edge = ctx.solid.edges[d]
    patch, pcurve, fun = edge_function(ctx, d)
    s0, s1 = pcurve.interval
    t0, t1 = ctx.times
    lifts0 = ctx.vertex_lifts[edge.start]
    lifts1 = ctx.vertex_lifts[edge.end]
    caps0 = ctx.cap_vertices[(d, LEFT)]
    caps1 = ctx.cap_vertices[(d, RIGHT)]
    boundary = {0: [L.t for L in lifts0], 1: [L.t for L in lifts1],
                2: [c.s for c in caps0], 3: [c.s for c in caps1]}
    curves = trace_implicit(fun, (s0, s1, t0, t1), ctx.config, owner=("edge", d), boundary=boundary)

    def bind(tag):
        if tag.kind == "closed":
            return None
        table = {0: (lifts0, "t"), 1: (lifts1, "t"), 2: (caps0, "s"), 3: (caps1, "s")}[tag.side]
        items, attr = table
        for it in items:
            if abs(getattr(it, attr) - tag.value) <= 1e-9 * max(1.0, abs(tag.value)):
                return it.out
        raise EndpointMismatch(f"edge-lift endpoint {tag} matches no vertex", stage="coedges", entity=d)

    out = []
    face = ctx.coedge_face(_param_coedge(ctx, d))
    for j, c in enumerate(curves):
        st = c.points
        uv = pcurve.point(st[:, 0])
        ctx.check_theta(face, uv[:, 0], uv[:, 1], st[:, 1], "coedges")
        pts = sweep_map(patch, ctx.traj, uv[:, 0], uv[:, 1], st[:, 1], check=False).sigma
        if c.closed:
            va = ctx.out.add_vertex(pts[0], SourceRef("edge", d, j, "contact"), time=float(st[0, 1]))
            vb = va
        else:
            va, vb = bind(c.start), bind(c.end)
            pts[0] = ctx.out.vertices[va].position
            pts[-1] = ctx.out.vertices[vb].position
        eid = ctx.out.add_edge(va, vb, pts, SourceRef("edge", d, j, "contact"), params=st)
        out.append(EdgeLift(d, j, st, va, vb, eid, c.closed))
    ctx.edge_lifts[d] = out
    return out


def _param_coedge(ctx, d):
    for c in ctx.solid.coedges:
        if c.edge == d and c.pcurve is not None:
            return c.id
    raise KeyError(d)


def lift_sign(ctx: SweepContext, lift: EdgeLift) -> tuple[int, int]:
    """(sign(-f_t), sample index) at the sample where |f_t| is largest."""
    patch, pcurve, fun = edge_function(ctx, lift.edge)
    st = lift.st
    _, _, ft = fun(st[:, 0], st[:, 1])
    k = int(np.argmax(np.abs(ft)))
    if abs(ft[k]) < FT_DEADBAND:
        raise OrientationUndetermined("f_t vanishes along the whole lift", stage="orient",
                                      entity=("edge", lift.edge, lift.comp))
    return (1 if ft[k] < 0 else -1), k


def orient_coedges(ctx: SweepContext, coedge: int, lifts: list[EdgeLift] | None = None) -> list[Piece]:
    """Oriented uses of the lifts of an input co-edge by the contact faces of its face.

    The lifted direction follows the input co-edge where -f_t > 0 and runs
    against it where -f_t < 0.
    """
    c = ctx.solid.coedges[coedge]
    face = ctx.coedge_face(coedge)
    pcurve = c.pcurve
    if lifts is None:
        lifts = ctx.edge_lifts[c.edge]
    pieces = []
    for lift in lifts:
        sign, k = lift_sign(ctx, lift)
        st = lift.st
        lo, hi = max(k - 1, 0), min(k + 1, len(st) - 1)
        ds = st[hi, 0] - st[lo, 0]
        want = c.sense * sign
        sense = 1 if ds * want > 0 else -1
        uv = pcurve.point(st[:, 0])
        uvt = np.column_stack([uv, st[:, 1]])
        if sense < 0:
            uvt = uvt[::-1]
        start, end = (lift.v_start, lift.v_end) if sense > 0 else (lift.v_end, lift.v_start)
        pieces.append(Piece("lift", face, lift.out, sense, start, end, uvt, coedge=coedge, ref=lift))
    return pieces


# -- end-time contact curves ------------------------------------------------------

def face_sides(ctx: SweepContext, face: int) -> dict:
    """Map each domain side (0: u=u0, 1: u=u1, 2: v=v0, 3: v=v1) to the co-edge lying on it."""
    u0, u1, v0, v1 = ctx.patch(face).domain
    out = {}
    for cid in ctx.face_coedges(face):
        pc = ctx.solid.coedges[cid].pcurve
        a, b = pc.point(np.array([pc.interval[0], pc.interval[1]]))
        for side, (axis, val) in enumerate([(0, u0), (0, u1), (1, v0), (1, v1)]):
            if abs(a[axis] - val) < 1e-12 and abs(b[axis] - val) < 1e-12:
                out[side] = cid
    return out


def _side_value(pc, s):
    """Coordinate along the domain side for edge parameter s."""
    uv = pc.point(s)
    a, b = pc.point(np.array([pc.interval[0], pc.interval[1]]))
    axis = 1 if abs(a[0] - b[0]) < 1e-12 else 0
    return float(uv[axis])


def compute_boundary_cocs(ctx: SweepContext, face: int, end: int) -> list[CocCurve]:
    """Components of the contact curve of ``face`` at t0 (end=0) or t1 (end=1)."""
    t = ctx.times[end]
    patch = ctx.patch(face)
    sides = face_sides(ctx, face)
    seeds: dict[int, list] = {}
    lookup = {}
    for side, cid in sides.items():
        c = ctx.solid.coedges[cid]
        vals = []
        for cv in ctx.cap_vertices[(c.edge, end)]:
            val = _side_value(c.pcurve, cv.s)
            vals.append(val)
            lookup[(side, val)] = cv.out
        seeds[side] = vals
    curves = trace_p_coc(patch, ctx.traj, t, ctx.config, seeds=seeds, face=face)
    out = []
    for k, c in enumerate(curves):
        uv = c.points
        tt = np.full(len(uv), t)
        ctx.check_theta(face, uv[:, 0], uv[:, 1], tt, "boundary-cocs")
        pts = sweep_map(patch, ctx.traj, uv[:, 0], uv[:, 1], tt, check=False).sigma
        src = SourceRef("face", face, k, "coc")
        if c.closed:
            va = vb = ctx.out.add_vertex(pts[0], src, time=t)
        else:
            va = _lookup(lookup, c.start, face)
            vb = _lookup(lookup, c.end, face)
            pts[0] = ctx.out.vertices[va].position
            pts[-1] = ctx.out.vertices[vb].position
        eid = ctx.out.add_edge(va, vb, pts, src, params=np.column_stack([uv, tt]))
        out.append(CocCurve(face, end, k, t, uv, va, vb, eid, c.closed))
    ctx.cocs[(face, end)] = out
    return out


def _lookup(table, tag, face):
    for (side, val), vid in table.items():
        if side == tag.side and abs(val - tag.value) <= 1e-9 * max(1.0, abs(val)):
            return vid
    raise EndpointMismatch(f"end-time contact curve endpoint {tag} matches no edge crossing",
                           stage="boundary-cocs", entity=face)


def coc_pieces(ctx: SweepContext, face: int, cap: bool) -> list[Piece]:
    """Oriented uses of the end-time contact curves of ``face``.

    For contact faces the curve at t0 runs along (f_v, -f_u) and the one at t1
    along (-f_v, f_u); caps use the opposite directions.
    """
    patch = ctx.patch(face)
    pieces = []
    for end in (LEFT, RIGHT):
        for coc in ctx.cocs[(face, end)]:
            uv = coc.uv
            k = len(uv) // 2
            j = funnel_jet(patch, ctx.traj, uv[k, 0], uv[k, 1], coc.t, check=False)
            lo, hi = max(k - 1, 0), min(k + 1, len(uv) - 1)
            d = uv[hi] - uv[lo]
            want = np.array([float(j.f_v), -float(j.f_u)])
            if end == RIGHT:
                want = -want
            if cap:
                want = -want
            sense = 1 if np.dot(d, want) > 0 else -1
            uvt = np.column_stack([uv, np.full(len(uv), coc.t)])
            if sense < 0:
                uvt = uvt[::-1]
            start, stop = (coc.v_start, coc.v_end) if sense > 0 else (coc.v_end, coc.v_start)
            pieces.append(Piece("coc", face, coc.out, sense, start, stop, uvt, end_time=end, ref=coc))
    return pieces


def traced_to_uvt(curve: TracedCurve, t: float) -> np.ndarray:
    return np.column_stack([curve.points, np.full(len(curve.points), t)])
