"""Contact faces: grouping loops into funnel components and their (q, t) parametrization."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..contact import funnel_jet, outward_normal, sweep_map
from ..errors import FaceGeometryError, NoConvergence, OutsideTrim, OrphanLoop
from ..solve import ImplicitTracer, project_to_funnel
from .core import Piece, SweepContext


@dataclass
class Row:
    """A sampled contact curve of one face component at time t."""

    t: float
    uv: np.ndarray
    xyz: np.ndarray
    q: np.ndarray
    length: float

    @classmethod
    def from_uv(cls, patch, traj, t, uv, xyz=None):
        uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        if xyz is None:
            xyz = sweep_map(patch, traj, uv[:, 0], uv[:, 1], np.full(len(uv), t), check=False).sigma
        d = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(xyz, axis=0), axis=1))]
        L = float(d[-1])
        q = d / L if L > 0 else np.zeros(len(uv))
        if L > 0:
            q[-1] = 1.0
        return cls(float(t), uv, np.asarray(xyz, dtype=float), q, L)

    def uv_at(self, q):
        q = np.asarray(q, dtype=float)
        if len(self.uv) == 1 or self.length == 0:
            return np.broadcast_to(self.uv[0], q.shape + (2,)).copy()
        return np.stack([np.interp(q, self.q, self.uv[:, 0]), np.interp(q, self.q, self.uv[:, 1])], axis=-1)


def _row_point(row: Row, q: float) -> np.ndarray:
    if len(row.xyz) == 1 or row.length == 0:
        return row.xyz[0]
    return np.array([np.interp(q, row.q, row.xyz[:, k]) for k in range(3)])


def _nearest_on_row(row: Row, p: np.ndarray) -> tuple[float, float]:
    """(q, distance) of the point of a row polyline nearest to p."""
    if len(row.xyz) == 1 or row.length == 0:
        return 0.5, float(np.linalg.norm(row.xyz[0] - p))
    a, b = row.xyz[:-1], row.xyz[1:]
    ab = b - a
    w = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300), 0, 1)
    d = np.linalg.norm(a + w[:, None] * ab - p, axis=1)
    i = int(np.argmin(d))
    return float(row.q[i] + w[i] * (row.q[i + 1] - row.q[i])), float(d[i])


@dataclass
class EnvelopeFaceGeometry:
    """Procedural geometry of one contact face.

    Rows are contact curves at increasing times; q in [0, 1] is normalized arc
    length along a row, running so that (q, t) is positively oriented for the
    outward normal.  Points between rows are seeded by interpolation and
    refined onto the funnel at fixed t.
    """

    face: int
    component: int
    patch: object
    traj: object
    rows: list
    left: np.ndarray  # (u, v, t) along the q = 0 side, t increasing
    right: np.ndarray  # (u, v, t) along the q = 1 side
    t_scale: float
    ft_zero: list = field(default_factory=list)  # (u, v, t) where f_t changes sign on a row

    @property
    def t_range(self) -> tuple[float, float]:
        return self.rows[0].t, self.rows[-1].t

    @property
    def row_times(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    def length_at(self, t):
        return np.interp(t, self.row_times, [r.length for r in self.rows])

    @cached_property
    def _spine(self) -> tuple[np.ndarray, np.ndarray]:
        """(q, y) per row of a curve that crosses every row at its nearest point to the previous one.

        Rows can slide along themselves much faster than they advance, so the
        layout measures width from this curve and height along it.
        """
        n = len(self.rows)
        qs = np.full(n, 0.5)
        y = np.zeros(n)
        k0 = n // 2
        pairs = [(k, k + 1) for k in range(k0, n - 1)] + [(k, k - 1) for k in range(k0, 0, -1)]
        for k, j in pairs:
            a, b = self.rows[k], self.rows[j]
            qs[j], d = _nearest_on_row(b, _row_point(a, qs[k]))
            step = max(d, 1e-9 * abs(b.t - a.t) * max(self.t_scale, 1.0))
            y[j] = y[k] + (step if j > k else -step)
        return qs, y - y[0]

    def unrolled(self, q, t):
        """Planar coordinates used for triangulation, close to isometric across rows."""
        q = np.asarray(q, dtype=float)
        t = np.asarray(t, dtype=float)
        qs, y = self._spine
        times = self.row_times
        return np.stack([(q - np.interp(t, times, qs)) * self.length_at(t), np.interp(t, times, y)], axis=-1)

    def from_unrolled(self, xy) -> np.ndarray:
        """(q, t) for planar layout points; inverse of :meth:`unrolled`."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        qs, y = self._spine
        times = self.row_times
        t = np.clip(np.interp(xy[:, 1], y, times), times[0], times[-1])
        L = self.length_at(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(L > 0, xy[:, 0] / L, 0.0) + np.interp(t, times, qs)
        return np.column_stack([np.clip(q, 0, 1), t])

    def normal(self, u, v, t):
        return outward_normal(self.patch, self.traj, u, v, t)

    def funnel_samples(self) -> np.ndarray:
        return np.concatenate([np.column_stack([r.uv, np.full(len(r.uv), r.t)]) for r in self.rows])

    def eval_uvt(self, q, t) -> np.ndarray:
        """(u, v, t) on the funnel for arrays of (q, t)."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q, t = np.broadcast_arrays(q, t)
        ta, tb = self.t_range
        span = tb - ta
        if np.any(t < ta - 1e-12 * span) or np.any(t > tb + 1e-12 * span):
            raise OutsideTrim("t outside the face's time range", stage="eval", entity=self.face)
        if np.any(q < -1e-12) or np.any(q > 1 + 1e-12):
            raise OutsideTrim("q outside [0, 1]", stage="eval", entity=self.face)
        times = self.row_times
        k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
        out = np.empty(q.shape + (3,))
        out[..., 2] = t
        for kk in np.unique(k):
            sel = k == kk
            r0, r1 = self.rows[kk], self.rows[kk + 1]
            w = ((t[sel] - r0.t) / (r1.t - r0.t))[:, None]
            out[sel, :2] = (1 - w) * r0.uv_at(q[sel]) + w * r1.uv_at(q[sel])
        side_l = q <= 1e-12
        side_r = q >= 1 - 1e-12
        inner = ~side_l & ~side_r
        X, ok = project_to_funnel(self.patch, self.traj, out[..., 0], out[..., 1], out[..., 2], fixed_t=True)
        X = X.reshape(out.shape)
        ok = ok.reshape(q.shape)
        for sel, chain in ((side_l, self.left), (side_r, self.right)):
            for i in zip(*np.nonzero(sel)):
                X[i][:2] = chain_point(self.patch, self.traj, chain, float(t[i]))
        # exact nodes of stored rows are returned untouched
        for i in np.ndindex(q.shape):
            j = np.searchsorted(times, t[i])
            if j < len(times) and times[j] == t[i]:
                hit = np.nonzero(self.rows[j].q == q[i])[0]
                if hit.size:
                    X[i][:2] = self.rows[j].uv[hit[0]]
                    ok[i] = True
        if not np.all(ok | ~inner):
            raise NoConvergence("refinement onto the contact curve failed", stage="eval", entity=self.face)
        return X

    def eval(self, q, t) -> np.ndarray:
        X = self.eval_uvt(q, t)
        pts = sweep_map(self.patch, self.traj, X[..., 0], X[..., 1], X[..., 2], check=False).sigma
        q = np.atleast_1d(np.asarray(q, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        q, t = np.broadcast_arrays(q, t)
        times = self.row_times
        for i in np.ndindex(q.shape):
            j = np.searchsorted(times, t[i])
            if j < len(times) and times[j] == t[i]:
                hit = np.nonzero(self.rows[j].q == q[i])[0]
                if hit.size:
                    pts[i] = self.rows[j].xyz[hit[0]]
        return pts


def eval_envelope_point(geom: EnvelopeFaceGeometry, q: float, t: float) -> np.ndarray:
    """Point of a contact face at parameters (q, t)."""
    return geom.eval(q, t)[0]


def chain_point(patch, traj, chain: np.ndarray, t: float) -> np.ndarray:
    """Point of a boundary chain at time t, polished onto the funnel along its domain side."""
    tt = chain[:, 2]
    if len(tt) == 1:
        return chain[0, :2].copy()
    k = int(np.clip(np.searchsorted(tt, t, side="right") - 1, 0, len(tt) - 2))
    a, b = chain[k], chain[k + 1]
    w = 0.0 if b[2] == a[2] else (t - a[2]) / (b[2] - a[2])
    uv = (1 - w) * a[:2] + w * b[:2]
    if w == 0.0 and a[2] == t:
        return a[:2].copy()
    if w == 1.0 and b[2] == t:
        return b[:2].copy()
    u0, u1, v0, v1 = patch.domain
    # the free coordinate is the one not fixed by the side shared by both samples
    axis = None
    for ax, vals in ((0, (u0, u1)), (1, (v0, v1))):
        for val in vals:
            if abs(a[ax] - val) < 1e-12 and abs(b[ax] - val) < 1e-12:
                axis = 1 - ax
    if axis is None:
        return uv
    for _ in range(30):
        j = funnel_jet(patch, traj, uv[0], uv[1], t, check=False)
        d = float(j.f_u if axis == 0 else j.f_v)
        if abs(float(j.f)) <= 1e-14 or d == 0:
            break
        uv[axis] -= float(j.f) / d
    return uv


# -- building the geometry from a loop ----------------------------------------------

def _labels(loop: list[Piece], ta: float, tb: float) -> str:
    span = tb - ta
    tol = 1e-9 * span
    out = []
    for p in loop:
        t = p.uvt[:, 2]
        if np.ptp(t) <= tol and abs(t[0] - ta) <= tol:
            out.append("B")
        elif np.ptp(t) <= tol and abs(t[0] - tb) <= tol:
            out.append("T")
        elif np.all(np.diff(t) >= -tol):
            out.append("U")
        elif np.all(np.diff(t) <= tol):
            out.append("D")
        else:
            out.append("X")
    return "".join(out)


def split_loop(loop: list[Piece], ta: float, tb: float):
    """Rotate the loop into bottom / right / top / left runs."""
    labels = _labels(loop, ta, tb)
    n = len(loop)
    for r in range(n):
        lab = labels[r:] + labels[:r]
        m = re.fullmatch(r"(B*)(U+)(T*)(D+)", lab)
        if m:
            rot = loop[r:] + loop[:r]
            a, b, c = len(m.group(1)), len(m.group(2)), len(m.group(3))
            return rot[:a], rot[a:a + b], rot[a + b:a + b + c], rot[a + b + c:]
    raise FaceGeometryError(f"loop boundary pattern {labels!r} is not a single sweep of contact curves",
                            stage="faces", entity=loop[0].face)


def _concat(pieces: list[Piece]) -> np.ndarray:
    arrs = [p.uvt if k == 0 else p.uvt[1:] for k, p in enumerate(pieces)]
    return np.concatenate(arrs) if arrs else np.zeros((0, 3))


class _RowBuilder:
    def __init__(self, ctx: SweepContext, face: int, left: np.ndarray, right: np.ndarray):
        self.ctx = ctx
        self.face = face
        self.patch = ctx.patch(face)
        self.traj = ctx.traj
        self.left = left
        self.right = right
        u0, u1, v0, v1 = self.patch.domain
        self.box = (u0, u1, v0, v1)

    def chain_point(self, chain: np.ndarray, t: float) -> np.ndarray:
        return chain_point(self.patch, self.traj, chain, t)

    def trace_row(self, t: float) -> np.ndarray:
        """March the contact curve at time t from the q = 0 side to the q = 1 side."""
        start = self.chain_point(self.left, t)
        goal = self.chain_point(self.right, t)

        def fun(u, v):
            j = funnel_jet(self.patch, self.traj, u, v, np.full_like(u, t), check=False)
            return j.f, j.f_u, j.f_v

        tracer = ImplicitTracer(fun, self.box, self.ctx.config, owner=("row", self.face, t))
        j = funnel_jet(self.patch, self.traj, start[0], start[1], t, check=False)
        L = tracer.box.L
        tau = np.array([float(j.f_v) / L[0], -float(j.f_u) / L[1]])  # row direction in unit coordinates
        pts, end = tracer.march(tracer.box.to_unit(start), tau, closing=False)
        uv = tracer.box.from_unit(pts)
        uv[0] = start
        if np.linalg.norm((uv[-1] - goal) / L) > 1e-6:
            raise FaceGeometryError(
                f"contact curve at t={t:.6g} leaves the face away from the expected boundary point "
                "(several arcs in one slice are not supported)", stage="faces", entity=self.face)
        uv[-1] = goal
        return uv

    def interpolated_row(self, t: float, r0: Row, r1: Row) -> np.ndarray | None:
        n = max(len(r0.uv), len(r1.uv), 3)
        q = np.linspace(0.0, 1.0, n)
        w = (t - r0.t) / (r1.t - r0.t)
        uv = (1 - w) * r0.uv_at(q) + w * r1.uv_at(q)
        uv[0] = self.chain_point(self.left, t)
        uv[-1] = self.chain_point(self.right, t)
        X, ok = project_to_funnel(self.patch, self.traj, uv[1:-1, 0], uv[1:-1, 1], np.full(n - 2, t),
                                  fixed_t=True)
        if not ok.all():
            return None
        uv[1:-1] = X[:, :2]
        # reject folded rows: consecutive steps must keep moving forward
        d = np.diff(uv, axis=0)
        if np.any(np.einsum("ij,ij->i", d[1:], d[:-1]) <= 0):
            return None
        return uv


def _insert_ft_zeros(patch, traj, t, uv):
    """Insert points where f_t changes sign along a row; returns (uv, inserted points)."""
    j = funnel_jet(patch, traj, uv[:, 0], uv[:, 1], np.full(len(uv), t), check=False)
    ft = j.f_t
    out = [uv[0]]
    zeros = []
    for i in range(len(uv) - 1):
        if ft[i] != 0 and ft[i + 1] != 0 and (ft[i] > 0) != (ft[i + 1] > 0):
            w = ft[i] / (ft[i] - ft[i + 1])
            p = _newton_f_ft(patch, traj, t, uv[i] + w * (uv[i + 1] - uv[i]))
            if p is not None and np.dot(p - uv[i], uv[i + 1] - uv[i]) > 0 and np.dot(uv[i + 1] - p, uv[i + 1] - uv[i]) > 0:
                out.append(p)
                zeros.append((float(p[0]), float(p[1]), float(t)))
        out.append(uv[i + 1])
    return np.array(out), zeros


def _newton_f_ft(patch, traj, t, uv, h=1e-7):
    """Solve f = 0 and f_t = 0 at fixed t (Jacobian of f_t by central differences)."""
    x = np.array(uv, dtype=float)
    for _ in range(30):
        j = funnel_jet(patch, traj, x[0], x[1], t, check=False)
        F = np.array([float(j.f), float(j.f_t)])
        if np.max(np.abs(F)) < 1e-13:
            return x
        ju = funnel_jet(patch, traj, np.array([x[0] + h, x[0] - h]), np.array([x[1], x[1]]), t, check=False)
        jv = funnel_jet(patch, traj, np.array([x[0], x[0]]), np.array([x[1] + h, x[1] - h]), t, check=False)
        J = np.array([[float(j.f_u), float(j.f_v)],
                      [(ju.f_t[0] - ju.f_t[1]) / (2 * h), (jv.f_t[0] - jv.f_t[1]) / (2 * h)]])
        try:
            x = x - np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return None
    j = funnel_jet(patch, traj, x[0], x[1], t, check=False)
    return x if abs(float(j.f)) < 1e-10 and abs(float(j.f_t)) < 1e-9 else None


def build_face_geometry(ctx: SweepContext, face: int, component: int, loop: list[Piece],
                        initial_rows: int = 4) -> tuple[EnvelopeFaceGeometry, dict]:
    """Geometry of the contact face bounded by ``loop`` and (q, t) samples of every loop piece."""
    allt = np.concatenate([p.uvt[:, 2] for p in loop])
    ta, tb = float(allt.min()), float(allt.max())
    if tb - ta <= 0:
        raise FaceGeometryError("contact face with empty time range", stage="faces", entity=face)
    bottom, up, top, down = split_loop(loop, ta, tb)
    right = _concat(up)
    left = _concat([_reversed(p) for p in reversed(down)])
    patch = ctx.patch(face)
    traj = ctx.traj
    rb = _RowBuilder(ctx, face, left, right)
    cfg = ctx.config

    bottom_uv = _concat(bottom)[:, :2] if bottom else left[:1, :2]
    top_uv = _concat([_reversed(p) for p in reversed(top)])[:, :2] if top else right[-1:, :2]
    rows = {ta: Row.from_uv(patch, traj, ta, bottom_uv), tb: Row.from_uv(patch, traj, tb, top_uv)}
    # stored end rows reuse the exact 3D samples of the bounding edges
    rows[ta] = _row_from_pieces(ctx, patch, traj, ta, bottom, left[:1])
    rows[tb] = _row_from_pieces(ctx, patch, traj, tb, [_reversed(p) for p in reversed(top)], right[-1:])

    levels = np.linspace(ta, tb, initial_rows + 1)[1:-1]
    for t in levels:
        tn = _nudge(t, ctx, ta, tb)
        if tn is not None:
            rows[tn] = Row.from_uv(patch, traj, tn, rb.trace_row(tn))
    rows = dict(sorted(rows.items()))

    # adaptive refinement on chordal deviation between neighbouring rows
    min_dt = (tb - ta) / (2 * cfg.max_coc_rows)
    queue = deque(zip(list(rows)[:-1], list(rows)[1:]))
    while queue and len(rows) < cfg.max_coc_rows:
        a, b = queue.popleft()
        tm = _nudge(0.5 * (a + b), ctx, ta, tb, a, b, min_dt)
        if tm is None:
            continue
        uv = rb.interpolated_row(tm, rows[a], rows[b])
        if uv is None:
            uv = rb.trace_row(tm)
        rm = Row.from_uv(patch, traj, tm, uv)
        qs = np.linspace(0, 1, 33)
        mid = 0.5 * (_xyz_at(rows[a], qs) + _xyz_at(rows[b], qs))
        dev = float(np.max(np.linalg.norm(_xyz_at(rm, qs) - mid, axis=1)))
        if dev > cfg.coc_chord_tol:
            rows[tm] = rm
            queue.extend([(a, tm), (tm, b)])
    rows = dict(sorted(rows.items()))

    ft_zero = []
    final = []
    for t, r in rows.items():
        if t in (ta, tb):
            final.append(r)
            continue
        uv, zs = _insert_ft_zeros(patch, traj, t, r.uv)
        ft_zero.extend(zs)
        final.append(Row.from_uv(patch, traj, t, uv) if zs else r)
    speeds = [np.mean(np.linalg.norm(sweep_map(patch, traj, r.uv[:, 0], r.uv[:, 1],
                                                np.full(len(r.uv), r.t), check=False).sigma_t, axis=1))
              for r in final]
    geom = EnvelopeFaceGeometry(face, component, patch, traj, final, left, right,
                                float(np.mean(speeds)), ft_zero)
    ctx.check_theta(face, *geom.funnel_samples().T, "faces")

    # (q, t) of each loop piece sample, listed along the piece
    qt: dict = {}
    for p in up:
        qt[id(p)] = np.column_stack([np.ones(len(p.uvt)), p.uvt[:, 2]])
    for p in down:
        qt[id(p)] = np.column_stack([np.zeros(len(p.uvt)), p.uvt[:, 2]])
    _row_q(bottom, final[0], qt, reverse=False)
    _row_q(top, final[-1], qt, reverse=True)
    return geom, qt


def _reversed(p: Piece) -> Piece:
    return Piece(p.kind, p.face, p.out_edge, -p.sense, p.end, p.start, p.uvt[::-1], p.coedge, p.end_time, p.ref)


def _nudge(t, ctx, ta, tb, a=None, b=None, min_dt=0.0):
    """Keep interior rows away from vertex-lift times, where rows pass through domain corners.

    Returns None when no admissible time at least ``min_dt`` inside (a, b) exists.
    """
    span = tb - ta
    w = 1e-3 * span
    a = ta if a is None else a
    b = tb if b is None else b
    for lifts in ctx.vertex_lifts.values():
        for L in lifts:
            if abs(L.t - t) < w:
                opts = [c for c in (L.t - w, L.t + w) if a + min_dt <= c <= b - min_dt]
                if not opts:
                    return None
                t = min(opts, key=lambda c: abs(c - t))
    if not a + min_dt <= t <= b - min_dt:
        return None
    return float(t)


def _row_from_pieces(ctx, patch, traj, t, pieces, fallback):
    if not pieces:
        uv = fallback[:, :2]
        return Row.from_uv(patch, traj, t, uv)
    uv = _concat(pieces)[:, :2]
    xyz = np.concatenate([ctx.out.edges[p.out_edge].samples[::p.sense] if k == 0 else
                          ctx.out.edges[p.out_edge].samples[::p.sense][1:] for k, p in enumerate(pieces)])
    return Row.from_uv(patch, traj, t, uv, xyz)


def _row_q(pieces, row: Row, qt, reverse):
    if not pieces:
        return
    seq = list(reversed(pieces)) if reverse else pieces
    pos = 0
    for p in seq:
        n = len(p.uvt)
        q = row.q[pos:pos + n]
        pos += n - 1
        arr = np.column_stack([q, np.full(n, row.t)])
        qt[id(p)] = arr[::-1] if reverse else arr


def _xyz_at(row: Row, q):
    if len(row.xyz) == 1 or row.length == 0:
        return np.broadcast_to(row.xyz[0], (len(q), 3))
    return np.stack([np.interp(q, row.q, row.xyz[:, k]) for k in range(3)], axis=-1)


def build_faces(ctx: SweepContext, face: int, loops: list[list[Piece]]):
    """Contact faces of one input face: one per funnel component.

    Loops whose rows connect are the same component; a component with more
    than one boundary loop (an annulus) is not supported by the row
    parametrization and raises FaceGeometryError.
    """
    comps = []
    order = sorted(range(len(loops)), key=lambda k: float(min(p.uvt[:, 2].min() for p in loops[k])))
    for i, k in enumerate(order):
        loop = loops[k]
        if not loop:
            raise OrphanLoop("empty loop", stage="faces", entity=face)
        geom, qt = build_face_geometry(ctx, face, i, loop)
        comps.append((geom, loop, qt))
    return comps
