"""End-to-end envelope construction and the sweep report."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..brep import BrepSolid, SourceRef, validate_solid
from ..config import SolverConfig
from ..contact import funnel_jet, general_position_report, sweep_map
from ..errors import NonSimpleSweepSuspected, StitchFailure
from ..motion import Trajectory
from .caps import CapFace, build_end_caps
from .core import (LEFT, RIGHT, SweepContext, coc_pieces, compute_boundary_cocs, compute_cap_crossings,
                   compute_coedges, compute_vertices, orient_coedges)
from .faces import EnvelopeFaceGeometry, build_faces
from .loops import build_loops

REPORT_SCHEMA = "sweepforge-report/1"


@dataclass
class EnvelopeBrep(BrepSolid):
    """Output solid; face geometries are EnvelopeFaceGeometry or CapFace."""

    interval: tuple = (0.0, 1.0)
    input_counts: dict = field(default_factory=dict)

    @property
    def contact_faces(self) -> list[int]:
        return [f.id for f in self.faces if isinstance(f.geometry, EnvelopeFaceGeometry)]

    @property
    def cap_faces(self) -> list[int]:
        return [f.id for f in self.faces if isinstance(f.geometry, CapFace)]


@dataclass
class AuditResult:
    name: str
    checked: int
    failures: int
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_record(self) -> dict:
        return {"name": self.name, "checked": self.checked, "failures": self.failures,
                "passed": self.passed, "detail": self.detail}


@dataclass
class SweepReport:
    scene: str = ""
    input_counts: dict = field(default_factory=dict)
    output_counts: dict = field(default_factory=dict)
    theta_min: float = float("inf")
    theta_samples: int = 0
    coc_min_distance: float = float("inf")
    audits: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    general_position: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and all(a.passed for a in self.audits.values())

    def to_record(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "scene": self.scene,
            "input_counts": self.input_counts,
            "output_counts": self.output_counts,
            "theta_min": self.theta_min,
            "theta_samples": self.theta_samples,
            "coc_min_distance": self.coc_min_distance,
            "audits": {k: a.to_record() for k, a in sorted(self.audits.items())},
            "timings": self.timings,
            "general_position": [g.to_record() for g in self.general_position],
            "diagnostics": _plain(self.diagnostics),
            "violations": [list(map(str, (v.check, v.entity, v.detail))) for v in self.violations],
            "ok": self.ok,
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items() if not str(k).startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


class _Timer:
    def __init__(self, timings: dict):
        self.timings = timings

    def __call__(self, name):
        timer = self

        class _Stage:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = timer.timings.get(name, 0.0) + time.perf_counter() - self.t

        return _Stage()


def _add_face(out: BrepSolid, geometry, source: SourceRef, loops, domain_of) -> int:
    fid = out.add_face(geometry, source)
    for k, loop in enumerate(loops):
        items = [(p.out_edge, p.sense) for p in loop]
        dom = []
        for p in loop:
            d = np.asarray(domain_of(p))
            dom.append(d if p.sense > 0 else d[::-1])
        out.add_loop(fid, items, outer=(k == 0), domain=dom)
    return fid


def _domain_handedness(geometry, h: float = 1e-6) -> float:
    """Sign of <d1 x d2, N> for the map from a face's planar domain to 3D."""
    if isinstance(geometry, EnvelopeFaceGeometry):
        ta, tb = geometry.t_range
        tm = 0.5 * (ta + tb)
        dt = h * (tb - ta)
        # at q = 0.5 the unrolled x axis is the q direction and y is pure t
        P = geometry.eval(np.array([0.5, 0.5 + h, 0.5]), np.array([tm, tm, tm + dt]))
        X = geometry.eval_uvt(0.5, tm)[0]
        n = geometry.normal(X[0], X[1], X[2])
    else:
        u, v = geometry.domain_loops()[0][0]
        P = geometry.eval(np.array([u, u + h, u]), np.array([v, v, v + h]))
        n = geometry.normal(u, v)
    return float(np.dot(np.cross(P[1] - P[0], P[2] - P[0]), np.reshape(n, 3)))


def _traversed(coedge) -> np.ndarray:
    """Domain samples of a co-edge in loop order (they are stored in edge order)."""
    d = np.asarray(coedge.domain_samples)
    return d if coedge.sense > 0 else d[::-1]


def orient_faces(out: BrepSolid) -> list[int]:
    """Make every outer loop run counterclockwise about the outward normal.

    The domain polygon of the outer loop must have the same handedness as
    the map from the domain to 3D measured against N.  Faces that disagree
    have their loops reversed; their ids are returned.
    """
    flipped = []
    for f in out.faces:
        poly = np.concatenate([_traversed(out.coedges[c])[:-1] for c in out.loops[f.outer_loop].coedges])
        x, y = poly[:, 0], poly[:, 1]
        area = 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
        if area * _domain_handedness(f.geometry) > 0:
            continue
        for lid in [f.outer_loop] + list(f.inner_loops):
            loop = out.loops[lid]
            loop.coedges.reverse()
            for c in loop.coedges:
                ce = out.coedges[c]
                ce.sense = -ce.sense
        flipped.append(f.id)
    return flipped


def stitch_and_assemble(ctx: SweepContext) -> list:
    """Check that every output edge is shared by exactly two co-edges of opposite sense, then validate."""
    uses = ctx.out.edge_coedges()
    for e in range(len(ctx.out.edges)):
        cids = uses.get(e, [])
        senses = [ctx.out.coedges[c].sense for c in cids]
        if len(cids) != 2 or senses[0] != -senses[1]:
            faces = [ctx.out.loops[ctx.out.coedges[c].loop].face for c in cids]
            raise StitchFailure(f"output edge {e} ({ctx.out.edges[e].source}) used by faces {faces} "
                                f"with senses {senses}", stage="stitch", entity=("edge", e))
    return validate_solid(ctx.out, ctx.config.coincidence_tol)


def coc_distance_audit(ctx: SweepContext, min_distance: float) -> float:
    """Smallest distance between sampled contact curves of distinct times.

    Distinct curves of contact of a simple sweep never meet; a pair closer
    than ``min_distance`` aborts the sweep.
    """
    from scipy.spatial import cKDTree

    pts, times, speeds = [], [], []
    for f in ctx.out.faces:
        g = f.geometry
        if isinstance(g, EnvelopeFaceGeometry):
            for r in g.rows:
                pts.append(r.xyz)
                times.append(np.full(len(r.xyz), r.t))
                speeds.append(_coc_speed(g, r))
    if not pts:
        return float("inf")
    P = np.concatenate(pts)
    T = np.concatenate(times)
    S = np.concatenate(speeds)
    tree = cKDTree(P)
    pairs = tree.query_pairs(min_distance, output_type="ndarray")
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        # first-order separation of the two curves; nearly equal times give nearly equal curves
        expected = np.abs(T[i] - T[j]) * np.minimum(S[i], S[j])
        bad = expected > 4 * min_distance
        if bad.any():
            k = int(np.argmax(bad))
            raise NonSimpleSweepSuspected(
                f"contact curves at t={T[i[k]]:.6g} and t={T[j[k]]:.6g} meet near {P[i[k]].tolist()}",
                stage="coc-distance", entity=None)
    # reported value: closest approach of consecutive sampled rows within each face
    best = float("inf")
    for f in ctx.out.faces:
        g = f.geometry
        if isinstance(g, EnvelopeFaceGeometry):
            for r0, r1 in zip(g.rows[:-1], g.rows[1:]):
                d, _ = cKDTree(r1.xyz).query(r0.xyz)
                best = min(best, float(d.min()))
    return best


def _coc_speed(geom: EnvelopeFaceGeometry, row) -> np.ndarray:
    """Speed at which the contact curve moves across itself, per row sample."""
    u, v = row.uv[:, 0], row.uv[:, 1]
    t = np.full(len(u), row.t)
    j = funnel_jet(geom.patch, geom.traj, u, v, t, check=False)
    sm = sweep_map(geom.patch, geom.traj, u, v, t, check=False)
    g2 = j.f_u**2 + j.f_v**2
    du, dv = -j.f_u * j.f_t / g2, -j.f_v * j.f_t / g2
    w = sm.sigma_u * du[:, None] + sm.sigma_v * dv[:, None] + sm.sigma_t
    tang = np.gradient(row.xyz, axis=0) if len(row.xyz) > 1 else np.zeros_like(row.xyz)
    n = np.linalg.norm(tang, axis=1, keepdims=True)
    tang = np.divide(tang, n, out=np.zeros_like(tang), where=n > 0)
    w = w - np.einsum("ij,ij->i", w, tang)[:, None] * tang
    return np.linalg.norm(w, axis=1)


def sweep_envelope(solid: BrepSolid, traj: Trajectory, config: SolverConfig | None = None, *,
                   scene: str = "", audits: bool = True, audit_density: int = 12,
                   general_position: bool = True) -> tuple[EnvelopeBrep, SweepReport]:
    """Lift ``solid`` swept by ``traj`` to the boundary of the swept volume."""
    config = config or SolverConfig()
    out = EnvelopeBrep(genus=list(solid.genus), interval=tuple(traj.interval), input_counts=solid.counts())
    ctx = SweepContext(solid, traj, config, out)
    report = SweepReport(scene=scene, input_counts=solid.counts())
    stage = _Timer(report.timings)
    nv, ne, nf = len(solid.vertices), len(solid.edges), len(solid.faces)

    with stage("vertices"):
        for z in range(nv):
            compute_vertices(ctx, z)
    with stage("coedges"):
        for d in range(ne):
            compute_cap_crossings(ctx, d)
        for d in range(ne):
            compute_coedges(ctx, d)
    with stage("orient-coedges"):
        lift_pieces = {f: [p for c in ctx.face_coedges(f) for p in orient_coedges(ctx, c)] for f in range(nf)}
    with stage("boundary-cocs"):
        for f in range(nf):
            for end in (LEFT, RIGHT):
                compute_boundary_cocs(ctx, f, end)
    with stage("loops"):
        face_loops = {f: build_loops(ctx, lift_pieces[f] + coc_pieces(ctx, f, cap=False)) for f in range(nf)}
    with stage("faces"):
        for f in range(nf):
            for geom, loop, qt in build_faces(ctx, f, face_loops[f]):
                _add_face(out, geom, SourceRef("face", f, geom.component, "contact"), [loop],
                          lambda p, g=geom, qt=qt: g.unrolled(qt[id(p)][:, 0], qt[id(p)][:, 1]))
    with stage("caps"):
        for end in (LEFT, RIGHT):
            for f in range(nf):
                for cap in build_end_caps(ctx, f, end):
                    role = "left-cap" if end == LEFT else "right-cap"
                    _add_face(out, cap, SourceRef("face", f, cap.component, role), cap.loops,
                              lambda p: p.uvt[:, :2])
    with stage("orient-faces"):
        flipped = orient_faces(out)
        if flipped:
            ctx.diagnostics["faces_reoriented"] = flipped
    with stage("stitch"):
        report.violations = stitch_and_assemble(ctx)
        if report.violations:
            v = report.violations[0]
            raise StitchFailure(f"{len(report.violations)} validation violations, first: {v}", stage="stitch",
                                entity=v.entity)
    with stage("coc-distance"):
        report.coc_min_distance = coc_distance_audit(ctx, 10 * config.coincidence_tol)

    report.theta_min = ctx.theta_min
    report.theta_samples = ctx.theta_samples
    report.output_counts = out.counts()
    report.diagnostics = ctx.diagnostics
    if general_position:
        with stage("general-position"):
            report.general_position = [general_position_report(ctx.patch(f), traj, face=f, density=16)
                                       for f in range(nf)]
    if audits:
        from .audits import run_audits

        with stage("audits"):
            report.audits = run_audits(ctx, out, density=audit_density)
    out.context = ctx
    return out, report
