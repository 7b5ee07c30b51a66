"""Tessellation of envelope faces and caps; OBJ, brep and report export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import triangle as tr
from scipy.spatial import cKDTree

from .config import COINCIDENCE_TOL
from .errors import SweepError, TrimTriangulationFailure
from .lift.caps import CapFace, point_in_polygon
from .lift.faces import EnvelopeFaceGeometry

BREP_VERSION = "sweepforge-brep/1"
MIN_TRIANGLE_AREA = 1e-12


class IoError(SweepError):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    face_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    group_names: dict = field(default_factory=dict)  # face id -> group label

    @classmethod
    def concat(cls, parts: list["Mesh"]) -> "Mesh":
        if not parts:
            return cls()
        offs = np.cumsum([0] + [len(p.vertices) for p in parts[:-1]])
        names = {}
        for p in parts:
            names.update(p.group_names)
        return cls(np.concatenate([p.vertices for p in parts]),
                   np.concatenate([p.normals for p in parts]),
                   np.concatenate([p.triangles + o for p, o in zip(parts, offs)]).astype(np.int64),
                   np.concatenate([p.face_ids for p in parts]).astype(np.int64), names)

    def triangle_normals(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return np.cross(b - a, c - a)

    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.triangle_normals(), axis=1)

    def area(self) -> float:
        return float(self.triangle_areas().sum())

    def winding_agreement(self) -> np.ndarray:
        """<geometric triangle normal, mean stored vertex normal> per triangle."""
        n = self.normals[self.triangles].mean(axis=1)
        return np.einsum("ij,ij->i", self.triangle_normals(), n)


def _grid_density(density) -> tuple[int, int]:
    if np.isscalar(density):
        return int(density), int(density)
    a, b = density
    return int(a), int(b)


def _drop_degenerate(mesh: Mesh) -> Mesh:
    keep = mesh.triangle_areas() > MIN_TRIANGLE_AREA
    mesh.triangles = mesh.triangles[keep]
    mesh.face_ids = mesh.face_ids[keep]
    return mesh


def _repair_flips(mesh: Mesh, max_flips: int = 256) -> Mesh:
    """Flip interior edges of triangles whose winding disagrees with the surface normals.

    A layout-valid triangle can still fold in 3D, e.g. three nearly collinear
    samples on a straight contact curve.  An edge is flipped only when both
    replacement triangles agree with the normals; the boundary is untouched.
    """
    P, N = mesh.vertices, mesh.normals
    T = mesh.triangles.copy()

    def agree(tri):
        a, b, c = P[tri[0]], P[tri[1]], P[tri[2]]
        return float(np.cross(b - a, c - a) @ N[list(tri)].sum(axis=0))

    for _ in range(max_flips):
        w = np.einsum("ij,ij->i", np.cross(P[T[:, 1]] - P[T[:, 0]], P[T[:, 2]] - P[T[:, 0]]),
                      N[T].sum(axis=1))
        bad = np.nonzero(w <= 0)[0]
        if len(bad) == 0:
            break
        owner: dict[tuple[int, int], int] = {}
        for i, tri in enumerate(T):
            for k in range(3):
                owner[(int(tri[k]), int(tri[(k + 1) % 3]))] = i
        changed = False
        for i in bad:
            tri = T[i]
            for k in range(3):
                a, b, c = int(tri[k]), int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])
                j = owner.get((b, a))
                if j is None or j == i:
                    continue
                d = next(int(x) for x in T[j] if x != a and x != b)
                if d == c:
                    continue
                new_i, new_j = (a, d, c), (d, b, c)
                if agree(new_i) > 0 and agree(new_j) > 0:
                    T[i], T[j] = new_i, new_j
                    changed = True
                    break
            if changed:
                break
        if not changed:
            break
    mesh.triangles = T
    return mesh


def _segment_distance(pts: np.ndarray, polys: list[np.ndarray]) -> np.ndarray:
    """Distance from each point to the nearest segment of the closed polygons."""
    best = np.full(len(pts), np.inf)
    for poly in polys:
        a = poly
        b = np.roll(poly, -1, axis=0)
        d = b - a
        dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
        for k in range(0, len(pts), 2048):
            p = pts[k:k + 2048, None, :]
            lam = np.clip(np.einsum("pij,ij->pi", p - a, d) / dd, 0, 1)
            dist = np.linalg.norm(p - (a + lam[..., None] * d), axis=-1).min(axis=1)
            best[k:k + 2048] = np.minimum(best[k:k + 2048], dist)
    return best


def _inside(pts: np.ndarray, polys: list[np.ndarray]) -> np.ndarray:
    """Even-odd rule over all loops (outer and inner)."""
    inside = np.zeros(len(pts), dtype=bool)
    for poly in polys:
        inside ^= point_in_polygon(pts, poly)
    return inside


def triangulate_region(loops: list[np.ndarray], interior: np.ndarray, owner=None, min_angle: float = 20.0):
    """Quality constrained triangulation of a planar region bounded by closed polylines.

    Returns (points, triangles, boundary count); the boundary points come
    first, in loop order.  Extra points may be added inside the region to
    bound the minimum angle, never on the boundary, so neighbouring faces
    keep sharing their boundary samples.
    """
    pts = [np.asarray(lp, dtype=float) for lp in loops]
    segs = []
    off = 0
    for lp in pts:
        n = len(lp)
        idx = off + np.arange(n)
        segs.append(np.column_stack([idx, np.roll(idx, -1)]))
        off += n
    B = np.concatenate(pts)
    if len(interior):
        span = np.ptp(B, axis=0).max()
        keep = _inside(interior, pts) & (_segment_distance(interior, pts) > 1e-9 * span)
        interior = interior[keep]
    V = np.concatenate([B, interior]) if len(interior) else B
    try:
        res = tr.triangulate({"vertices": V, "segments": np.concatenate(segs)}, f"pq{min_angle:g}YQ")
    except Exception as exc:  # noqa: BLE001 - the triangulator raises bare errors
        raise TrimTriangulationFailure(f"triangulation failed: {exc}", stage="mesh", entity=owner) from exc
    if "triangles" not in res or len(res["vertices"]) < len(V) or not np.array_equal(res["vertices"][:len(V)], V):
        raise TrimTriangulationFailure("triangulator moved or dropped input points", stage="mesh", entity=owner)
    V = res["vertices"]
    T = res["triangles"]
    cen = V[T].mean(axis=1)
    T = T[_inside(cen, pts)]
    a, b, c = (V[T[:, k]] for k in range(3))
    cr = (b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0]
    T = np.where((cr < 0)[:, None], T[:, [0, 2, 1]], T)
    return V, T, len(B)


def _clean_loop(dom: np.ndarray, xyz: np.ndarray):
    """Drop consecutive domain points that coincide (e.g. at curve tips)."""
    keep = np.ones(len(dom), dtype=bool)
    d = np.linalg.norm(np.diff(np.vstack([dom, dom[:1]]), axis=0), axis=1)
    scale = max(np.ptp(dom, axis=0).max(), 1e-300)
    keep[1:] = d[:-1] > 1e-12 * scale
    if keep.sum() > 1 and d[-1] <= 1e-12 * scale:
        keep[-1] = False
    return dom[keep], xyz[keep]


# -- contact faces ---------------------------------------------------------------------

def tessellate_envelope_face(geom: EnvelopeFaceGeometry, density=16, boundary=None, face_id: int = 0) -> Mesh:
    """Mesh of a contact face.

    Without ``boundary`` a structured (q, t) grid is used.  With boundary loops
    (pairs of unrolled-domain polylines and their exact 3D samples) the face
    is triangulated conforming to them, so neighbouring faces share vertices.
    """
    nq, nt = _grid_density(density)
    ta, tb = geom.t_range
    if boundary is None:
        q, t = np.meshgrid(np.linspace(0, 1, nq), np.linspace(ta, tb, nt), indexing="ij")
        X = geom.eval_uvt(q.ravel(), t.ravel())
        P = geom.eval(q.ravel(), t.ravel())
        N = geom.normal(X[:, 0], X[:, 1], X[:, 2])
        idx = np.arange(nq * nt).reshape(nq, nt)
        a, b, c, d = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel(), idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
        T = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
        mesh = Mesh(P, N, T, np.full(len(T), face_id))
        return _drop_degenerate(mesh)

    loops = [_clean_loop(np.asarray(dm), np.asarray(xyz)) for dm, xyz in boundary]
    q, t = np.meshgrid(np.linspace(0, 1, nq + 1)[1:-1], np.linspace(ta, tb, nt + 1)[1:-1], indexing="ij")
    interior = geom.unrolled(q.ravel(), t.ravel())
    V, T, nb = triangulate_region([lp[0] for lp in loops], interior, owner=("face", face_id))
    qt = _unrolled_to_qt(geom, V)
    X = geom.eval_uvt(qt[:, 0], qt[:, 1])
    P = np.empty((len(V), 3))
    P[:nb] = np.concatenate([lp[1] for lp in loops])
    if len(V) > nb:
        P[nb:] = geom.eval(qt[nb:, 0], qt[nb:, 1])
    N = geom.normal(X[:, 0], X[:, 1], X[:, 2])
    return _drop_degenerate(_repair_flips(Mesh(P, N, T.astype(np.int64), np.full(len(T), face_id))))


def _unrolled_to_qt(geom: EnvelopeFaceGeometry, xy: np.ndarray) -> np.ndarray:
    return geom.from_unrolled(xy)


# -- caps ------------------------------------------------------------------------------

def tessellate_cap_face(cap: CapFace, density=16, boundary=None, face_id: int = 0) -> Mesh:
    """Mesh of a cap face: trimmed domain triangulated conforming to its loops, placed at the end pose."""
    nu, nv = _grid_density(density)
    if boundary is None:
        boundary = [(dm, cap.eval(dm[:, 0], dm[:, 1])) for dm in cap.domain_loops()]
    loops = [_clean_loop(np.asarray(dm), np.asarray(xyz)) for dm, xyz in boundary]
    u0, u1, v0, v1 = cap.patch.domain
    u, v = np.meshgrid(np.linspace(u0, u1, nu + 1)[1:-1], np.linspace(v0, v1, nv + 1)[1:-1], indexing="ij")
    V, T, nb = triangulate_region([lp[0] for lp in loops], np.column_stack([u.ravel(), v.ravel()]),
                                  owner=("face", face_id))
    P = np.empty((len(V), 3))
    P[:nb] = np.concatenate([lp[1] for lp in loops])
    if len(V) > nb:
        P[nb:] = cap.eval(V[nb:, 0], V[nb:, 1])
    N = cap.normal(V[:, 0], V[:, 1])
    return _drop_degenerate(Mesh(P, N, T.astype(np.int64), np.full(len(T), face_id)))


# -- whole envelope --------------------------------------------------------------------

def face_boundary(solid, fid: int) -> list:
    """(domain polyline, 3D samples) per loop of an output face, from the shared edge samples."""
    out = []
    for lid in solid.face_loops(fid):
        doms, pts = [], []
        for c in solid.loops[lid].coedges:
            dm = solid.coedge_domain_polyline(c)
            xyz = solid.coedge_points(c)
            doms.append(dm[:-1])
            pts.append(xyz[:-1])
        out.append((np.concatenate(doms), np.concatenate(pts)))
    return out


def group_name(face) -> str:
    s = face.source
    return f"face{face.id}_{s.role}_F{s.entity}_{s.component}" if s is not None else f"face{face.id}"


def tessellate_envelope(env, density=16, jobs: int = 1) -> Mesh:
    """Conforming mesh of every face of an output solid.

    With ``jobs > 1`` faces are meshed on a thread pool; parts are joined in
    face order, so the result does not depend on ``jobs``.
    """

    def one(f):
        bnd = face_boundary(env, f.id)
        if isinstance(f.geometry, EnvelopeFaceGeometry):
            m = tessellate_envelope_face(f.geometry, density, bnd, face_id=f.id)
        elif isinstance(f.geometry, CapFace):
            m = tessellate_cap_face(f.geometry, density, bnd, face_id=f.id)
        else:
            return None
        m.group_names = {f.id: group_name(f)}
        return m

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as pool:
            parts = list(pool.map(one, env.faces))
    else:
        parts = [one(f) for f in env.faces]
    return Mesh.concat([m for m in parts if m is not None])


def weld(mesh: Mesh, tol: float = COINCIDENCE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Representative index per vertex after merging points closer than ``tol``; returns (rep, unique ids)."""
    n = len(mesh.vertices)
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    if n:
        for i, j in cKDTree(mesh.vertices).query_pairs(tol, output_type="ndarray"):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
    rep = np.array([find(i) for i in range(n)], dtype=np.int64)
    return rep, np.unique(rep)


def boundary_edge_count(mesh: Mesh, tol: float = COINCIDENCE_TOL) -> int:
    """Edges used by exactly one triangle after welding."""
    rep, _ = weld(mesh, tol)
    T = rep[mesh.triangles]
    e = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    e = e[e[:, 0] != e[:, 1]]
    _, counts = np.unique(e, axis=0, return_counts=True)
    return int(np.sum(counts == 1))


# -- export ----------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def export_obj(mesh: Mesh, path, tol: float = COINCIDENCE_TOL) -> None:
    """Write v / vn / f records; positions are welded, normals kept per face vertex."""
    rep, uniq = weld(mesh, tol)
    new_id = np.full(len(mesh.vertices), -1, dtype=np.int64)
    new_id[uniq] = np.arange(len(uniq))
    lines = ["# sweepforge envelope mesh"]
    lines += [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices[uniq]]
    lines += [f"vn {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.normals]
    for fid in dict.fromkeys(mesh.face_ids.tolist()):
        lines.append(f"g {mesh.group_names.get(fid, f'face{fid}')}")
        for tri in mesh.triangles[mesh.face_ids == fid]:
            lines.append("f " + " ".join(f"{new_id[rep[k]] + 1}//{k + 1}" for k in tri))
    _write(path, "\n".join(lines) + "\n")


def read_obj(path) -> dict:
    """Parse the records written by :func:`export_obj`."""
    v, vn, faces, groups = [], [], [], []
    group = None
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts or parts[0] == "#":
            continue
        if parts[0] == "v":
            v.append([float(x) for x in parts[1:4]])
        elif parts[0] == "vn":
            vn.append([float(x) for x in parts[1:4]])
        elif parts[0] == "g":
            group = parts[1]
        elif parts[0] == "f":
            faces.append([tuple(int(i) for i in p.split("//")) for p in parts[1:]])
            groups.append(group)
    return {"v": np.array(v).reshape(-1, 3), "vn": np.array(vn).reshape(-1, 3), "f": faces, "groups": groups}


def _face_record(env, f, grid: int = 9) -> dict:
    g = f.geometry
    rec = {"id": f.id, "source": f.source.to_record() if f.source else None,
           "outer_loop": f.outer_loop, "inner_loops": list(f.inner_loops)}
    if isinstance(g, EnvelopeFaceGeometry):
        rec["kind"] = "contact"
        rec["grid"] = {"input_face": g.face, "component": g.component,
                       "rows": [{"t": r.t, "q": r.q.tolist(), "uv": r.uv.tolist(), "xyz": r.xyz.tolist()}
                                for r in g.rows]}
    elif isinstance(g, CapFace):
        rec["kind"] = "cap"
        u0, u1, v0, v1 = g.patch.domain
        u, v = np.meshgrid(np.linspace(u0, u1, grid), np.linspace(v0, v1, grid), indexing="ij")
        uv = np.column_stack([u.ravel(), v.ravel()])
        uv = uv[_inside(uv, g.domain_loops())]
        rec["grid"] = {"input_face": g.face, "end": g.end, "t": g.t, "uv": uv.tolist(),
                       "xyz": g.eval(uv[:, 0], uv[:, 1]).tolist() if len(uv) else []}
    else:
        rec["kind"] = "other"
    return rec


def brep_record(env) -> dict:
    src = lambda s: s.to_record() if s is not None else None  # noqa: E731
    return {
        "version": BREP_VERSION,
        "interval": list(getattr(env, "interval", ())),
        "genus": list(env.genus),
        "vertices": [{"id": v.id, "position": v.position.tolist(), "time": v.time, "source": src(v.source)}
                     for v in env.vertices],
        "edges": [{"id": e.id, "start": e.start, "end": e.end, "source": src(e.source),
                   "samples": e.samples.tolist(),
                   "params": None if e.params is None else np.asarray(e.params).tolist()}
                  for e in env.edges],
        "coedges": [{"id": c.id, "edge": c.edge, "loop": c.loop, "sense": c.sense,
                     "domain": None if c.domain_samples is None else np.asarray(c.domain_samples).tolist()}
                    for c in env.coedges],
        "loops": [{"id": lp.id, "face": lp.face, "coedges": list(lp.coedges)} for lp in env.loops],
        "faces": [_face_record(env, f) for f in env.faces],
    }


def export_brep(env, path) -> None:
    _write(path, json.dumps(brep_record(env), indent=1) + "\n")


def load_brep(path):
    """Re-import a brep file: topology with sample polylines; face geometry kept as its record."""
    from .brep import BrepSolid, Coedge, Edge, Face, Loop, SourceRef, Vertex

    try:
        rec = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read brep file {path}: {exc}") from exc
    if rec.get("version") != BREP_VERSION:
        raise IoError(f"unsupported brep version {rec.get('version')!r}")
    s = BrepSolid(genus=rec["genus"])
    s.vertices = [Vertex(v["id"], np.array(v["position"]), SourceRef.from_record(v["source"]), v["time"])
                  for v in rec["vertices"]]
    s.edges = [Edge(e["id"], e["start"], e["end"], np.array(e["samples"]), SourceRef.from_record(e["source"]),
                    None if e["params"] is None else np.array(e["params"])) for e in rec["edges"]]
    s.coedges = [Coedge(c["id"], c["edge"], c["loop"], c["sense"], None,
                        None if c["domain"] is None else np.array(c["domain"])) for c in rec["coedges"]]
    s.loops = [Loop(lp["id"], lp["coedges"], lp["face"]) for lp in rec["loops"]]
    s.faces = [Face(f["id"], f.get("grid"), f["outer_loop"], f["inner_loops"], SourceRef.from_record(f["source"]))
               for f in rec["faces"]]
    return s


def write_report(report, path) -> None:
    rec = report.to_record() if hasattr(report, "to_record") else report
    _write(path, json.dumps(rec, indent=1, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
