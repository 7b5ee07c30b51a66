"""Boundary-representation data model shared by input solids and swept envelopes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .config import COINCIDENCE_TOL
from .errors import NotIncident
from .surface import CoedgeCurve, SurfacePatch, patch_from_record


@dataclass(frozen=True)
class SourceRef:
    """Generating input entity of an output entity.

    ``kind`` is the input entity kind (face, edge, vertex); ``component`` says
    which lifted component this is; ``role`` distinguishes contact-set entities
    from end-cap ones and from curves of contact at the end times.
    """

    kind: str
    entity: int
    component: int = 0
    role: str = "contact"

    def to_record(self) -> dict:
        return {"kind": self.kind, "entity": self.entity, "component": self.component, "role": self.role}

    @classmethod
    def from_record(cls, r: dict | None) -> "SourceRef | None":
        if r is None:
            return None
        return cls(r["kind"], int(r["entity"]), int(r["component"]), r["role"])


DIMENSION = {"vertex": 0, "edge": 1, "face": 2}


@dataclass
class Vertex:
    id: int
    position: np.ndarray
    source: SourceRef | None = None
    time: float | None = None


@dataclass
class Edge:
    """An edge with a dense sample polyline running from ``start`` to ``end``."""

    id: int
    start: int
    end: int
    samples: np.ndarray
    source: SourceRef | None = None
    params: np.ndarray | None = None  # per-sample parameters, e.g. (s, t) or (u, v, t)

    def interpolant(self):
        """Piecewise-cubic interpolant of the samples over normalized chord length."""
        from scipy.interpolate import CubicSpline

        pts = np.asarray(self.samples)
        d = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
        keep = np.r_[True, np.diff(d) > 0]
        d = d[keep] / max(d[-1], 1e-300)
        return CubicSpline(d, pts[keep], axis=0)

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.samples, axis=0), axis=1).sum())


@dataclass
class Coedge:
    """Oriented use of an edge by a loop.  ``sense`` = +1 runs start -> end.

    ``pcurve`` (input solids) or ``domain_samples`` (outputs, aligned with the
    edge samples) locate the edge in the owning face's parameter domain.
    """

    id: int
    edge: int
    loop: int
    sense: int
    pcurve: CoedgeCurve | None = None
    domain_samples: np.ndarray | None = None


@dataclass
class Loop:
    id: int
    coedges: list
    face: int


@dataclass
class Face:
    id: int
    geometry: Any
    outer_loop: int
    inner_loops: list = field(default_factory=list)
    source: SourceRef | None = None


@dataclass(frozen=True)
class Violation:
    check: str
    entity: str
    detail: str


@dataclass
class BrepSolid:
    """Faces, loops, co-edges, edges and vertices; ids are list indices."""

    vertices: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    coedges: list = field(default_factory=list)
    loops: list = field(default_factory=list)
    faces: list = field(default_factory=list)
    genus: list = field(default_factory=list)  # declared genus per shell, ordered by lowest face id

    # -- construction helpers -------------------------------------------------
    def add_vertex(self, position, source=None, time=None) -> int:
        self.vertices.append(Vertex(len(self.vertices), np.asarray(position, dtype=float), source, time))
        return self.vertices[-1].id

    def add_edge(self, start, end, samples, source=None, params=None) -> int:
        self.edges.append(Edge(len(self.edges), start, end, np.asarray(samples, dtype=float), source, params))
        return self.edges[-1].id

    def add_face(self, geometry, source=None) -> int:
        self.faces.append(Face(len(self.faces), geometry, -1, [], source))
        return self.faces[-1].id

    def add_loop(self, face: int, oriented: list, outer: bool = True, domain=None) -> int:
        """Add a loop of (edge id, sense[, pcurve]) tuples to ``face``."""
        lid = len(self.loops)
        ids = []
        for k, item in enumerate(oriented):
            edge, sense = item[0], item[1]
            pc = item[2] if len(item) > 2 else None
            dom = None if domain is None else domain[k]
            self.coedges.append(Coedge(len(self.coedges), edge, lid, sense, pc, dom))
            ids.append(self.coedges[-1].id)
        self.loops.append(Loop(lid, ids, face))
        if outer:
            self.faces[face].outer_loop = lid
        else:
            self.faces[face].inner_loops.append(lid)
        return lid

    # -- incidence ------------------------------------------------------------
    def coedge_vertices(self, cid: int) -> tuple[int, int]:
        c = self.coedges[cid]
        e = self.edges[c.edge]
        return (e.start, e.end) if c.sense > 0 else (e.end, e.start)

    def coedge_points(self, cid: int) -> np.ndarray:
        c = self.coedges[cid]
        pts = self.edges[c.edge].samples
        return pts if c.sense > 0 else pts[::-1]

    def coedge_domain_polyline(self, cid: int, n: int = 33) -> np.ndarray | None:
        """Domain points of a co-edge, listed in the co-edge direction."""
        c = self.coedges[cid]
        if c.pcurve is not None:
            s0, s1 = c.pcurve.interval
            pts = c.pcurve.point(np.linspace(s0, s1, n))
        elif c.domain_samples is not None:
            pts = np.asarray(c.domain_samples)
        else:
            return None
        return pts if c.sense > 0 else pts[::-1]

    def face_loops(self, fid: int) -> list[int]:
        f = self.faces[fid]
        return [f.outer_loop] + list(f.inner_loops)

    def edge_coedges(self) -> dict[int, list[int]]:
        use: dict[int, list[int]] = {e.id: [] for e in self.edges}
        for c in self.coedges:
            use.setdefault(c.edge, []).append(c.id)
        return use

    def edge_faces(self, eid: int) -> list[int]:
        return [self.loops[self.coedges[c].loop].face for c in self.edge_coedges()[eid]]

    def shells(self) -> list[list[int]]:
        """Face sets connected through shared edges, ordered by lowest face id."""
        parent = list(range(len(self.faces)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for cids in self.edge_coedges().values():
            fs = [self.loops[self.coedges[c].loop].face for c in cids]
            for f in fs[1:]:
                ra, rb = find(fs[0]), find(f)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        for f in range(len(self.faces)):
            groups.setdefault(find(f), []).append(f)
        return [groups[k] for k in sorted(groups)]

    def counts(self) -> dict:
        return {"vertices": len(self.vertices), "edges": len(self.edges), "faces": len(self.faces),
                "loops": len(self.loops), "coedges": len(self.coedges)}

    # -- serialization (input solids with analytic patches) -------------------
    def to_record(self) -> dict:
        return {
            "vertices": [v.position.tolist() for v in self.vertices],
            "edges": [[e.start, e.end] for e in self.edges],
            "faces": [
                {"patch": f.geometry.to_record(),
                 "loops": [[[self.coedges[c].edge, self.coedges[c].sense,
                             self.coedges[c].pcurve.to_record()] for c in self.loops[lid].coedges]
                           for lid in self.face_loops(f.id)]}
                for f in self.faces
            ],
            "genus": list(self.genus),
        }

    @classmethod
    def from_record(cls, record: dict, edge_samples: int = 33) -> "BrepSolid":
        solid = cls(genus=list(record.get("genus", [])))
        for p in record["vertices"]:
            solid.add_vertex(p)
        pending = {}
        for fr in record["faces"]:
            patch = patch_from_record(fr["patch"])
            fid = solid.add_face(patch)
            for k, loop in enumerate(fr["loops"]):
                items = [(int(e), int(s), CoedgeCurve.from_record(pc)) for e, s, pc in loop]
                solid.add_loop(fid, items, outer=(k == 0))
                for e, s, pc in items:
                    pending.setdefault(e, (patch, pc))
        for eid, (a, b) in enumerate(record["edges"]):
            patch, pc = pending[eid]
            s = np.linspace(*pc.interval, edge_samples)
            solid.edges.append(Edge(eid, int(a), int(b), patch.point(*pc.point(s).T)))
        return solid


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def validate_solid(solid: BrepSolid, tol: float = COINCIDENCE_TOL) -> list[Violation]:
    """Check manifold closure, loop closure, orientation consistency and Euler's formula."""
    out: list[Violation] = []
    uses = solid.edge_coedges()
    for eid, cids in uses.items():
        if len(cids) != 2:
            out.append(Violation("closure", f"edge {eid}", f"used by {len(cids)} co-edges"))
            continue
        s1, s2 = (solid.coedges[c].sense for c in cids)
        if s1 != -s2:
            out.append(Violation("orientation", f"edge {eid}", "both co-edges run the same way"))

    for loop in solid.loops:
        ids = loop.coedges
        if not ids:
            out.append(Violation("loop-closure", f"loop {loop.id}", "empty loop"))
            continue
        for k, cid in enumerate(ids):
            nxt = ids[(k + 1) % len(ids)]
            end = solid.coedge_vertices(cid)[1]
            start = solid.coedge_vertices(nxt)[0]
            gap = float(np.linalg.norm(solid.coedge_points(cid)[-1] - solid.coedge_points(nxt)[0]))
            if end != start or gap > tol:
                out.append(Violation("loop-closure", f"loop {loop.id}",
                                     f"co-edge {cid} -> {nxt}: vertices {end}/{start}, gap {gap:.3g}"))
        polys = [solid.coedge_domain_polyline(c) for c in ids]
        if all(p is not None for p in polys):
            area = _signed_area(np.concatenate([p[:-1] if len(p) > 1 else p for p in polys]))
            is_outer = solid.faces[loop.face].outer_loop == loop.id
            if (area <= 0) if is_outer else (area >= 0):
                out.append(Violation("orientation", f"loop {loop.id}",
                                     f"domain signed area {area:.3g} on {'outer' if is_outer else 'inner'} loop"))

    shells = solid.shells()
    for k, faces in enumerate(shells):
        fset = set(faces)
        edges = {c.edge for c in solid.coedges if solid.loops[c.loop].face in fset}
        verts = set()
        for e in edges:
            verts.update((solid.edges[e].start, solid.edges[e].end))
        chi = len(verts) - len(edges) + len(faces)
        g = solid.genus[k] if k < len(solid.genus) else 0
        if chi != 2 - 2 * g:
            out.append(Violation("euler", f"shell {k}", f"V-E+F = {chi}, expected {2 - 2 * g}"))
    return out


def euler_characteristic(solid: BrepSolid) -> int:
    return len(solid.vertices) - len(solid.edges) + len(solid.faces)


def adjacent_coedge(solid: BrepSolid, coedge: int, vertex: int) -> int:
    """The other co-edge of the same loop that meets ``coedge`` at ``vertex``."""
    start, end = solid.coedge_vertices(coedge)
    ids = solid.loops[solid.coedges[coedge].loop].coedges
    k = ids.index(coedge)
    if vertex == end:
        return ids[(k + 1) % len(ids)]
    if vertex == start:
        return ids[k - 1]
    raise NotIncident(f"vertex {vertex} is not an end of co-edge {coedge}", stage="brep", entity=coedge)


# -- input-solid construction --------------------------------------------------

def assemble_patches(faces: list[tuple[SurfacePatch, list]], genus: int = 0,
                     edge_samples: int = 33, tol: float = 1e-9) -> BrepSolid:
    """Build a closed solid from box-domain patches.

    ``faces`` lists (patch, corners) where ``corners`` are the domain corners in
    counterclockwise order.  Vertices and edges are identified geometrically.
    """
    solid = BrepSolid(genus=[genus])
    vkeys: list[np.ndarray] = []

    def vertex_id(p):
        for i, q in enumerate(vkeys):
            if np.linalg.norm(p - q) < tol:
                return i
        vkeys.append(p)
        return solid.add_vertex(p)

    edge_index: list[tuple[int, int, np.ndarray]] = []  # (start, end, midpoint)
    for patch, corners in faces:
        fid = solid.add_face(patch)
        corners = [np.asarray(c, dtype=float) for c in corners]
        ids = [vertex_id(patch.point(*c)) for c in corners]
        items = []
        for j in range(len(corners)):
            c0, c1 = corners[j], corners[(j + 1) % len(corners)]
            a, b = ids[j], ids[(j + 1) % len(ids)]
            mid = patch.point(*(0.5 * (c0 + c1)))
            found = None
            for eid, (s, e, m) in enumerate(edge_index):
                if {s, e} == {a, b} and np.linalg.norm(m - mid) < tol:
                    found = eid
                    break
            if found is None:
                s = np.linspace(0.0, 1.0, edge_samples)
                pts = patch.point(c0[0] + s * (c1[0] - c0[0]), c0[1] + s * (c1[1] - c0[1]))
                found = solid.add_edge(a, b, pts)
                edge_index.append((a, b, mid))
            if solid.edges[found].start == a:
                items.append((found, 1, CoedgeCurve.segment(c0, c1, 1)))
            else:
                items.append((found, -1, CoedgeCurve.segment(c1, c0, -1)))
        solid.add_loop(fid, items)
    return solid


def vertex_uses(solid: BrepSolid, vid: int) -> list[tuple[int, np.ndarray]]:
    """(face id, domain point) for every face corner at vertex ``vid``."""
    out = []
    for c in solid.coedges:
        if solid.coedge_vertices(c.id)[0] == vid and c.pcurve is not None:
            s0, s1 = c.pcurve.interval
            s = s0 if c.sense > 0 else s1
            out.append((solid.loops[c.loop].face, c.pcurve.point(s)))
    return out
