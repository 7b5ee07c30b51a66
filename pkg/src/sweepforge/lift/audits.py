"""Self-checks run on a finished envelope: adjacency, orientation, alternation and closure."""

from __future__ import annotations

import numpy as np

from ..brep import vertex_uses
from ..contact import frame_vectors, funnel_jet, outward_normal, sweep_map
from ..errors import SweepError
from ..solve import project_to_funnel, roots_1d
from .assemble import AuditResult
from .caps import CapFace, point_in_polygon
from .core import SweepContext, edge_function
from .faces import EnvelopeFaceGeometry

AUDIT_SEED = 20240611


# -- adjacency -------------------------------------------------------------------------

def _input_incidence(solid):
    edge_faces = {d: set(solid.edge_faces(d)) for d in range(len(solid.edges))}
    vertex_faces = {z: {f for f, _ in vertex_uses(solid, z)} for z in range(len(solid.vertices))}
    return edge_faces, vertex_faces


def _generator_faces(src, edge_faces, vertex_faces) -> set:
    if src.kind == "edge":
        return edge_faces[src.entity]
    if src.kind == "vertex":
        return vertex_faces[src.entity]
    return {src.entity}


def _output_vertex_faces(out) -> dict:
    res: dict = {}
    for c in out.coedges:
        f = out.loops[c.loop].face
        for v in out.coedge_vertices(c.id):
            res.setdefault(v, set()).add(f)
    return res


def adjacency_audit(ctx: SweepContext, out) -> AuditResult:
    """Every output adjacency must come from an adjacency of the input.

    Two output faces sharing an edge must stem from equal or adjacent input
    faces, and the generator of every output edge and vertex must be incident
    to the input faces of the output faces around it.
    """
    solid = ctx.solid
    edge_faces, vertex_faces = _input_incidence(solid)
    adjacent = lambda a, b: a == b or any(a in fs and b in fs for fs in edge_faces.values())  # noqa: E731
    failures = []
    checked = 0
    for e in range(len(out.edges)):
        faces = out.edge_faces(e)
        srcs = [out.faces[f].source.entity for f in faces]
        checked += 1
        if len(srcs) == 2 and not adjacent(*srcs):
            failures.append(("edge-adjacency", e, srcs))
        gen = _generator_faces(out.edges[e].source, edge_faces, vertex_faces)
        if not set(srcs) <= gen:
            failures.append(("edge-generator", e, srcs))
    for v, faces in _output_vertex_faces(out).items():
        checked += 1
        srcs = {out.faces[f].source.entity for f in faces}
        gen = _generator_faces(out.vertices[v].source, edge_faces, vertex_faces)
        if not srcs <= gen:
            failures.append(("vertex-generator", v, sorted(srcs)))
    return AuditResult("adjacency", checked, len(failures), {"counterexamples": failures[:20]})


def valence_audit(ctx: SweepContext, out) -> AuditResult:
    """Compare the valence of lifted vertices with that of their input vertex (reported, not enforced)."""
    solid = ctx.solid
    in_val = np.zeros(len(solid.vertices), dtype=int)
    for e in solid.edges:
        in_val[e.start] += 1
        in_val[e.end] += 1
    out_val = np.zeros(len(out.vertices), dtype=int)
    for e in out.edges:
        out_val[e.start] += 1
        out_val[e.end] += 1
    diffs = []
    checked = 0
    for v in out.vertices:
        s = v.source
        if s is not None and s.kind == "vertex" and s.role == "contact":
            checked += 1
            if out_val[v.id] != in_val[s.entity]:
                diffs.append((v.id, int(out_val[v.id]), int(in_val[s.entity])))
    return AuditResult("valence", checked, len(diffs), {"mismatches": diffs[:20]})


# -- orientation -----------------------------------------------------------------------

def _face_map(geom):
    """(domain -> 3D map, domain polygons converter, box) for a face geometry."""
    if isinstance(geom, EnvelopeFaceGeometry):
        ta, tb = geom.t_range
        return (lambda q, t: geom.eval(q, t)), (0.0, 1.0, ta, tb)
    u0, u1, v0, v1 = geom.patch.domain
    return (lambda u, v: geom.eval(u, v)), (u0, u1, v0, v1)


def _to_param(geom, dom):
    if isinstance(geom, EnvelopeFaceGeometry):
        from ..meshout import _unrolled_to_qt

        return _unrolled_to_qt(geom, dom)
    return dom


def _jacobian(fmap, box, p, rel=1e-6):
    """One-sided finite-difference Jacobian staying inside the parameter box."""
    J = np.empty((3, 2))
    y0 = fmap(np.array([p[0]]), np.array([p[1]]))[0]
    for k in range(2):
        lo, hi = box[2 * k], box[2 * k + 1]
        h = rel * (hi - lo)
        step = h if p[k] + h <= hi else -h
        q = p.copy()
        q[k] += step
        J[:, k] = (fmap(np.array([q[0]]), np.array([q[1]]))[0] - y0) / step
    return J


def coedge_side_audit(ctx: SweepContext, out, samples: int = 5) -> AuditResult:
    """N x tangent of every oriented co-edge must point into its face.

    At interior samples the 3D vector is pulled back to the face's parameter
    domain and a short step along it must land inside the face's loops.
    """
    failures = []
    checked = 0
    for f in out.faces:
        geom = f.geometry
        if not isinstance(geom, (EnvelopeFaceGeometry, CapFace)):
            continue
        fmap, box = _face_map(geom)
        loops = []
        for lid in out.face_loops(f.id):
            loops.append(np.concatenate([_to_param(geom, out.coedge_domain_polyline(c))[:-1]
                                         for c in out.loops[lid].coedges]))
        scale = max(box[1] - box[0], box[3] - box[2])
        for lid in out.face_loops(f.id):
            for c in out.loops[lid].coedges:
                pts = out.coedge_points(c)
                dom = _to_param(geom, out.coedge_domain_polyline(c))
                n = len(pts)
                if n < 5:
                    continue
                for k in range(1, samples + 1):
                    i = int(round(k * (n - 1) / (samples + 1)))
                    i = min(max(i, 1), n - 2)
                    tau = pts[i + 1] - pts[i - 1]
                    p = dom[i].astype(float)
                    try:
                        if isinstance(geom, EnvelopeFaceGeometry):
                            X = geom.eval_uvt(p[0], p[1])[0]
                            N = geom.normal(X[0], X[1], X[2])
                        else:
                            N = geom.normal(p[0], p[1])
                        J = _jacobian(fmap, box, p)
                    except SweepError:
                        continue
                    w = np.cross(np.ravel(N), tau)
                    d, *_ = np.linalg.lstsq(J, w, rcond=None)
                    if not np.all(np.isfinite(d)) or np.linalg.norm(d) == 0:
                        continue
                    seg = np.linalg.norm(dom[i + 1] - dom[i - 1])
                    eps = min(1e-3 * scale, 0.25 * seg) if seg > 0 else 1e-3 * scale
                    probe = p + eps * d / np.linalg.norm(d)
                    inside = False
                    for lp in loops:
                        inside ^= bool(point_in_polygon(probe[None], lp)[0])
                    checked += 1
                    if not inside:
                        failures.append((f.id, c, i))
    return AuditResult("coedge-side", checked, len(failures), {"failures": failures[:20]})


def alternation_audit(ctx: SweepContext, fibers: int = 50, seed: int = AUDIT_SEED) -> AuditResult:
    """Along fixed-s fibers of an edge funnel, the signs of -f_t at consecutive lifts alternate."""
    rng = np.random.default_rng(seed)
    checked = 0
    failures = []
    for d, lifts in ctx.edge_lifts.items():
        if len(lifts) < 2:
            continue
        _, pcurve, fun = edge_function(ctx, d)
        s0, s1 = pcurve.interval
        t0, t1 = ctx.times
        for s in rng.uniform(s0 + 1e-3 * (s1 - s0), s1 - 1e-3 * (s1 - s0), fibers):
            roots = roots_1d(lambda t, s=s: fun(np.full_like(t, s), t)[0], (t0, t1), ctx.config)
            hits = []
            for L in lifts:
                st = L.st
                ds = st[:, 0] - s
                k = np.nonzero(np.sign(ds[:-1]) * np.sign(ds[1:]) <= 0)[0]
                for i in k:
                    w = 0.0 if ds[i] == ds[i + 1] else ds[i] / (ds[i] - ds[i + 1])
                    hits.append((st[i, 1] + w * (st[i + 1, 1] - st[i, 1]), L.comp))
            if len(hits) < 2:
                continue
            checked += 1
            hits.sort()
            signs = []
            for t_hit, comp in hits:
                if len(roots) == 0:
                    break
                r = min(roots, key=lambda r: abs(r - t_hit))
                signs.append(-np.sign(fun(np.array([s]), np.array([r]))[2][0]))
            if len(signs) != len(hits) or any(a == b for a, b in zip(signs[:-1], signs[1:])):
                failures.append((d, float(s)))
    return AuditResult("alternation", checked, len(failures), {"failures": failures[:20]})


def _funnel_samples(out, limit: int) -> list:
    per = []
    for f in out.faces:
        g = f.geometry
        if isinstance(g, EnvelopeFaceGeometry):
            X = g.funnel_samples()
            per.append((g, X))
    total = sum(len(X) for _, X in per)
    res = []
    for g, X in per:
        k = max(1, int(np.ceil(limit * len(X) / max(total, 1))))
        idx = np.unique(np.linspace(0, len(X) - 1, min(k, len(X))).round().astype(int))
        res.append((g, X[idx]))
    return res


def orientation_character_audit(ctx: SweepContext, out, target: int = 1200, h: float = 1e-6,
                    ft_min: float = 1e-4) -> AuditResult:
    """Finite-difference orientation character of the correspondence equals sign(-f_t).

    At funnel points two tangent directions are transported along the funnel;
    comparing the orientation of their images on the envelope (against the
    outward normal) with that of their images on the input surface gives the
    orientation character of the map sending an envelope point to its
    generator.
    """
    checked = 0
    failures = []
    skipped = 0
    for g, X in _funnel_samples(out, 4 * target):
        patch, traj = g.patch, g.traj
        j = funnel_jet(patch, traj, X[:, 0], X[:, 1], X[:, 2], check=False)
        keep = np.abs(j.f_t) > ft_min
        X = X[keep]
        if not len(X):
            continue
        j = funnel_jet(patch, traj, X[:, 0], X[:, 1], X[:, 2], check=False)
        a, b = frame_vectors(j.f_u, j.f_v, j.f_t)
        scale = np.array([np.ptp(patch.domain[:2]), np.ptp(patch.domain[2:]), np.ptp(traj.interval)])
        imgs = []
        oks = np.ones(len(X), dtype=bool)
        for vec in (a, b):
            step = h * vec / np.linalg.norm(vec / scale, axis=1)[:, None]
            Y, ok = project_to_funnel(patch, traj, *(X + step).T)
            oks &= ok
            imgs.append(Y)
        base_y = sweep_map(patch, traj, *X.T, check=False).sigma
        base_x = patch.point(X[:, 0], X[:, 1])
        dy = [sweep_map(patch, traj, *Y.T, check=False).sigma - base_y for Y in imgs]
        dx = [patch.point(Y[:, 0], Y[:, 1]) - base_x for Y in imgs]
        Nh = outward_normal(patch, traj, *X.T)
        N, _, _ = patch.normal_jet(X[:, 0], X[:, 1], check=False)
        oy = np.sign(np.einsum("ij,ij->i", np.cross(dy[0], dy[1]), Nh))
        ox = np.sign(np.einsum("ij,ij->i", np.cross(dx[0], dx[1]), N))
        want = -np.sign(j.f_t)
        skipped += int((~oks).sum())
        good = oks & (oy != 0) & (ox != 0)
        checked += int(good.sum())
        bad = good & (oy * ox != want)
        for k in np.nonzero(bad)[0][:5]:
            failures.append((g.face, X[k].tolist()))
        failures.extend([] if not bad.sum() > 5 else [("more", int(bad.sum()) - 5)])
    n_fail = sum(1 if f[0] != "more" else f[1] for f in failures)
    return AuditResult("orientation-character", checked, n_fail, {"skipped": skipped, "failures": failures[:20]})


def time_tangent_audit(ctx: SweepContext, out, h: float = 1e-4) -> AuditResult:
    """Where f_t = 0, moving along the time direction of the funnel leaves the generator fixed.

    The envelope displacement is compared against the displacement of the
    generating point on the input surface.
    """
    checked = 0
    ratios = []
    failures = []
    for f in out.faces:
        g = f.geometry
        if not isinstance(g, EnvelopeFaceGeometry) or not g.ft_zero:
            continue
        P = np.array(g.ft_zero)
        ta, tb = g.t_range
        for sgn in (1.0, -1.0):
            T = P[:, 2] + sgn * h * (tb - ta)
            ok_t = (T > ta) & (T < tb)
            Q, ok = project_to_funnel(g.patch, g.traj, P[:, 0], P[:, 1], T, fixed_t=True)
            ok &= ok_t
            dS = np.linalg.norm(g.patch.point(Q[:, 0], Q[:, 1]) - g.patch.point(P[:, 0], P[:, 1]), axis=1)
            dY = np.linalg.norm(sweep_map(g.patch, g.traj, *Q.T, check=False).sigma
                                - sweep_map(g.patch, g.traj, *P.T, check=False).sigma, axis=1)
            r = dS[ok] / dY[ok]
            checked += int(ok.sum())
            ratios.extend(r.tolist())
            failures.extend([(g.face, P[k].tolist()) for k in np.nonzero(ok)[0][r >= 1e-3]])
    return AuditResult("time-tangent", checked, len(failures),
                       {"max_ratio": max(ratios) if ratios else None, "failures": failures[:20]})


# -- closure ---------------------------------------------------------------------------

def ray_parity_audit(mesh, rays: int = 100, seed: int = AUDIT_SEED) -> AuditResult:
    """Rays from exterior points cross the closed mesh an even number of times,
    entering first through a face whose normal opposes the ray."""
    rng = np.random.default_rng(seed)
    V = mesh.vertices
    T = mesh.triangles
    if not len(T):
        return AuditResult("ray-parity", 0, 0, {})
    lo, hi = V.min(axis=0), V.max(axis=0)
    c = 0.5 * (lo + hi)
    R = np.linalg.norm(hi - lo)
    a, b, cc = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    e1, e2 = b - a, cc - a
    tri_n = np.cross(e1, e2)
    NV = mesh.normals[T]
    # faceting: angle between each flat triangle and the exact normals at its corners
    unit_n = tri_n / np.maximum(np.linalg.norm(tri_n, axis=1, keepdims=True), 1e-300)
    facet_sin = np.sqrt(np.clip(1.0 - np.einsum("ij,ikj->ik", unit_n, NV).min(axis=1) ** 2, 0.0, 1.0))
    failures = []
    grazing = 0
    for _ in range(rays):
        d = rng.normal(size=3)
        o = c + 2 * R * d / np.linalg.norm(d)
        target = lo + rng.uniform(size=3) * (hi - lo)
        ray = target - o
        ray /= np.linalg.norm(ray)
        p = np.cross(ray, e2)
        det = np.einsum("ij,ij->i", e1, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            s = o - a
            u = np.einsum("ij,ij->i", s, p) * inv
            q = np.cross(s, e1)
            v = (q @ ray) * inv
            t = np.einsum("ij,ij->i", e2, q) * inv
        hit = (np.abs(det) > 1e-14) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-9)
        ts = np.sort(t[hit])
        # hits on shared edges are reported by both triangles
        distinct = ts[np.r_[True, np.diff(ts) > 1e-9 * R]] if len(ts) else ts
        first = np.nonzero(hit)[0][np.argmin(t[hit])] if hit.any() else None
        ok = len(distinct) % 2 == 0
        if first is not None:
            ok &= float(tri_n[first] @ ray) < 0
            # the interpolated exact normal is only decisive when the ray is steeper than the faceting
            if abs(float(unit_n[first] @ ray)) > facet_sin[first]:
                w = np.array([1 - u[first] - v[first], u[first], v[first]])
                ok &= float((w @ NV[first]) @ ray) < 0
            else:
                grazing += 1
        if not ok:
            failures.append({"origin": o.tolist(), "hits": int(len(distinct))})
    return AuditResult("ray-parity", rays, len(failures), {"failures": failures[:10], "grazing_first_hits": grazing})


def run_audits(ctx: SweepContext, out, density: int = 12) -> dict:
    from ..meshout import boundary_edge_count, tessellate_envelope

    res = {}
    for a in (adjacency_audit(ctx, out), valence_audit(ctx, out), coedge_side_audit(ctx, out),
              alternation_audit(ctx), orientation_character_audit(ctx, out), time_tangent_audit(ctx, out)):
        res[a.name] = a
    mesh = tessellate_envelope(out, density)
    res["ray-parity"] = ray_parity_audit(mesh)
    nb = boundary_edge_count(mesh)
    res["watertight"] = AuditResult("watertight", len(mesh.triangles), nb, {"boundary_edges": nb})
    return res
