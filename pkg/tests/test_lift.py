import numpy as np
import pytest
from conftest import SIMPLE_SCENES, torus_residual

from sweepforge.brep import euler_characteristic, validate_solid
from sweepforge.cli import load_scene
from sweepforge.contact import funnel_jet, grazing, outward_normal
from sweepforge.errors import NonSimpleSweepSuspected, OutsideTrim
from sweepforge.lift import (EnvelopeBrep, SweepContext, compute_boundary_cocs, compute_cap_crossings,
                             compute_coedges, compute_vertices, create_loop, eval_envelope_point, get_next_coedge,
                             orient_coedges, sweep_envelope)
from sweepforge.lift.caps import point_in_polygon
from sweepforge.lift.core import LEFT, RIGHT, Piece, coc_pieces, lift_sign
from sweepforge.motion import CircularArc, LinearEasing
from sweepforge.solids import ellipsoid
from sweepforge.solve import edge_carrier

SPHERE = ellipsoid(1.0, 1.0, 1.0)
ARC = CircularArc(0.0, np.pi / 2, radius=3.0)


def _context(solid=SPHERE, traj=ARC):
    return SweepContext(solid, traj, out=EnvelopeBrep(interval=tuple(traj.interval)))


def _vertex_at(solid, x):
    x = np.asarray(x, dtype=float) / np.linalg.norm(x)
    return int(np.argmin([np.linalg.norm(v.position - x) for v in solid.vertices]))


def _torus_outward(p):
    rho = np.hypot(p[..., 0], p[..., 1])
    n = np.stack([(rho - 3) * p[..., 0] / rho, (rho - 3) * p[..., 1] / rho, p[..., 2]], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


# -- vertices

def test_vertex_lift_on_the_arc_sphere():
    ctx = _context()
    z = _vertex_at(SPHERE, [1, 1, 1])
    lifts = compute_vertices(ctx, z)
    assert len(lifts) == 1
    assert lifts[0].t == pytest.approx(np.pi / 4, abs=1e-12)
    b = 3 * np.array([np.cos(np.pi / 4), np.sin(np.pi / 4), 0.0])
    np.testing.assert_allclose(ctx.out.vertices[lifts[0].out].position, b + np.ones(3) / np.sqrt(3), atol=1e-12)


def test_vertex_never_in_contact():
    ctx = _context()
    # g = 3 (-sin t - cos t) / sqrt(3) < 0 on [0, pi/2]
    assert compute_vertices(ctx, _vertex_at(SPHERE, [1, -1, 1])) == []


def test_dumbbell_vertex_counts_match_dense_scan():
    scene = load_scene("dumbbell-rotation")
    ctx = _context(scene.solid, scene.traj)
    ts = np.linspace(*scene.traj.interval, 100_000)
    for z, v in enumerate(scene.solid.vertices):
        g = grazing(scene.traj, ctx.vertex_normal(z), v.position, ts)
        expect = int(np.count_nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0))
        assert len(compute_vertices(ctx, z)) == expect


# -- co-edges

def _lifted_context(solid=SPHERE, traj=ARC):
    ctx = _context(solid, traj)
    for z in range(len(solid.vertices)):
        compute_vertices(ctx, z)
    for d in range(len(solid.edges)):
        compute_cap_crossings(ctx, d)
    for d in range(len(solid.edges)):
        compute_coedges(ctx, d)
    return ctx


def test_edge_lift_endpoints_are_the_lifted_vertices():
    ctx = _lifted_context()
    for d, lifts in ctx.edge_lifts.items():
        patch, pcurve = edge_carrier(SPHERE, d)
        for lift in lifts:
            e = ctx.out.edges[lift.out]
            for k, vid in ((0, e.start), (-1, e.end)):
                s, t = lift.st[k]
                uv = pcurve.point(s)
                x = patch.point(uv[0], uv[1])
                b = 3 * np.array([np.cos(t), np.sin(t), 0.0])
                assert np.linalg.norm(x + b - ctx.out.vertices[vid].position) < 1e-6


def test_one_output_edge_per_component():
    scene = load_scene("arc-sphere-wrap")
    ctx = _lifted_context(scene.solid, scene.traj)
    from sweepforge.solve import trace_edge_funnel

    counts = [len(trace_edge_funnel(scene.solid, d, scene.traj, scene.config)) for d in range(len(scene.solid.edges))]
    assert [len(ctx.edge_lifts[d]) for d in range(len(scene.solid.edges))] == counts
    assert max(counts) == 2 and min(counts) == 1


def test_edge_without_contact_gives_no_lift():
    short = CircularArc(0.0, 0.2, radius=3.0)
    ctx = _lifted_context(SPHERE, short)
    assert any(lifts == [] for lifts in ctx.edge_lifts.values())


def test_orientation_sign_is_the_side_of_the_arc():
    """-f_t = 3 <x, (cos t, sin t, 0)>: positive on the outer half of the contact circle."""
    ctx = _lifted_context()
    for d, lifts in ctx.edge_lifts.items():
        patch, pcurve = edge_carrier(SPHERE, d)
        for lift in lifts:
            sign, k = lift_sign(ctx, lift)
            s, t = lift.st[k]
            uv = pcurve.point(s)
            x = patch.point(uv[0], uv[1])
            assert sign == np.sign(x[0] * np.cos(t) + x[1] * np.sin(t))


def test_signs_alternate_along_fibers():
    scene = load_scene("arc-sphere-wrap")
    ctx = _lifted_context(scene.solid, scene.traj)
    rng = np.random.default_rng(5)
    stacked = 0
    for d, lifts in ctx.edge_lifts.items():
        if len(lifts) < 2:
            continue
        patch, pcurve = edge_carrier(scene.solid, d)
        for s0 in rng.uniform(*pcurve.interval, 20):
            hits = []
            for lift in lifts:
                st = lift.st
                cross = np.nonzero(np.diff(np.sign(st[:, 0] - s0)))[0]
                for i in cross:
                    uv = pcurve.point(s0)
                    t = st[i, 1]
                    f_t = float(funnel_jet(patch, scene.traj, uv[0], uv[1], t).f_t)
                    hits.append((t, lift_sign(ctx, lift)[0], -np.sign(f_t)))
            hits.sort()
            for (_, a, da), (_, b, db) in zip(hits, hits[1:]):
                assert a == -b
                assert (a, b) == (da, db)
                stacked += 1
    assert stacked > 0


def _cyclic_faces(solid, vertex, face_of=lambda f: f):
    """Faces around ``vertex`` in the cyclic order given by the loop orientation."""
    ec = solid.edge_coedges()
    start = next(c.id for c in solid.coedges if solid.coedge_vertices(c.id)[1] == vertex)
    order, c = [], start
    while True:
        face = solid.loops[solid.coedges[c].loop].face
        order.append(face_of(face))
        partner = next(x for x in ec[solid.coedges[c].edge] if x != c)
        lp = solid.loops[solid.coedges[partner].loop].coedges
        c = lp[lp.index(partner) - 1]
        if c == start:
            return order


def _same_cycle(a, b):
    return any(a == b[k:] + b[:k] for k in range(len(b)))


def test_lifted_vertex_keeps_or_reverses_face_order(arc_sphere):
    env = arc_sphere.env
    preserved = reversed_ = 0
    for vid, v in enumerate(env.vertices):
        if v.source is None or v.source.kind != "vertex" or v.source.role != "contact":
            continue
        z = v.source.entity
        before = _cyclic_faces(SPHERE, z)
        after = _cyclic_faces(env, vid, lambda f: env.faces[f].source.entity)
        x = SPHERE.vertices[z].position
        outer = x[0] * np.cos(v.time) + x[1] * np.sin(v.time) > 0
        if outer:
            assert _same_cycle(after, before)
            preserved += 1
        else:
            assert _same_cycle(after, before[::-1])
            reversed_ += 1
    assert preserved > 0 and reversed_ > 0


# -- end-time contact curves

def _great_circle_length(X):
    a, b = X[:-1], X[1:]
    return float(np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.einsum("ij,ij->i", a, b)).sum())


def test_start_time_cocs_are_the_y_zero_circle():
    ctx = _lifted_context()
    total = 0.0
    for f in SPHERE.faces:
        for c in compute_boundary_cocs(ctx, f.id, LEFT):
            X = f.geometry.point(c.uv[:, 0], c.uv[:, 1])
            assert np.abs(X[:, 1]).max() < 1e-8
            np.testing.assert_allclose(ctx.out.edges[c.out].samples, X + [3.0, 0.0, 0.0], atol=1e-12)
            total += _great_circle_length(X)
    assert total == pytest.approx(2 * np.pi, abs=1e-4)


def test_face_missing_the_start_coc():
    ctx = _lifted_context()
    assert compute_boundary_cocs(ctx, 2, LEFT) == []  # +y face never meets y = 0


# -- loops

def test_closed_piece_is_a_loop_of_one():
    piece = Piece("lift", 0, 0, 1, 7, 7, np.zeros((3, 3)))
    used: set = set()
    assert create_loop(_context(), piece, [piece], used) == [piece]
    assert used == {id(piece)}


def _face_pieces(ctx, f):
    lifted = [p for c in ctx.face_coedges(f) for p in orient_coedges(ctx, c)]
    return lifted + coc_pieces(ctx, f, cap=False)


def test_next_piece_cases_on_the_arc_sphere():
    ctx = _lifted_context()
    for f in range(len(SPHERE.faces)):
        for end in (LEFT, RIGHT):
            compute_boundary_cocs(ctx, f, end)
    seen = set()
    for f in range(len(SPHERE.faces)):
        pieces = _face_pieces(ctx, f)
        for p in pieces:
            nxt, vertex = get_next_coedge(ctx, p, p.end, pieces)
            assert nxt.start == p.end and vertex == nxt.end
            src = ctx.out.vertices[p.end].source
            if p.kind == "coc":
                seen.add("i")
                assert nxt.kind != "coc"
            elif src.kind == "edge" and src.role == "cap":
                seen.add("ii")
                assert nxt.kind == "coc"
            else:
                seen.add("iii")
                from sweepforge.brep import adjacent_coedge

                assert nxt.coedge == adjacent_coedge(SPHERE, p.coedge, src.entity)
    assert seen == {"i", "ii", "iii"}


@pytest.mark.parametrize("name", SIMPLE_SCENES)
def test_loops_close_and_use_each_coedge_once(swept, name):
    env = swept(name).env
    uses = [0] * len(env.coedges)
    for lp in env.loops:
        for a, b in zip(lp.coedges, lp.coedges[1:] + lp.coedges[:1]):
            uses[a] += 1
            assert env.coedge_vertices(a)[1] == env.coedge_vertices(b)[0]
            assert np.linalg.norm(env.coedge_points(a)[-1] - env.coedge_points(b)[0]) < 1e-6
    assert uses == [1] * len(env.coedges)


# -- faces

def test_one_input_face_gives_two_contact_faces():
    env, _ = sweep_envelope(*_scene_args("arc-sphere-long"), audits=False, general_position=False)
    per_face = {}
    for f in env.contact_faces:
        src = env.faces[f].source
        per_face.setdefault(src.entity, []).append(src.component)
    assert max(len(v) for v in per_face.values()) == 2
    for comps in per_face.values():
        assert sorted(comps) == list(range(len(comps)))


def _scene_args(name):
    s = load_scene(name)
    return s.solid, s.traj, s.config


def test_contact_samples_lie_on_the_torus(arc_sphere):
    env = arc_sphere.env
    for f in env.contact_faces:
        for row in env.faces[f].geometry.rows:
            assert np.abs(torus_residual(row.xyz)).max() < 1e-6


def test_eval_reproduces_stored_nodes(arc_sphere):
    env = arc_sphere.env
    for f in env.contact_faces:
        geom = env.faces[f].geometry
        for row in geom.rows[:: max(len(geom.rows) // 5, 1)]:
            for k in range(0, len(row.q), max(len(row.q) // 4, 1)):
                np.testing.assert_array_equal(eval_envelope_point(geom, row.q[k], row.t), row.xyz[k])


def test_eval_at_random_parameters_is_on_the_torus(arc_sphere):
    env = arc_sphere.env
    rng = np.random.default_rng(11)
    for f in env.contact_faces:
        geom = env.faces[f].geometry
        ta, tb = geom.t_range
        q, t = rng.uniform(0, 1, 40), rng.uniform(ta, tb, 40)
        X = geom.eval(q, t)
        assert np.abs(torus_residual(X)).max() < 1e-8


def test_eval_outside_time_range(arc_sphere):
    geom = arc_sphere.env.faces[arc_sphere.env.contact_faces[0]].geometry
    ta, tb = geom.t_range
    with pytest.raises(OutsideTrim):
        eval_envelope_point(geom, 0.5, tb + 0.1)
    with pytest.raises(OutsideTrim):
        eval_envelope_point(geom, 1.5, 0.5 * (ta + tb))


def test_contact_normals_point_out_of_the_torus(arc_sphere):
    env = arc_sphere.env
    for f in env.contact_faces:
        geom = env.faces[f].geometry
        for row in geom.rows:
            N = geom.normal(row.uv[:, 0], row.uv[:, 1], np.full(len(row.uv), row.t))
            assert np.einsum("ij,ij->i", N, _torus_outward(row.xyz)).min() > 0.999


def test_identity_pose_keeps_the_input_normal():
    still = LinearEasing(0.0, 1.0, p0=(0, 0, 0), p1=(1, 0, 0))
    patch = SPHERE.faces[3].geometry
    np.testing.assert_allclose(outward_normal(patch, still, 0.3, -0.2, 0.5), patch.normal_jet(0.3, -0.2)[0],
                               atol=1e-15)


# -- caps

def test_left_caps_are_the_trailing_hemisphere(arc_sphere):
    env = arc_sphere.env
    rng = np.random.default_rng(2)
    caps = [env.faces[f].geometry for f in env.cap_faces]
    left = [c for c in caps if c.end == LEFT]
    assert {c.face for c in left} == {0, 1, 3, 4, 5}
    for cap in left:
        outer = cap.domain_loops()[0]
        u0, u1, v0, v1 = cap.patch.domain
        uv = np.column_stack([rng.uniform(u0, u1, 400), rng.uniform(v0, v1, 400)])
        inside = uv[point_in_polygon(uv, outer)]
        assert len(inside) > 0
        x = cap.eval(inside[:, 0], inside[:, 1]) - [3.0, 0.0, 0.0]
        assert x[:, 1].max() <= 1e-12


def test_cap_boundaries_sit_on_the_end_time_coc(arc_sphere):
    env = arc_sphere.env
    for f in env.cap_faces:
        cap = env.faces[f].geometry
        u0, u1, v0, v1 = cap.patch.domain
        for poly in cap.domain_loops():
            on_side = (np.isclose(poly[:, 0], u0) | np.isclose(poly[:, 0], u1)
                       | np.isclose(poly[:, 1], v0) | np.isclose(poly[:, 1], v1))
            f_end = funnel_jet(cap.patch, cap.traj, poly[:, 0], poly[:, 1], np.full(len(poly), cap.t)).f
            assert np.all(on_side | (np.abs(f_end) < 1e-8))


def test_whole_face_caps_are_untrimmed(arc_sphere):
    env = arc_sphere.env
    # f(x, 0) = 3 y < 0 on the whole -y face, so its left cap is the full domain
    left = {env.faces[f].geometry.face: env.faces[f].geometry for f in env.cap_faces
            if env.faces[f].geometry.end == LEFT}
    poly = left[3].domain_loops()[0]
    assert poly[:, 0].min() == -1 and poly[:, 0].max() == 1
    assert poly[:, 1].min() == -1 and poly[:, 1].max() == 1


# -- whole sweeps

@pytest.mark.parametrize("name", SIMPLE_SCENES)
def test_bundled_sweeps_are_valid_and_audited(swept, name):
    s = swept(name)
    assert validate_solid(s.env) == []
    assert s.report.theta_min > 0
    for audit in s.report.audits.values():
        assert audit.passed, audit


def test_capsule_helix_is_one_sphere_like_shell(swept):
    env = swept("capsule-helix").env
    assert len(env.shells()) == 1
    assert euler_characteristic(env) == 2


def test_removing_caps_exposes_exactly_the_end_time_cocs(arc_sphere):
    env = arc_sphere.env
    contact = set(env.contact_faces)
    open_edges = set()
    for e, cids in env.edge_coedges().items():
        owners = [env.loops[env.coedges[c].loop].face for c in cids]
        if sum(o in contact for o in owners) == 1:
            open_edges.add(e)
    coc_edges = {e.id for e in env.edges if e.source.role == "coc"}
    assert open_edges == coc_edges


def test_tight_arc_is_not_simple():
    s = load_scene("arc-sphere-tight")
    with pytest.raises(NonSimpleSweepSuspected):
        sweep_envelope(s.solid, s.traj, s.config, audits=False)
