import copy

import numpy as np
import pytest

from sweepforge.brep import (BrepSolid, SourceRef, adjacent_coedge, euler_characteristic, validate_solid,
                             vertex_uses)
from sweepforge.errors import NotIncident
from sweepforge.solids import capsule, ellipsoid, make_solid, revolve, torus

SOLIDS = {
    "ellipsoid": lambda: ellipsoid(1.0, 2.0, 0.5),
    "capsule": lambda: capsule(0.5, 1.0),
    "revolve": lambda: revolve((0.7, 0.3), 0.5, 1.0),
    "torus": lambda: torus(2.0, 0.5),
}


def _merge(a: BrepSolid, b: BrepSolid) -> BrepSolid:
    """Disjoint union of two solids (second one shifted in id space)."""
    out = copy.deepcopy(a)
    b = copy.deepcopy(b)
    nv, ne, nc, nl, nf = (len(x) for x in (out.vertices, out.edges, out.coedges, out.loops, out.faces))
    for v in b.vertices:
        v.id += nv
        out.vertices.append(v)
    for e in b.edges:
        e.id, e.start, e.end = e.id + ne, e.start + nv, e.end + nv
        out.edges.append(e)
    for c in b.coedges:
        c.id, c.edge, c.loop = c.id + nc, c.edge + ne, c.loop + nl
        out.coedges.append(c)
    for lp in b.loops:
        lp.id, lp.face = lp.id + nl, lp.face + nf
        lp.coedges = [c + nc for c in lp.coedges]
        out.loops.append(lp)
    for f in b.faces:
        f.id, f.outer_loop = f.id + nf, f.outer_loop + nl
        f.inner_loops = [x + nl for x in f.inner_loops]
        out.faces.append(f)
    out.genus = list(a.genus) + list(b.genus)
    return out


def test_ellipsoid_counts_and_validity():
    s = ellipsoid(1.0, 1.0, 1.0)
    assert validate_solid(s) == []
    assert (len(s.faces), len(s.edges), len(s.vertices)) == (6, 12, 8)
    assert euler_characteristic(s) == 2


def test_flipped_coedge_sense_is_reported():
    s = ellipsoid()
    c = s.coedges[5]
    c.sense = -c.sense
    bad = validate_solid(s)
    assert any(v.check == "orientation" and v.entity == f"edge {c.edge}" for v in bad)


def test_torus_is_valid_with_euler_zero():
    s = torus(2.0, 0.5)
    assert validate_solid(s) == []
    assert (len(s.faces), len(s.edges), len(s.vertices)) == (4, 8, 4)
    assert euler_characteristic(s) == 0


def test_two_shells_add_up():
    s = _merge(ellipsoid(), torus())
    assert len(s.shells()) == 2
    assert validate_solid(s) == []
    assert euler_characteristic(s) == 2 + 0


@pytest.mark.parametrize("name", sorted(SOLIDS))
def test_bundled_solids_validate(name):
    assert validate_solid(SOLIDS[name]()) == []


def test_adjacent_coedge_cycles_a_loop():
    s = ellipsoid()
    start = s.loops[0].coedges[0]
    c = start
    for _ in range(4):
        c = adjacent_coedge(s, c, s.coedge_vertices(c)[1])
    assert c == start


def test_adjacent_coedge_walks_to_the_face_partner():
    s = ellipsoid()
    c = s.loops[0].coedges[0]
    z = s.coedge_vertices(c)[1]
    nxt = adjacent_coedge(s, c, z)
    assert s.coedges[nxt].loop == s.coedges[c].loop
    assert s.coedge_vertices(nxt)[0] == z
    assert s.coedges[nxt].edge != s.coedges[c].edge


@pytest.mark.parametrize("name", sorted(SOLIDS))
def test_adjacent_coedge_matches_brute_force(name):
    s = SOLIDS[name]()
    for c in s.coedges:
        a, b = s.coedge_vertices(c.id)
        same_loop = [x for x in s.coedges if x.loop == c.loop and x.id != c.id]
        expect_next = [x.id for x in same_loop if s.coedge_vertices(x.id)[0] == b]
        expect_prev = [x.id for x in same_loop if s.coedge_vertices(x.id)[1] == a]
        assert [adjacent_coedge(s, c.id, b)] == expect_next
        assert [adjacent_coedge(s, c.id, a)] == expect_prev


def test_adjacent_coedge_not_incident():
    s = ellipsoid()
    c = s.coedges[0]
    ends = set(s.coedge_vertices(0))
    other = next(v.id for v in s.vertices if v.id not in ends)
    with pytest.raises(NotIncident):
        adjacent_coedge(s, c.id, other)


def test_vertex_uses_are_three_corners_on_the_cube_sphere():
    s = ellipsoid()
    for z in range(len(s.vertices)):
        uses = vertex_uses(s, z)
        assert len(uses) == 3
        for f, uv in uses:
            np.testing.assert_allclose(s.faces[f].geometry.point(*uv), s.vertices[z].position, atol=1e-12)


@pytest.mark.parametrize("name", sorted(SOLIDS))
def test_record_round_trip(name):
    s = SOLIDS[name]()
    again = BrepSolid.from_record(s.to_record())
    assert again.counts() == s.counts()
    assert validate_solid(again) == []
    for a, b in zip(s.vertices, again.vertices):
        np.testing.assert_array_equal(a.position, b.position)


def test_source_ref_round_trip():
    ref = SourceRef("edge", 3, 1, "cap")
    assert SourceRef.from_record(ref.to_record()) == ref
    assert SourceRef.from_record(None) is None


def test_make_solid_rejects_unknown_generator():
    with pytest.raises(ValueError):
        make_solid("dodecahedron")


def test_generated_solids_are_smooth_across_edges():
    for name, build in SOLIDS.items():
        s = build()
        for e in s.edges:
            cids = s.edge_coedges()[e.id]
            normals = []
            for cid in cids:
                c = s.coedges[cid]
                patch = s.faces[s.loops[c.loop].face].geometry
                uv = c.pcurve.point(np.linspace(*c.pcurve.interval, 9))
                normals.append(patch.normal_jet(uv[:, 0], uv[:, 1])[0])
            # both co-edge pcurves run with the edge, so samples line up
            assert np.abs(normals[0] - normals[1]).max() < 1e-8, name
