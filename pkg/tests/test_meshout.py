import json

import numpy as np
import pytest
from conftest import SIMPLE_SCENES, sphere_face_uv, torus_residual

from sweepforge.lift.core import LEFT
from sweepforge.meshout import (IoError, Mesh, boundary_edge_count, export_brep, export_obj, face_boundary,
                                load_brep, read_obj, tessellate_cap_face, tessellate_envelope,
                                tessellate_envelope_face, weld, write_report)

CENTER0 = np.array([3.0, 0.0, 0.0])  # sphere centre at t0 on the arc-sphere scene


@pytest.fixture(scope="module")
def arc_mesh(arc_sphere):
    return tessellate_envelope(arc_sphere.env, 16)


def test_contact_mesh_on_the_torus(arc_sphere, arc_mesh):
    contact = np.isin(arc_mesh.face_ids, arc_sphere.env.contact_faces)
    used = np.unique(arc_mesh.triangles[contact])
    assert np.abs(torus_residual(arc_mesh.vertices[used])).max() < 1e-6


def test_minimal_grid_gives_two_triangles(arc_sphere):
    for f in arc_sphere.env.contact_faces:
        m = tessellate_envelope_face(arc_sphere.env.faces[f].geometry, 2)
        assert len(m.triangles) == 2


def test_contact_face_area_converges(arc_sphere):
    for f in arc_sphere.env.contact_faces:
        geom = arc_sphere.env.faces[f].geometry
        a, b = (tessellate_envelope_face(geom, n).area() for n in (48, 96))
        assert abs(a - b) < 1e-3 * b


def _caps(env, end):
    return [f for f in env.cap_faces if env.faces[f].geometry.end == end]


def test_trailing_hemisphere_area(arc_sphere):
    env = arc_sphere.env
    area = sum(tessellate_cap_face(env.faces[f].geometry, 32, face_boundary(env, f)).area()
               for f in _caps(env, LEFT))
    assert area == pytest.approx(2 * np.pi, rel=5e-3)


def test_untrimmed_cap_is_the_whole_patch(arc_sphere):
    env = arc_sphere.env
    f = next(f for f in _caps(env, LEFT) if env.faces[f].geometry.face == 3)  # the -y face
    cap = env.faces[f].geometry
    m = tessellate_cap_face(cap, 24)
    u0, u1, v0, v1 = cap.patch.domain
    U, V = np.meshgrid(np.linspace(u0, u1, 25), np.linspace(v0, v1, 25), indexing="ij")
    X = cap.patch.point(U, V)
    # reference: the same patch meshed on a plain grid
    ref = 0.5 * np.linalg.norm(np.cross(X[1:, :-1] - X[:-1, :-1], X[1:, 1:] - X[:-1, :-1]), axis=-1).sum() \
        + 0.5 * np.linalg.norm(np.cross(X[1:, 1:] - X[:-1, :-1], X[:-1, 1:] - X[:-1, :-1]), axis=-1).sum()
    assert m.area() == pytest.approx(ref, rel=5e-3)
    np.testing.assert_allclose(np.linalg.norm(m.vertices - CENTER0, axis=1), 1.0, atol=1e-12)


def test_cap_rings_sit_on_the_end_coc(arc_sphere):
    env = arc_sphere.env
    for f in _caps(env, LEFT):
        m = tessellate_cap_face(env.faces[f].geometry, 16, face_boundary(env, f))
        edges = np.sort(np.concatenate([m.triangles[:, [0, 1]], m.triangles[:, [1, 2]], m.triangles[:, [2, 0]]]),
                        axis=1)
        uniq, count = np.unique(edges, axis=0, return_counts=True)
        ring = np.unique(uniq[count == 1])
        for x in m.vertices[ring] - CENTER0:
            _, u, v = sphere_face_uv(x)
            on_input_edge = max(abs(u), abs(v)) > 1 - 1e-9
            assert on_input_edge or abs(x[1]) < 1e-6


def test_winding_follows_normals(arc_mesh):
    assert np.all(arc_mesh.winding_agreement() > 0)
    assert arc_mesh.triangle_areas().min() > 1e-12


@pytest.mark.parametrize("name", SIMPLE_SCENES)
def test_bundled_meshes_are_watertight(swept, name):
    mesh = tessellate_envelope(swept(name).env, 12)
    assert boundary_edge_count(mesh) == 0
    assert np.all(mesh.winding_agreement() > 0)


def test_jobs_do_not_change_the_mesh(arc_sphere):
    a = tessellate_envelope(arc_sphere.env, 8)
    b = tessellate_envelope(arc_sphere.env, 8, jobs=4)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    np.testing.assert_array_equal(a.triangles, b.triangles)


def test_empty_mesh_exports(tmp_path):
    path = tmp_path / "empty.obj"
    export_obj(Mesh(), path)
    obj = read_obj(path)
    assert obj["f"] == [] and len(obj["v"]) == 0


def test_obj_parse_back(arc_mesh, tmp_path):
    path = tmp_path / "arc.obj"
    export_obj(arc_mesh, path)
    obj = read_obj(path)
    rep, uniq = weld(arc_mesh)
    assert len(obj["f"]) == len(arc_mesh.triangles)
    np.testing.assert_array_equal(obj["v"], arc_mesh.vertices[uniq])
    np.testing.assert_array_equal(obj["vn"], arc_mesh.normals)
    assert len(set(obj["groups"])) == len(np.unique(arc_mesh.face_ids))
    for face in obj["f"]:
        (a, na), (b, _), (c, _) = face
        p = obj["v"][[a - 1, b - 1, c - 1]]
        assert np.cross(p[1] - p[0], p[2] - p[0]) @ obj["vn"][na - 1] > 0


def test_brep_round_trip(arc_sphere, tmp_path):
    path = tmp_path / "arc.brep.json"
    export_brep(arc_sphere.env, path)
    again = load_brep(path)
    env = arc_sphere.env
    assert again.counts() == env.counts()
    for a, b in zip(env.vertices, again.vertices):
        np.testing.assert_array_equal(a.position, b.position)
        assert a.source == b.source
    for a, b in zip(env.edges, again.edges):
        np.testing.assert_array_equal(a.samples, b.samples)
    for a, b in zip(env.coedges, again.coedges):
        assert (a.edge, a.loop, a.sense) == (b.edge, b.loop, b.sense)
    assert json.loads(path.read_text())["version"] == "sweepforge-brep/1"


def test_bad_brep_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"version": "other/9"}))
    with pytest.raises(IoError):
        load_brep(path)
    with pytest.raises(IoError):
        load_brep(tmp_path / "missing.json")


def test_report_is_machine_readable(arc_sphere, tmp_path):
    path = tmp_path / "report.json"
    write_report(arc_sphere.report, path)
    rec = json.loads(path.read_text())
    assert rec["schema"] == "sweepforge-report/1"
    assert rec["theta_min"] > 0
    assert set(rec["audits"]) >= {"adjacency", "orientation-character", "ray-parity", "watertight"}
    assert "faces" in rec["timings"]


def test_unwritable_path(tmp_path):
    with pytest.raises(IoError):
        export_obj(Mesh(), tmp_path)
