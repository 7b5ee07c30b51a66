import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepforge.errors import DegenerateTangentPlane, DomainViolation, ParamOutOfRange
from sweepforge.solids import make_solid
from sweepforge.surface import (CUBE_FACES, BicubicPatch, CoedgeCurve, CubeSpherePatch, CylinderSegment,
                                TorusSegment, coedge_eval, eval_jet2, patch_from_record, unit_normal_jet)

PATCHES = [
    *(CubeSpherePatch(face=f) for f in CUBE_FACES),
    CubeSpherePatch(face="+x", semi_axes=(1.0, 2.0, 0.5)),
    CubeSpherePatch(face="-y", semi_axes=(0.5, 0.5, 0.5), stretch=0.5, sharpness=3.0),
    CubeSpherePatch(face="+z", semi_axes=(0.5, 0.5, 1.2), profile=(0.6, 0.0, 0.4), axis="x"),
    CylinderSegment(radius=1.5, domain=(0.0, np.pi, -1.0, 1.0)),
    TorusSegment(major=2.0, minor=0.5),
    BicubicPatch(domain=(0.0, 1.0, 0.0, 1.0), coefficients=tuple(
        tuple(tuple(c) for c in row) for row in np.array(
            [[[0, 0, 0], [0, 1, 0], [0, 0, 0.2], [0, 0, 0]],
             [[1, 0, 0], [0, 0, 0.3], [0, 0, 0], [0, 0, 0]],
             [[0, 0, 0.1], [0, 0, 0], [0, 0, 0], [0, 0, 0]],
             [[0, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0.05]]], dtype=float))),
]
IDS = [f"{type(p).__name__}-{i}" for i, p in enumerate(PATCHES)]


def _interior(patch, a, b):
    u0, u1, v0, v1 = patch.domain
    return u0 + (0.05 + 0.9 * a) * (u1 - u0), v0 + (0.05 + 0.9 * b) * (v1 - v0)


def test_sphere_patch_center():
    S, S_u, S_v, *_ = eval_jet2(CubeSpherePatch(face="+z"), 0.0, 0.0)
    assert np.linalg.norm(S) == pytest.approx(1.0, abs=1e-15)
    assert abs(S @ S_u) < 1e-15 and abs(S @ S_v) < 1e-15


def test_cylinder_second_partials():
    r, u, v = 1.5, 0.7, 0.3
    jet = eval_jet2(CylinderSegment(radius=r, domain=(0.0, np.pi, -1.0, 1.0)), u, v)
    np.testing.assert_allclose(jet.S_uu, [-r * np.cos(u), -r * np.sin(u), 0.0])
    np.testing.assert_allclose(jet.S_vv, 0.0)


def test_torus_segment_origin():
    jet = eval_jet2(TorusSegment(major=2.0, minor=0.5), 0.0, 0.0)
    np.testing.assert_allclose(jet.S, [2.5, 0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(face=st.sampled_from(sorted(CUBE_FACES)), a=st.floats(0, 1), b=st.floats(0, 1))
def test_unit_sphere_normal_is_radial(face, a, b):
    patch = CubeSpherePatch(face=face)
    u, v = _interior(patch, a, b)
    N, _, _ = unit_normal_jet(patch, u, v)
    np.testing.assert_allclose(N, patch.point(u, v), atol=1e-12)


def test_cylinder_normal():
    patch = CylinderSegment(radius=1.5, domain=(0.0, np.pi, -1.0, 1.0))
    N, N_u, N_v = unit_normal_jet(patch, 0.4, 0.2)
    np.testing.assert_allclose(N, [np.cos(0.4), np.sin(0.4), 0.0], atol=1e-15)
    np.testing.assert_allclose(N_v, 0.0, atol=1e-15)


def test_flipped_patch_negates_normal_jet():
    patch = TorusSegment(major=2.0, minor=0.5)
    a = unit_normal_jet(patch, 0.3, 1.1)
    b = unit_normal_jet(patch.flipped(), 0.3, 1.1)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, -y)


def test_domain_violation():
    with pytest.raises(DomainViolation):
        eval_jet2(CubeSpherePatch(), 1.1, 0.0)


def test_degenerate_tangent_plane():
    C = np.zeros((4, 4, 3))
    C[1, 0] = [1, 0, 0]  # S depends on u only
    patch = BicubicPatch(domain=(0.0, 1.0, 0.0, 1.0), coefficients=tuple(map(lambda r: tuple(map(tuple, r)), C)))
    with pytest.raises(DegenerateTangentPlane):
        unit_normal_jet(patch, 0.5, 0.5)


def test_coedge_segment_and_sense():
    fwd = CoedgeCurve.segment((0, 0), (1, 0))
    p, d = coedge_eval(fwd, 0.5)
    np.testing.assert_allclose(p, [0.5, 0.0])
    np.testing.assert_allclose(d, [1.0, 0.0])
    rev = CoedgeCurve.segment((0, 0), (1, 0), sense=-1)
    p, d = coedge_eval(rev, 0.5)
    np.testing.assert_allclose(p, [0.5, 0.0])
    np.testing.assert_allclose(d, [-1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(s=st.floats(0.0, 2.0))
def test_arc_coedge_derivative(s):
    curve = CoedgeCurve(((0.0, 0.0), (1.0, 0.5), (-0.3, 0.2), (0.05, -0.1)), interval=(0.0, 2.0))
    _, d = coedge_eval(curve, s)
    h = 1e-6
    fd = (curve.point(s + h) - curve.point(s - h)) / (2 * h)
    np.testing.assert_allclose(d, fd, atol=1e-6)


def test_param_out_of_range():
    with pytest.raises(ParamOutOfRange):
        coedge_eval(CoedgeCurve.segment((0, 0), (1, 0)), 1.5)


@pytest.mark.parametrize("patch", PATCHES, ids=IDS)
def test_patch_record_round_trip(patch):
    again = patch_from_record(patch.to_record())
    np.testing.assert_array_equal(again.point(0.1 * np.ones(3), 0.2 * np.ones(3)),
                                  patch.point(0.1 * np.ones(3), 0.2 * np.ones(3)))


@settings(max_examples=300, deadline=None)
@given(k=st.integers(0, len(PATCHES) - 1), a=st.floats(0, 1), b=st.floats(0, 1))
def test_two_jet_matches_differences(k, a, b):
    patch = PATCHES[k]
    u, v = _interior(patch, a, b)
    h = 1e-5
    J = patch.jet2(u, v)
    Ju_p, Ju_m = patch.jet2(u + h, v), patch.jet2(u - h, v)
    Jv_p, Jv_m = patch.jet2(u, v + h), patch.jet2(u, v - h)

    def close(fd, exact):
        assert np.linalg.norm(fd - exact) <= 1e-5 * max(np.linalg.norm(exact), 1.0)

    close((Ju_p.S - Ju_m.S) / (2 * h), J.S_u)
    close((Jv_p.S - Jv_m.S) / (2 * h), J.S_v)
    close((Ju_p.S_u - Ju_m.S_u) / (2 * h), J.S_uu)
    close((Jv_p.S_u - Jv_m.S_u) / (2 * h), J.S_uv)
    close((Jv_p.S_v - Jv_m.S_v) / (2 * h), J.S_vv)


@settings(max_examples=300, deadline=None)
@given(k=st.integers(0, len(PATCHES) - 1), a=st.floats(0, 1), b=st.floats(0, 1))
def test_normal_jet_matches_differences(k, a, b):
    patch = PATCHES[k]
    u, v = _interior(patch, a, b)
    h = 1e-6
    N, N_u, N_v = patch.normal_jet(u, v)
    assert abs(np.linalg.norm(N) - 1) < 1e-12
    assert abs(N @ N_u) < 1e-10 and abs(N @ N_v) < 1e-10
    fd_u = (patch.normal_jet(u + h, v)[0] - patch.normal_jet(u - h, v)[0]) / (2 * h)
    fd_v = (patch.normal_jet(u, v + h)[0] - patch.normal_jet(u, v - h)[0]) / (2 * h)
    assert np.linalg.norm(fd_u - N_u) <= 1e-5 * max(np.linalg.norm(N_u), 1.0)
    assert np.linalg.norm(fd_v - N_v) <= 1e-5 * max(np.linalg.norm(N_v), 1.0)


BUNDLED_SOLIDS = {
    "ellipsoid": {"a": 1.0, "b": 1.5, "c": 0.7},
    "capsule": {"r": 0.5, "h": 1.0},
    "revolve": {"profile": [0.6, 0.0, 0.4], "radius": 0.5, "half_length": 1.2},
    "torus": {"R": 2.0, "rho": 0.5},
}


@pytest.mark.parametrize("name", sorted(BUNDLED_SOLIDS))
def test_bundled_patches_regular_on_grid(name):
    solid = make_solid(name, **BUNDLED_SOLIDS[name])
    for f in solid.faces:
        u0, u1, v0, v1 = f.geometry.domain
        u, v = np.meshgrid(np.linspace(u0, u1, 50), np.linspace(v0, v1, 50))
        J = f.geometry.jet2(u, v)
        n = np.linalg.norm(np.cross(J.S_u, J.S_v), axis=-1)
        scale = np.linalg.norm(J.S_u, axis=-1) * np.linalg.norm(J.S_v, axis=-1)
        assert np.all(n > 1e-9 * scale)
