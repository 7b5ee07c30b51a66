"""Bundled smooth input solids built from box-domain patches."""

from __future__ import annotations

import numpy as np

from .brep import BrepSolid, assemble_patches
from .surface import CUBE_FACES, CubeSpherePatch, TorusSegment

_SQUARE = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]


def cube_sphere_solid(**params) -> BrepSolid:
    """Six cube-sphere faces sharing one deformation (12 edges, 8 vertices)."""
    return assemble_patches([(CubeSpherePatch(face=f, **params), _SQUARE) for f in CUBE_FACES])


def ellipsoid(a: float = 1.0, b: float = 1.0, c: float = 1.0) -> BrepSolid:
    return cube_sphere_solid(semi_axes=(a, b, c))


def capsule(r: float = 0.5, h: float = 1.0, sharpness: float = 3.0, axis: str = "z") -> BrepSolid:
    """Smooth capsule-like solid of radius r whose axial extent grows by h.

    The sphere of radius r is stretched along its axis by a tanh profile, so
    the result is C-infinity rather than the C1 cylinder-plus-hemispheres.
    """
    return cube_sphere_solid(semi_axes=(r, r, r), stretch=0.5 * h, sharpness=sharpness, axis=axis)


def revolve(profile=(1.0,), radius: float = 1.0, half_length: float = 1.0, axis: str = "z") -> BrepSolid:
    """Solid of revolution with radius profile radius * w(z) about ``axis``.

    ``profile`` lists the coefficients of w in increasing powers of the unit
    axial coordinate; w must stay positive on [-1, 1].
    """
    z = np.linspace(-1.0, 1.0, 201)
    if np.min(np.polynomial.polynomial.polyval(z, profile)) <= 0:
        raise ValueError("revolve profile must be positive on [-1, 1]")
    return cube_sphere_solid(semi_axes=(radius, radius, half_length), profile=tuple(profile), axis=axis)


def torus(R: float = 2.0, rho: float = 0.5) -> BrepSolid:
    """Four torus-segment patches, 8 edges, 4 vertices, genus 1."""
    faces = []
    for u0 in (0.0, np.pi):
        for v0 in (0.0, np.pi):
            dom = (u0, u0 + np.pi, v0, v0 + np.pi)
            corners = [(u0, v0), (u0 + np.pi, v0), (u0 + np.pi, v0 + np.pi), (u0, v0 + np.pi)]
            faces.append((TorusSegment(major=R, minor=rho, domain=dom), corners))
    return assemble_patches(faces, genus=1)


GENERATORS = {"ellipsoid": ellipsoid, "capsule": capsule, "revolve": revolve, "torus": torus}


def make_solid(name: str, **params) -> BrepSolid:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown solid generator {name!r}") from None
    params = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    return gen(**params)
