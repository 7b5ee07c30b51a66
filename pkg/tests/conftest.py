"""Shared fixtures: bundled scenes are swept once per test session."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

from sweepforge.cli import bundled_scenes, load_scene
from sweepforge.lift import sweep_envelope
from sweepforge.motion import CircularArc
from sweepforge.solids import ellipsoid

SIMPLE_SCENES = [n for n in bundled_scenes() if load_scene(n).simple]


@dataclass
class Swept:
    scene: object
    env: object
    report: object
    seconds: float


class _SweepCache:
    def __init__(self):
        self._done = {}

    def __call__(self, name: str) -> Swept:
        if name not in self._done:
            scene = load_scene(name)
            t = time.perf_counter()
            env, report = sweep_envelope(scene.solid, scene.traj, scene.config, scene=scene.name)
            self._done[name] = Swept(scene, env, report, time.perf_counter() - t)
        return self._done[name]


@pytest.fixture(scope="session")
def swept():
    return _SweepCache()


@pytest.fixture(scope="session")
def arc_sphere(swept):
    return swept("arc-sphere")


@pytest.fixture(scope="session")
def unit_sphere():
    return ellipsoid(1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def arc_traj():
    """Origin on the circle of radius 3 about z, no rotation, I = [0, pi/2]."""
    return CircularArc(0.0, np.pi / 2, radius=3.0)


def torus_residual(p: np.ndarray, R: float = 3.0, r: float = 1.0) -> np.ndarray:
    """Implicit torus about z: (sqrt(x^2 + y^2) - R)^2 + z^2 - r^2."""
    p = np.atleast_2d(p)
    return (np.hypot(p[:, 0], p[:, 1]) - R) ** 2 + p[:, 2] ** 2 - r * r


def sphere_face_uv(x):
    """(face id, u, v) of a unit-sphere point on the bundled cube-sphere (faces in CUBE_FACES order)."""
    from sweepforge.surface import CUBE_FACES

    x = np.asarray(x, dtype=float)
    axes = list(CUBE_FACES.values())
    fid = int(np.argmax([sgn * x[k] for k, sgn, _, _ in axes]))
    k, sgn, iu, iv = axes[fid]
    d = sgn * x[k]
    return fid, x[iu] / d, x[iv] / d


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        status, text = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status} {text}")
