"""Parametric surface patches with exact 2-jets, and co-edge curves in patch domains."""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import DegenerateTangentPlane, DomainViolation, ParamOutOfRange

DOMAIN_SLACK = 1e-6

_AXES = np.eye(3)

# cube face -> (outward axis index, sign, u axis, v axis) with e_u x e_v = outward
CUBE_FACES = {
    "+x": (0, 1.0, 1, 2),
    "-x": (0, -1.0, 2, 1),
    "+y": (1, 1.0, 2, 0),
    "-y": (1, -1.0, 0, 2),
    "+z": (2, 1.0, 0, 1),
    "-z": (2, -1.0, 1, 0),
}


# cyclic coordinate relabelings (orientation preserving) taking the profile axis z to the named axis
_AXIS_PERM = {"z": [0, 1, 2], "x": [2, 0, 1], "y": [1, 2, 0]}


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def cross(a, b):
    """Cross product over the last axis (cheaper than np.cross on small arrays)."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


@dataclass(frozen=True)
class Jet2:
    S: np.ndarray
    S_u: np.ndarray
    S_v: np.ndarray
    S_uu: np.ndarray
    S_uv: np.ndarray
    S_vv: np.ndarray

    def __iter__(self):
        return iter((self.S, self.S_u, self.S_v, self.S_uu, self.S_uv, self.S_vv))


@dataclass(frozen=True)
class SurfacePatch:
    """A regular parametric patch on an axis-aligned box domain.

    ``orientation`` is +1 when S_u x S_v points out of the solid, -1 otherwise.
    """

    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    orientation: int = 1
    kind: ClassVar[str] = "abstract"

    def jet2(self, u, v) -> Jet2:  # pragma: no cover - abstract
        raise NotImplementedError

    def params(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError

    def to_record(self) -> dict:
        return {"kind": self.kind, "domain": list(self.domain),
                "orientation": self.orientation, **self.params()}

    def flipped(self) -> "SurfacePatch":
        from dataclasses import replace
        return replace(self, orientation=-self.orientation)

    def check_domain(self, u, v) -> None:
        u0, u1, v0, v1 = self.domain
        su = DOMAIN_SLACK * max(1.0, u1 - u0)
        sv = DOMAIN_SLACK * max(1.0, v1 - v0)
        u = np.asarray(u)
        v = np.asarray(v)
        if np.any(u < u0 - su) or np.any(u > u1 + su) or np.any(v < v0 - sv) or np.any(v > v1 + sv):
            raise DomainViolation("(u, v) outside the patch domain", stage="surface", entity=self.kind)

    def contains(self, u, v, slack: float = 0.0):
        u0, u1, v0, v1 = self.domain
        return (u >= u0 - slack) & (u <= u1 + slack) & (v >= v0 - slack) & (v <= v1 + slack)

    def point(self, u, v) -> np.ndarray:
        return self.jet2(u, v).S

    def normal_jet(self, u, v, check: bool = True, jet: Jet2 | None = None):
        """Unit normal (oriented outward) and its exact partials."""
        S, S_u, S_v, S_uu, S_uv, S_vv = self.jet2(u, v) if jet is None else jet
        n = cross(S_u, S_v)
        n_u = cross(S_uu, S_v) + cross(S_u, S_uv)
        n_v = cross(S_uv, S_v) + cross(S_u, S_vv)
        ln = np.linalg.norm(n, axis=-1)
        if check:
            scale = np.linalg.norm(S_u, axis=-1) * np.linalg.norm(S_v, axis=-1)
            if np.any(ln <= 1e-9 * scale):
                raise DegenerateTangentPlane("S_u x S_v vanishes", stage="surface", entity=self.kind)
        inv = (self.orientation / ln)[..., None]
        N = n * inv
        N_u = inv * (n_u - n * (_dot(n, n_u) / ln**2)[..., None])
        N_v = inv * (n_v - n * (_dot(n, n_v) / ln**2)[..., None])
        return N, N_u, N_v


def eval_jet2(patch: SurfacePatch, u, v) -> Jet2:
    patch.check_domain(u, v)
    return patch.jet2(u, v)


def unit_normal_jet(patch: SurfacePatch, u, v):
    patch.check_domain(u, v)
    return patch.normal_jet(u, v)


@dataclass(frozen=True)
class CubeSpherePatch(SurfacePatch):
    """One face of a cube-sphere, carried onto a deformed sphere.

    The unit-sphere point p = P/|P| (P the cube point) is mapped by
    D(p) = (a w(p_z) p_x, b w(p_z) p_y, c p_z + stretch tanh(k p_z)/tanh(k)),
    where w is a positive polynomial profile.  With w = 1 and stretch = 0 this
    is an ellipsoid.
    """

    face: str = "+z"
    semi_axes: tuple = (1.0, 1.0, 1.0)
    profile: tuple = (1.0,)  # coefficients of w(z), increasing degree
    stretch: float = 0.0
    sharpness: float = 3.0
    axis: str = "z"  # body axis of the profile; other axes are cyclic relabelings
    domain: tuple = (-1.0, 1.0, -1.0, 1.0)

    @property
    def kind(self) -> str:  # type: ignore[override]
        if tuple(self.profile) == (1.0,) and self.stretch == 0.0:
            return "cube-sphere-on-ellipsoid"
        return "surface-of-revolution"

    def params(self):
        return {"face": self.face, "semi_axes": list(self.semi_axes), "profile": list(self.profile),
                "stretch": self.stretch, "sharpness": self.sharpness, "axis": self.axis}

    def cube_point(self, u, v) -> np.ndarray:
        k, sgn, iu, iv = CUBE_FACES[self.face]
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        return sgn * _AXES[k] + u * _AXES[iu] + v * _AXES[iv]

    def _sphere_jet(self, u, v):
        k, sgn, iu, iv = CUBE_FACES[self.face]
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        P = self.cube_point(u, v)
        Pu, Pv = _AXES[iu], _AXES[iv]
        rho = np.sqrt(1.0 + u * u + v * v)
        r_u, r_v = u / rho, v / rho
        r_uu = 1.0 / rho - u * u / rho**3
        r_vv = 1.0 / rho - v * v / rho**3
        r_uv = -u * v / rho**3
        x = lambda a: np.asarray(a)[..., None]  # noqa: E731
        i1, i2, i3 = x(1.0 / rho), x(1.0 / rho**2), x(1.0 / rho**3)
        p = P * i1
        p_u = Pu * i1 - P * i2 * x(r_u)
        p_v = Pv * i1 - P * i2 * x(r_v)
        p_uu = -2 * Pu * i2 * x(r_u) + 2 * P * i3 * x(r_u**2) - P * i2 * x(r_uu)
        p_vv = -2 * Pv * i2 * x(r_v) + 2 * P * i3 * x(r_v**2) - P * i2 * x(r_vv)
        p_uv = (-Pu * i2 * x(r_v) - Pv * i2 * x(r_u) + 2 * P * i3 * x(r_u * r_v)
                - P * i2 * x(r_uv))
        return p, p_u, p_v, p_uu, p_uv, p_vv

    def _deform(self, p):
        """D(p) with its Jacobian and a bilinear second-derivative evaluator."""
        a, b, c = self.semi_axes
        z = p[..., 2]
        w = np.polynomial.polynomial.polyval(z, self.profile)
        dcoef = np.polynomial.polynomial.polyder(self.profile) if len(self.profile) > 1 else [0.0]
        ddcoef = np.polynomial.polynomial.polyder(self.profile, 2) if len(self.profile) > 2 else [0.0]
        w1 = np.polynomial.polynomial.polyval(z, dcoef)
        w2 = np.polynomial.polynomial.polyval(z, ddcoef)
        lam, kk = self.stretch, self.sharpness
        if lam:
            T = np.tanh(kk)
            th = np.tanh(kk * z)
            sech2 = 1.0 - th * th
            phi, phi1, phi2 = th / T, kk * sech2 / T, -2 * kk * kk * sech2 * th / T
        else:
            phi = phi1 = phi2 = np.zeros_like(z)
        D = np.stack([a * w * p[..., 0], b * w * p[..., 1], c * z + lam * phi], axis=-1)

        def J(d):
            return np.stack([
                a * (w * d[..., 0] + w1 * p[..., 0] * d[..., 2]),
                b * (w * d[..., 1] + w1 * p[..., 1] * d[..., 2]),
                (c + lam * phi1) * d[..., 2],
            ], axis=-1)

        def H(d, e):
            dz_ez = d[..., 2] * e[..., 2]
            return np.stack([
                a * (w1 * (d[..., 0] * e[..., 2] + d[..., 2] * e[..., 0]) + w2 * p[..., 0] * dz_ez),
                b * (w1 * (d[..., 1] * e[..., 2] + d[..., 2] * e[..., 1]) + w2 * p[..., 1] * dz_ez),
                lam * phi2 * dz_ez,
            ], axis=-1)

        return D, J, H

    def jet2(self, u, v) -> Jet2:
        p, p_u, p_v, p_uu, p_uv, p_vv = self._sphere_jet(u, v)
        D, J, H = self._deform(p)
        perm = _AXIS_PERM[self.axis]
        return Jet2(*(x[..., perm] for x in (
            D, J(p_u), J(p_v),
            J(p_uu) + H(p_u, p_u),
            J(p_uv) + H(p_u, p_v),
            J(p_vv) + H(p_v, p_v),
        )))


@dataclass(frozen=True)
class CylinderSegment(SurfacePatch):
    """S(u, v) = (r cos u, r sin u, v) over an angular and height range."""

    radius: float = 1.0
    domain: tuple = (0.0, np.pi, 0.0, 1.0)
    kind: ClassVar[str] = "cylinder-segment"

    def params(self):
        return {"radius": self.radius}

    def jet2(self, u, v) -> Jet2:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        r = self.radius
        cu, su = np.cos(u), np.sin(u)
        z = np.zeros_like(u + v)
        one = np.ones_like(z)
        S = np.stack([r * cu + z, r * su + z, v + z], axis=-1)
        S_u = np.stack([-r * su + z, r * cu + z, z], axis=-1)
        S_v = np.stack([z, z, one], axis=-1)
        S_uu = np.stack([-r * cu + z, -r * su + z, z], axis=-1)
        zero = np.stack([z, z, z], axis=-1)
        return Jet2(S, S_u, S_v, S_uu, zero, zero.copy())


@dataclass(frozen=True)
class TorusSegment(SurfacePatch):
    """S(u, v) = ((R + rho cos v) cos u, (R + rho cos v) sin u, rho sin v)."""

    major: float = 2.0
    minor: float = 0.5
    domain: tuple = (0.0, np.pi, 0.0, np.pi)
    kind: ClassVar[str] = "torus-segment"

    def params(self):
        return {"major": self.major, "minor": self.minor}

    def jet2(self, u, v) -> Jet2:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        R, r = self.major, self.minor
        cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
        w = R + r * cv
        z = np.zeros_like(u + v)
        S = np.stack([w * cu, w * su, r * sv + z], axis=-1)
        S_u = np.stack([-w * su, w * cu, z], axis=-1)
        S_v = np.stack([-r * sv * cu, -r * sv * su, r * cv + z], axis=-1)
        S_uu = np.stack([-w * cu, -w * su, z], axis=-1)
        S_uv = np.stack([r * sv * su, -r * sv * cu, z], axis=-1)
        S_vv = np.stack([-r * cv * cu, -r * cv * su, -r * sv + z], axis=-1)
        return Jet2(S, S_u, S_v, S_uu, S_uv, S_vv)


@dataclass(frozen=True)
class BicubicPatch(SurfacePatch):
    """Polynomial patch S(u, v) = sum_ij C[i][j] u^i v^j with i, j <= 3."""

    coefficients: tuple = ()
    kind: ClassVar[str] = "bicubic-polynomial"

    def params(self):
        return {"coefficients": np.asarray(self.coefficients, dtype=float).tolist()}

    def jet2(self, u, v) -> Jet2:
        C = np.asarray(self.coefficients, dtype=float)
        if C.shape != (4, 4, 3):
            raise ValueError("bicubic coefficients must have shape (4, 4, 3)")
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        pw = np.arange(4)

        def basis(x, order):
            out = []
            for i in pw:
                if i < order:
                    out.append(np.zeros_like(x))
                else:
                    coef = np.prod(np.arange(i - order + 1, i + 1)) if order else 1.0
                    out.append(coef * x ** (i - order))
            return out

        def ev(du, dv):
            bu, bv = basis(u, du), basis(v, dv)
            acc = 0.0
            for i in pw:
                for j in pw:
                    acc = acc + bu[i] * bv[j] * C[i, j]
            return acc

        return Jet2(ev(0, 0), ev(1, 0), ev(0, 1), ev(2, 0), ev(1, 1), ev(0, 2))


PATCH_KINDS = {
    "cube-sphere-on-ellipsoid": CubeSpherePatch,
    "surface-of-revolution": CubeSpherePatch,
    "cylinder-segment": CylinderSegment,
    "torus-segment": TorusSegment,
    "bicubic-polynomial": BicubicPatch,
}


def patch_from_record(record: dict) -> SurfacePatch:
    record = dict(record)
    cls = PATCH_KINDS[record.pop("kind")]
    for key, value in list(record.items()):
        if isinstance(value, list) and key != "coefficients":
            record[key] = tuple(value)
        elif key == "coefficients":
            record[key] = tuple(map(lambda r: tuple(map(tuple, r)), value))
    return cls(**record)


@dataclass(frozen=True)
class CoedgeCurve:
    """Polynomial map s -> (u, v) on [s0, s1], the domain pre-image of an edge.

    ``coefficients`` has shape (degree + 1, 2) in increasing powers of s.  The
    point depends only on s; ``sense`` flips the reported derivative, i.e. the
    direction in which the owning co-edge runs.
    """

    coefficients: tuple
    interval: tuple = (0.0, 1.0)
    sense: int = 1

    @classmethod
    def segment(cls, p0, p1, sense: int = 1) -> "CoedgeCurve":
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        return cls(coefficients=(tuple(p0), tuple(p1 - p0)), interval=(0.0, 1.0), sense=sense)

    def _coef(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float)

    def point(self, s) -> np.ndarray:
        c = self._coef()
        s = np.asarray(s, dtype=float)
        return np.stack([np.polynomial.polynomial.polyval(s, c[:, k]) for k in range(2)], axis=-1)

    def derivative(self, s) -> np.ndarray:
        """d(u, v)/ds of the underlying map (sense not applied)."""
        c = self._coef()
        s = np.asarray(s, dtype=float)
        if len(c) == 1:
            return np.zeros(s.shape + (2,))
        d = np.polynomial.polynomial.polyder(c, axis=0)
        return np.stack([np.polynomial.polynomial.polyval(s, d[:, k]) for k in range(2)], axis=-1)

    def to_record(self) -> dict:
        return {"coefficients": [list(map(float, c)) for c in self.coefficients],
                "interval": list(self.interval), "sense": self.sense}

    @classmethod
    def from_record(cls, record: dict) -> "CoedgeCurve":
        return cls(tuple(tuple(c) for c in record["coefficients"]), tuple(record["interval"]),
                   int(record["sense"]))


def coedge_eval(curve: CoedgeCurve, s):
    s0, s1 = curve.interval
    s_arr = np.asarray(s, dtype=float)
    slack = 1e-12 * max(1.0, abs(s1 - s0))
    if np.any(s_arr < s0 - slack) or np.any(s_arr > s1 + slack):
        raise ParamOutOfRange(f"s outside [{s0}, {s1}]", stage="surface")
    return curve.point(s_arr), curve.sense * curve.derivative(s_arr)
