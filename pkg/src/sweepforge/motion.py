"""Rigid-motion trajectories h(t) = (A(t), b(t)).

All trajectory kinds expose analytic first and second derivatives of both the
rotation and the translation.  Evaluation is vectorized: ``t`` may be a scalar
or an array, in which case the returned matrices carry the leading shape of
``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import TimeOutOfDomain

_TIME_SLACK = 1e-12


@dataclass(frozen=True)
class PoseJet:
    """Pose and its time derivatives at one (or many) instants."""

    A: np.ndarray
    b: np.ndarray
    A_dot: np.ndarray
    b_dot: np.ndarray
    A_ddot: np.ndarray
    b_ddot: np.ndarray


def skew(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    K = np.zeros(w.shape[:-1] + (3, 3))
    K[..., 0, 1] = -w[..., 2]
    K[..., 0, 2] = w[..., 1]
    K[..., 1, 0] = w[..., 2]
    K[..., 1, 2] = -w[..., 0]
    K[..., 2, 0] = -w[..., 1]
    K[..., 2, 1] = w[..., 0]
    return K


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero vector where a direction is required")
    return v / n


def _perp_frame(axis: np.ndarray, start_dir=None) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (e1, e2) with e1 x e2 = axis."""
    if start_dir is None:
        trial = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    else:
        trial = np.asarray(start_dir, dtype=float)
    e1 = trial - np.dot(trial, axis) * axis
    e1 = _unit(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def axis_rotation(axis: np.ndarray, phi, dphi, ddphi):
    """Rotation about a fixed unit axis by angle phi(t), with time derivatives."""
    phi = np.asarray(phi, dtype=float)
    dphi = np.broadcast_to(np.asarray(dphi, dtype=float), phi.shape)
    ddphi = np.broadcast_to(np.asarray(ddphi, dtype=float), phi.shape)
    K = skew(axis)
    K2 = K @ K
    c = np.cos(phi)[..., None, None]
    s = np.sin(phi)[..., None, None]
    d1 = dphi[..., None, None]
    d2 = ddphi[..., None, None]
    R = np.eye(3) + s * K + (1.0 - c) * K2
    P = c * K + s * K2
    Q = -s * K + c * K2
    return R, d1 * P, d2 * P + d1 * d1 * Q


# -- easing profiles: value, first and second derivative on [0, 1] --------------

def _ease(kind: str, x):
    x = np.asarray(x, dtype=float)
    if kind == "linear":
        return x, np.ones_like(x), np.zeros_like(x)
    if kind == "smoothstep":
        return 3 * x**2 - 2 * x**3, 6 * x - 6 * x**2, 6 - 12 * x
    if kind == "quintic":
        return (
            6 * x**5 - 15 * x**4 + 10 * x**3,
            30 * x**4 - 60 * x**3 + 30 * x**2,
            120 * x**3 - 180 * x**2 + 60 * x,
        )
    raise ValueError(f"unknown easing {kind!r}")


@dataclass(frozen=True)
class Trajectory:
    """Base class: a smooth family of rigid motions on the closed interval [t0, t1]."""

    t0: float
    t1: float
    kind: ClassVar[str] = "abstract"

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError("trajectory interval must satisfy t0 < t1")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.t0, self.t1)

    def _check_time(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        slack = _TIME_SLACK * max(1.0, abs(self.t0), abs(self.t1))
        if np.any(t < self.t0 - slack) or np.any(t > self.t1 + slack):
            raise TimeOutOfDomain(
                f"t outside [{self.t0}, {self.t1}]", stage="motion", entity=self.kind
            )
        return t

    def pose(self, t) -> PoseJet:
        return self._pose(self._check_time(t))

    def _pose(self, t: np.ndarray) -> PoseJet:  # pragma: no cover - abstract
        raise NotImplementedError

    def to_record(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


def eval_pose(traj: Trajectory, t) -> PoseJet:
    return traj.pose(t)


def point_trajectory(traj: Trajectory, x, t) -> tuple[np.ndarray, np.ndarray]:
    """Position A(t)x + b(t) and velocity A'(t)x + b'(t) of a body-fixed point."""
    jet = traj.pose(t)
    x = np.asarray(x, dtype=float)
    pos = np.einsum("...ij,...j->...i", jet.A, x) + jet.b
    vel = np.einsum("...ij,...j->...i", jet.A_dot, x) + jet.b_dot
    return pos, vel


def _const_rotation(shape):
    eye = np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
    zero = np.zeros(shape + (3, 3))
    return eye, zero, zero.copy()


@dataclass(frozen=True)
class LinearEasing(Trajectory):
    """Straight-line translation p0 -> p1 with an easing profile and optional spin."""

    p0: tuple = (0.0, 0.0, 0.0)
    p1: tuple = (1.0, 0.0, 0.0)
    easing: str = "linear"
    spin_axis: tuple = (0.0, 0.0, 1.0)
    spin_angle: float = 0.0
    kind: ClassVar[str] = "linear-with-easing"

    def _pose(self, t):
        span = self.t1 - self.t0
        e, de, dde = _ease(self.easing, (t - self.t0) / span)
        de = de / span
        dde = dde / span**2
        d = np.asarray(self.p1, dtype=float) - np.asarray(self.p0, dtype=float)
        b = np.asarray(self.p0, dtype=float) + e[..., None] * d
        if self.spin_angle:
            A, Ad, Add = axis_rotation(
                _unit(self.spin_axis), self.spin_angle * e, self.spin_angle * de, self.spin_angle * dde
            )
        else:
            A, Ad, Add = _const_rotation(t.shape)
        return PoseJet(A, b, Ad, de[..., None] * d, Add, dde[..., None] * d)

    def to_record(self):
        return {
            "kind": self.kind, "t0": self.t0, "t1": self.t1, "p0": list(self.p0),
            "p1": list(self.p1), "easing": self.easing, "spin_axis": list(self.spin_axis),
            "spin_angle": self.spin_angle,
        }


@dataclass(frozen=True)
class CircularArc(Trajectory):
    """Translation of the body origin along a circle; ``follow`` also turns the body."""

    radius: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    start_dir: tuple | None = None
    angular_rate: float = 1.0
    phase: float = 0.0
    follow: bool = False
    kind: ClassVar[str] = "circular-arc"

    def _pose(self, t):
        a = _unit(self.axis)
        e1, e2 = _perp_frame(a, self.start_dir)
        w = self.angular_rate
        phi = w * t + self.phase
        c, s = np.cos(phi)[..., None], np.sin(phi)[..., None]
        R = self.radius
        b = np.asarray(self.center, dtype=float) + R * (c * e1 + s * e2)
        bd = R * w * (-s * e1 + c * e2)
        bdd = -R * w * w * (c * e1 + s * e2)
        if self.follow:
            A, Ad, Add = axis_rotation(a, w * t, w, 0.0)
        else:
            A, Ad, Add = _const_rotation(t.shape)
        return PoseJet(A, b, Ad, bd, Add, bdd)

    def to_record(self):
        return {
            "kind": self.kind, "t0": self.t0, "t1": self.t1, "radius": self.radius,
            "center": list(self.center), "axis": list(self.axis),
            "start_dir": None if self.start_dir is None else list(self.start_dir),
            "angular_rate": self.angular_rate, "phase": self.phase, "follow": self.follow,
        }


@dataclass(frozen=True)
class Helix(Trajectory):
    """Helical translation: circle of ``radius`` about ``axis`` rising ``pitch`` per radian."""

    radius: float = 1.0
    pitch: float = 0.1
    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    start_dir: tuple | None = None
    angular_rate: float = 1.0
    phase: float = 0.0
    follow: bool = False
    kind: ClassVar[str] = "helix"

    def _pose(self, t):
        a = _unit(self.axis)
        e1, e2 = _perp_frame(a, self.start_dir)
        w = self.angular_rate
        phi = w * t + self.phase
        c, s = np.cos(phi)[..., None], np.sin(phi)[..., None]
        R = self.radius
        rise = self.pitch * w
        b = np.asarray(self.center, dtype=float) + R * (c * e1 + s * e2) + (rise * t)[..., None] * a
        bd = R * w * (-s * e1 + c * e2) + rise * a
        bdd = -R * w * w * (c * e1 + s * e2)
        if self.follow:
            A, Ad, Add = axis_rotation(a, w * t, w, 0.0)
        else:
            A, Ad, Add = _const_rotation(t.shape)
        return PoseJet(A, b, Ad, bd, Add, bdd)

    def to_record(self):
        return {
            "kind": self.kind, "t0": self.t0, "t1": self.t1, "radius": self.radius,
            "pitch": self.pitch, "center": list(self.center), "axis": list(self.axis),
            "start_dir": None if self.start_dir is None else list(self.start_dir),
            "angular_rate": self.angular_rate, "phase": self.phase, "follow": self.follow,
        }


@dataclass(frozen=True)
class Screw(Trajectory):
    """Rotation about an axis through ``point`` combined with translation along it."""

    axis: tuple = (0.0, 0.0, 1.0)
    point: tuple = (0.0, 0.0, 0.0)
    pitch: float = 0.0
    angular_rate: float = 1.0
    phase: float = 0.0
    kind: ClassVar[str] = "screw"

    def _pose(self, t):
        a = _unit(self.axis)
        w = self.angular_rate
        A, Ad, Add = axis_rotation(a, w * t + self.phase, w, 0.0)
        c = np.asarray(self.point, dtype=float)
        rise = self.pitch * w
        b = c - A @ c + (rise * t)[..., None] * a
        bd = -(Ad @ c) + rise * a
        bdd = -(Add @ c)
        return PoseJet(A, b, Ad, bd, Add, bdd)

    def to_record(self):
        return {
            "kind": self.kind, "t0": self.t0, "t1": self.t1, "axis": list(self.axis),
            "point": list(self.point), "pitch": self.pitch,
            "angular_rate": self.angular_rate, "phase": self.phase,
        }


# -- rotation-vector exponential with second-order time derivatives ------------

def _series(s, coeffs):
    out = np.zeros_like(s)
    for c in reversed(coeffs):
        out = out * s + c
    return out


def _fact(n):
    out = 1.0
    for k in range(2, n + 1):
        out *= k
    return out


_NTERMS = 12
_A_COEF = [(-1) ** k / _fact(2 * k + 1) for k in range(_NTERMS)]
_B_COEF = [(-1) ** k / _fact(2 * k + 2) for k in range(_NTERMS)]


def _deriv_coeffs(coef, order):
    out = list(coef)
    for _ in range(order):
        out = [k * out[k] for k in range(1, len(out))]
    return out


def _exp_scalars(s):
    """A(s) = sin(x)/x and B(s) = (1 - cos x)/x^2 with x = sqrt(s), plus d/ds and d2/ds2."""
    s = np.asarray(s, dtype=float)
    small = s < 1.0
    out = []
    for coef in (_A_COEF, _B_COEF):
        out.append([_series(s, _deriv_coeffs(coef, k)) for k in range(3)])
    if np.any(~small):
        x = np.sqrt(np.where(small, 1.0, s))
        sn, cs = np.sin(x), np.cos(x)
        closed_a = [
            sn / x,
            (x * cs - sn) / (2 * x**3),
            (-(x**2) * sn - 3 * x * cs + 3 * sn) / (4 * x**5),
        ]
        closed_b = [
            (1 - cs) / x**2,
            (x * sn - 2 + 2 * cs) / (2 * x**4),
            (x**2 * cs - 5 * x * sn + 8 - 8 * cs) / (4 * x**6),
        ]
        for k in range(3):
            out[0][k] = np.where(small, out[0][k], closed_a[k])
            out[1][k] = np.where(small, out[1][k], closed_b[k])
    return out[0], out[1]


def exp_rotation_jet(r, rd, rdd):
    """exp([r]x) and its first two time derivatives for a rotation-vector path r(t)."""
    r, rd, rdd = (np.asarray(x, dtype=float) for x in (r, rd, rdd))
    s = np.einsum("...i,...i->...", r, r)
    sd = 2 * np.einsum("...i,...i->...", r, rd)
    sdd = 2 * (np.einsum("...i,...i->...", rd, rd) + np.einsum("...i,...i->...", r, rdd))
    (a, a1, a2), (b, b1, b2) = _exp_scalars(s)
    ad = a1 * sd
    add = a2 * sd * sd + a1 * sdd
    bd = b1 * sd
    bdd = b2 * sd * sd + b1 * sdd
    K, Kd, Kdd = skew(r), skew(rd), skew(rdd)
    K2 = K @ K
    KdK = Kd @ K + K @ Kd
    x = lambda v: v[..., None, None]  # noqa: E731
    R = np.eye(3) + x(a) * K + x(b) * K2
    Rd = x(ad) * K + x(a) * Kd + x(bd) * K2 + x(b) * KdK
    Rdd = (
        x(add) * K + 2 * x(ad) * Kd + x(a) * Kdd + x(bdd) * K2 + 2 * x(bd) * KdK
        + x(b) * (Kdd @ K + 2 * Kd @ Kd + K @ Kdd)
    )
    return R, Rd, Rdd


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a quaternion (w, x, y, z), without renormalizing it."""
    w, x, y, z = (float(c) for c in q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _quat_mul(p, q):
    w0, x0, y0, z0 = p
    w1, x1, y1, z1 = q
    return np.array([
        w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
        w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
        w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
        w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
    ])


def _quat_log_vec(q) -> np.ndarray:
    """Rotation vector of a (not necessarily unit) quaternion."""
    q = np.asarray(q, dtype=float)
    vn = np.linalg.norm(q[1:])
    if vn < 1e-15:
        return np.zeros(3)
    return 2.0 * np.arctan2(vn, q[0]) * q[1:] / vn


@dataclass(frozen=True)
class KeyframeSpline(Trajectory):
    """C2 interpolating spline through keyframe poses.

    Positions are interpolated by a natural cubic spline.  Orientations use the
    cumulative form A(t) = R(q_0) exp([r(t)]x), where r is a natural cubic
    spline through the rotation vectors of q_0^-1 q_k.  The first keyframe
    quaternion enters R(q_0) as given, so a non-unit q_0 yields a non-orthogonal
    A and is caught by :func:`validate_trajectory`.
    """

    times: tuple = ()
    quaternions: tuple = ()
    positions: tuple = ()
    kind: ClassVar[str] = "quaternion-keyframe-spline"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        super().__post_init__()
        n = len(self.times)
        if n < 2 or len(self.quaternions) != n or len(self.positions) != n:
            raise ValueError("keyframe spline needs >= 2 keyframes with matching arrays")
        if abs(self.times[0] - self.t0) > 1e-12 or abs(self.times[-1] - self.t1) > 1e-12:
            raise ValueError("keyframe times must span [t0, t1]")
        q0 = np.asarray(self.quaternions[0], dtype=float)
        q0_unit = q0 / np.linalg.norm(q0)
        q0_inv = q0_unit * np.array([1, -1, -1, -1])
        rvecs = []
        prev = None
        for q in self.quaternions:
            qu = np.asarray(q, dtype=float) / np.linalg.norm(q)
            rel = _quat_mul(q0_inv, qu)
            if prev is not None and np.dot(rel, prev) < 0:
                rel = -rel
            prev = rel
            rvecs.append(_quat_log_vec(rel))
        self._cache["R0"] = quat_to_matrix(q0)
        self._cache["rot"] = CubicSpline(self.times, np.array(rvecs), bc_type="natural")
        self._cache["pos"] = CubicSpline(self.times, np.asarray(self.positions, float), bc_type="natural")

    def _pose(self, t):
        rot, pos, R0 = self._cache["rot"], self._cache["pos"], self._cache["R0"]
        R, Rd, Rdd = exp_rotation_jet(rot(t), rot(t, 1), rot(t, 2))
        return PoseJet(R0 @ R, pos(t), R0 @ Rd, pos(t, 1), R0 @ Rdd, pos(t, 2))

    def to_record(self):
        return {
            "kind": self.kind, "t0": self.t0, "t1": self.t1, "times": list(self.times),
            "quaternions": [list(q) for q in self.quaternions],
            "positions": [list(p) for p in self.positions],
        }


TRAJECTORY_KINDS = {
    cls.kind: cls for cls in (LinearEasing, CircularArc, Helix, Screw, KeyframeSpline)
}


def trajectory_from_record(record: dict) -> Trajectory:
    record = dict(record)
    kind = record.pop("kind")
    try:
        cls = TRAJECTORY_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown trajectory kind {kind!r}") from None
    for key, value in list(record.items()):
        if isinstance(value, list):
            record[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return cls(**record)


@dataclass(frozen=True)
class Violation:
    """A contiguous run of samples failing one trajectory check."""

    check: str
    t: float
    t_last: float
    count: int
    worst: float


def validate_trajectory(traj: Trajectory, n_samples: int, h: float = 1e-5) -> list[Violation]:
    """Check rotation validity and derivative consistency at uniformly spaced samples."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    ts = np.linspace(traj.t0, traj.t1, n_samples)
    jet = traj.pose(ts)
    ortho = np.abs(np.swapaxes(jet.A, -1, -2) @ jet.A - np.eye(3)).max(axis=(-1, -2))
    det_err = np.abs(np.linalg.det(jet.A) - 1.0)
    rot_bad = np.maximum(ortho, det_err)
    failures = {"orthogonality": (rot_bad >= 1e-10, rot_bad)}

    interior = (ts - h >= traj.t0) & (ts + h <= traj.t1)
    deriv_err = np.zeros(n_samples)
    if np.any(interior):
        ti = ts[interior]
        hi, lo = traj.pose(ti + h), traj.pose(ti - h)
        fd_A = (hi.A - lo.A) / (2 * h)
        fd_b = (hi.b - lo.b) / (2 * h)
        err_A = np.abs(fd_A - jet.A_dot[interior]).max(axis=(-1, -2))
        err_b = np.abs(fd_b - jet.b_dot[interior]).max(axis=-1)
        scale_A = np.maximum(np.abs(jet.A_dot[interior]).max(axis=(-1, -2)), 1e-2)
        scale_b = np.maximum(np.abs(jet.b_dot[interior]).max(axis=-1), 1e-2)
        deriv_err[interior] = np.maximum(err_A / scale_A, err_b / scale_b)
    failures["derivative"] = (deriv_err >= 1e-6, deriv_err)

    out: list[Violation] = []
    for check, (bad, size) in failures.items():
        i = 0
        while i < n_samples:
            if not bad[i]:
                i += 1
                continue
            j = i
            while j + 1 < n_samples and bad[j + 1]:
                j += 1
            out.append(Violation(check, float(ts[i]), float(ts[j]), j - i + 1, float(size[i : j + 1].max())))
            i = j + 1
    return out
