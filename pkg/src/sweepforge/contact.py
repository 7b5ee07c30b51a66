"""Pointwise sweep quantities on a face prism D x I.

Everything here is vectorized over (u, v, t) arrays of a common shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import FT_DEADBAND
from .errors import FrameDegenerate
from .motion import Trajectory
from .surface import SurfacePatch


def _mv(M, x):
    return np.einsum("...ij,...j->...i", M, x)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def grazing(traj: Trajectory, N, x, t):
    """g = <A(t) N, A'(t) x + b'(t)> for a body point x with outward normal N."""
    jet = traj.pose(t)
    x = np.asarray(x, dtype=float)
    return _dot(_mv(jet.A, np.asarray(N, dtype=float)), _mv(jet.A_dot, x) + jet.b_dot)


@dataclass(frozen=True)
class FunnelJet:
    """Funnel function value and gradient, plus the geometry used to build them."""

    u: np.ndarray
    v: np.ndarray
    t: np.ndarray
    f: np.ndarray
    f_u: np.ndarray
    f_v: np.ndarray
    f_t: np.ndarray

    @property
    def grad(self) -> np.ndarray:
        return np.stack([self.f_u, self.f_v, self.f_t], axis=-1)


@dataclass(frozen=True)
class FunnelPoint:
    face: int
    u: float
    v: float
    t: float
    f: float
    f_u: float
    f_v: float
    f_t: float

    @property
    def grad(self) -> np.ndarray:
        return np.array([self.f_u, self.f_v, self.f_t])


def _broadcast(u, v, t):
    return np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float),
                               np.asarray(t, dtype=float))


def funnel_jet(patch: SurfacePatch, traj: Trajectory, u, v, t, check: bool = True) -> FunnelJet:
    """f(u, v, t) = g(S(u, v), t) and its exact partial derivatives."""
    u, v, t = _broadcast(u, v, t)
    if check:
        patch.check_domain(u, v)
    jet = traj.pose(t) if check else traj._pose(t)
    pj = patch.jet2(u, v)
    S, S_u, S_v = pj.S, pj.S_u, pj.S_v
    N, N_u, N_v = patch.normal_jet(u, v, check=False, jet=pj)
    AN = _mv(jet.A, N)
    vel = _mv(jet.A_dot, S) + jet.b_dot
    f = _dot(AN, vel)
    f_u = _dot(_mv(jet.A, N_u), vel) + _dot(AN, _mv(jet.A_dot, S_u))
    f_v = _dot(_mv(jet.A, N_v), vel) + _dot(AN, _mv(jet.A_dot, S_v))
    f_t = _dot(_mv(jet.A_dot, N), vel) + _dot(AN, _mv(jet.A_ddot, S) + jet.b_ddot)
    return FunnelJet(u, v, t, f, f_u, f_v, f_t)


def funnel_point(face: int, patch: SurfacePatch, traj: Trajectory, u, v, t) -> FunnelPoint:
    j = funnel_jet(patch, traj, u, v, t)
    return FunnelPoint(face, float(u), float(v), float(t), float(j.f), float(j.f_u), float(j.f_v),
                       float(j.f_t))


@dataclass(frozen=True)
class SweepMapJet:
    sigma: np.ndarray
    sigma_u: np.ndarray
    sigma_v: np.ndarray
    sigma_t: np.ndarray


def sweep_map(patch: SurfacePatch, traj: Trajectory, u, v, t, check: bool = True) -> SweepMapJet:
    """sigma = A(t) S(u, v) + b(t) with its three partials."""
    u, v, t = _broadcast(u, v, t)
    if check:
        patch.check_domain(u, v)
    jet = traj.pose(t) if check else traj._pose(t)
    S, S_u, S_v, _, _, _ = patch.jet2(u, v)
    return SweepMapJet(_mv(jet.A, S) + jet.b, _mv(jet.A, S_u), _mv(jet.A, S_v),
                       _mv(jet.A_dot, S) + jet.b_dot)


def outward_normal(patch: SurfacePatch, traj: Trajectory, u, v, t) -> np.ndarray:
    """Normal of the moved body, A(t) N(u, v)."""
    u, v, t = _broadcast(u, v, t)
    N, _, _ = patch.normal_jet(u, v, check=False)
    return _mv(traj.pose(t).A, N)


@dataclass(frozen=True)
class FrameTheta:
    alpha: np.ndarray
    beta: np.ndarray
    n: float
    m: float
    theta: float
    residual: float


def frame_vectors(f_u, f_v, f_t):
    """The tangent frame (alpha, beta) of the funnel in prism coordinates."""
    f_u, f_v, f_t = (np.asarray(a, dtype=float) for a in (f_u, f_v, f_t))
    alpha = np.stack([-f_u * f_t, -f_v * f_t, f_u**2 + f_v**2], axis=-1)
    beta = np.stack([-f_v, f_u, np.zeros_like(f_u)], axis=-1)
    return alpha, beta


def _lsq_nm(sm: SweepMapJet):
    """Least-squares (n, m) with sigma_t = n sigma_u + m sigma_v, and the residual norm."""
    a11 = _dot(sm.sigma_u, sm.sigma_u)
    a12 = _dot(sm.sigma_u, sm.sigma_v)
    a22 = _dot(sm.sigma_v, sm.sigma_v)
    r1 = _dot(sm.sigma_u, sm.sigma_t)
    r2 = _dot(sm.sigma_v, sm.sigma_t)
    det = a11 * a22 - a12 * a12
    n = (a22 * r1 - a12 * r2) / det
    m = (a11 * r2 - a12 * r1) / det
    res = sm.sigma_t - n[..., None] * sm.sigma_u - m[..., None] * sm.sigma_v
    return n, m, np.linalg.norm(res, axis=-1)


def theta_values(patch: SurfacePatch, traj: Trajectory, u, v, t, jet: FunnelJet | None = None):
    """theta = n f_u + m f_v - f_t (vectorized), with the (n, m) residual."""
    if jet is None:
        jet = funnel_jet(patch, traj, u, v, t, check=False)
    sm = sweep_map(patch, traj, u, v, t, check=False)
    n, m, res = _lsq_nm(sm)
    return n * jet.f_u + m * jet.f_v - jet.f_t, res


def frame_and_theta(fp: FunnelPoint, patch: SurfacePatch, traj: Trajectory) -> FrameTheta:
    """Frame (alpha, beta) at a funnel point together with theta.

    Raises FrameDegenerate when (f_u, f_v) vanishes; the frame is then
    undefined although theta is not.
    """
    sm = sweep_map(patch, traj, fp.u, fp.v, fp.t, check=False)
    n, m, res = _lsq_nm(sm)
    theta = float(n * fp.f_u + m * fp.f_v - fp.f_t)
    if fp.f_u**2 + fp.f_v**2 < 1e-14:
        err = FrameDegenerate("(f_u, f_v) vanishes; frame undefined", stage="contact", entity=fp.face)
        err.theta = theta
        raise err
    alpha, beta = frame_vectors(fp.f_u, fp.f_v, fp.f_t)
    return FrameTheta(alpha, beta, float(n), float(m), theta, float(res))


def orientation_sign(fp_or_ft, deadband: float = FT_DEADBAND):
    """sign(-f_t) with a deadband; accepts a FunnelPoint or raw f_t values."""
    f_t = fp_or_ft.f_t if isinstance(fp_or_ft, FunnelPoint) else np.asarray(fp_or_ft, dtype=float)
    s = np.where(np.abs(f_t) < deadband, 0, np.where(f_t < 0, 1, -1))
    return int(s) if np.ndim(s) == 0 else s


ON_COC = "on-coc"
LEFT_CAP = "left-cap-candidate"
RIGHT_CAP = "right-cap-candidate"
INTERIOR = "interior-sweep"


def classify_value(f: float, t: float, interval: tuple[float, float], tol: float = 1e-8) -> str:
    t0, t1 = interval
    if abs(f) <= tol:
        return ON_COC
    if t == t0 and f <= tol:
        return LEFT_CAP
    if t == t1 and f >= -tol:
        return RIGHT_CAP
    return INTERIOR


def classify_point(patch: SurfacePatch, traj: Trajectory, u, v, t, tol: float = 1e-8) -> str:
    """Which part of the sweep boundary the moved point could belong to."""
    f = float(funnel_jet(patch, traj, u, v, t).f)
    return classify_value(f, float(t), traj.interval, tol)


@dataclass
class GeneralPositionReport:
    face: int
    funnel_points: int
    small_gradient: int
    frame_degenerate_points: int
    frame_degenerate_clusters: int
    flat_ft_fraction: float
    ft_zero_points: int
    ft_changes_sign: bool = False  # f_t takes both signs, so an f_t = 0 locus crosses the funnel
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings

    def to_record(self) -> dict:
        return {k: getattr(self, k) for k in (
            "face", "funnel_points", "small_gradient", "frame_degenerate_points",
            "frame_degenerate_clusters", "flat_ft_fraction", "ft_zero_points", "ft_changes_sign", "warnings")}


def general_position_report(patch: SurfacePatch, traj: Trajectory, density: int = 24, face: int = 0,
                            grad_tol: float = 1e-7, ft_tol: float = 1e-6,
                            flat_fraction: float = 0.25) -> GeneralPositionReport:
    """Scan a (u, v, t) grid for violations of the nondegeneracy assumptions.

    Grid nodes next to a sign change of f are projected onto the funnel and
    checked for a vanishing gradient, vanishing (f_u, f_v), and for the share
    of funnel points where f_t is negligible (a curve-like f_t = 0 locus keeps
    this share small).
    """
    from .solve import project_to_funnel

    u0, u1, v0, v1 = patch.domain
    t0, t1 = traj.interval
    U, V, T = np.meshgrid(np.linspace(u0, u1, density), np.linspace(v0, v1, density),
                          np.linspace(t0, t1, density), indexing="ij")
    jet = funnel_jet(patch, traj, U, V, T, check=False)
    f = jet.f
    scale = max(float(np.max(np.abs(jet.grad))), 1e-300)
    near = np.abs(f) <= 1e-12 * scale
    for ax in range(3):
        s = np.signbit(f)
        flip = np.diff(s, axis=ax) != 0
        pad = [(0, 0)] * 3
        lo = pad.copy()
        lo[ax] = (0, 1)
        hi = pad.copy()
        hi[ax] = (1, 0)
        near |= np.pad(flip, lo) | np.pad(flip, hi)
    idx = np.nonzero(near)
    warnings = []
    if idx[0].size == 0:
        return GeneralPositionReport(face, 0, 0, 0, 0, 0.0, 0, False, warnings)
    pts, ok = project_to_funnel(patch, traj, U[idx], V[idx], T[idx])
    pts = pts[ok]
    pj = funnel_jet(patch, traj, pts[:, 0], pts[:, 1], pts[:, 2], check=False)
    gnorm = np.linalg.norm(pj.grad, axis=-1)
    small = int(np.sum(gnorm < grad_tol))
    fuv = np.hypot(pj.f_u, pj.f_v)
    degenerate = fuv < 1e-3 * scale
    clusters = _count_clusters(pts[degenerate], _cell_size(patch, traj, density))
    flat = np.abs(pj.f_t) < ft_tol * scale
    frac = float(np.mean(flat)) if len(flat) else 0.0
    if small:
        warnings.append(f"{small} funnel points with |grad f| < {grad_tol:g}")
    if frac > flat_fraction:
        warnings.append(f"f_t negligible on {100 * frac:.0f}% of funnel samples (not curve-like)")
    if clusters and degenerate.sum() > 0.25 * len(pts):
        warnings.append("(f_u, f_v) vanishes on an extended region")
    mixed = bool(np.any(pj.f_t > ft_tol * scale) and np.any(pj.f_t < -ft_tol * scale))
    return GeneralPositionReport(face, int(len(pts)), small, int(degenerate.sum()), clusters, frac,
                                 int(flat.sum()), mixed, warnings)


def _cell_size(patch, traj, density):
    u0, u1, v0, v1 = patch.domain
    t0, t1 = traj.interval
    return np.array([u1 - u0, v1 - v0, t1 - t0]) / max(density - 1, 1)


def _count_clusters(pts: np.ndarray, cell: np.ndarray) -> int:
    if len(pts) == 0:
        return 0
    from scipy.sparse.csgraph import connected_components
    from scipy.spatial import cKDTree

    scaled = pts / cell
    pairs = cKDTree(scaled).query_pairs(2.0, output_type="ndarray")
    from scipy.sparse import coo_matrix

    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(pts), len(pts))) \
        if len(pairs) else coo_matrix((len(pts), len(pts)))
    return int(connected_components(g, directed=False)[0])
