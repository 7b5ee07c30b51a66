"""Root isolation, implicit-curve continuation and Newton refinement onto the funnel."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .config import SolverConfig
from .contact import FunnelPoint, funnel_jet
from .errors import NoConvergence, StepCollapse
from .motion import Trajectory
from .surface import SurfacePatch

DEFAULT_CONFIG = SolverConfig()


# -- 1-D roots ------------------------------------------------------------------

class Roots(list):
    """Sorted transversal roots; ``tangential`` holds suspected double roots."""

    def __init__(self, roots=(), tangential=()):
        super().__init__(sorted(roots))
        self.tangential = sorted(tangential)


def roots_1d(phi: Callable, interval, config: SolverConfig = DEFAULT_CONFIG,
             tangential_tol: float = 1e-7) -> Roots:
    """All sign-changing roots of phi on [a, b], polished to |phi| <= newton_tol.

    ``phi`` must accept an array argument.  Samples that are exactly zero count
    as roots.  Interior local minima of |phi| below ``tangential_tol`` without a
    sign change are returned separately as tangential roots.
    """
    a, b = map(float, interval)
    n = max(int(config.boundary_scan_density), 2)
    ts = np.linspace(a, b, n + 1)
    ys = np.asarray(phi(ts), dtype=float)
    roots: list[float] = []
    zero = ys == 0.0
    roots.extend(ts[zero].tolist())
    scalar = lambda x: float(phi(np.array([x]))[0])  # noqa: E731
    for i in range(n):
        y0, y1 = ys[i], ys[i + 1]
        if y0 == 0.0 or y1 == 0.0 or (y0 > 0) == (y1 > 0):
            continue
        r = _polish_bracket(scalar, ts[i], ts[i + 1], config)
        roots.append(r)
    tangential = []
    ay = np.abs(ys)
    for i in range(1, n):
        # a plateau of equal samples is not a local minimum
        if ay[i] <= ay[i - 1] and ay[i] <= ay[i + 1] and ay[i] < max(ay[i - 1], ay[i + 1]) and not zero[i]:
            if (ys[i - 1] > 0) != (ys[i + 1] > 0) or ys[i - 1] == 0 or ys[i + 1] == 0:
                continue
            res = minimize_scalar(lambda x: abs(scalar(x)), bounds=(ts[i - 1], ts[i + 1]),
                                  method="bounded", options={"xatol": 1e-12})
            if res.fun < tangential_tol:
                tangential.append(float(res.x))
    roots = _dedupe(roots, 1e-12 * max(1.0, abs(b - a)))
    return Roots(roots, tangential)


def _polish_bracket(fun, lo, hi, config: SolverConfig) -> float:
    try:
        r = brentq(fun, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (RuntimeError, ValueError) as exc:  # pragma: no cover - brentq is guaranteed on a bracket
        raise NoConvergence(f"bracketed root on [{lo}, {hi}] did not converge", stage="solve") from exc
    return float(r)


def _dedupe(vals, tol):
    out: list[float] = []
    for v in sorted(vals):
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


# -- 2-D implicit curve continuation ------------------------------------------------

@dataclass(frozen=True)
class CurveEnd:
    """Where a traced curve stops: on a box side (0: x=x0, 1: x=x1, 2: y=y0, 3: y=y1) or closed."""

    kind: str
    side: int = -1
    value: float = float("nan")


CLOSED = CurveEnd("closed")


@dataclass
class TracedCurve:
    points: np.ndarray
    start: CurveEnd
    end: CurveEnd
    owner: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def closed(self) -> bool:
        return self.start.kind == "closed"

    def arclength(self) -> np.ndarray:
        return np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(self.points, axis=0), axis=1))]


ImplicitFun = Callable[[np.ndarray, np.ndarray], tuple]


class _Box:
    def __init__(self, box):
        self.lo = np.array([box[0], box[2]], dtype=float)
        self.hi = np.array([box[1], box[3]], dtype=float)
        self.L = self.hi - self.lo

    def to_unit(self, p):
        return (np.asarray(p) - self.lo) / self.L

    def from_unit(self, q):
        return self.lo + np.asarray(q) * self.L

    def side_point(self, side, value):
        if side == 0:
            return np.array([self.lo[0], value])
        if side == 1:
            return np.array([self.hi[0], value])
        if side == 2:
            return np.array([value, self.lo[1]])
        return np.array([value, self.hi[1]])

    def side_range(self, side):
        return (self.lo[1], self.hi[1]) if side < 2 else (self.lo[0], self.hi[0])

    @staticmethod
    def inward(side):
        return [np.array([1.0, 0.0]), np.array([-1.0, 0.0]), np.array([0.0, 1.0]),
                np.array([0.0, -1.0])][side]


class ImplicitTracer:
    """Predictor-corrector continuation of F(x, y) = 0 inside a box.

    Steps are controlled in coordinates normalized to the unit square.  The
    corrector moves orthogonally to the predictor tangent.
    """

    def __init__(self, fun: ImplicitFun, box, config: SolverConfig = DEFAULT_CONFIG,
                 owner: tuple = (), boundary: dict | None = None, seed_interior: bool = True):
        self.fun = fun
        self.box = _Box(box)
        self.cfg = config
        self.owner = owner
        self.boundary = boundary or {}
        self.seed_interior = seed_interior

    # evaluation in unit coordinates: value and gradient w.r.t. unit coords
    def _eval(self, q):
        p = self.box.from_unit(q)
        F, Fx, Fy = self.fun(np.atleast_1d(p[..., 0]), np.atleast_1d(p[..., 1]))
        G = np.stack([np.asarray(Fx) * self.box.L[0], np.asarray(Fy) * self.box.L[1]], axis=-1)
        return np.asarray(F, dtype=float), G

    def _eval1(self, q):
        F, G = self._eval(np.asarray(q, dtype=float)[None, :])
        return float(F[0]), G[0]

    # -- boundary crossings
    def _side_fun(self, side):
        def phi(vals):
            vals = np.atleast_1d(np.asarray(vals, dtype=float))
            if side < 2:
                x = np.full_like(vals, self.box.lo[0] if side == 0 else self.box.hi[0])
                return np.asarray(self.fun(x, vals)[0], dtype=float)
            y = np.full_like(vals, self.box.lo[1] if side == 2 else self.box.hi[1])
            return np.asarray(self.fun(vals, y)[0], dtype=float)
        return phi

    def boundary_crossings(self) -> list[tuple[int, float]]:
        out = []
        for side in range(4):
            if side in self.boundary:
                vals = self.boundary[side]
            else:
                vals = roots_1d(self._side_fun(side), self.box.side_range(side), self.cfg)
            out.extend((side, float(v)) for v in vals)
        # a crossing at a box corner appears on two sides; keep the first
        uniq: list[tuple[int, float]] = []
        for side, val in out:
            q = self.box.to_unit(self.box.side_point(side, val))
            if all(np.linalg.norm(q - self.box.to_unit(self.box.side_point(s2, v2))) > 1e-9
                   for s2, v2 in uniq):
                uniq.append((side, val))
        return uniq

    # -- marching
    def _tangent(self, G, ref):
        tau = np.array([-G[1], G[0]])
        nt = np.linalg.norm(tau)
        if nt == 0:
            raise StepCollapse("vanishing gradient while tracing", stage="solve", entity=self.owner)
        tau /= nt
        return tau if np.dot(tau, ref) >= 0 else -tau

    def _correct(self, y, nrm):
        tol = self.cfg.newton_tol
        for it in range(8):
            F, G = self._eval1(y)
            if abs(F) <= tol:
                return y, it, True
            d = np.dot(G, nrm)
            if d == 0:
                return y, it, False
            y = y - (F / d) * nrm
        F, _ = self._eval1(y)
        return y, 8, abs(F) <= tol

    def _polish_on_side(self, side, guess, width):
        """Root of F restricted to a side, near ``guess`` (unit coordinate along the side)."""
        phi = self._side_fun(side)
        lo_s, hi_s = self.box.side_range(side)
        Ls = hi_s - lo_s
        g = lo_s + guess * Ls
        w = max(width * Ls, 1e-9 * Ls)
        for _ in range(6):
            a, b = max(lo_s, g - w), min(hi_s, g + w)
            fa, fb = phi(a)[0], phi(b)[0]
            if fa == 0:
                return a
            if fb == 0:
                return b
            if (fa > 0) != (fb > 0):
                return float(brentq(lambda x: phi(x)[0], a, b, xtol=1e-15,
                                    rtol=4 * np.finfo(float).eps))
            w *= 2
        return None

    def _exit(self, x, y, h):
        """Locate where the curve leaves the unit square between x (inside) and y (outside)."""
        d = y - x
        best = None
        for side in range(4):
            axis = 0 if side < 2 else 1
            bound = 0.0 if side in (0, 2) else 1.0
            if d[axis] == 0:
                continue
            lam = (bound - x[axis]) / d[axis]
            if 0 <= lam <= 1 and (best is None or lam < best[0]):
                best = (lam, side)
        if best is None:
            return None
        lam, side = best
        pt = x + lam * d
        along = pt[1] if side < 2 else pt[0]
        val = self._polish_on_side(side, float(np.clip(along, 0, 1)), 2 * h)
        return None if val is None else (side, val)

    def march(self, q0, tau0, closing: bool, max_len: float = 50.0):
        cfg = self.cfg
        h = cfg.trace_step_init
        x = np.asarray(q0, dtype=float)
        F, G = self._eval1(x)
        tau = self._tangent(G, tau0)
        pts = [x]
        travelled = 0.0
        easy = 0
        while True:
            if travelled > max_len:
                raise StepCollapse("curve length exceeded bound", stage="solve", entity=self.owner)
            nrm = G / np.linalg.norm(G)
            pred = x + h * tau
            y, its, ok = self._correct(pred, nrm)
            if ok:
                Fy, Gy = self._eval1(y)
                tau_y = self._tangent(Gy, tau)
                bend = np.arccos(np.clip(np.dot(tau_y, tau), -1, 1))
                ok = bend < 0.15 and np.linalg.norm(y - pred) < 0.5 * h
            if not ok:
                h *= 0.5
                easy = 0
                if h < cfg.trace_step_min:
                    p = self.box.from_unit(x)
                    raise StepCollapse(f"step collapsed near {p.tolist()}", stage="solve", entity=self.owner)
                continue
            if np.any(y < 0) or np.any(y > 1):
                ex = self._exit(x, y, h)
                if ex is not None:
                    side, val = ex
                    pts.append(self.box.to_unit(self.box.side_point(side, val)))
                    return np.array(pts), CurveEnd("side", side, val)
                # the curve grazes the boundary; shorten the step
                h *= 0.5
                if h < cfg.trace_step_min:
                    raise StepCollapse("could not resolve boundary exit", stage="solve", entity=self.owner)
                continue
            if closing and travelled > 3 * cfg.trace_step_max:
                start = pts[0]
                seg = y - x
                lam = np.clip(np.dot(start - x, seg) / max(np.dot(seg, seg), 1e-300), 0, 1)
                if np.linalg.norm(x + lam * seg - start) < 0.1 * h + 1e-9 and lam > 0:
                    pts.append(start.copy())
                    return np.array(pts), CLOSED
            travelled += np.linalg.norm(y - x)
            pts.append(y)
            x, G, tau = y, Gy, tau_y
            easy = easy + 1 if its <= 2 else 0
            if easy >= 2:
                h = min(2 * h, cfg.trace_step_max)
                easy = 0

    def _curve(self, pts_unit, start, end, extra=None):
        return TracedCurve(self.box.from_unit(pts_unit), start, end, self.owner, extra or {})

    def trace_all(self) -> list[TracedCurve]:
        crossings = self.boundary_crossings()
        used = [False] * len(crossings)
        curves: list[TracedCurve] = []
        unit_cross = [self.box.to_unit(self.box.side_point(s, v)) for s, v in crossings]

        def match(side, val):
            q = self.box.to_unit(self.box.side_point(side, val))
            best, bd = None, 1e-6
            for k, uq in enumerate(unit_cross):
                d = np.linalg.norm(uq - q)
                if d < bd:
                    best, bd = k, d
            return best

        for k, (side, val) in enumerate(crossings):
            if used[k]:
                continue
            used[k] = True
            q0 = unit_cross[k]
            _, G = self._eval1(q0)
            pts, end = self.march(q0, self._inward_tangent(G, side), closing=False)
            j = match(end.side, end.value)
            if j is not None:
                if used[j] and j != k:
                    raise StepCollapse("traced curve ended on an already used crossing",
                                       stage="solve", entity=self.owner)
                used[j] = True
                end = CurveEnd("side", crossings[j][0], crossings[j][1])
                pts[-1] = unit_cross[j]
            curves.append(self._curve(pts, CurveEnd("side", side, val), end))
        if self.seed_interior:
            curves.extend(self._closed_components(curves))
        return curves

    def _inward_tangent(self, G, side):
        inward = self.box.inward(side)
        tau = np.array([-G[1], G[0]])
        return tau if np.dot(tau, inward) >= 0 else -tau

    def _closed_components(self, curves) -> list[TracedCurve]:
        n = int(self.cfg.grid_seed_density)
        g = np.linspace(0.0, 1.0, n + 1)
        Q = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
        F, _ = self._eval(Q.reshape(-1, 2))
        F = F.reshape(n + 1, n + 1)
        marked = np.zeros((n, n), dtype=bool)
        for c in curves:
            self._rasterize(self.box.to_unit(c.points), marked, n)
        found = []
        neg = F < 0
        for axis in (0, 1):
            flips = np.argwhere(np.diff(neg, axis=axis) != 0)
            for i, j in flips:
                cells = _adjacent_cells(i, j, axis, n)
                if any(marked[c] for c in cells):
                    continue
                a = Q[i, j]
                b = Q[i + 1, j] if axis == 0 else Q[i, j + 1]
                fa, fb = F[i, j], (F[i + 1, j] if axis == 0 else F[i, j + 1])
                seed = a + (b - a) * fa / (fa - fb)
                _, G = self._eval1(seed)
                seed, _, ok = self._correct(seed, G / np.linalg.norm(G))
                if not ok or np.any(seed < 0) or np.any(seed > 1):
                    continue
                _, G = self._eval1(seed)
                tau0 = np.array([-G[1], G[0]])
                pts, end = self.march(seed, tau0, closing=True)
                if end.kind == "closed":
                    curve = self._curve(pts, CLOSED, CLOSED)
                else:
                    # an open component the side scan missed: trace the other way too
                    back, start = self.march(seed, -tau0, closing=False)
                    pts = np.vstack([back[::-1], pts[1:]])
                    curve = self._curve(pts, start, end)
                self._rasterize(pts, marked, n)
                found.append(curve)
        return found

    @staticmethod
    def _rasterize(pts_unit, marked, n):
        P = np.asarray(pts_unit)
        if len(P) == 1:
            dense = P
        else:
            seglen = np.linalg.norm(np.diff(P, axis=0), axis=1)
            k = np.maximum(1, np.ceil(seglen * n * 4).astype(int))
            dense = np.concatenate([P[i] + np.linspace(0, 1, k[i], endpoint=False)[:, None] * (P[i + 1] - P[i])
                                    for i in range(len(P) - 1)] + [P[-1:]])
        idx = np.floor(dense * n).astype(int)
        # dilate by one cell: the chord polyline may cut a cell corner the curve misses
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                marked[np.clip(idx[:, 0] + di, 0, n - 1), np.clip(idx[:, 1] + dj, 0, n - 1)] = True


def _adjacent_cells(i, j, axis, n):
    """Cells sharing the grid edge from node (i, j) along ``axis``."""
    if axis == 0:
        cand = [(i, j - 1), (i, j)]
    else:
        cand = [(i - 1, j), (i, j)]
    return [(a, b) for a, b in cand if 0 <= a < n and 0 <= b < n]


def trace_implicit(fun: ImplicitFun, box, config: SolverConfig = DEFAULT_CONFIG, owner: tuple = (),
                   boundary: dict | None = None, seed_interior: bool = True) -> list[TracedCurve]:
    return ImplicitTracer(fun, box, config, owner, boundary, seed_interior).trace_all()


# -- funnel-specific tracing ------------------------------------------------------------

def edge_funnel_function(patch: SurfacePatch, pcurve, traj: Trajectory) -> ImplicitFun:
    """f restricted to a co-edge: (s, t) -> f(delta(s), t) with its gradient."""

    def fun(s, t):
        uv = pcurve.point(s)
        duv = pcurve.derivative(s)
        j = funnel_jet(patch, traj, uv[..., 0], uv[..., 1], t, check=False)
        return j.f, j.f_u * duv[..., 0] + j.f_v * duv[..., 1], j.f_t

    return fun


def trace_edge_funnel(solid, edge: int, traj: Trajectory, config: SolverConfig = DEFAULT_CONFIG,
                      vertex_times: dict | None = None) -> list[TracedCurve]:
    """All components of the edge funnel in (s, t), s the edge parameter.

    ``vertex_times`` optionally maps side 0 (s = s0) and side 1 (s = s1) to the
    already computed vertex-lift times so both computations agree exactly.
    """
    patch, pcurve = edge_carrier(solid, edge)
    s0, s1 = pcurve.interval
    t0, t1 = traj.interval
    fun = edge_funnel_function(patch, pcurve, traj)
    curves = trace_implicit(fun, (s0, s1, t0, t1), config, owner=("edge", edge),
                            boundary=vertex_times)
    for c in curves:
        _polish_curve(fun, c, config)
    return curves


def edge_carrier(solid, edge: int):
    """(patch, pcurve) of the co-edge of ``edge`` whose pcurve runs with the edge parameter."""
    for c in solid.coedges:
        if c.edge == edge and c.pcurve is not None:
            face = solid.faces[solid.loops[c.loop].face]
            return face.geometry, c.pcurve
    raise KeyError(f"edge {edge} has no parametric co-edge")


def trace_p_coc(patch: SurfacePatch, traj: Trajectory, t: float, config: SolverConfig = DEFAULT_CONFIG,
                seeds: dict | None = None, face: int = -1, seed_interior: bool = True) -> list[TracedCurve]:
    """Components of the fixed-time slice f(., ., t) = 0 in the face domain."""
    traj._check_time(t)

    def fun(u, v):
        j = funnel_jet(patch, traj, u, v, np.full_like(u, t), check=False)
        return j.f, j.f_u, j.f_v

    curves = trace_implicit(fun, patch.domain, config, owner=("face", face, float(t)), boundary=seeds,
                            seed_interior=seed_interior)
    for c in curves:
        c.extra["t"] = float(t)
        _polish_curve(fun, c, config)
    return curves


def _polish_curve(fun, curve: TracedCurve, config: SolverConfig):
    """Extra Newton sweep on interior samples so every sample meets the residual bound."""
    P = curve.points
    inner = slice(1, len(P) - 1) if not curve.closed else slice(0, len(P) - 1)
    X = P[inner].copy()
    if len(X) == 0:
        return
    for _ in range(4):
        F, Fx, Fy = fun(X[:, 0], X[:, 1])
        g2 = Fx * Fx + Fy * Fy
        X[:, 0] -= F * Fx / g2
        X[:, 1] -= F * Fy / g2
    P[inner] = X
    if curve.closed:
        P[-1] = P[0]


# -- Newton refinement onto the funnel ---------------------------------------------------

def project_to_funnel(patch: SurfacePatch, traj: Trajectory, u, v, t, fixed_t: bool = False,
                      tol: float = 1e-12, max_iter: int = 30, basin: float | None = None):
    """Vectorized minimum-norm Newton projection; returns (points (n, 3), converged mask)."""
    X = np.stack(np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float), np.asarray(t, float)),
                 axis=-1).reshape(-1, 3).copy()
    start = X.copy()
    u0, u1, v0, v1 = patch.domain
    t0, t1 = traj.interval
    lo = np.array([u0, v0, t0])
    hi = np.array([u1, v1, t1])
    span = hi - lo
    slack = 1e-9 * span
    done = np.zeros(len(X), dtype=bool)
    bad = np.any(X < lo - slack, axis=1) | np.any(X > hi + slack, axis=1)
    for _ in range(max_iter + 1):
        act = ~done & ~bad
        if not act.any():
            break
        j = funnel_jet(patch, traj, X[act, 0], X[act, 1], X[act, 2], check=False)
        scale = np.maximum(1.0, np.linalg.norm(j.grad, axis=-1))
        conv = np.abs(j.f) <= tol * scale
        ia = np.nonzero(act)[0]
        done[ia[conv]] = True
        g = j.grad.copy()
        if fixed_t:
            g[:, 2] = 0.0
        g2 = np.einsum("ij,ij->i", g, g)
        step = -(j.f / np.where(g2 > 0, g2, np.inf))[:, None] * g
        mv = ~conv
        X[ia[mv]] += step[mv]
        out = np.any(X[ia] < lo - slack, axis=1) | np.any(X[ia] > hi + slack, axis=1)
        bad[ia[out & mv]] = True
        if basin is not None:
            far = np.linalg.norm((X[ia] - start[ia]) / span, axis=1) > basin
            bad[ia[far & mv]] = True
    X = np.clip(X, lo, hi)
    return X, done & ~bad


def refine_onto_funnel(patch: SurfacePatch, traj: Trajectory, approx, face: int = -1,
                       fixed_t: bool = False, config: SolverConfig = DEFAULT_CONFIG,
                       tol: float = 1e-12, basin: float = 0.05) -> FunnelPoint:
    """Polish one (u, v, t) onto f = 0 by Newton along the gradient.

    ``basin`` bounds the total normalized displacement; starting points farther
    from the funnel than that are rejected as outside the basin.
    """
    u, v, t = map(float, approx)
    j = funnel_jet(patch, traj, u, v, t)
    if abs(float(j.f)) <= tol * max(1.0, float(np.linalg.norm(j.grad))):
        return FunnelPoint(face, u, v, t, float(j.f), float(j.f_u), float(j.f_v), float(j.f_t))
    X, ok = project_to_funnel(patch, traj, u, v, t, fixed_t=fixed_t, tol=tol,
                              max_iter=config.max_newton_iters, basin=basin)
    if not ok[0]:
        raise NoConvergence(f"Newton refinement from {(u, v, t)} failed", stage="solve", entity=face)
    u, v, t = X[0]
    j = funnel_jet(patch, traj, u, v, t, check=False)
    return FunnelPoint(face, float(u), float(v), float(t), float(j.f), float(j.f_u), float(j.f_v),
                       float(j.f_t))
