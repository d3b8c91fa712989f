"""Parametric C^2 submanifolds given by charts with analytic derivatives.

A chart maps parameters ``u`` (shape ``(N, m)``) to points ``(N, D)``, with
Jacobians ``(N, D, m)`` and second derivatives ``(N, D, m, m)``.  A
:class:`Scenario` is a list of charts covering a compact submanifold plus
metadata (reach, diameter).  This module also holds the differential
geometry used downstream: tangent/normal frames, the shape operator in a
normal direction, osculation tests, the differential of the projection and
local (Newton) projections.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

NEWTON_MAX_ITER = 60
NEWTON_TOL = 1e-12
OSC_TOL = 1e-6
MARGIN_TOL = 1e-9
IMMERSION_TOL = 1e-8


class ProjectionError(RuntimeError):
    pass


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    """One chart of a parametric submanifold.

    ``lo``/``hi`` bound the parameter box; periodic axes wrap, the others
    are clipped.  ``sample_lo``/``sample_hi`` delimit the part of the box
    this chart is responsible for when the scenario is discretised, so
    overlapping charts do not produce duplicate samples.
    """

    m: int
    D: int
    lo: np.ndarray
    hi: np.ndarray
    periodic: tuple
    f: Callable
    df: Callable
    d2f: Callable
    sample_lo: np.ndarray | None = None
    sample_hi: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float).reshape(self.m))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float).reshape(self.m))
        for name, default in (("sample_lo", self.lo), ("sample_hi", self.hi)):
            val = getattr(self, name)
            object.__setattr__(self, name, np.asarray(default if val is None else val, dtype=float).reshape(self.m))

    def eval(self, U):
        return self.f(np.atleast_2d(U))

    def jac(self, U):
        return self.df(np.atleast_2d(U))

    def hess(self, U):
        return self.d2f(np.atleast_2d(U))

    def normalize(self, U) -> np.ndarray:
        U = np.array(U, dtype=float, copy=True)
        for a in range(self.m):
            span = self.hi[a] - self.lo[a]
            if self.periodic[a]:
                U[..., a] = self.lo[a] + np.mod(U[..., a] - self.lo[a], span)
            else:
                U[..., a] = np.clip(U[..., a], self.lo[a], self.hi[a])
        return U

    def grid(self, n: int, sample: bool = True) -> np.ndarray:
        """Uniform parameter grid with about ``n`` points (``n`` per axis for curves)."""
        lo, hi = (self.sample_lo, self.sample_hi) if sample else (self.lo, self.hi)
        k = n if self.m == 1 else max(2, int(np.ceil(np.sqrt(n))))
        axes = []
        for a in range(self.m):
            if self.periodic[a] and np.isclose(hi[a] - lo[a], self.hi[a] - self.lo[a]):
                axes.append(np.linspace(lo[a], hi[a], k, endpoint=False))
            else:
                axes.append(np.linspace(lo[a], hi[a], k))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def grid_shape(self, n: int) -> tuple:
        k = n if self.m == 1 else max(2, int(np.ceil(np.sqrt(n))))
        return (k,) * self.m


@dataclass
class Scenario:
    name: str
    charts: list
    m: int
    D: int
    reach: float | None = None
    diameter: float | None = None
    metadata: dict = field(default_factory=dict)
    perturb_family: Callable | None = None

    def __post_init__(self):
        if self.diameter is None:
            pts = self.discretize(512)[0]
            self.diameter = _diameter(pts)

    def discretize(self, n_per_chart: int = 2048):
        """Sample every chart on its own sample box.

        Returns ``(points, chart_index, params)``.
        """
        pts, idx, par = [], [], []
        for c, chart in enumerate(self.charts):
            U = chart.grid(n_per_chart)
            pts.append(chart.eval(U))
            idx.append(np.full(len(U), c))
            par.append(U)
        pts, idx = np.vstack(pts), np.concatenate(idx)
        par = np.vstack(par) if self.m > 0 else np.zeros((len(pts), 0))
        # charts meeting along shared sample boundaries produce repeated points
        scale = 1.0 + np.abs(pts).max()
        key = np.round(pts / (1e-10 * scale)).astype(np.int64)
        _, first = np.unique(key, axis=0, return_index=True)
        first = np.sort(first)
        return pts[first], idx[first], par[first]

    def point(self, chart: int, u) -> np.ndarray:
        return self.charts[chart].eval(np.atleast_2d(np.asarray(u, dtype=float).reshape(-1)))[0]

    def perturbed(self, amplitude: float) -> "Scenario":
        """The scenario's natural perturbation of the given size."""
        if self.perturb_family is not None:
            return self.perturb_family(amplitude)
        from .scenarios import generic_perturbation

        return generic_perturbation(self, amplitude)


def _diameter(pts: np.ndarray) -> float:
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = pts[ConvexHull(pts).vertices]
    except (QhullError, ValueError):
        hull = pts
    if len(hull) > 4000:
        hull = hull[:: len(hull) // 4000 + 1]
    d = np.sqrt(((hull[:, None, :] - hull[None, :, :]) ** 2).sum(-1))
    return float(d.max())


# -- batched Newton projection ------------------------------------------------

def newton_project(chart: Chart, U0, Z, max_iter: int = NEWTON_MAX_ITER, tol: float = NEWTON_TOL):
    """Minimise ``0.5 * |f(u) - z|^2`` for many (seed, query) pairs at once.

    ``U0`` is ``(N, m)``, ``Z`` is ``(N, D)``.  Steps are full Newton steps
    when the Hessian is positive definite, Gauss-Newton steps otherwise,
    halved until the objective decreases.  Returns
    ``(U, points, residual, converged)`` where ``residual`` is the norm of
    the tangential component of ``f(u) - z``.
    """
    U = chart.normalize(np.asarray(U0, dtype=float).reshape(-1, chart.m))
    Z = np.asarray(Z, dtype=float).reshape(-1, chart.D)
    N, m = U.shape
    active = np.ones(N, dtype=bool)
    resid = np.full(N, np.inf)
    F = chart.eval(U)
    for _ in range(max_iter):
        if not active.any():
            break
        ia = np.flatnonzero(active)
        Ua, Za = U[ia], Z[ia]
        Fa = F[ia]
        J = chart.jac(Ua)
        H2 = chart.hess(Ua)
        r = Fa - Za
        g = np.einsum("ndk,nd->nk", J, r)
        jn = np.linalg.norm(J, axis=1).max(axis=1)
        resid[ia] = np.linalg.norm(g, axis=1) / jn
        scale = 1.0 + np.linalg.norm(r, axis=1)
        done = resid[ia] <= tol * scale
        active[ia[done]] = False
        keep = ~done
        if not keep.any():
            break
        ia, Ua, Za, J, H2, r, g = ia[keep], Ua[keep], Za[keep], J[keep], H2[keep], r[keep], g[keep]
        JtJ = np.einsum("ndk,ndl->nkl", J, J)
        H = JtJ + np.einsum("nd,ndkl->nkl", r, H2)
        eig_min = np.linalg.eigvalsh(H)[:, 0]
        jscale = np.einsum("nkk->n", JtJ) / m
        use_newton = eig_min > 1e-10 * jscale
        Hs = np.where(use_newton[:, None, None], H, JtJ + 1e-12 * jscale[:, None, None] * np.eye(m))
        step = -np.linalg.solve(Hs, g[..., None])[..., 0]
        phi0 = 0.5 * (r**2).sum(1)
        gnorm = np.linalg.norm(g, axis=1)
        t = np.ones(len(ia))
        accepted = np.zeros(len(ia), dtype=bool)
        Unew = Ua.copy()
        Fnew = F[ia].copy()
        for _h in range(40):
            pending = ~accepted
            if not pending.any():
                break
            cand = chart.normalize(Ua[pending] + t[pending, None] * step[pending])
            Fc = chart.eval(cand)
            rc = Fc - Za[pending]
            phic = 0.5 * (rc**2).sum(1)
            ok = phic <= phi0[pending] * (1 + 1e-15) + 1e-300
            # near the solution phi no longer resolves the decrease; fall back on the gradient
            gc = np.linalg.norm(np.einsum("ndk,nd->nk", chart.jac(cand), rc), axis=1)
            ok |= (gc < 0.5 * gnorm[pending]) & (phic <= phi0[pending] * (1 + 1e-10) + 1e-300)
            pidx = np.flatnonzero(pending)
            Unew[pidx[ok]] = cand[ok]
            Fnew[pidx[ok]] = Fc[ok]
            accepted[pidx[ok]] = True
            t[pidx[~ok]] *= 0.5
        stalled = ~accepted
        U[ia] = Unew
        F[ia] = Fnew
        if stalled.any():
            # no descent possible at machine precision; evaluate and stop
            active[ia[stalled]] = False
    # final residuals
    J = chart.jac(U)
    r = F - Z
    g = np.einsum("ndk,nd->nk", J, r)
    resid = np.linalg.norm(g, axis=1) / np.linalg.norm(J, axis=1).max(axis=1)
    scale = 1.0 + np.linalg.norm(r, axis=1)
    converged = resid <= 1e3 * tol * scale
    return U, F, resid, converged


# -- frames and curvature -------------------------------------------------------

def tangent_normal_frames(scenario: Scenario, chart_index: int, u):
    """Orthonormal tangent basis (columns, ``D x m``) and normal basis (``D x (D-m)``)."""
    chart = scenario.charts[chart_index]
    J = chart.jac(np.atleast_2d(np.asarray(u, float).reshape(-1)))[0]
    sv = np.linalg.svd(J, compute_uv=False)
    if sv.min() <= IMMERSION_TOL * max(1.0, sv.max()):
        raise GeometryError("not an immersion here")
    Q, R = np.linalg.qr(J, mode="complete")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    Q[:, : chart.m] *= signs
    return Q[:, : chart.m], Q[:, chart.m :]


@dataclass(frozen=True)
class ShapeOperatorEval:
    base: np.ndarray
    normal_dir: np.ndarray
    matrix: np.ndarray
    lambda_max: float
    tangent: np.ndarray


def shape_operator(scenario: Scenario, chart_index: int, u, eta) -> ShapeOperatorEval:
    """Shape operator in direction ``eta`` as a matrix in an orthonormal tangent basis.

    Entries are ``<eta, d2f(v_a, v_b)>`` where ``df(v_a)`` is the a-th tangent
    basis vector.  ``eta`` is used as given (not normalised).
    """
    chart = scenario.charts[chart_index]
    u = np.atleast_2d(np.asarray(u, float).reshape(-1))
    eta = np.asarray(eta, dtype=float)
    J = chart.jac(u)[0]
    H = chart.hess(u)[0]
    T, _ = tangent_normal_frames(scenario, chart_index, u[0])
    if np.linalg.norm(T.T @ eta) > 1e-8 * max(1.0, np.linalg.norm(eta)):
        raise GeometryError("eta is not normal to the manifold")
    V = np.linalg.pinv(J) @ T  # parameter preimages of the tangent basis
    second = np.einsum("d,dij->ij", eta, H)
    W = V.T @ second @ V
    W = 0.5 * (W + W.T)
    return ShapeOperatorEval(chart.eval(u)[0], eta, W, float(np.linalg.eigvalsh(W).max()), T)


def max_normal_curvature(scenario: Scenario, chart_index: int, u) -> float:
    """Largest |principal curvature| over unit normal directions (sampled for codim > 1)."""
    T, N = tangent_normal_frames(scenario, chart_index, u)
    k = N.shape[1]
    if k == 1:
        dirs = [N[:, 0]]
    else:
        ang = np.linspace(0, np.pi, 32, endpoint=False)
        dirs = [N[:, 0] * np.cos(a) + N[:, 1] * np.sin(a) for a in ang]
    best = 0.0
    for d in dirs:
        W = shape_operator(scenario, chart_index, u, d).matrix
        best = max(best, float(np.abs(np.linalg.eigvalsh(W)).max()))
    return best


# -- locating points and local projections ---------------------------------------

@dataclass(frozen=True)
class LocalProjection:
    point: np.ndarray
    chart: int
    u: np.ndarray
    residual: float


def _interior_margin(chart: Chart, u: np.ndarray) -> float:
    margins = []
    for a in range(chart.m):
        if chart.periodic[a]:
            margins.append(np.inf)
        else:
            span = chart.hi[a] - chart.lo[a]
            margins.append(min(u[a] - chart.lo[a], chart.hi[a] - u[a]) / span)
    return float(min(margins))


def local_projection(scenario: Scenario, seed, z, tol: float = NEWTON_TOL) -> LocalProjection:
    """Refine a seed ``(chart_index, u)`` into the local projection of ``z``.

    Raises :class:`ProjectionError` when Newton does not converge.
    """
    c, u0 = seed
    chart = scenario.charts[c]
    U, F, res, conv = newton_project(chart, np.atleast_2d(np.asarray(u0, float).reshape(-1)), np.atleast_2d(z), tol=tol)
    if not conv[0]:
        raise ProjectionError(f"local projection diverged from seed chart={c} u={u0}: residual {res[0]:.3e}")
    return LocalProjection(F[0], c, U[0], float(res[0]))


def _is_seed(x) -> bool:
    """``(chart_index, u)`` pairs have an integer index and an array ``u``; plain tuples are points."""
    return (isinstance(x, tuple) and len(x) == 2 and isinstance(x[0], (int, np.integer))
            and not isinstance(x[0], bool) and isinstance(x[1], np.ndarray))


def _seed(scenario: Scenario, x):
    return x if _is_seed(x) else locate(scenario, x)


def locate(scenario: Scenario, x, n: int = 256):
    """Chart coordinates ``(chart_index, u)`` of an (approximately) on-manifold point ``x``.

    The chart where the point sits deepest inside the parameter box wins.
    """
    x = np.asarray(x, dtype=float)
    best = None
    for c, chart in enumerate(scenario.charts):
        U = chart.grid(n, sample=False)
        d = np.linalg.norm(chart.eval(U) - x, axis=1)
        i = int(np.argmin(d))
        Ur, F, res, conv = newton_project(chart, U[i : i + 1], x[None])
        dist = float(np.linalg.norm(F[0] - x))
        if dist > 1e-6 * (1.0 + np.linalg.norm(x)):
            continue
        margin = _interior_margin(chart, Ur[0])
        if best is None or margin > best[0]:
            best = (margin, c, Ur[0])
    if best is None:
        raise GeometryError(f"point {x} is not on scenario {scenario.name}")
    return best[1], best[2]


@dataclass(frozen=True)
class OsculationResult:
    osculating: bool
    lambda_max: float
    raw_alpha: float
    alpha: float


def osculation_check(scenario: Scenario, x, z, osc_tol: float = OSC_TOL, margin_tol: float = MARGIN_TOL,
                     verify: bool = True) -> OsculationResult:
    """Does the sphere S(z, |z - x|) osculate the manifold at the projection x?

    ``x`` is an ambient point or a ``(chart_index, u)`` pair with ``u`` an array.
    """
    c, u = _seed(scenario, x)
    xp = scenario.point(c, u)
    z = np.asarray(z, dtype=float)
    if verify:
        from .distfield import project

        ps = project(scenario, z)
        if np.linalg.norm(z - xp) > ps.distance + ps.tie_tol * (1.0 + ps.distance):
            raise GeometryError("x is not a projection of z")
    W = shape_operator(scenario, c, u, z - xp)
    raw = 1.0 - W.lambda_max
    osc = W.lambda_max >= 1.0 - osc_tol
    return OsculationResult(bool(osc), W.lambda_max, raw, raw - margin_tol if not osc else 0.0)


def projection_differential(scenario: Scenario, z, x) -> np.ndarray:
    """Ambient ``D x D`` matrix of the differential at ``z`` of the local projection onto ``x``'s sheet.

    Equals ``(I - W)^{-1}`` on the tangent space composed with the orthogonal
    projection onto it, where ``W`` is the shape operator in direction
    ``z - x``.
    """
    c, u = _seed(scenario, x)
    xp = scenario.point(c, u)
    W = shape_operator(scenario, c, u, np.asarray(z, float) - xp)
    if 1.0 - W.lambda_max < 1e-6:
        raise GeometryError("osculating or nearly osculating")
    T = W.tangent
    inv = np.linalg.inv(np.eye(len(W.matrix)) - W.matrix)
    return T @ inv @ T.T


def projection_differential_fd(scenario: Scenario, z, x, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the local projection (independent check)."""
    c, u = _seed(scenario, x)
    z = np.asarray(z, float)
    D = len(z)
    out = np.zeros((D, D))
    for k in range(D):
        e = np.zeros(D)
        e[k] = step
        plus = local_projection(scenario, (c, u), z + e).point
        minus = local_projection(scenario, (c, u), z - e).point
        out[:, k] = (plus - minus) / (2 * step)
    return out
