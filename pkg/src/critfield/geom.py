"""Low-dimensional geometric primitives.

Smallest enclosing balls, circumcenters in affine hulls, barycentric
membership tests, Gram-determinant simplex volumes and greedy packings.
Everything works on plain ``(n, D)`` float arrays with ``D`` in {2, 3}
(most routines are dimension agnostic).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

# Gram determinants are normalised by the product of squared edge lengths
# before comparison, so the threshold is scale free.
GRAM_TOL = 1e-10
DIST_RTOL = 1e-8
INTERIOR_TOL = 1e-6


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def contains(self, p, rtol=1e-12) -> bool:
        return float(np.linalg.norm(np.asarray(p) - self.center)) <= self.radius + rtol * (1.0 + self.radius)


@dataclass(frozen=True)
class Barycentric:
    """Result of a successful convex-hull membership test."""

    weights: np.ndarray
    relative_interior: bool
    residual: float


def as_points(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("empty point set")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite coordinates")
    return pts


def _normalised_gram_det(edges: np.ndarray) -> float:
    if len(edges) == 0:
        return 1.0
    gram = edges @ edges.T
    scale = np.prod(np.diag(gram))
    if scale <= 0.0:
        return 0.0
    return float(np.linalg.det(gram) / scale)


def affinely_independent(vertices, tol: float = GRAM_TOL) -> bool:
    v = as_points(vertices)
    if len(v) > v.shape[1] + 1:
        return False
    return _normalised_gram_det(v[1:] - v[0]) > tol


def circumcenter_in_affine_hull(vertices, tol: float = GRAM_TOL):
    """Center and radius of the sphere through ``vertices`` centred in their affine hull.

    Returns ``None`` when the vertices are affinely dependent.
    """
    v = as_points(vertices)
    if len(v) == 1:
        return v[0].copy(), 0.0
    if not affinely_independent(v, tol):
        return None
    edges = v[1:] - v[0]
    gram = edges @ edges.T
    coef = np.linalg.solve(gram, 0.5 * np.diag(gram))
    center = v[0] + coef @ edges
    return center, float(np.linalg.norm(center - v[0]))


def batched_circumcenters(simplices: np.ndarray, tol: float = GRAM_TOL):
    """Vectorised :func:`circumcenter_in_affine_hull` over ``(B, k, D)`` vertex arrays.

    Returns ``(centers, radii, ok)``; rows with ``ok == False`` are degenerate.
    """
    simplices = np.asarray(simplices, dtype=float)
    B, k, D = simplices.shape
    if k == 1:
        return simplices[:, 0].copy(), np.zeros(B), np.ones(B, dtype=bool)
    edges = simplices[:, 1:] - simplices[:, :1]
    gram = np.einsum("bid,bjd->bij", edges, edges)
    diag = np.einsum("bii->bi", gram)
    scale = np.prod(diag, axis=1)
    det = np.linalg.det(gram)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (scale > 0) & (det / np.where(scale > 0, scale, 1.0) > tol)
    safe = np.where(ok[:, None, None], gram, np.eye(k - 1))
    coef = np.linalg.solve(safe, 0.5 * diag[..., None])[..., 0]
    centers = simplices[:, 0] + np.einsum("bi,bid->bd", coef, edges)
    radii = np.linalg.norm(centers - simplices[:, 0], axis=1)
    return centers, radii, ok


def barycentric_weights(point, vertices) -> np.ndarray | None:
    """Affine coordinates of ``point`` w.r.t. affinely independent ``vertices``.

    Returns ``None`` when ``point`` is not in the affine hull (1e-10 relative).
    """
    v = as_points(vertices)
    p = np.asarray(point, dtype=float)
    if len(v) == 1:
        return np.ones(1) if np.linalg.norm(p - v[0]) <= 1e-10 * (1 + np.abs(v).max()) else None
    edges = (v[1:] - v[0]).T
    coef, *_ = np.linalg.lstsq(edges, p - v[0], rcond=None)
    recon = v[0] + edges @ coef
    scale = 1.0 + np.abs(v).max()
    if np.linalg.norm(recon - p) > 1e-10 * scale:
        return None
    return np.concatenate([[1.0 - coef.sum()], coef])


def convex_membership(point, vertices, interior_tol: float = INTERIOR_TOL) -> Barycentric | None:
    """Barycentric weights of ``point`` in conv(vertices), or ``None`` if outside.

    Affinely independent vertex sets are solved directly; dependent ones
    (e.g. four cocircular points in the plane) go through a non-negative
    least squares solve of the augmented system.
    """
    v = as_points(vertices)
    p = np.asarray(point, dtype=float)
    scale = 1.0 + float(np.abs(v).max()) + float(np.abs(p).max())
    if len(v) <= v.shape[1] + 1 and affinely_independent(v):
        lam = barycentric_weights(p, v)
        if lam is None or lam.min() < -1e-12:
            return None
        lam = np.clip(lam, 0.0, None)
        lam /= lam.sum()
    else:
        w = 1e3 * scale
        A = np.vstack([v.T, w * np.ones(len(v))])
        b = np.concatenate([p, [w]])
        try:
            lam, _ = nnls(A, b)
        except RuntimeError:
            return None
        if lam.sum() <= 0:
            return None
        lam = lam / lam.sum()
    residual = float(np.linalg.norm(lam @ v - p))
    if residual > 1e-10 * scale:
        return None
    return Barycentric(lam, bool(lam.min() > interior_tol), residual)


def simplex_volume(vertices, tol: float = GRAM_TOL) -> float:
    """s-dimensional volume of the simplex spanned by ``s + 1`` vertices."""
    v = as_points(vertices)
    s = len(v) - 1
    if s == 0:
        return 0.0
    edges = v[1:] - v[0]
    if _normalised_gram_det(edges) <= tol:
        return 0.0
    det = np.linalg.det(edges @ edges.T)
    return math.sqrt(max(det, 0.0)) / math.factorial(s)


def gram_volume(vertices) -> float:
    """Like :func:`simplex_volume` but without the degeneracy cut-off."""
    v = as_points(vertices)
    s = len(v) - 1
    if s == 0:
        return 0.0
    edges = v[1:] - v[0]
    return math.sqrt(max(np.linalg.det(edges @ edges.T), 0.0)) / math.factorial(s)


# -- smallest enclosing ball ------------------------------------------------

def _ball_through(boundary: list[np.ndarray]) -> Ball:
    pts = np.array(boundary)
    res = circumcenter_in_affine_hull(pts)
    if res is not None:
        return Ball(res[0], res[1])
    # dependent support set: fall back to the best sub-support
    best = None
    n = len(pts)
    for k in range(n - 1, 0, -1):
        for idx in _combinations(n, k):
            sub = circumcenter_in_affine_hull(pts[list(idx)])
            if sub is None:
                continue
            c, r = sub
            if np.all(np.linalg.norm(pts - c, axis=1) <= r * (1 + 1e-12) + 1e-12):
                if best is None or r < best.radius:
                    best = Ball(c, r)
        if best is not None:
            return best
    return Ball(pts.mean(axis=0), float(np.linalg.norm(pts - pts.mean(axis=0), axis=1).max()))


def _combinations(n, k):
    from itertools import combinations

    return combinations(range(n), k)


def _inside(ball: Ball, p: np.ndarray) -> bool:
    return float(np.linalg.norm(p - ball.center)) <= ball.radius + 1e-12 * (1.0 + ball.radius)


def _meb_with(points: np.ndarray, n: int, boundary: list[np.ndarray], dim: int) -> Ball:
    ball = _ball_through(boundary)
    if len(boundary) == dim + 1:
        return ball
    for i in range(n):
        if not _inside(ball, points[i]):
            ball = _meb_with(points, i, boundary + [points[i]], dim)
    return ball


def smallest_enclosing_ball(points) -> Ball:
    """Smallest enclosing ball by Welzl's move-to-front recursion.

    Points are sorted lexicographically and then shuffled with a fixed
    seed, so the result does not depend on the input order.
    """
    pts = as_points(points)
    pts = np.unique(pts, axis=0)
    if len(pts) == 1:
        return Ball(pts[0].copy(), 0.0)
    order = np.random.default_rng(0).permutation(len(pts))
    pts = pts[order]
    dim = pts.shape[1]
    ball = Ball(pts[0].copy(), 0.0)
    for i in range(1, len(pts)):
        if not _inside(ball, pts[i]):
            ball = _meb_with(pts, i, [pts[i]], dim)
    return ball


def packing_count(points, center, delta: float, eps: float) -> int:
    """Size of a greedy maximal ``delta``-separated subset of ``points`` in the closed ball B(center, eps).

    Points are visited in lexicographic order; separation is ``>= delta``.
    """
    if delta <= 0 or eps <= 0:
        raise ValueError("delta and eps must be positive")
    pts = as_points(points)
    c = np.asarray(center, dtype=float)
    inside = pts[np.linalg.norm(pts - c, axis=1) <= eps * (1 + 1e-9)]
    if len(inside) == 0:
        return 0
    inside = inside[np.lexsort(inside.T[::-1])]
    kept: list[np.ndarray] = []
    for p in inside:
        if all(np.linalg.norm(p - q) >= delta * (1 - 1e-9) for q in kept):
            kept.append(p)
    return len(kept)
