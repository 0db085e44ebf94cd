"""Independent oracles used to freeze expected values in the tests.

Everything here is deliberately written from scratch (closed forms, brute
force, direct enumeration) so that it shares no code path with the package
implementations it checks.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

# ---------------------------------------------------------------------------
# Double-integrator LQR fixture: A = [[0,1],[0,0]], B = [0,1]^T, K = [1,2].
# The closed-loop matrix [[0,1],[-1,-2]] has the double eigenvalue -1 and
# nilpotent part N = A_cl + I, so e^{A_cl t} = e^{-t} (I + N t) exactly.
# ---------------------------------------------------------------------------

DOUBLE_INT_K = np.array([1.0, 2.0])
DOUBLE_INT_ACL = np.array([[0.0, 1.0], [-1.0, -2.0]])


def double_int_flow(t: float) -> np.ndarray:
    """Closed-form e^{A_cl t} for the K = [1, 2] double integrator."""
    N = DOUBLE_INT_ACL + np.eye(2)
    return math.exp(-t) * (np.eye(2) + N * t)


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value via the 2x2 eigenvalue closed form when possible."""
    M = np.asarray(M, dtype=float)
    if M.shape == (2, 2):
        G = M.T @ M
        tr, det = G[0, 0] + G[1, 1], G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
        lam_max = 0.5 * (tr + math.sqrt(max(tr * tr - 4.0 * det, 0.0)))
        return math.sqrt(lam_max)
    return float(np.linalg.svd(M, compute_uv=False)[0])


def matrix_exp_series(A: np.ndarray, t: float, terms: int = 60) -> np.ndarray:
    """Scaling-free Taylor series of e^{At} (adequate for the small stable
    matrices used in these tests)."""
    A = np.asarray(A, dtype=float)
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A * (t / k)
        out = out + term
    return out


# ---------------------------------------------------------------------------
# Planar geometry: brute-force circumcircles, all-triangulations enumeration.
# ---------------------------------------------------------------------------


def circumcircle_2d(a, b, c):
    """Circumcenter/radius of a planar triangle from the perpendicular
    bisector equations."""
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-14:
        return None
    ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay)
          + (cx**2 + cy**2) * (ay - by)) / d
    uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx)
          + (cx**2 + cy**2) * (bx - ax)) / d
    center = np.array([ux, uy])
    return center, float(np.linalg.norm(center - np.asarray(a, dtype=float)))


def empty_circumsphere_violations(points: np.ndarray, simplices) -> int:
    """Count input points strictly inside any simplex circumsphere.

    The circumcenter is recomputed here from the pairwise equidistance
    conditions, then every non-vertex point is tested by plain distances.
    """
    points = np.asarray(points, dtype=float)
    bad = 0
    for idx in simplices:
        V = points[list(idx)]
        D = V[1:] - V[0]
        rhs = 0.5 * (np.sum(V[1:] ** 2, axis=1) - np.sum(V[0] ** 2))
        center = np.linalg.solve(D, rhs)
        radius = np.linalg.norm(center - V[0])
        for i in range(len(points)):
            if i in idx:
                continue
            if np.linalg.norm(points[i] - center) < radius - 1e-9 * max(1.0, radius):
                bad += 1
    return bad


def triangle_area(a, b, c) -> float:
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in counterclockwise order."""
    pts = sorted(map(tuple, np.asarray(points, dtype=float)))
    if len(pts) <= 2:
        return np.asarray(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-12:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-12:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def hull_area_2d(points: np.ndarray) -> float:
    hull = convex_hull_2d(points)
    x, y = hull[:, 0], hull[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _point_in_triangle(p, tri, tol=1e-12) -> bool:
    a, b, c = tri
    total = triangle_area(a, b, c)
    s = triangle_area(p, b, c) + triangle_area(a, p, c) + triangle_area(a, b, p)
    return abs(s - total) <= 1e-9 * max(1.0, total) and total > tol


def _segments_properly_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


def triangles_overlap_2d(t1, t2) -> bool:
    """Strict interior overlap of two planar triangles."""
    t1 = [tuple(v) for v in t1]
    t2 = [tuple(v) for v in t2]
    for i in range(3):
        for j in range(3):
            if _segments_properly_cross(t1[i], t1[(i + 1) % 3], t2[j], t2[(j + 1) % 3]):
                return True
    c1 = tuple(np.mean(t1, axis=0))
    c2 = tuple(np.mean(t2, axis=0))
    return _point_in_triangle(c1, t2) or _point_in_triangle(c2, t1)


def enumerate_triangulations_2d(points: np.ndarray) -> list[list[tuple[int, int, int]]]:
    """All tilings of the convex hull by triangles with vertices in the set.

    Backtracking over non-degenerate triangles with pairwise-disjoint
    interiors; a selection is a triangulation when its areas sum to the hull
    area (disjointness makes areas additive).  Unused interior points are
    allowed, matching the loose notion of a triangulation of a point set.
    """
    points = np.asarray(points, dtype=float)
    M = len(points)
    target = hull_area_2d(points)
    tris = []
    for combo in combinations(range(M), 3):
        if triangle_area(*points[list(combo)]) > 1e-12:
            tris.append(combo)

    results: list[list[tuple[int, int, int]]] = []

    def extend(start: int, chosen: list, area: float):
        if abs(area - target) <= 1e-9 * max(1.0, target):
            results.append(sorted(chosen))
            return
        if area > target + 1e-9:
            return
        for k in range(start, len(tris)):
            cand = tris[k]
            cand_v = points[list(cand)]
            if any(triangles_overlap_2d(cand_v, points[list(c)]) for c in chosen):
                continue
            extend(k + 1, chosen + [cand], area + triangle_area(*cand_v))

    extend(0, [], 0.0)
    # Deduplicate (the recursion can reach the same set along one order only,
    # but be safe).
    uniq = {tuple(map(tuple, r)) for r in results}
    return [list(map(tuple, r)) for r in sorted(uniq)]


def pl_interp_2d(points, values, triangulation, x):
    """Evaluate a piecewise-linear interpolant by direct barycentric solves."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    for tri in triangulation:
        V = points[list(tri)]
        A = np.vstack([np.ones(3), V.T])
        theta = np.linalg.solve(A, np.concatenate([[1.0], x]))
        if np.all(theta >= -1e-9):
            return float(theta @ values[list(tri)])
    return None


def max_interp_error_2d(points, values, triangulation, psi, grid_pts) -> float:
    """Max |interpolant - psi| over the grid points that the tiling covers.

    Vectorized per triangle: barycentric coordinates of all grid points at
    once, then the interpolant on the points the triangle contains.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    grid_pts = np.asarray(grid_pts, dtype=float)
    psi_vals = np.array([psi(x) for x in grid_pts])
    worst = 0.0
    for tri in triangulation:
        V = points[list(tri)]
        A = np.vstack([np.ones(3), V.T])
        Ainv = np.linalg.inv(A)
        theta = Ainv[:, :1] + Ainv[:, 1:] @ grid_pts.T  # (3, G)
        inside = np.all(theta >= -1e-9, axis=0)
        if not np.any(inside):
            continue
        interp = values[list(tri)] @ theta[:, inside]
        worst = max(worst, float(np.max(np.abs(interp - psi_vals[inside]))))
    return worst


# ---------------------------------------------------------------------------
# Routh-Hurwitz stability table for monic polynomials of degree <= 4.
# ---------------------------------------------------------------------------


def routh_stable(coeffs) -> bool:
    """Strict Hurwitz test from the Routh array (degree <= 4, monic or not)."""
    c = [float(v) for v in coeffs]
    if c[0] < 0:
        c = [-v for v in c]
    deg = len(c) - 1
    if deg == 0:
        return True
    if any(v <= 0 for v in c):
        return False  # necessary condition: all coefficients positive
    if deg <= 2:
        return True
    if deg == 3:
        a3, a2, a1, a0 = c
        return a2 * a1 > a3 * a0
    if deg == 4:
        a4, a3, a2, a1, a0 = c
        b1 = (a3 * a2 - a4 * a1) / a3
        if b1 <= 0:
            return False
        c1 = (b1 * a1 - a3 * a0) / b1
        return c1 > 0
    raise ValueError("Routh table implemented for degree <= 4 only")


# ---------------------------------------------------------------------------
# Finite-difference Lie derivatives.
# ---------------------------------------------------------------------------


def directional_derivative(func, field, x, eps=1e-6):
    """Central difference of func along the vector field at x."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(field(x), dtype=float)
    return (func(x + eps * v) - func(x - eps * v)) / (2.0 * eps)
