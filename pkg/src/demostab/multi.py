"""Learned controller for more than n+1 demonstrations.

The initial states z^i(0) are triangulated (Delaunay by default, which gives
the best worst-case interpolation error among triangulations).  At each
interval start the simplex containing z(pT) picks the index set of n+1
demonstrations used for that whole interval; states outside the hull are
handled by projecting onto the hull and extending the projection simplex's
coordinates affinely.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .demos import DemonstrationSet, demo_set_from_dict, demo_set_to_dict
from .errors import DegenerateGeometryError
from .geometry import (
    Triangulation,
    barycentric,
    delaunay,
    locate,
    project_to_hull,
    triangulation_from_simplices,
)
from .learner import AffineBasis, build_basis, interval_index


def _locate_nearest(tri: Triangulation, xi: np.ndarray) -> int:
    """Simplex containing xi, falling back to the least-violating one.

    Projected points can sit a rounding error outside every simplex; the
    simplex whose worst barycentric coordinate is largest is then the right
    owner.  Ties resolve to the lowest index.
    """
    best_j, best_worst = 0, -np.inf
    for j, s in enumerate(tri.simplices):
        theta = barycentric(tri.points[list(s.vertex_indices)], xi)
        worst = float(theta.min())
        if worst >= -1e-9:
            return j
        if worst > best_worst + 1e-12:
            best_j, best_worst = j, worst
    return best_j


class MultiController:
    """Piecewise (per-simplex) learned controller over a triangulation of Z(0)."""

    mode = "multi"

    def __init__(
        self,
        dset: DemonstrationSet,
        tri: Optional[Triangulation] = None,
        feedback_mode: str = "closed_loop",
    ):
        if feedback_mode not in ("closed_loop", "open_loop"):
            raise ValueError(f"unknown feedback_mode {feedback_mode!r}")
        self.dset = dset
        self.T = dset.T
        self.A = dset.A
        self.B = dset.B
        self.feedback_mode = feedback_mode
        if tri is None:
            tri = delaunay(dset.z0_points())
        if tri.points.shape != (dset.M, dset.n) or not np.allclose(
            tri.points, dset.z0_points()
        ):
            raise ValueError("triangulation points must be the demonstration starts Z(0)")
        self.tri = tri
        self.bases: tuple[AffineBasis, ...] = tuple(
            build_basis(dset, s.vertex_indices) for s in tri.simplices
        )
        # Per-trajectory interval anchor: do not share one controller instance
        # across concurrently simulated trajectories.
        self._anchor_p: Optional[int] = None
        self._anchor_js: Optional[np.ndarray] = None
        self._anchor_zetas: Optional[list] = None

    @property
    def n(self) -> int:
        return self.dset.n

    @property
    def m(self) -> int:
        return self.dset.m

    @property
    def P(self) -> int:
        return len(self.bases)

    def _select_simplex(self, z: np.ndarray) -> int:
        j = locate(self.tri, z)
        if j is not None:
            return j
        xi_star, _ = project_to_hull(self.tri.points, z)
        return _locate_nearest(self.tri, xi_star)

    def begin_interval(self, p: int, z: np.ndarray) -> None:
        """Anchor interval p: pick one simplex per trajectory column of z."""
        z = np.asarray(z, dtype=float)
        cols = z[:, None] if z.ndim == 1 else z
        self._anchor_p = p
        self._anchor_js = np.array([self._select_simplex(cols[:, k]) for k in range(cols.shape[1])])
        if self.feedback_mode == "open_loop":
            self._anchor_zetas = [
                self.bases[j].zeta(0.0, cols[:, k])
                for k, j in enumerate(self._anchor_js)
            ]

    def eval_in_interval(self, tau: float, z: np.ndarray) -> np.ndarray:
        if self._anchor_js is None:
            raise RuntimeError("multi controller evaluated before begin_interval")
        z = np.asarray(z, dtype=float)
        squeeze = z.ndim == 1
        cols = z[:, None] if squeeze else z
        out = np.empty((self.m, cols.shape[1]))
        for j in np.unique(self._anchor_js):
            sel = np.flatnonzero(self._anchor_js == j)
            basis = self.bases[j]
            if self.feedback_mode == "open_loop":
                zetas = np.stack([self._anchor_zetas[k] for k in sel], axis=1)
                out[:, sel] = basis.value_from_zeta(tau, zetas)
            else:
                out[:, sel] = basis.value(tau, cols[:, sel])
        return out[:, 0] if squeeze else out

    def kappa(self, t: float, z: np.ndarray) -> np.ndarray:
        p, tau = interval_index(t, self.T)
        if p != self._anchor_p:
            self.begin_interval(p, z)
        return self.eval_in_interval(tau, np.asarray(z, dtype=float))

    def __call__(self, t: float, z: np.ndarray):
        v = self.kappa(t, np.asarray(z, dtype=float))
        if self.m == 1 and v.ndim == 1:
            return float(v[0])
        return v


def select_index_set(ctrl: MultiController, z_pT: np.ndarray) -> tuple[tuple[int, ...], np.ndarray]:
    """Index set and affine coefficients used for an interval starting at z_pT.

    Inside the hull the coefficients are the barycentric coordinates of the
    containing Delaunay simplex (all >= 0); outside, the simplex of the
    Euclidean projection is used and z_pT is expressed as an affine
    combination of its vertices, so coefficients may be negative.
    """
    z_pT = np.asarray(z_pT, dtype=float)
    if ctrl.tri.points.shape[0] == ctrl.n:  # hull would be lower-dimensional
        raise DegenerateGeometryError("too few demonstration starts to form a hull")
    j = ctrl._select_simplex(z_pT)
    idx = ctrl.tri.simplices[j].vertex_indices
    theta = barycentric(ctrl.tri.points[list(idx)], z_pT)
    return idx, theta


def control_multi(ctrl: MultiController, t: float, z: np.ndarray):
    """Controller value with the index set held fixed over the enclosing interval."""
    return ctrl(t, z)


def per_simplex_monodromy(ctrl: MultiController, T: Optional[float] = None) -> list[np.ndarray]:
    """Interval maps Psi_j(T) = Z_j(T) Z_j(0)^{-1}, one per simplex."""
    return [basis.monodromy(T) for basis in ctrl.bases]


def multi_controller_to_dict(ctrl: MultiController) -> dict:
    return {
        "mode": "multi",
        "feedback_mode": ctrl.feedback_mode,
        "T": ctrl.T,
        "n": ctrl.n,
        "m": ctrl.m,
        "kind": ctrl.tri.kind,
        "simplices": [list(s.vertex_indices) for s in ctrl.tri.simplices],
        "demo_set": demo_set_to_dict(ctrl.dset),
    }


def multi_controller_from_dict(data: dict) -> MultiController:
    dset = demo_set_from_dict(data["demo_set"])
    tri = triangulation_from_simplices(dset.z0_points(), data["simplices"], kind=data["kind"])
    return MultiController(dset, tri=tri, feedback_mode=data["feedback_mode"])
