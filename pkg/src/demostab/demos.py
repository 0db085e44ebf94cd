"""Recording expert demonstrations and transforming them to chain coordinates.

A demonstration set holds M >= n+1 sampled trajectories of the chain
dz/dt = Az + Bv on a common uniform grid over [0, T].  The first demonstration
is always the trivial one (identically zero); it anchors the difference
matrices so the learned controller vanishes exactly at the origin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import NotFeedbackLinearizableError
from .plant import ExpertController, PlantModel, brunovsky_pair, feedback_linearize
from .sim import Trajectory, simulate_closed_loop, time_grid

# Scale-invariant rank test: pass iff min sigma_n(Z(t)) > RANK_TOL * max sigma_1.
RANK_TOL = 1e-8


@dataclass(frozen=True)
class Demonstration:
    """One (z, v) trajectory sampled on a uniform grid over [0, T]."""

    times: np.ndarray
    z: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "z", np.atleast_2d(np.asarray(self.z, dtype=float)))
        v = np.asarray(self.v, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "v", v)
        if len(self.times) != len(self.z) or len(self.times) != len(self.v):
            raise ValueError("grid, z and v must have equal length")
        if len(self.times) < 2:
            raise ValueError("a demonstration needs at least two samples")
        if not (np.all(np.isfinite(self.z)) and np.all(np.isfinite(self.v))):
            raise ValueError("demonstration samples must be finite")

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def n(self) -> int:
        return self.z.shape[1]

    @property
    def m(self) -> int:
        return self.v.shape[1]

    def is_trivial(self) -> bool:
        return bool(np.all(self.z == 0.0) and np.all(self.v == 0.0))


def eval_demo(demo: Demonstration, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate (z, v) at time t by linear interpolation; exact at grid points."""
    t = float(t)
    lo, hi = demo.times[0], demo.times[-1]
    if t < lo - 1e-12 or t > hi + 1e-12:
        raise ValueError(f"time {t} outside the demonstration range [{lo}, {hi}]")
    i = int(np.clip(np.searchsorted(demo.times, t, side="right") - 1, 0, len(demo.times) - 2))
    w = (t - demo.times[i]) / (demo.times[i + 1] - demo.times[i])
    w = min(max(w, 0.0), 1.0)
    z = (1.0 - w) * demo.z[i] + w * demo.z[i + 1]
    v = (1.0 - w) * demo.v[i] + w * demo.v[i + 1]
    return z, v


@dataclass(frozen=True)
class DemonstrationSet:
    """M demonstrations on a common grid, plus the chain pair (A, B) they solve.

    Invariants: M >= n+1, all grids identical, and demos[0] is the trivial
    solution.  For single-input plants (A, B) is the Brunovsky pair of size n;
    the flat-quadrotor fixture uses the stacked three-chain pair with m = 3.
    """

    demos: tuple[Demonstration, ...]
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "demos", tuple(self.demos))
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if not self.demos:
            raise ValueError("empty demonstration set")
        n = self.demos[0].n
        if len(self.demos) < n + 1:
            raise ValueError(f"need at least n+1 = {n + 1} demonstrations, got {len(self.demos)}")
        grid = self.demos[0].times
        for i, d in enumerate(self.demos):
            if d.n != n or d.m != self.demos[0].m:
                raise ValueError(f"demonstration {i} has inconsistent dimensions")
            if len(d.times) != len(grid) or not np.array_equal(d.times, grid):
                raise ValueError(f"demonstration {i} is not on the common grid")
        if not self.demos[0].is_trivial():
            raise ValueError("demos[0] must be the trivial (identically zero) solution")
        if A.shape != (n, n) or B.shape[0] != n or B.shape[1] != self.demos[0].m:
            raise ValueError("chain matrices (A, B) do not match the demonstration shape")

    @property
    def n(self) -> int:
        return self.demos[0].n

    @property
    def m(self) -> int:
        return self.demos[0].m

    @property
    def M(self) -> int:
        return len(self.demos)

    @property
    def grid(self) -> np.ndarray:
        return self.demos[0].times

    @property
    def T(self) -> float:
        return self.demos[0].T

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def includes_trivial(self) -> bool:
        return True

    def z0_points(self) -> np.ndarray:
        """Initial states z^i(0), shaped (M, n); the point set triangulated for M > n+1."""
        return np.stack([d.z[0] for d in self.demos])


def record_expert(
    plant: PlantModel,
    expert: ExpertController,
    x0s: Sequence[np.ndarray],
    T: float,
    dt: float,
) -> list[Trajectory]:
    """Record closed-loop expert trajectories from each initial condition.

    The trivial solution (from x0 = 0) is always included as the first entry,
    so the result has len(x0s) + 1 trajectories.
    """
    u_of_x = expert.state_feedback(plant)
    controller = lambda t, x: u_of_x(x)
    raw = []
    for x0 in [np.zeros(plant.n)] + [np.asarray(x, dtype=float) for x in x0s]:
        try:
            raw.append(simulate_closed_loop(plant, controller, x0, T, dt))
        except Exception as exc:
            raise type(exc)(f"recording from x0={x0} failed: {exc}") from exc
    return raw


def to_zv(plant: PlantModel, raw: Sequence[Trajectory]) -> DemonstrationSet:
    """Transform recorded (x, u) trajectories into chain coordinates.

    Applies z = [h, L_f h, ..., L_f^{n-1} h](x) and
    v = L_f^n h(x) + L_g L_f^{n-1} h(x) u per sample.  Rejects plants without
    relative degree n; those go through the embedding pipeline instead.
    """
    if plant.relative_degree != plant.n:
        raise NotFeedbackLinearizableError(
            f"{plant.name} does not have relative degree n={plant.n}; "
            "use the integrator-chain embedding"
        )
    demos = []
    for i, traj in enumerate(raw):
        z = np.empty_like(traj.states)
        v = np.empty(len(traj.times))
        for k, x in enumerate(traj.states):
            try:
                z[k] = feedback_linearize(plant, x)
                v[k] = plant.lie_f_h[plant.n](x) + plant.lie_g_lie_f_h[plant.n - 1](x) * traj.inputs[k]
            except Exception as exc:
                raise type(exc)(f"demonstration {i}, sample {k}: {exc}") from exc
        demos.append(Demonstration(times=traj.times, z=z, v=v))
    pair = brunovsky_pair(plant.n)
    return DemonstrationSet(demos=tuple(demos), A=pair.A, B=pair.B)


@dataclass(frozen=True)
class AffineIndependenceReport:
    """Smallest singular value of Z_I(t) across the grid and where it occurs."""

    min_sigma: float
    argmin_time: float
    max_sigma: float
    max_condition: float
    passed: bool
    tolerance: float


def difference_matrices(
    dset: DemonstrationSet, index_set: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Grid-sampled Z_I, V_I and the base demonstration samples.

    Returns (Zs, Vs, z_base, v_base) with shapes (G, n, n), (G, m, n), (G, n)
    and (G, m).  Column k-1 of Z_I(t) is z^{i_k}(t) - z^{i_1}(t).
    """
    I = list(index_set)
    n = dset.n
    if len(I) != n + 1:
        raise ValueError(f"index set must have n+1 = {n + 1} entries, got {len(I)}")
    if len(set(I)) != len(I):
        raise ValueError(f"index set has repeated entries: {I}")
    base = dset.demos[I[0]]
    Zs = np.stack([dset.demos[i].z - base.z for i in I[1:]], axis=2)
    Vs = np.stack([dset.demos[i].v - base.v for i in I[1:]], axis=2)
    return Zs, Vs, base.z.copy(), base.v.copy()


def validate_affine_independence(
    dset: DemonstrationSet, index_set: Optional[Sequence[int]] = None
) -> AffineIndependenceReport:
    """Check that {z^i(t)} for i in the index set stays affinely independent.

    Report-only: computes min over the grid of sigma_n(Z_I(t)) and passes iff
    it exceeds RANK_TOL times the largest singular value seen.
    """
    if index_set is None:
        index_set = range(dset.n + 1)
    Zs, _, _, _ = difference_matrices(dset, index_set)
    sigmas = np.linalg.svd(Zs, compute_uv=False)
    min_sigma = float(sigmas[:, -1].min())
    max_sigma = float(sigmas[:, 0].max())
    k = int(sigmas[:, -1].argmin())
    with np.errstate(divide="ignore"):
        conds = np.where(sigmas[:, -1] > 0.0, sigmas[:, 0] / sigmas[:, -1], np.inf)
    tol = RANK_TOL * max_sigma
    return AffineIndependenceReport(
        min_sigma=min_sigma,
        argmin_time=float(dset.grid[k]),
        max_sigma=max_sigma,
        max_condition=float(conds.max()),
        passed=bool(min_sigma > tol),
        tolerance=tol,
    )


# ---------------------------------------------------------------------------
# Serialization.  JSON round-trips are lossless: python floats serialize with
# repr, the shortest string that reproduces the exact double.
# ---------------------------------------------------------------------------


def demo_set_to_dict(dset: DemonstrationSet) -> dict:
    out = {
        "n": dset.n,
        "m": dset.m,
        "M": dset.M,
        "T": dset.T,
        "dt": dset.dt,
        "demos": [
            {
                "z": d.z.tolist(),
                "v": d.v[:, 0].tolist() if dset.m == 1 else d.v.tolist(),
            }
            for d in dset.demos
        ],
    }
    if dset.m != 1:
        out["A"] = dset.A.tolist()
        out["B"] = dset.B.tolist()
    return out


def demo_set_from_dict(data: dict) -> DemonstrationSet:
    n = int(data["n"])
    grid = time_grid(0.0, float(data["T"]), float(data["dt"]))
    demos = tuple(
        Demonstration(times=grid, z=np.array(d["z"], dtype=float), v=np.array(d["v"], dtype=float))
        for d in data["demos"]
    )
    if "A" in data:
        A, B = np.array(data["A"], dtype=float), np.array(data["B"], dtype=float)
    else:
        pair = brunovsky_pair(n)
        A, B = pair.A, pair.B
    return DemonstrationSet(demos=demos, A=A, B=B)


def save_demo_set(dset: DemonstrationSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(demo_set_to_dict(dset), indent=1, sort_keys=True))


def load_demo_set(path: str | Path) -> DemonstrationSet:
    return demo_set_from_dict(json.loads(Path(path).read_text()))


def save_demo_csv(demo: Demonstration, path: str | Path) -> None:
    """One demonstration as CSV with header t,z1..zn,v (or v1..vm)."""
    n, m = demo.n, demo.m
    vcols = ["v"] if m == 1 else [f"v{j + 1}" for j in range(m)]
    header = ",".join(["t"] + [f"z{k + 1}" for k in range(n)] + vcols)
    lines = [header]
    for k in range(len(demo.times)):
        row = [repr(float(demo.times[k]))]
        row += [repr(float(x)) for x in demo.z[k]]
        row += [repr(float(x)) for x in demo.v[k]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_demo_csv(path: str | Path) -> Demonstration:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    n = sum(1 for c in header if c.startswith("z"))
    rows = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    return Demonstration(times=rows[:, 0], z=rows[:, 1 : 1 + n], v=rows[:, 1 + n :])
