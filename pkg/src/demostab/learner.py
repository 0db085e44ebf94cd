"""Affine recombination of demonstrations and the learned chain controllers.

From n+1 demonstrations with affinely independent initial states, the
difference matrices

    Z(t) = [z^{i_2}(t) - z^{i_1}(t) | ... | z^{i_{n+1}}(t) - z^{i_1}(t)]
    V(t) = [v^{i_2}(t) - v^{i_1}(t) | ... | v^{i_{n+1}}(t) - v^{i_1}(t)]

turn any state into affine-combination coefficients.  Time is partitioned
into intervals of length T; within interval p the controller replays the
affine combination of demonstration inputs

    v(t) = v^{i_1}(tau) + V(tau) zeta,   tau = t - pT,

with zeta either frozen at the interval start (open-loop variant) or
recomputed from the current state as zeta = Z(tau)^{-1} (z - z^{i_1}(tau))
(closed-loop variant, the default).  When the base demonstration i_1 is the
trivial one, the base terms vanish and these reduce to v = V(tau) Z^{-1} z.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .demos import DemonstrationSet, difference_matrices
from .errors import AffineDependenceError, DivergenceError
from .plant import brunovsky_pair
from .sim import DIVERGENCE_NORM, Trajectory, time_grid

# Reject bases whose Z(t) condition number exceeds this anywhere on the grid.
COND_MAX = 1e12
# Tolerance used when assigning a time to its interval index p = floor(t / T).
_P_TOL = 1e-9


@dataclass(frozen=True)
class AffineBasis:
    """Grid-sampled difference matrices for one index set of demonstrations."""

    index_set: tuple[int, ...]
    times: np.ndarray
    Zs: np.ndarray
    Vs: np.ndarray
    z_base: np.ndarray
    v_base: np.ndarray

    @property
    def n(self) -> int:
        return self.Zs.shape[1]

    @property
    def m(self) -> int:
        return self.Vs.shape[1]

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def base(self) -> int:
        return self.index_set[0]

    def _interp(self, tau: float):
        """Entry-wise linear interpolation of Z, V and the base samples at tau."""
        T = self.times[-1]
        if tau < -1e-9 or tau > T + 1e-9:
            raise ValueError(f"tau={tau} outside [0, {T}]")
        tau = min(max(tau, 0.0), T)
        dt = self.times[1] - self.times[0]
        i = min(int(tau / dt), len(self.times) - 2)
        w = (tau - self.times[i]) / (self.times[i + 1] - self.times[i])
        w = min(max(w, 0.0), 1.0)
        if w == 0.0:
            return self.Zs[i], self.Vs[i], self.z_base[i], self.v_base[i]
        return (
            (1.0 - w) * self.Zs[i] + w * self.Zs[i + 1],
            (1.0 - w) * self.Vs[i] + w * self.Vs[i + 1],
            (1.0 - w) * self.z_base[i] + w * self.z_base[i + 1],
            (1.0 - w) * self.v_base[i] + w * self.v_base[i + 1],
        )

    def zeta(self, tau: float, z: np.ndarray) -> np.ndarray:
        """Solve Z(tau) zeta = z - z_base(tau); z may be (n,) or a batch (n, k)."""
        Z, _, zb, _ = self._interp(tau)
        z = np.asarray(z, dtype=float)
        rhs = z - (zb if z.ndim == 1 else zb[:, None])
        try:
            return np.linalg.solve(Z, rhs)
        except np.linalg.LinAlgError as exc:
            raise AffineDependenceError(f"Z(tau) singular at tau={tau}", time=tau) from exc

    def value(self, tau: float, z: np.ndarray) -> np.ndarray:
        """Controller value v = v_base(tau) + V(tau) zeta(tau, z)."""
        Z, V, zb, vb = self._interp(tau)
        z = np.asarray(z, dtype=float)
        rhs = z - (zb if z.ndim == 1 else zb[:, None])
        zeta = np.linalg.solve(Z, rhs)
        return (vb if z.ndim == 1 else vb[:, None]) + V @ zeta

    def value_from_zeta(self, tau: float, zeta: np.ndarray) -> np.ndarray:
        _, V, _, vb = self._interp(tau)
        zeta = np.asarray(zeta, dtype=float)
        return (vb if zeta.ndim == 1 else vb[:, None]) + V @ zeta

    def reconstruct(self, tau: float, zeta: np.ndarray) -> np.ndarray:
        """Predicted closed-loop state z(tau) = z_base(tau) + Z(tau) zeta."""
        Z, _, zb, _ = self._interp(tau)
        zeta = np.asarray(zeta, dtype=float)
        return (zb if zeta.ndim == 1 else zb[:, None]) + Z @ zeta

    def monodromy(self, T: Optional[float] = None) -> np.ndarray:
        """Interval map Psi(T) = Z(T) Z(0)^{-1}; exactly the identity at T = 0."""
        T = self.T if T is None else float(T)
        if T == 0.0:
            return np.eye(self.n)
        Z_T, _, _, _ = self._interp(T)
        return Z_T @ np.linalg.inv(self.Zs[0])


def build_basis(dset: DemonstrationSet, index_set: Optional[Sequence[int]] = None) -> AffineBasis:
    """Construct the difference matrices for an index set of n+1 demonstrations.

    Raises AffineDependenceError, naming the grid time, if Z_I(t) is rank
    deficient or ill-conditioned (condition number above 1e12) anywhere.
    """
    if index_set is None:
        index_set = tuple(range(dset.n + 1))
    Zs, Vs, z_base, v_base = difference_matrices(dset, index_set)
    sigmas = np.linalg.svd(Zs, compute_uv=False)
    with np.errstate(divide="ignore"):
        conds = np.where(sigmas[:, -1] > 0.0, sigmas[:, 0] / sigmas[:, -1], np.inf)
    k_bad = int(conds.argmax())
    if not np.isfinite(conds[k_bad]):
        raise AffineDependenceError(
            f"demonstrations {tuple(index_set)} affinely dependent at "
            f"t={dset.grid[k_bad]:.6f} (Z(t) singular)",
            time=float(dset.grid[k_bad]),
        )
    if conds[k_bad] > COND_MAX:
        raise AffineDependenceError(
            f"Z(t) condition number {conds[k_bad]:.3e} exceeds {COND_MAX:.0e} "
            f"at t={dset.grid[k_bad]:.6f}",
            time=float(dset.grid[k_bad]),
        )
    return AffineBasis(
        index_set=tuple(int(i) for i in index_set),
        times=dset.grid.copy(),
        Zs=Zs,
        Vs=Vs,
        z_base=z_base,
        v_base=v_base,
    )


def interval_index(t: float, T: float) -> tuple[int, float]:
    """Split t >= 0 into the interval index p and the offset tau in [0, T].

    Right-continuous at interval boundaries: at exactly t = pT the new
    interval's formula applies.
    """
    p = max(int(np.floor(t / T + _P_TOL)), 0)
    tau = min(max(t - p * T, 0.0), T)
    return p, tau


class LearnedController:
    """Single-basis learned controller kappa_hat(t, z).

    feedback_mode selects the closed-loop variant (zeta recomputed from the
    current state, the default) or the open-loop variant (zeta frozen per
    interval from the state seen at the interval start).
    """

    mode = "single"

    def __init__(
        self,
        basis: AffineBasis,
        A: Optional[np.ndarray] = None,
        B: Optional[np.ndarray] = None,
        feedback_mode: str = "closed_loop",
    ):
        if feedback_mode not in ("closed_loop", "open_loop"):
            raise ValueError(f"unknown feedback_mode {feedback_mode!r}")
        self.basis = basis
        self.T = basis.T
        self.feedback_mode = feedback_mode
        if A is None or B is None:
            pair = brunovsky_pair(basis.n)
            A, B = pair.A, pair.B
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        if self.B.ndim == 1:
            self.B = self.B[:, None]
        self._anchor_p: Optional[int] = None
        self._anchor_zeta: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def m(self) -> int:
        return self.basis.m

    def begin_interval(self, p: int, z: np.ndarray) -> None:
        """Anchor interval p at its starting state (used by simulators)."""
        self._anchor_p = p
        if self.feedback_mode == "open_loop":
            self._anchor_zeta = self.basis.zeta(0.0, z)

    def eval_in_interval(self, tau: float, z: np.ndarray) -> np.ndarray:
        if self.feedback_mode == "open_loop":
            if self._anchor_zeta is None:
                raise RuntimeError("open-loop controller evaluated before begin_interval")
            return self.basis.value_from_zeta(tau, self._anchor_zeta)
        return self.basis.value(tau, z)

    def kappa(self, t: float, z: np.ndarray) -> np.ndarray:
        """Evaluate the controller at absolute time t and state z."""
        p, tau = interval_index(t, self.T)
        if self.feedback_mode == "open_loop" and p != self._anchor_p:
            self.begin_interval(p, z)
        return self.eval_in_interval(tau, z)

    def __call__(self, t: float, z: np.ndarray):
        v = self.kappa(t, np.asarray(z, dtype=float))
        if self.m == 1 and v.ndim == 1:
            return float(v[0])
        return v


def zeta(basis: AffineBasis, tau: float, z: np.ndarray) -> np.ndarray:
    """Affine-combination coefficients of z at time tau: solves Z(tau) zeta = z."""
    return basis.zeta(tau, z)


def control_open_loop(ctrl: LearnedController, t: float, z_pT: np.ndarray):
    """Open-loop value v = V(t - pT) Z(0)^{-1} z(pT) for the interval of t."""
    _, tau = interval_index(t, ctrl.T)
    zt = ctrl.basis.zeta(0.0, np.asarray(z_pT, dtype=float))
    v = ctrl.basis.value_from_zeta(tau, zt)
    return float(v[0]) if ctrl.m == 1 and v.ndim == 1 else v


def control_closed_loop(ctrl: LearnedController, t: float, z: np.ndarray):
    """Closed-loop value v = V(t - pT) Z(t - pT)^{-1} z, recomputed per call."""
    _, tau = interval_index(t, ctrl.T)
    v = ctrl.basis.value(tau, np.asarray(z, dtype=float))
    return float(v[0]) if ctrl.m == 1 and v.ndim == 1 else v


def reconstruct_trajectory(basis: AffineBasis, zeta_vec: np.ndarray, tau: float) -> np.ndarray:
    """Predicted closed-loop state z(tau) = Z(tau) zeta (plus base terms)."""
    return basis.reconstruct(tau, zeta_vec)


# ---------------------------------------------------------------------------
# Chain closed-loop simulation with explicit interval anchoring.
# ---------------------------------------------------------------------------


def simulate_chain_batch(
    ctrl,
    z0: np.ndarray,
    duration: float,
    dt: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate dz/dt = A z + B kappa_hat(t, z) for a batch of initial states.

    z0 is (n,) or (n, k).  The controller is re-anchored at every interval
    start from the committed state there, and RK4 stage times are resolved
    against the interval of the enclosing step, so stages at exactly (p+1)T
    use the interval-p matrices.  Returns (times, states, inputs) with states
    shaped (G, n, k) and inputs (G, m, k).
    """
    A, B, T = ctrl.A, ctrl.B, ctrl.T
    z = np.asarray(z0, dtype=float)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[:, None]
    times = time_grid(0.0, duration, dt)
    states = np.empty((len(times),) + z.shape)
    inputs = np.empty((len(times), B.shape[1], z.shape[1]))
    states[0] = z
    current_p = None
    for k in range(len(times) - 1):
        t_k = times[k]
        p, tau_k = interval_index(t_k, T)
        if p != current_p:
            ctrl.begin_interval(p, z)
            current_p = p
        inputs[k] = ctrl.eval_in_interval(tau_k, z)
        h = times[k + 1] - times[k]

        def rhs(tau, zz):
            return A @ zz + B @ ctrl.eval_in_interval(min(tau, T), zz)

        k1 = rhs(tau_k, z)
        k2 = rhs(tau_k + 0.5 * h, z + 0.5 * h * k1)
        k3 = rhs(tau_k + 0.5 * h, z + 0.5 * h * k2)
        k4 = rhs(tau_k + h, z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > DIVERGENCE_NORM:
            raise DivergenceError(f"chain state diverged at t={times[k + 1]:.6f}",
                                  time=float(times[k + 1]))
        states[k + 1] = z
    p, tau_k = interval_index(times[-1], T)
    if p != current_p:
        ctrl.begin_interval(p, z)
    inputs[-1] = ctrl.eval_in_interval(tau_k, z)
    return times, states, inputs


def simulate_chain_closed_loop(ctrl, z0: np.ndarray, duration: float, dt: float) -> Trajectory:
    """Single-trajectory wrapper around simulate_chain_batch."""
    times, states, inputs = simulate_chain_batch(ctrl, z0, duration, dt)
    u = inputs[:, :, 0]
    if ctrl.m == 1:
        u = u[:, 0]
    return Trajectory(times=times, states=states[:, :, 0], inputs=u)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def controller_to_dict(ctrl: LearnedController) -> dict:
    b = ctrl.basis
    return {
        "mode": "single",
        "feedback_mode": ctrl.feedback_mode,
        "T": b.T,
        "n": b.n,
        "m": b.m,
        "I": list(b.index_set),
        "grid": b.times.tolist(),
        "Zs": b.Zs.tolist(),
        "Vs": b.Vs.tolist(),
        "z_base": b.z_base.tolist(),
        "v_base": b.v_base.tolist(),
        "A": ctrl.A.tolist(),
        "B": ctrl.B.tolist(),
    }


def controller_from_dict(data: dict) -> LearnedController:
    if data["mode"] != "single":
        raise ValueError(f"not a single-basis controller file: mode={data['mode']!r}")
    basis = AffineBasis(
        index_set=tuple(data["I"]),
        times=np.array(data["grid"], dtype=float),
        Zs=np.array(data["Zs"], dtype=float),
        Vs=np.array(data["Vs"], dtype=float),
        z_base=np.array(data["z_base"], dtype=float),
        v_base=np.array(data["v_base"], dtype=float),
    )
    return LearnedController(
        basis,
        A=np.array(data["A"], dtype=float),
        B=np.array(data["B"], dtype=float),
        feedback_mode=data["feedback_mode"],
    )


def save_controller(ctrl, path: str | Path) -> None:
    from .multi import MultiController, multi_controller_to_dict

    if isinstance(ctrl, MultiController):
        payload = multi_controller_to_dict(ctrl)
    else:
        payload = controller_to_dict(ctrl)
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_controller(path: str | Path):
    data = json.loads(Path(path).read_text())
    if data["mode"] == "multi":
        from .multi import multi_controller_from_dict

        return multi_controller_from_dict(data)
    return controller_from_dict(data)
