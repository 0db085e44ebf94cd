"""Integrator-chain embedding for plants without relative degree n.

The plant is augmented with auxiliary states xi in R^{n-1} so that the
extended system carries a chain of n integrators in the coordinates

    z_k = L_f^{k-1} h(x) + xi_k,              k = 1..n-1,
    z_n = L_f^{n-1} h(x) - sum_j w_j xi_j,

driven through the dynamic feedback u = (s(x, xi) + v) / r(x).  With the
auxiliary dynamics below, differentiating z_n gives dz_n/dt = -s + r u = v,
which fixes

    r(x)     = L_g L_f^{n-1} h + sum_j w_j L_g L_f^{j-1} h,
    s(x, xi) = -L_f^n h + sum_{j<=n-2} w_j xi_{j+1}
               - w_{n-1} sum_i w_i xi_i.

Demonstrations of the original plant are transformed by integrating the
auxiliary dynamics along the recorded (x, u) and re-reading the inputs as
v = r u - s; the chain learner then applies unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DivergenceError, SingularEmbeddingError
from .learner import interval_index
from .plant import PlantModel
from .sim import DIVERGENCE_NORM, Trajectory, time_grid

# |r(x)| at or below this is a singular embedding.
R_TOL = 1e-6


def companion_from_coeffs(w: Sequence[float]) -> np.ndarray:
    """Companion matrix with ones on the superdiagonal and last row -w."""
    w = np.asarray(w, dtype=float)
    k = len(w)
    A = np.diag(np.ones(k - 1), 1) if k > 1 else np.zeros((1, 1))
    A[-1, :] = -w
    return A


def charpoly(M: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial coefficients via Faddeev-LeVerrier."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    k = M.shape[0]
    coeffs = np.empty(k + 1)
    coeffs[0] = 1.0
    N = np.zeros_like(M)
    for i in range(1, k + 1):
        N = M @ N + coeffs[i - 1] * np.eye(k)
        coeffs[i] = -np.trace(M @ N) / i
    return coeffs


def hurwitz(M: np.ndarray) -> bool:
    """True iff every eigenvalue real part is below -1e-9.

    Roots come from the characteristic polynomial for sizes up to 8 (the
    matrices here are tiny companions); larger matrices fall back to the
    standard eigensolver.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] <= 8:
        roots = np.roots(charpoly(M))
    else:
        roots = np.linalg.eigvals(M)
    return bool(np.all(roots.real < -1e-9))


@dataclass(frozen=True)
class EmbeddingConfig:
    """Plant plus the w-coefficients of the auxiliary companion dynamics.

    Construction enforces that the companion matrix built from w is Hurwitz
    (the unforced auxiliary dynamics must decay on their own).
    """

    plant: PlantModel
    w: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(v) for v in self.w))
        if len(self.w) != self.plant.n - 1:
            raise ValueError(
                f"need n-1 = {self.plant.n - 1} coefficients w, got {len(self.w)}"
            )
        if not hurwitz(companion_from_coeffs(self.w)):
            raise ValueError(f"companion matrix of w={self.w} is not Hurwitz")

    @property
    def n(self) -> int:
        return self.plant.n


@dataclass(frozen=True)
class ExtendedState:
    """Plant state x paired with the auxiliary state xi."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.xi))):
            raise ValueError("extended state must be finite")


def a_xi(cfg: EmbeddingConfig) -> np.ndarray:
    """Companion matrix of the auxiliary dynamics (condition A1 checks this)."""
    return companion_from_coeffs(cfg.w)


def phi_z(cfg: EmbeddingConfig, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Chain coordinates of the extended state."""
    plant, w = cfg.plant, np.asarray(cfg.w)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    plant.require_in_domain(x)
    z = np.empty(plant.n)
    for k in range(plant.n - 1):
        z[k] = plant.lie_f_h[k](x) + xi[k]
    z[-1] = plant.lie_f_h[plant.n - 1](x) - float(w @ xi)
    return z


def phi(cfg: EmbeddingConfig, x: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full coordinate change (z, xi) = Phi(x, xi); xi passes through."""
    return phi_z(cfg, x, xi), np.asarray(xi, dtype=float).copy()


def r_of_x(cfg: EmbeddingConfig, x: np.ndarray) -> float:
    """Input coefficient r(x) of the embedded chain's top equation."""
    plant, w = cfg.plant, cfg.w
    x = np.asarray(x, dtype=float)
    out = plant.lie_g_lie_f_h[plant.n - 1](x)
    for j in range(plant.n - 1):
        out += w[j] * plant.lie_g_lie_f_h[j](x)
    return float(out)


def s_of_x_xi(cfg: EmbeddingConfig, x: np.ndarray, xi: np.ndarray) -> float:
    """Drift term s(x, xi), chosen so that dz_n/dt = -s + r u."""
    plant, w = cfg.plant, cfg.w
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n = plant.n
    out = -plant.lie_f_h[n](x)
    for j in range(n - 2):
        out += w[j] * xi[j + 1]
    out -= w[n - 2] * float(np.asarray(w) @ xi)
    return float(out)


def aux_rhs(cfg: EmbeddingConfig, x: np.ndarray, xi: np.ndarray, u: float) -> np.ndarray:
    """Auxiliary dynamics dxi/dt = A_xi xi - [L_g L_f^{k-1} h(x)]_k u."""
    plant = cfg.plant
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    L = np.array([plant.lie_g_lie_f_h[k](x) for k in range(plant.n - 1)])
    return a_xi(cfg) @ xi - L * float(u)


def dynamic_feedback(cfg: EmbeddingConfig, x: np.ndarray, xi: np.ndarray, v: float) -> float:
    """Physical input u = (s(x, xi) + v) / r(x) realizing the chain input v."""
    r = r_of_x(cfg, x)
    if abs(r) <= R_TOL:
        raise SingularEmbeddingError(f"r(x) = {r:.3e} at x={np.asarray(x)}")
    return (s_of_x_xi(cfg, x, xi) + float(v)) / r


@dataclass(frozen=True)
class EmbeddedDemonstration:
    """Transformed demonstration (z, xi, v) on the recording grid."""

    times: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    v: np.ndarray


def transform_demos(
    cfg: EmbeddingConfig,
    raw: Sequence[Trajectory],
    xi0: Optional[np.ndarray] = None,
) -> list[EmbeddedDemonstration]:
    """Transform recorded (x, u) demonstrations into chain coordinates.

    For each demonstration the auxiliary dynamics are integrated from xi0
    (zero by default) driven by the recorded signals, interpolated linearly
    between samples; then z = Phi_z(x, xi) and v = r(x) u - s(x, xi) per
    sample.  A pre-flight scan raises if r(x) comes within tolerance of zero
    anywhere along a demonstration.
    """
    n = cfg.n
    xi0 = np.zeros(n - 1) if xi0 is None else np.asarray(xi0, dtype=float)
    if xi0.shape != (n - 1,):
        raise ValueError(f"xi0 must have shape ({n - 1},)")
    A = a_xi(cfg)
    out = []
    for i, traj in enumerate(raw):
        r_vals = np.array([r_of_x(cfg, x) for x in traj.states])
        k_bad = int(np.abs(r_vals).argmin())
        if abs(r_vals[k_bad]) <= R_TOL:
            raise SingularEmbeddingError(
                f"r(x) = {r_vals[k_bad]:.3e} along demonstration {i} "
                f"at t={traj.times[k_bad]:.6f}",
                time=float(traj.times[k_bad]),
            )

        def xi_rhs(t, xi):
            x_t = traj.state_at(t)
            u_t = np.interp(t, traj.times, traj.inputs)
            L = np.array([cfg.plant.lie_g_lie_f_h[k](x_t) for k in range(n - 1)])
            return A @ xi - L * u_t

        xi = np.empty((len(traj.times), n - 1))
        xi[0] = xi0
        cur = xi0.copy()
        for k in range(len(traj.times) - 1):
            h = traj.times[k + 1] - traj.times[k]
            t = traj.times[k]
            k1 = xi_rhs(t, cur)
            k2 = xi_rhs(t + 0.5 * h, cur + 0.5 * h * k1)
            k3 = xi_rhs(t + 0.5 * h, cur + 0.5 * h * k2)
            k4 = xi_rhs(t + h, cur + h * k3)
            cur = cur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            xi[k + 1] = cur

        z = np.empty((len(traj.times), n))
        v = np.empty(len(traj.times))
        for k in range(len(traj.times)):
            z[k] = phi_z(cfg, traj.states[k], xi[k])
            v[k] = r_vals[k] * traj.inputs[k] - s_of_x_xi(cfg, traj.states[k], xi[k])
        out.append(EmbeddedDemonstration(times=traj.times.copy(), z=z, xi=xi, v=v))
    return out


def embedded_to_demo_set(embedded: Sequence[EmbeddedDemonstration]):
    """Forget the xi component: the (z, v) parts form a chain demonstration set."""
    from .demos import Demonstration, DemonstrationSet
    from .plant import brunovsky_pair

    demos = tuple(Demonstration(times=e.times, z=e.z, v=e.v) for e in embedded)
    pair = brunovsky_pair(demos[0].z.shape[1])
    return DemonstrationSet(demos=demos, A=pair.A, B=pair.B)


def invert_phi_z(
    cfg: EmbeddingConfig,
    z_target: np.ndarray,
    xi: np.ndarray,
    x_guess: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iter: int = 60,
) -> np.ndarray:
    """Solve Phi_z(x, xi) = z_target for x by damped Newton iteration."""
    n = cfg.n
    x = np.zeros(n) if x_guess is None else np.asarray(x_guess, dtype=float).copy()
    z_target = np.asarray(z_target, dtype=float)

    def G(xv):
        return phi_z(cfg, xv, xi) - z_target

    g = G(x)
    for _ in range(max_iter):
        if np.linalg.norm(g) < tol:
            return x
        J = np.empty((n, n))
        eps = 1e-7
        for j in range(n):
            dx = np.zeros(n)
            dx[j] = eps * (1.0 + abs(x[j]))
            J[:, j] = (G(x + dx) - G(x - dx)) / (2.0 * dx[j])
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("Jacobian singular while inverting the coordinate change") from exc
        lam = 1.0
        while lam > 1e-6:
            x_new = x + lam * step
            g_new = G(x_new)
            if np.linalg.norm(g_new) < np.linalg.norm(g):
                x, g = x_new, g_new
                break
            lam *= 0.5
        else:
            raise RuntimeError("numeric inversion of the coordinate change stalled")
    if np.linalg.norm(g) < 1e-9:
        return x
    raise RuntimeError("numeric inversion of the coordinate change did not converge")


def a_w_numeric(cfg: EmbeddingConfig, eps: float = 1e-5) -> np.ndarray:
    """Jacobian correction A_w of the unforced xi-subsystem at the origin.

    Central-difference Jacobian with respect to xi, at (z, xi) = (0, 0), of
    the transformed xi-drift; the practical surrogate for input-to-state
    stability of the auxiliary subsystem is that A_xi + A_w is Hurwitz.  This
    is a local linearization check, not a proof of the ISS condition.
    """
    n = cfg.n
    A = a_xi(cfg)

    def drift(xi):
        x = invert_phi_z(cfg, np.zeros(n), xi)
        r = r_of_x(cfg, x)
        if abs(r) <= R_TOL:
            raise SingularEmbeddingError(f"r(x) = {r:.3e} during linearization")
        s = s_of_x_xi(cfg, x, xi)
        L = np.array([cfg.plant.lie_g_lie_f_h[k](x) for k in range(n - 1)])
        return A @ xi - L * (s / r)

    J = np.empty((n - 1, n - 1))
    for j in range(n - 1):
        dxi = np.zeros(n - 1)
        dxi[j] = eps
        J[:, j] = (drift(dxi) - drift(-dxi)) / (2.0 * eps)
    return J - A


@dataclass(frozen=True)
class EmbeddedTrajectory:
    """Closed-loop solution of the extended system with both input records."""

    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    u: np.ndarray


def simulate_embedded_closed_loop(
    cfg: EmbeddingConfig,
    ctrl,
    x0: np.ndarray,
    xi0: Optional[np.ndarray] = None,
    duration: float = 10.0,
    dt: float = 1e-3,
) -> EmbeddedTrajectory:
    """Simulate the plant + auxiliary dynamics under the learned chain input.

    At each RK4 stage the chain state is read off as z = Phi_z(x, xi), the
    learned controller supplies v, and the dynamic feedback turns it into the
    physical input u = (s + v) / r.  The controller is re-anchored at interval
    starts from the committed state there.
    """
    if ctrl.m != 1:
        raise ValueError("the embedding pipeline drives a single-input plant")
    plant = cfg.plant
    n = plant.n
    x0 = np.asarray(x0, dtype=float)
    xi0 = np.zeros(n - 1) if xi0 is None else np.asarray(xi0, dtype=float)
    plant.require_in_domain(x0)
    T = ctrl.T

    times = time_grid(0.0, duration, dt)
    xs = np.empty((len(times), n))
    xis = np.empty((len(times), n - 1))
    vs = np.empty(len(times))
    us = np.empty(len(times))
    y = np.concatenate([x0, xi0])
    xs[0], xis[0] = x0, xi0

    def controls_at(tau, yv):
        x, xi = yv[:n], yv[n:]
        z = phi_z(cfg, x, xi)
        v = float(ctrl.eval_in_interval(min(tau, T), z)[0])
        return v, dynamic_feedback(cfg, x, xi, v)

    def rhs(tau, yv):
        x, xi = yv[:n], yv[n:]
        v, u = controls_at(tau, yv)
        return np.concatenate([plant.rhs(x, u), aux_rhs(cfg, x, xi, u)])

    current_p = None
    for k in range(len(times) - 1):
        p, tau_k = interval_index(times[k], T)
        if p != current_p:
            ctrl.begin_interval(p, phi_z(cfg, y[:n], y[n:]))
            current_p = p
        vs[k], us[k] = controls_at(tau_k, y)
        h = times[k + 1] - times[k]
        k1 = rhs(tau_k, y)
        k2 = rhs(tau_k + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(tau_k + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(tau_k + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_next = times[k + 1]
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > DIVERGENCE_NORM:
            raise DivergenceError(f"extended state diverged at t={t_next:.6f}", time=float(t_next))
        if not plant.domain_check(y[:n]):
            raise DivergenceError(
                f"state left the domain of {plant.name} at t={t_next:.6f}", time=float(t_next)
            )
        xs[k + 1], xis[k + 1] = y[:n], y[n:]
    p, tau_k = interval_index(times[-1], T)
    if p != current_p:
        ctrl.begin_interval(p, phi_z(cfg, y[:n], y[n:]))
    vs[-1], us[-1] = controls_at(tau_k, y)
    return EmbeddedTrajectory(times=times, x=xs, xi=xis, v=vs, u=us)
