"""Benchmark presets: flat quadrotor and ball-and-beam, plus reference tracking.

The quadrotor is modeled directly in flat coordinates, where the position and
its derivatives z = (p, dp, ddp) form three decoupled triple integrators per
axis and the learned control acts on the jerk; the thrust/attitude back-map is
abstracted to b = 1 at desk scale.  The ball-and-beam is the classical
non-feedback-linearizable four-state model and goes through the
integrator-chain embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .demos import Demonstration, DemonstrationSet
from .embed import EmbeddingConfig
from .learner import simulate_chain_batch
from .plant import ExpertController, PlantModel, lqr_gain
from .sim import time_grid

# ---------------------------------------------------------------------------
# References
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reference:
    """Smooth reference in chain coordinates with its feedforward input.

    z_of_t returns the stacked reference state (successive derivatives of the
    tracked output); v_of_t returns the next derivative, which feeds forward
    into the tracking law.
    """

    z_of_t: Callable[[float], np.ndarray]
    v_of_t: Callable[[float], np.ndarray]
    n: int
    m: int
    description: str = "reference"


def figure_eight(f: float) -> Reference:
    """Figure-of-eight position reference for the flat quadrotor.

    p(t) = (sin(4 pi f t), sin(2 pi f t), 0.1 sin(2 pi f t) + 0.7), stacked
    with its first and second derivatives into a 9-state reference; the
    feedforward is the jerk.
    """
    if f <= 0:
        raise ValueError(f"frequency must be positive, got {f}")
    a = 4.0 * math.pi * f
    b = 2.0 * math.pi * f

    def z_of_t(t: float) -> np.ndarray:
        p = np.array([math.sin(a * t), math.sin(b * t), 0.1 * math.sin(b * t) + 0.7])
        dp = np.array([a * math.cos(a * t), b * math.cos(b * t), 0.1 * b * math.cos(b * t)])
        ddp = np.array([-a * a * math.sin(a * t), -b * b * math.sin(b * t),
                        -0.1 * b * b * math.sin(b * t)])
        return np.concatenate([p, dp, ddp])

    def v_of_t(t: float) -> np.ndarray:
        return np.array([-a ** 3 * math.cos(a * t), -b ** 3 * math.cos(b * t),
                         -0.1 * b ** 3 * math.cos(b * t)])

    return Reference(z_of_t=z_of_t, v_of_t=v_of_t, n=9, m=3,
                     description=f"figure eight at {f} Hz")


def figure_eight_axis(f: float, axis: int = 0) -> Reference:
    """Single-axis slice of the figure-of-eight (a 3-state chain reference)."""
    ref = figure_eight(f)

    def z_of_t(t: float) -> np.ndarray:
        z = ref.z_of_t(t)
        return z[[axis, 3 + axis, 6 + axis]]

    def v_of_t(t: float) -> np.ndarray:
        return ref.v_of_t(t)[[axis]]

    return Reference(z_of_t=z_of_t, v_of_t=v_of_t, n=3, m=1,
                     description=f"figure eight axis {axis} at {f} Hz")


def setpoint(z_fixed: np.ndarray, m: int = 1) -> Reference:
    """Constant reference with zero feedforward (plain stabilization target)."""
    z_fixed = np.asarray(z_fixed, dtype=float)
    return Reference(
        z_of_t=lambda t: z_fixed.copy(),
        v_of_t=lambda t: np.zeros(m),
        n=len(z_fixed),
        m=m,
        description="setpoint",
    )


def track(ctrl, ref: Reference, b_of_z: Callable[[np.ndarray], float], t: float, z: np.ndarray):
    """Tracking input u = (v_ref(t) + kappa_hat(t, z - z_ref(t))) / b(z)."""
    from .errors import SingularDecouplingError

    z = np.asarray(z, dtype=float)
    e = z - ref.z_of_t(t)
    v = ctrl(t, e)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    b = float(b_of_z(z))
    if abs(b) < 1e-9:
        raise SingularDecouplingError(f"b(z) = {b:.3e} at z={z}")
    u = (ref.v_of_t(t) + v) / b
    return float(u[0]) if ref.m == 1 else u


@dataclass(frozen=True)
class TrackingResult:
    times: np.ndarray
    z: np.ndarray
    z_ref: np.ndarray
    error_norm: np.ndarray
    v: np.ndarray
    u: np.ndarray


def simulate_tracking(ctrl, ref: Reference, z0: np.ndarray, duration: float, dt: float,
                      b_of_z: Callable[[np.ndarray], float] = lambda z: 1.0) -> TrackingResult:
    """Closed-loop trajectory under the tracking law.

    Because the reference satisfies the same chain dynamics with input v_ref,
    the tracking error obeys the plain stabilization loop; the error system is
    integrated with interval anchoring and the reference added back.
    """
    e0 = np.asarray(z0, dtype=float) - ref.z_of_t(0.0)
    times, e_states, e_inputs = simulate_chain_batch(ctrl, e0, duration, dt)
    e_states, e_inputs = e_states[:, :, 0], e_inputs[:, :, 0]
    z_ref = np.stack([ref.z_of_t(t) for t in times])
    v_ref = np.stack([ref.v_of_t(t) for t in times])
    z = e_states + z_ref
    b_vals = np.array([float(b_of_z(zk)) for zk in z])
    u = (v_ref + e_inputs) / b_vals[:, None]
    return TrackingResult(
        times=times,
        z=z,
        z_ref=z_ref,
        error_norm=np.linalg.norm(e_states, axis=1),
        v=e_inputs,
        u=u,
    )


# ---------------------------------------------------------------------------
# Flat quadrotor (9 states, 3 jerk inputs)
# ---------------------------------------------------------------------------


def flat_quad_pair() -> tuple[np.ndarray, np.ndarray]:
    """Chain matrices of the stacked (p, dp, ddp) flat model."""
    shift = np.diag(np.ones(2), 1)
    A = np.kron(shift, np.eye(3))
    B = np.kron(np.array([[0.0], [0.0], [1.0]]), np.eye(3))
    return A, B


def flat_quad_gain(q: float = 40.0, r: float = 1.0) -> np.ndarray:
    """LQR jerk gain (3 x 9) of the synthetic quadrotor expert."""
    A, B = flat_quad_pair()
    return lqr_gain(A, B, q * np.eye(9), r * np.eye(3))


def flat_quad_demo_set(T: float = 2.0, dt: float = 1e-3,
                       q: float = 40.0, r: float = 1.0) -> DemonstrationSet:
    """Expert demonstrations from the nine unit-vector starts plus the trivial one.

    The flat model is linear, so the closed loop is propagated exactly with
    the matrix exponential of one grid step.
    """
    A, B = flat_quad_pair()
    K = flat_quad_gain(q, r)
    A_cl = A - B @ K
    grid = time_grid(0.0, T, dt)
    E = expm(A_cl * dt)
    starts = np.hstack([np.zeros((9, 1)), np.eye(9)])  # trivial first
    states = np.empty((len(grid), 9, 10))
    states[0] = starts
    for k in range(1, len(grid)):
        states[k] = E @ states[k - 1]
    vs = -np.einsum("ij,gjk->gik", K, states)
    demos = tuple(
        Demonstration(times=grid, z=states[:, :, i], v=vs[:, :, i]) for i in range(10)
    )
    return DemonstrationSet(demos=demos, A=A, B=B)


# ---------------------------------------------------------------------------
# Ball and beam (4 states, 1 input, embedded)
# ---------------------------------------------------------------------------

BALL_BEAM_B = 0.7143
BALL_BEAM_G = 9.81
BALL_BEAM_W = (1.0, 3.0, 3.0)
# Initial conditions of the recorded expert runs (plus the trivial solution).
BALL_BEAM_ICS = (
    (1.0, 0.0, 0.0, 0.0),
    (0.0, 1.0, 0.0, 0.0),
    (0.0, 0.0, math.pi / 8.0, 0.0),
    (0.0, 0.0, 0.0, 10.0),
)


def ball_beam_plant(b_bar: float = BALL_BEAM_B, g_bar: float = BALL_BEAM_G) -> PlantModel:
    """Ball on a rotating beam: x = (r, dr, phi, omega), u = beam torque rate.

    ddr = b (r omega^2 - g sin phi), dphi = omega, domega = u, output h = r.
    The output has relative degree 3 < n away from the axis (L_g L_f^2 h =
    2 b r omega), so the plant is not feedback linearizable and is handled by
    the embedding pipeline.
    """
    if b_bar <= 0 or g_bar <= 0:
        raise ValueError("b_bar and g_bar must be positive")
    b, g = float(b_bar), float(g_bar)

    def f(x):
        return np.array([x[1], b * (x[0] * x[3] ** 2 - g * math.sin(x[2])), x[3], 0.0])

    def g_field(x):
        return np.array([0.0, 0.0, 0.0, 1.0])

    lie_f_h = (
        lambda x: float(x[0]),
        lambda x: float(x[1]),
        lambda x: b * (x[0] * x[3] ** 2 - g * math.sin(x[2])),
        lambda x: b * (x[1] * x[3] ** 2 - g * x[3] * math.cos(x[2])),
        lambda x: b * b * x[3] ** 2 * (x[0] * x[3] ** 2 - g * math.sin(x[2]))
        + b * g * x[3] ** 2 * math.sin(x[2]),
    )
    lie_g_lie_f_h = (
        lambda x: 0.0,
        lambda x: 0.0,
        lambda x: 2.0 * b * x[0] * x[3],
        lambda x: 2.0 * b * x[1] * x[3] - b * g * math.cos(x[2]),
    )
    return PlantModel(
        n=4,
        f=f,
        g=g_field,
        h=lambda x: float(x[0]),
        lie_f_h=lie_f_h,
        lie_g_lie_f_h=lie_g_lie_f_h,
        domain_check=lambda x: bool(np.all(np.isfinite(x)) and abs(x[2]) < math.pi / 2),
        relative_degree=None,
        name="ball_beam",
    )


def ball_beam_preset(
    b_bar: float = BALL_BEAM_B,
    g_bar: float = BALL_BEAM_G,
    w: Sequence[float] = BALL_BEAM_W,
) -> tuple[PlantModel, EmbeddingConfig]:
    """Ball-and-beam plant together with its integrator-chain embedding."""
    plant = ball_beam_plant(b_bar, g_bar)
    return plant, EmbeddingConfig(plant=plant, w=tuple(w))


def ball_beam_expert(
    plant: PlantModel,
    Q: Optional[np.ndarray] = None,
    R: float = 0.1,
) -> ExpertController:
    """Synthetic smooth expert: LQR on the origin linearization.

    The default weights keep the recorded runs from the benchmark initial
    conditions inside |phi| < pi/2 (the omega = 10 start is the binding one)
    while leaving the position response gentle enough that the learned
    controller, which amplifies the demonstrations affinely, stays inside the
    beam-angle domain from far-out starts as well.
    """
    bg = -plant.lie_g_lie_f_h[3](np.zeros(4))  # L_g L_f^3 h(0) = -b*g
    A_lin = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -bg, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    B_lin = np.array([[0.0], [0.0], [0.0], [1.0]])
    if Q is None:
        Q = np.diag([0.2, 0.5, 1.0, 2.0])
    K = lqr_gain(A_lin, B_lin, Q, np.atleast_2d(float(R)))[0]

    def kappa(x: np.ndarray) -> float:
        return float(-K @ np.asarray(x, dtype=float))

    return ExpertController(kappa=kappa, coords="x",
                            description=f"ball-beam lqr expert K={np.array2string(K)}")
