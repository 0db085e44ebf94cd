"""Fixed-step RK4 integration and closed-loop simulation.

All grids are deterministic: the step dt is fixed and the final step is
shortened, if necessary, to land exactly on the requested end time.  That
keeps demonstration alignment and file outputs reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError
from .plant import PlantModel

# Abort integration once the state norm passes this bound.
DIVERGENCE_NORM = 1e6
MAX_STEPS = int(1e8)


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution pair (x, u) on a time grid.

    times, states and inputs have the same leading length; states is
    (N, n) and inputs is (N,) for scalar-input systems or (N, m) otherwise.
    The grid is uniform with step dt except possibly for a shortened final
    interval.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.states) or len(self.times) != len(self.inputs):
            raise ValueError("times, states and inputs must have equal length")
        if len(self.times) < 2:
            raise ValueError("a trajectory needs at least two samples")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def state_at(self, t: float) -> np.ndarray:
        """Linear interpolation of the state at time t within the grid."""
        t = float(t)
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f"time {t} outside trajectory range "
                             f"[{self.times[0]}, {self.times[-1]}]")
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1,
                        0, len(self.times) - 2))
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.states[i] + w * self.states[i + 1]


def _rk4_step(rhs, t, x, h):
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def time_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    """Grid t0 + k*dt, with the last point snapped exactly to t1."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t1 <= t0:
        raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
    span = t1 - t0
    n_full = int(np.floor(span / dt + 1e-9))
    if n_full > MAX_STEPS:
        raise ValueError(f"{n_full} steps exceed the {MAX_STEPS:.0e} step budget")
    times = t0 + dt * np.arange(n_full + 1)
    if t1 - times[-1] > 1e-9 * max(1.0, abs(t1)):
        times = np.append(times, t1)
    else:
        times[-1] = t1
    return times


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    x0: np.ndarray,
    t0: float,
    t1: float,
    dt: float,
) -> Trajectory:
    """Classical RK4 solution of dx/dt = rhs(t, x) on a fixed grid.

    Raises DivergenceError (carrying the offending time) if the state becomes
    non-finite or its norm exceeds the runaway bound.
    """
    times = time_grid(t0, t1, dt)
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((len(times), x.size))
    states[0] = x
    for k in range(len(times) - 1):
        h = times[k + 1] - times[k]
        x = _rk4_step(rhs, times[k], x, h)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            raise DivergenceError(
                f"state diverged at t={times[k + 1]:.6f}", time=float(times[k + 1])
            )
        states[k + 1] = x
    inputs = np.zeros(len(times))
    return Trajectory(times=times, states=states, inputs=inputs)


def simulate_closed_loop(
    plant: PlantModel,
    controller: Callable[[float, np.ndarray], float],
    x0: np.ndarray,
    duration: float,
    dt: float,
    hold: Optional[float] = None,
) -> Trajectory:
    """Simulate dx/dt = f(x) + g(x) u under u = controller(t, x).

    Without hold, the controller is evaluated at every RK4 stage, i.e. the
    loop is closed continuously up to the integration error.  With hold, the
    input is sampled once per hold window and kept constant across it
    (emulated sampled-data control); hold must be an integer multiple of dt.
    Inputs are recorded per grid point as the value in effect on [t_k, t_k+dt).
    """
    x0 = np.asarray(x0, dtype=float)
    plant.require_in_domain(x0)
    if hold is not None:
        ratio = hold / dt
        if hold <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(f"hold={hold} must be a positive integer multiple of dt={dt}")
        steps_per_hold = int(round(ratio))

    times = time_grid(0.0, duration, dt)
    x = x0.copy()
    states = np.empty((len(times), x.size))
    inputs = np.empty(len(times))
    states[0] = x

    def check(xk, tk):
        if not np.all(np.isfinite(xk)) or np.linalg.norm(xk) > DIVERGENCE_NORM:
            raise DivergenceError(f"state diverged at t={tk:.6f}", time=float(tk))
        if not plant.domain_check(xk):
            raise DivergenceError(
                f"state left the domain of {plant.name} at t={tk:.6f}", time=float(tk)
            )

    if hold is None:
        def rhs(t, xk):
            return plant.rhs(xk, controller(t, xk))

        for k in range(len(times) - 1):
            inputs[k] = controller(times[k], states[k])
            h = times[k + 1] - times[k]
            x = _rk4_step(rhs, times[k], x, h)
            check(x, times[k + 1])
            states[k + 1] = x
        inputs[-1] = controller(times[-1], states[-1])
    else:
        u_held = 0.0
        for k in range(len(times) - 1):
            if k % steps_per_hold == 0:
                u_held = float(controller(times[k], states[k]))
            inputs[k] = u_held
            h = times[k + 1] - times[k]
            x = _rk4_step(lambda t, xk: plant.rhs(xk, u_held), times[k], x, h)
            check(x, times[k + 1])
            states[k + 1] = x
        inputs[-1] = u_held

    return Trajectory(times=times, states=states, inputs=inputs)
