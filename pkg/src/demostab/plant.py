"""Plant models with the Lie-derivative data needed for feedback linearization.

A plant is a single-input control-affine system  dx/dt = f(x) + g(x) u  with a
scalar output h.  Instead of differentiating symbolically, each preset carries
hand-coded closed-form evaluators for the iterated Lie derivatives L_f^k h and
L_g L_f^k h; these are all the quantities the coordinate change and the
decoupling feedback need.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_continuous_are

from .errors import DomainError, SingularDecouplingError

# Below this magnitude the decoupling term b(z) is treated as zero.
DECOUPLING_TOL = 1e-9


@dataclass(frozen=True)
class BrunovskyPair:
    """Shift matrix A and last-unit-vector input matrix B of an integrator chain."""

    A: np.ndarray
    B: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]


def brunovsky_pair(n: int) -> BrunovskyPair:
    """Return the (A, B) pair of a chain of n integrators.

    A has ones on the superdiagonal and zeros elsewhere; B is the last unit
    vector, shaped (n, 1).
    """
    if n < 1:
        raise ValueError(f"chain length must be >= 1, got {n}")
    A = np.diag(np.ones(n - 1), k=1)
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    return BrunovskyPair(A=A, B=B)


@dataclass(frozen=True)
class PlantModel:
    """Single-input plant with closed-form Lie-derivative evaluators.

    Attributes:
        n: state dimension.
        f: drift vector field, maps (n,) -> (n,).
        g: input vector field, maps (n,) -> (n,).
        h: scalar output map with h(0) = 0.
        lie_f_h: evaluators for L_f^k h, k = 0..n (n + 1 callables).
        lie_g_lie_f_h: evaluators for L_g L_f^k h, k = 0..n-1 (n callables).
        domain_check: predicate for membership in the open set U.
        relative_degree: n for feedback-linearizable presets, None otherwise.
        inverse_phi: inverse of the linearizing coordinate change, if closed
            form is available (used only by tests).
    """

    n: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], float]
    lie_f_h: Sequence[Callable[[np.ndarray], float]]
    lie_g_lie_f_h: Sequence[Callable[[np.ndarray], float]]
    domain_check: Callable[[np.ndarray], bool] = field(default=lambda x: True)
    relative_degree: Optional[int] = None
    inverse_phi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "plant"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"state dimension must be >= 1, got {self.n}")
        if len(self.lie_f_h) != self.n + 1:
            raise ValueError(
                f"need {self.n + 1} evaluators L_f^k h (k=0..n), got {len(self.lie_f_h)}"
            )
        if len(self.lie_g_lie_f_h) != self.n:
            raise ValueError(
                f"need {self.n} evaluators L_g L_f^k h (k=0..n-1), got {len(self.lie_g_lie_f_h)}"
            )

    def require_in_domain(self, x: np.ndarray) -> None:
        if not self.domain_check(np.asarray(x, dtype=float)):
            raise DomainError(f"state {np.asarray(x)} is outside the domain of {self.name}")

    def rhs(self, x: np.ndarray, u: float) -> np.ndarray:
        """Evaluate dx/dt = f(x) + g(x) u."""
        x = np.asarray(x, dtype=float)
        return self.f(x) + self.g(x) * float(u)


def feedback_linearize(plant: PlantModel, x: np.ndarray) -> np.ndarray:
    """Map a state to linearizing coordinates z_k = L_f^{k-1} h(x), k = 1..n."""
    x = np.asarray(x, dtype=float)
    plant.require_in_domain(x)
    return np.array([plant.lie_f_h[k](x) for k in range(plant.n)], dtype=float)


def linearizing_input(plant: PlantModel, x: np.ndarray, v: float) -> float:
    """Physical input realizing the chain input v at state x.

    Computes u = (v - L_f^n h(x)) / (L_g L_f^{n-1} h(x)), the feedback that
    renders the output dynamics a chain of n integrators driven by v.
    """
    x = np.asarray(x, dtype=float)
    plant.require_in_domain(x)
    b = plant.lie_g_lie_f_h[plant.n - 1](x)
    if abs(b) < DECOUPLING_TOL:
        raise SingularDecouplingError(
            f"decoupling term {b:.3e} below tolerance at x={x} for {plant.name}"
        )
    a = plant.lie_f_h[plant.n](x)
    return (float(v) - a) / b


@dataclass(frozen=True)
class ExpertController:
    """Smooth state feedback used to generate demonstrations.

    kappa maps a state to a scalar input; coords records whether that state is
    the physical x or the linearizing z.  Stabilizing experts satisfy
    kappa(0) = 0.
    """

    kappa: Callable[[np.ndarray], float]
    coords: str = "x"
    description: str = "expert"

    def __post_init__(self):
        if self.coords not in ("x", "z"):
            raise ValueError(f"coords must be 'x' or 'z', got {self.coords!r}")

    def state_feedback(self, plant: PlantModel) -> Callable[[np.ndarray], float]:
        """Return the expert as a map from plant state x to physical input u."""
        if self.coords == "x":
            return lambda x: float(self.kappa(np.asarray(x, dtype=float)))
        return lambda x: linearizing_input(
            plant, x, self.kappa(feedback_linearize(plant, x))
        )


def lqr_gain(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Infinite-horizon LQR gain K, shaped (m, n), for dx/dt = Ax + Bu."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not np.allclose(Q, Q.T) or np.any(np.linalg.eigvalsh(Q) <= 0):
        raise ValueError("Q must be symmetric positive definite")
    if np.any(np.linalg.eigvalsh(R) <= 0):
        raise ValueError("R must be positive definite")
    try:
        P = solve_continuous_are(A, B, Q, R)
    except Exception as exc:  # scipy raises LinAlgError subclasses
        raise ArithmeticError(f"Riccati solve failed: {exc}") from exc
    return np.linalg.solve(R, B.T @ P)


def expert_lqr(plant: PlantModel, Q: np.ndarray, R: float | np.ndarray) -> ExpertController:
    """Synthetic smooth expert: LQR in the linearizing coordinates.

    The gain K solves the algebraic Riccati equation for the Brunovsky pair of
    the plant's chain, so the expert is kappa(z) = -K z; composed with
    linearizing_input it is a smooth stabilizing state feedback.
    """
    pair = brunovsky_pair(plant.n)
    K = lqr_gain(pair.A, pair.B, Q, np.atleast_2d(np.asarray(R, dtype=float)))
    K = K[0]

    def kappa(z: np.ndarray) -> float:
        return float(-K @ np.asarray(z, dtype=float))

    return ExpertController(
        kappa=kappa, coords="z", description=f"lqr expert K={np.array2string(K)}"
    )


def chain_preset(n: int) -> PlantModel:
    """Chain of n integrators: already in normal form, h(x) = x_1, U = R^n."""
    if n < 1:
        raise ValueError(f"chain length must be >= 1, got {n}")

    def f(x):
        dx = np.zeros(n)
        dx[:-1] = x[1:]
        return dx

    def g(x):
        e = np.zeros(n)
        e[-1] = 1.0
        return e

    def lie_f(k):
        if k < n:
            return lambda x, k=k: float(x[k])
        return lambda x: 0.0

    def lie_g_lie_f(k):
        if k < n - 1:
            return lambda x: 0.0
        return lambda x: 1.0

    return PlantModel(
        n=n,
        f=f,
        g=g,
        h=lambda x: float(x[0]),
        lie_f_h=tuple(lie_f(k) for k in range(n + 1)),
        lie_g_lie_f_h=tuple(lie_g_lie_f(k) for k in range(n)),
        domain_check=lambda x: bool(np.all(np.isfinite(x))),
        relative_degree=n,
        inverse_phi=lambda z: np.asarray(z, dtype=float).copy(),
        name=f"chain{n}",
    )
