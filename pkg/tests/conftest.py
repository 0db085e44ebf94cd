"""Shared fixtures: analytic and recorded demonstration sets.

The double-integrator set is built from the closed-form flow so learner and
certificate tests compare against exact values; the ball-and-beam and
quadrotor fixtures run the real recording pipelines once per session.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import DOUBLE_INT_K, double_int_flow

from demostab.demos import Demonstration, DemonstrationSet, record_expert
from demostab.embed import embedded_to_demo_set, transform_demos
from demostab.learner import LearnedController, build_basis
from demostab.plant import brunovsky_pair, chain_preset
from demostab.sim import time_grid
from demostab.systems import (
    BALL_BEAM_ICS,
    ball_beam_expert,
    ball_beam_preset,
    flat_quad_demo_set,
)


def analytic_double_int_set(T: float = 2.0, dt: float = 1e-3,
                            starts=None) -> DemonstrationSet:
    """LQR (K = [1, 2]) demonstrations sampled from the closed-form flow."""
    grid = time_grid(0.0, T, dt)
    if starts is None:
        starts = [np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    demos = []
    for z0 in starts:
        z = np.stack([double_int_flow(t) @ z0 for t in grid])
        v = -(z @ DOUBLE_INT_K)
        demos.append(Demonstration(times=grid, z=z, v=v))
    pair = brunovsky_pair(2)
    return DemonstrationSet(demos=tuple(demos), A=pair.A, B=pair.B)


@pytest.fixture(scope="session")
def double_int_set() -> DemonstrationSet:
    return analytic_double_int_set()


@pytest.fixture(scope="session")
def double_int_ctrl(double_int_set) -> LearnedController:
    dset = double_int_set
    return LearnedController(build_basis(dset), A=dset.A, B=dset.B)


@pytest.fixture(scope="session")
def multi_point_set() -> DemonstrationSet:
    """Five demonstrations of the same linear closed loop (M > n+1 case)."""
    starts = [np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0]),
              np.array([1.0, 1.0]), np.array([-1.0, 0.5])]
    return analytic_double_int_set(starts=starts)


@pytest.fixture(scope="session")
def chain2_recorded() -> DemonstrationSet:
    """Demonstrations recorded through the actual simulation pipeline."""
    from demostab.demos import to_zv
    from demostab.plant import expert_lqr

    plant = chain_preset(2)
    expert = expert_lqr(plant, np.diag([1.0, 2.0]), 1.0)  # gain exactly [1, 2]
    raw = record_expert(plant, expert, [np.array([1.0, 0.0]), np.array([0.0, 1.0])],
                        T=2.0, dt=1e-3)
    return to_zv(plant, raw)


@pytest.fixture(scope="session")
def ball_beam_fixture():
    """Full ball-and-beam pipeline at the benchmark parameters (cached)."""
    plant, cfg = ball_beam_preset()
    expert = ball_beam_expert(plant)
    raw = record_expert(plant, expert, [np.asarray(ic) for ic in BALL_BEAM_ICS],
                        T=8.0, dt=1e-3)
    embedded = transform_demos(cfg, raw)
    eset = embedded_to_demo_set(embedded)
    return {"plant": plant, "cfg": cfg, "raw": raw, "embedded": embedded, "set": eset}


@pytest.fixture(scope="session")
def quad_set() -> DemonstrationSet:
    return flat_quad_demo_set(T=2.0, dt=1e-3)
