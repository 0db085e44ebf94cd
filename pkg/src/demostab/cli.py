"""Batch front end: demos -> validate -> learn -> certify -> simulate/track.

Configuration is a single JSON document; every stage writes plot-ready CSV and
JSON into the output directory.  Runs are reproducible bit for bit: fixed-step
integration, deterministic tie-breaks, and no randomness anywhere in the
pipeline.

Exit codes: 0 success, 1 usage, 2 validation failure, 3 certification failure,
4 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import certify as certify_mod
from . import demos as demos_mod
from . import embed as embed_mod
from . import systems
from .errors import AffineDependenceError, DivergenceError, DomainError, SingularEmbeddingError
from .learner import LearnedController, build_basis, load_controller, save_controller, \
    simulate_chain_closed_loop
from .multi import MultiController
from .plant import chain_preset, expert_lqr
from .sim import Trajectory

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_CERTIFICATION = 3
EXIT_DIVERGENCE = 4

_CHAIN_KIND = "chain"
_EMBED_KIND = "embedded"
_FLAT3D_KIND = "flat3d"


class _UsageError(Exception):
    pass


def _preset_kind(name: str) -> str:
    if name.startswith("chain") or name == "flat_quad_axis":
        return _CHAIN_KIND
    if name == "ball_beam":
        return _EMBED_KIND
    if name == "flat_quad_3d":
        return _FLAT3D_KIND
    raise _UsageError(f"unknown preset {name!r}")


def _chain_plant(name: str):
    if name == "flat_quad_axis":
        plant = chain_preset(3)
        return plant
    n = int(name.removeprefix("chain"))
    return chain_preset(n)


class RunConfig:
    """Validated view of the JSON configuration document."""

    def __init__(self, data: dict):
        self.data = data
        try:
            self.preset = data["preset"]
            self.kind = _preset_kind(self.preset)
            self.T = float(data["T"])
            self.dt = float(data["dt"])
        except KeyError as exc:
            raise _UsageError(f"config missing required key: {exc}") from exc
        if self.T <= 0 or self.dt <= 0:
            raise _UsageError("T and dt must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise _UsageError(f"T={self.T} must be an integer multiple of dt={self.dt}")
        self.preset_params = dict(data.get("preset_params", {}))
        self.expert_params = dict(data.get("expert", {}))
        self.multi = bool(data.get("multi", False))
        self.feedback = data.get("feedback", "closed_loop")
        if self.feedback not in ("closed_loop", "open_loop"):
            raise _UsageError(f"feedback must be closed_loop or open_loop, got {self.feedback!r}")
        self.hold = data.get("hold")
        self.t_tilde_grid = [float(t) for t in data.get("t_tilde_grid", [])]
        self.simulate = dict(data.get("simulate", {}))
        self.track = dict(data.get("track", {}))
        ics = data.get("initial_conditions", "default")
        self.initial_conditions = ics

    def expert_QR(self, n: int, default_Q=None, default_R=None):
        Q = self.expert_params.get("Q")
        R = self.expert_params.get("R")
        if Q is None:
            Q = default_Q if default_Q is not None else np.eye(n)
        else:
            Q = np.asarray(Q, dtype=float)
            if Q.ndim == 1:
                Q = np.diag(Q)
        R = float(R) if R is not None else (default_R if default_R is not None else 1.0)
        return Q, R

    def ics(self, default: list) -> list:
        if self.initial_conditions == "default":
            return [np.asarray(ic, dtype=float) for ic in default]
        return [np.asarray(ic, dtype=float) for ic in self.initial_conditions]


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = len(columns[0])
    lines = [",".join(header)]
    for k in range(rows):
        lines.append(",".join(_fmt(col[k]) for col in columns))
    path.write_text("\n".join(lines) + "\n")


def _write_columns_json(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    payload = {name: [float(v) for v in col] for name, col in zip(header, columns)}
    _write_json(path, payload)


def _trajectory_tables(traj: Trajectory, state_prefix: str = "z"):
    # Chain presets are in normal form (a = 0, b = 1), so the physical input
    # u equals the chain input v; both columns are emitted per the file contract.
    n = traj.states.shape[1]
    header = ["t"] + [f"{state_prefix}{k + 1}" for k in range(n)]
    cols = [traj.times] + [traj.states[:, k] for k in range(n)]
    u = np.atleast_2d(traj.inputs.T).T
    m = u.shape[1]
    vcols = ["v", "u"] if m == 1 else (
        [f"v{j + 1}" for j in range(m)] + [f"u{j + 1}" for j in range(m)])
    header += vcols
    cols += [u[:, j] for j in range(m)] + [u[:, j] for j in range(m)]
    return header, cols


# ---------------------------------------------------------------------------
# Demo recording (optionally fanned out over a process pool)
# ---------------------------------------------------------------------------


def _record_one_chain(args) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    preset, params, expert_params, ic, T, dt = args
    plant = _chain_plant(preset)
    cfg_Q = expert_params.get("Q")
    Q = np.diag(cfg_Q) if cfg_Q is not None and np.ndim(cfg_Q) == 1 else (
        np.asarray(cfg_Q, dtype=float) if cfg_Q is not None else np.eye(plant.n))
    R = float(expert_params.get("R", 1.0))
    expert = expert_lqr(plant, Q, R)
    u_of_x = expert.state_feedback(plant)
    from .sim import simulate_closed_loop

    traj = simulate_closed_loop(plant, lambda t, x: u_of_x(x), np.asarray(ic, dtype=float), T, dt)
    return traj.times, traj.states, traj.inputs


def _record_one_ball_beam(args) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    preset, params, expert_params, ic, T, dt = args
    plant = systems.ball_beam_plant(
        params.get("b_bar", systems.BALL_BEAM_B), params.get("g_bar", systems.BALL_BEAM_G)
    )
    Q = expert_params.get("Q")
    Q = np.diag(Q) if Q is not None and np.ndim(Q) == 1 else (
        np.asarray(Q, dtype=float) if Q is not None else None)
    R = float(expert_params.get("R", 0.1))
    expert = systems.ball_beam_expert(plant, Q=Q, R=R)
    u_of_x = expert.state_feedback(plant)
    from .sim import simulate_closed_loop

    traj = simulate_closed_loop(plant, lambda t, x: u_of_x(x), np.asarray(ic, dtype=float), T, dt)
    return traj.times, traj.states, traj.inputs


def _record_parallel(worker, argses, jobs: int) -> list[Trajectory]:
    if jobs <= 1:
        results = [worker(a) for a in argses]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, argses))
    return [Trajectory(times=t, states=s, inputs=u) for t, s, u in results]


def _build_demo_set(cfg: RunConfig, jobs: int = 1):
    """Returns (DemonstrationSet, embedded demos or None)."""
    if cfg.kind == _FLAT3D_KIND:
        Q, R = cfg.expert_QR(9, default_Q=40.0 * np.eye(9), default_R=1.0)
        q = float(Q[0, 0])
        dset = systems.flat_quad_demo_set(T=cfg.T, dt=cfg.dt, q=q, r=R)
        return dset, None

    if cfg.kind == _CHAIN_KIND:
        plant = _chain_plant(cfg.preset)
        default_ics = list(np.eye(plant.n))
        ics = cfg.ics(default_ics)
        argses = [(cfg.preset, cfg.preset_params, cfg.expert_params, ic, cfg.T, cfg.dt)
                  for ic in [np.zeros(plant.n)] + ics]
        raw = _record_parallel(_record_one_chain, argses, jobs)
        return demos_mod.to_zv(plant, raw), None

    # ball and beam
    plant, emb_cfg = systems.ball_beam_preset(
        cfg.preset_params.get("b_bar", systems.BALL_BEAM_B),
        cfg.preset_params.get("g_bar", systems.BALL_BEAM_G),
        cfg.preset_params.get("w", systems.BALL_BEAM_W),
    )
    ics = cfg.ics([np.asarray(ic) for ic in systems.BALL_BEAM_ICS])
    argses = [(cfg.preset, cfg.preset_params, cfg.expert_params, ic, cfg.T, cfg.dt)
              for ic in [np.zeros(4)] + ics]
    raw = _record_parallel(_record_one_ball_beam, argses, jobs)
    xi0 = np.asarray(cfg.preset_params.get("xi0", np.zeros(plant.n - 1)), dtype=float)
    embedded = embed_mod.transform_demos(emb_cfg, raw, xi0)
    return embed_mod.embedded_to_demo_set(embedded), embedded


def _embedding_of(cfg: RunConfig):
    _, emb_cfg = systems.ball_beam_preset(
        cfg.preset_params.get("b_bar", systems.BALL_BEAM_B),
        cfg.preset_params.get("g_bar", systems.BALL_BEAM_G),
        cfg.preset_params.get("w", systems.BALL_BEAM_W),
    )
    return emb_cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_demos(cfg: RunConfig, out: Path, jobs: int = 1) -> int:
    try:
        dset, embedded = _build_demo_set(cfg, jobs)
    except DivergenceError as exc:
        print(f"demos: divergence while recording: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    demos_mod.save_demo_set(dset, out / "demo_set.json")
    for i, demo in enumerate(dset.demos):
        demos_mod.save_demo_csv(demo, out / f"demo_{i:02d}.csv")
    if embedded is not None:
        payload = {
            "n": dset.n,
            "w": list(_embedding_of(cfg).w),
            "T": dset.T,
            "dt": dset.dt,
            "demos": [
                {"z": e.z.tolist(), "xi": e.xi.tolist(), "v": e.v.tolist()} for e in embedded
            ],
        }
        _write_json(out / "embedded_demos.json", payload)
    report = demos_mod.validate_affine_independence(dset)
    _write_json(
        out / "validation.json",
        {
            "passed": report.passed,
            "min_sigma": report.min_sigma,
            "argmin_time": report.argmin_time,
            "max_sigma": report.max_sigma,
            "max_condition": report.max_condition,
            "tolerance": report.tolerance,
        },
    )
    if not report.passed:
        print(f"demos: affine-independence validation failed "
              f"(min sigma {report.min_sigma:.3e} at t={report.argmin_time})", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"demos: wrote {dset.M} demonstrations to {out}")
    return EXIT_OK


def _learn_controller(cfg: RunConfig, dset):
    if cfg.multi:
        return MultiController(dset, feedback_mode=cfg.feedback)
    basis = build_basis(dset)
    return LearnedController(basis, A=dset.A, B=dset.B, feedback_mode=cfg.feedback)


def cmd_learn(cfg: RunConfig, out: Path) -> int:
    demo_path = out / "demo_set.json"
    if not demo_path.exists():
        print(f"learn: no demo set at {demo_path}; run the demos stage first", file=sys.stderr)
        return EXIT_USAGE
    dset = demos_mod.load_demo_set(demo_path)
    try:
        ctrl = _learn_controller(cfg, dset)
    except AffineDependenceError as exc:
        print(f"learn: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    cert = certify_mod.certificate(ctrl)
    save_controller(ctrl, out / "controller.json")
    _write_json(out / "certificate.json", cert.to_dict())
    if not cert.verdict:
        grid = cfg.t_tilde_grid or [cfg.T / 8, cfg.T / 4, cfg.T / 2, cfg.T]
        grid = [t for t in grid if t <= dset.T + 1e-9]
        suggestion = certify_mod.find_T_tilde(ctrl, grid)
        hint = (f"; smallest passing horizon on the search grid: {suggestion}"
                if suggestion is not None else "; no passing horizon on the search grid")
        print(f"learn: certificate failed at T={cert.T} "
              f"(max norm {1 - cert.margin:.4f}){hint}", file=sys.stderr)
        return EXIT_CERTIFICATION
    print(f"learn: certificate passed (margin {cert.margin:.4f}); wrote controller to {out}")
    return EXIT_OK


def cmd_certify(cfg: RunConfig, out: Path) -> int:
    ctrl_path = out / "controller.json"
    if not ctrl_path.exists():
        print(f"certify: no controller at {ctrl_path}; run the learn stage first", file=sys.stderr)
        return EXIT_USAGE
    ctrl = load_controller(ctrl_path)
    cert = certify_mod.certificate(ctrl)
    _write_json(out / "certificate.json", cert.to_dict())
    print(f"certify: verdict {'pass' if cert.verdict else 'fail'} "
          f"(max norm {1 - cert.margin:.4f})")
    return EXIT_OK if cert.verdict else EXIT_CERTIFICATION


def _check_certificate(out: Path, force: bool, stage: str) -> Optional[int]:
    cert_path = out / "certificate.json"
    if not cert_path.exists():
        print(f"{stage}: no certificate at {cert_path}; run the learn stage first",
              file=sys.stderr)
        return EXIT_USAGE
    cert = json.loads(cert_path.read_text())
    if cert["verdict"] != "pass" and not force:
        print(f"{stage}: certificate verdict is {cert['verdict']!r}; "
              "pass --force to simulate anyway", file=sys.stderr)
        return EXIT_CERTIFICATION
    return None


def cmd_simulate(cfg: RunConfig, out: Path, force: bool = False) -> int:
    failed = _check_certificate(out, force, "simulate")
    if failed is not None:
        return failed
    ctrl = load_controller(out / "controller.json")
    duration = float(cfg.simulate.get("duration", 5.0 * cfg.T))

    try:
        if cfg.kind == _EMBED_KIND:
            emb_cfg = _embedding_of(cfg)
            x0 = np.asarray(cfg.simulate.get("x0", [6.0, 0.0, 0.345, 0.0]), dtype=float)
            xi0 = np.asarray(cfg.simulate.get("xi0", np.zeros(emb_cfg.n - 1)), dtype=float)
            traj = embed_mod.simulate_embedded_closed_loop(
                emb_cfg, ctrl, x0, xi0, duration, cfg.dt
            )
            n, q = traj.x.shape[1], traj.xi.shape[1]
            header = (["t"] + [f"x{k + 1}" for k in range(n)]
                      + [f"xi{k + 1}" for k in range(q)] + ["v", "u"])
            cols = ([traj.times] + [traj.x[:, k] for k in range(n)]
                    + [traj.xi[:, k] for k in range(q)] + [traj.v, traj.u])
            _write_csv(out / "trajectory.csv", header, cols)
            _write_columns_json(out / "trajectory.json", header, cols)
            norms = np.linalg.norm(traj.x, axis=1)
            times = traj.times
        else:
            z0 = np.asarray(cfg.simulate.get("x0", np.zeros(ctrl.n)), dtype=float)
            traj = simulate_chain_closed_loop(ctrl, z0, duration, cfg.dt)
            header, cols = _trajectory_tables(traj)
            _write_csv(out / "trajectory.csv", header, cols)
            _write_columns_json(out / "trajectory.json", header, cols)
            norms = np.linalg.norm(traj.states, axis=1)
            times = traj.times
    except (DivergenceError, DomainError, SingularEmbeddingError) as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE

    steps_per_T = int(round(cfg.T / cfg.dt))
    samples = norms[:: steps_per_T]
    ratios = [
        samples[p + 1] / samples[p] if samples[p] > 0 else 0.0
        for p in range(len(samples) - 1)
    ]
    _write_json(
        out / "summary.json",
        {
            "final_norm": float(norms[-1]),
            "final_time": float(times[-1]),
            "decay_ratio_per_period": ratios,
            "min_norm": float(norms.min()),
        },
    )
    print(f"simulate: final state norm {norms[-1]:.3e} at t={times[-1]}")
    return EXIT_OK


def cmd_track(cfg: RunConfig, out: Path, force: bool = False) -> int:
    if cfg.kind == _EMBED_KIND:
        print("track: reference tracking is wired for the chain presets only",
              file=sys.stderr)
        return EXIT_USAGE
    failed = _check_certificate(out, force, "track")
    if failed is not None:
        return failed
    ctrl = load_controller(out / "controller.json")
    f = float(cfg.track.get("f", 0.1))
    duration = float(cfg.track.get("duration", 2.0 / f))
    if cfg.kind == _FLAT3D_KIND:
        ref = systems.figure_eight(f)
    else:
        ref = systems.figure_eight_axis(f, int(cfg.track.get("axis", 0)))
        if ctrl.n != 3:
            print("track: the axis reference needs a 3-state chain", file=sys.stderr)
            return EXIT_USAGE
    z0 = np.asarray(cfg.track.get("z0", np.zeros(ctrl.n)), dtype=float)

    try:
        res = systems.simulate_tracking(ctrl, ref, z0, duration, cfg.dt)
    except DivergenceError as exc:
        print(f"track: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE

    n, m = res.z.shape[1], res.v.shape[1]
    header = (["t"] + [f"z{k + 1}" for k in range(n)] + [f"zr{k + 1}" for k in range(n)]
              + [f"v{j + 1}" for j in range(m)] + [f"u{j + 1}" for j in range(m)]
              + ["err_norm"])
    cols = ([res.times] + [res.z[:, k] for k in range(n)]
            + [res.z_ref[:, k] for k in range(n)]
            + [res.v[:, j] for j in range(m)] + [res.u[:, j] for j in range(m)]
            + [res.error_norm])
    _write_csv(out / "tracking.csv", header, cols)

    period = 1.0 / f
    first = res.error_norm[res.times <= period]
    after = res.error_norm[res.times > period]
    _write_json(
        out / "tracking_summary.json",
        {
            "max_error_first_period": float(first.max()),
            "max_error_after_first_period": float(after.max()) if len(after) else None,
            "final_error": float(res.error_norm[-1]),
            "reference": ref.description,
        },
    )
    print(f"track: final error {res.error_norm[-1]:.3e} over {duration} s")
    return EXIT_OK


def cmd_all(cfg: RunConfig, out: Path, jobs: int = 1, force: bool = False) -> int:
    for stage in (lambda: cmd_demos(cfg, out, jobs), lambda: cmd_learn(cfg, out)):
        code = stage()
        if code != EXIT_OK:
            return code
    code = cmd_simulate(cfg, out, force)
    if code != EXIT_OK:
        return code
    if cfg.track:
        return cmd_track(cfg, out, force)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def main(argv: Optional[list[str]] = None) -> int:
    parser = _Parser(prog="demostab", description=__doc__)
    parser.add_argument("command",
                        choices=["demos", "learn", "certify", "simulate", "track", "all"])
    parser.add_argument("--config", required=True, help="path to the JSON configuration")
    parser.add_argument("--out", default=None, help="output directory (default: config's dir)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes for independent simulations")
    parser.add_argument("--force", action="store_true",
                        help="simulate/track even if the certificate failed")
    try:
        args = parser.parse_args(argv)
        config_path = Path(args.config)
        if not config_path.exists():
            raise _UsageError(f"config file not found: {config_path}")
        cfg = RunConfig(json.loads(config_path.read_text()))
        out = Path(args.out) if args.out else config_path.parent
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "demos":
            return cmd_demos(cfg, out, args.jobs)
        if args.command == "learn":
            return cmd_learn(cfg, out)
        if args.command == "certify":
            return cmd_certify(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.force)
        if args.command == "track":
            return cmd_track(cfg, out, args.force)
        return cmd_all(cfg, out, args.jobs, args.force)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"usage error: bad config JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
