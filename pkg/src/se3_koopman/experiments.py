"""End-to-end experiments: data generation, training, validation, tracking.

Randomness: every trajectory ``i`` of a trajectory set draws from
``SeedSequence(spec.seed).spawn(n_traj)[i]``, split into one stream for the
initial state and one for the inputs, each fed to ``PCG64``. Results are
therefore independent of worker count and scheduling.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import edmd, schemas
from .config import ExperimentConfig, InitialStateSpread, ReferenceSpec, TrajectorySpec
from .dynamics import QuadParams, QuadState, Trajectory, sample_random_inputs, simulate
from .edmd import STATE_GROUPS, KoopmanModel
from .errors import EmptyDatasetError, Se3KoopmanError
from .lift import LiftConfig
from .mpc import ClosedLoopResult, run_closed_loop
from .se3 import so3_exp, vectorize

log = logging.getLogger(__name__)

METRIC_ROWS = ("p", "v", "Theta", "omega", "average")


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


# -- data generation ---------------------------------------------------------


def sample_initial_state(spread: InitialStateSpread, rng: np.random.Generator) -> QuadState:
    u = rng.uniform(-1.0, 1.0, size=(4, 3))
    return QuadState(
        spread.position * u[0],
        spread.velocity * u[1],
        so3_exp(spread.attitude * u[2]),
        spread.rate * u[3],
    )


def excitation_mean(mean, gravity_feedforward: bool, params: QuadParams) -> np.ndarray:
    mean = np.asarray(mean, dtype=float).copy()
    if gravity_feedforward:
        mean[0] += params.hover_thrust
    return mean


def _one_trajectory(args):
    child, spread, mean, cov, steps, params, t_s = args
    init_seq, input_seq = child.spawn(2)
    x0 = sample_initial_state(spread, np.random.Generator(np.random.PCG64(init_seq)))
    inputs = sample_random_inputs(steps, mean, cov, input_seq)
    return simulate(x0, inputs, params, t_s)


def generate_trajectories(spec: TrajectorySpec, params: QuadParams, workers: int = 1) -> list:
    mean = excitation_mean(spec.input_mean, spec.gravity_feedforward, params)
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_traj)
    jobs = [(c, spec.initial_state, mean, spec.input_cov, spec.steps, params, spec.t_s) for c in children]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one_trajectory, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [_one_trajectory(j) for j in jobs]


def generate_reference(spec: ReferenceSpec, params: QuadParams, n_steps: int, t_s: float) -> Trajectory:
    """Reference obtained by driving the plant with random inputs."""
    mean = excitation_mean(spec.input_mean, spec.gravity_feedforward, params)
    init_seq, input_seq = np.random.SeedSequence(spec.seed).spawn(2)
    x0 = sample_initial_state(spec.initial_state, np.random.Generator(np.random.PCG64(init_seq)))
    return simulate(x0, sample_random_inputs(n_steps, mean, spec.input_cov, input_seq), params, t_s)


# -- training ----------------------------------------------------------------


def train_model(cfg: ExperimentConfig, trajs: list | None = None) -> tuple:
    if trajs is None:
        trajs = generate_trajectories(cfg.training, cfg.quad, cfg.workers)
    if not trajs:
        raise EmptyDatasetError("training config produced no trajectories (n_traj = 0)")
    lift_cfg = LiftConfig(cfg.lift_order)
    data = edmd.build_dataset(trajs, lift_cfg)
    model = edmd.fit(data)
    report = {
        "lifted_dim": model.dim,
        "lift_order": model.p,
        "t_s": model.t_s,
        "n_trajectories": len(trajs),
        "n_snapshots": len(data),
        **{k: model.diagnostics[k] for k in ("residual_sq", "relative_residual", "g2_rank", "pinv_rtol")},
    }
    return model, report


# -- validation --------------------------------------------------------------


def trajectory_errors(model: KoopmanModel, truth: Trajectory) -> dict:
    pred = edmd.predict_rollout(model, truth.states[0], truth.inputs)
    errs = {g: edmd.nrmse(pred, truth, g) for g in STATE_GROUPS}
    errs["average"] = float(np.mean([errs[g] for g in STATE_GROUPS]))
    return errs


def validate_model(model: KoopmanModel, trajs: list, workers: int = 1) -> dict:
    """Per-trajectory open-loop nRMSE and ``(mean, std)`` per state group.

    The ``average`` row averages the four group errors of each trajectory,
    then takes mean and population std across trajectories.
    """
    if workers > 1 and len(trajs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_traj = list(pool.map(functools.partial(trajectory_errors, model), trajs))
    else:
        per_traj = [trajectory_errors(model, t) for t in trajs]
    summary = {}
    for row in METRIC_ROWS:
        vals = np.array([e[row] for e in per_traj])
        summary[row] = (float(vals.mean()), float(vals.std()))
    return {"per_trajectory": per_traj, "summary": summary}


def write_metrics_csv(summary: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schemas.METRICS_COLUMNS)
        for row in METRIC_ROWS:
            mean, std = summary[row]
            w.writerow([row, _fmt(mean), _fmt(std)])


def write_per_trajectory_csv(per_traj: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trajectory", *METRIC_ROWS])
        for i, e in enumerate(per_traj):
            w.writerow([i, *(_fmt(e[r]) for r in METRIC_ROWS)])


# -- tracking ----------------------------------------------------------------


def track(cfg: ExperimentConfig, model: KoopmanModel) -> tuple:
    mpc_cfg = cfg.mpc_config()
    n_steps = int(round(cfg.mpc.duration / mpc_cfg.t_s))
    ref = generate_reference(cfg.mpc.reference, cfg.quad, n_steps, mpc_cfg.t_s)
    result = run_closed_loop(model, mpc_cfg, cfg.quad, ref.states[0], ref, cfg.mpc.duration)
    return result, tracking_summary(cfg, result, model.dim)


def tracking_errors(result: ClosedLoopResult, n_states: int) -> dict:
    ga = edmd.state_groups(result.actual)
    gr = edmd.state_groups(result.reference)
    out = {}
    for g in STATE_GROUPS:
        truth = gr[g][:n_states]
        out[g] = edmd.nrmse_arrays(ga[g][:n_states], truth) if np.any(truth) else None
    return out


def tracking_summary(cfg: ExperimentConfig, result: ClosedLoopResult, lifted_dim: int) -> dict:
    limits = cfg.limits()
    t_s = result.actual.t_s
    n_eval = int(round(cfg.mpc.eval_window / t_s)) + 1
    within = all(limits.contains(u, tol=cfg.mpc.qp_tol * 10) for u in result.inputs)
    timing = result.timing
    return {
        "n_steps": len(result.inputs),
        "duration_s": cfg.mpc.duration,
        "eval_window_s": cfg.mpc.eval_window,
        "horizon": cfg.mpc.horizon,
        "lifted_dim": int(lifted_dim),
        "nrmse_eval_window": tracking_errors(result, n_eval),
        "nrmse_full": tracking_errors(result, len(result.actual.states)),
        "inputs_within_limits": bool(within),
        "qp_failures": 0,
        "qp_iterations_mean": float(np.mean(result.qp_iterations)),
        "qp_iterations_max": int(np.max(result.qp_iterations)),
        "timing": {
            "mean_ms": timing["mean_s"] * 1e3,
            "p50_ms": timing["p50_s"] * 1e3,
            "p95_ms": timing["p95_s"] * 1e3,
            "max_ms": timing["max_s"] * 1e3,
            "rate_hz": timing["rate_hz"],
        },
        "meets_100hz": bool(timing["mean_s"] <= 0.01),
    }


def _state_cells(x: QuadState) -> list:
    return [*x.p, *x.v, *vectorize(x.R), *x.w]


def write_run_csv(result: ClosedLoopResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schemas.RUN_COLUMNS)
        for k, u in enumerate(result.inputs):
            row = [k * result.actual.t_s]
            row += _state_cells(result.reference.states[k])
            row += _state_cells(result.actual.states[k])
            row += list(u.as_array())
            w.writerow([_fmt(c) for c in row] + [result.qp_iterations[k], _fmt(result.solve_times[k] * 1e6)])


def write_plot_data(result: ClosedLoopResult, limits, out: Path) -> list:
    ga = edmd.state_groups(result.actual)
    gr = edmd.state_groups(result.reference)
    n = len(result.actual.states)
    t = np.arange(n) * result.actual.t_s
    states_path = out / "plot_states.csv"
    with open(states_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schemas.PLOT_STATE_COLUMNS)
        for k in range(n):
            cells = [t[k]]
            for g in STATE_GROUPS:
                cells += list(gr[g][k]) + list(ga[g][k])
            w.writerow([_fmt(c) for c in cells])
    inputs_path = out / "plot_inputs.csv"
    lo, hi = limits.lower, limits.upper
    with open(inputs_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schemas.PLOT_INPUT_COLUMNS)
        for k, u in enumerate(result.inputs):
            w.writerow([_fmt(c) for c in [t[k], *u.as_array(), *lo, *hi]])
    return [states_path, inputs_path]


def render_plots(result: ClosedLoopResult, limits, out: Path) -> list:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ga = edmd.state_groups(result.actual)
    gr = edmd.state_groups(result.reference)
    t = np.arange(len(result.actual.states)) * result.actual.t_s
    fig, axes = plt.subplots(4, 3, figsize=(11, 9), sharex=True)
    for i, g in enumerate(STATE_GROUPS):
        for j in range(3):
            ax = axes[i, j]
            ax.plot(t, gr[g][:, j], "k-", lw=1.2, label="reference")
            ax.plot(t, ga[g][:, j], "r--", lw=1.2, label="MPC")
            ax.set_ylabel(f"{g}[{j}]")
    axes[0, 0].legend(loc="best", fontsize=8)
    for ax in axes[-1]:
        ax.set_xlabel("t [s]")
    fig.tight_layout()
    states_png = out / "states.png"
    fig.savefig(states_png, dpi=90)
    plt.close(fig)

    U = np.array([u.as_array() for u in result.inputs])
    tu = t[: len(U)]
    fig, axes = plt.subplots(4, 1, figsize=(7, 8), sharex=True)
    for i, name in enumerate(("f_t", "M1", "M2", "M3")):
        axes[i].plot(tu, U[:, i], "b-", lw=1.0)
        axes[i].axhline(limits.lower[i], color="gray", ls=":")
        axes[i].axhline(limits.upper[i], color="gray", ls=":")
        axes[i].set_ylabel(name)
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    inputs_png = out / "inputs.png"
    fig.savefig(inputs_png, dpi=90)
    plt.close(fig)
    return [states_png, inputs_png]


# -- command drivers ---------------------------------------------------------


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_train(cfg: ExperimentConfig, out: Path, model_path: Path | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    model, report = train_model(cfg)
    model_path = model_path or out / "model.json"
    edmd.save_model(model, model_path)
    _write_json(report, out / "train_report.json")
    schemas.check_model_file(model_path)
    schemas.check_json(out / "train_report.json", schemas.TRAIN_REPORT_SCHEMA)
    log.info("trained model N=%d in %.1fs -> %s", model.dim, time.perf_counter() - t0, model_path)
    return {"model": model, "report": report, "model_path": model_path}


def cmd_validate(cfg: ExperimentConfig, model_path: Path, out: Path, model: KoopmanModel | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    model = model or edmd.load_model(model_path)
    trajs = generate_trajectories(cfg.validation, cfg.quad, cfg.workers)
    if not trajs:
        raise EmptyDatasetError("validation config produced no trajectories (n_traj = 0)")
    res = validate_model(model, trajs, cfg.workers)
    metrics = out / "metrics.csv"
    write_metrics_csv(res["summary"], metrics)
    write_per_trajectory_csv(res["per_trajectory"], out / "metrics_per_trajectory.csv")
    schemas.check_metrics_csv(metrics)
    return {**res, "metrics_path": metrics}


def cmd_track(cfg: ExperimentConfig, model_path: Path, out: Path, plots: bool = True, model=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    model = model or edmd.load_model(model_path)
    result, summary = track(cfg, model)
    write_run_csv(result, out / "run.csv")
    _write_json(summary, out / "summary.json")
    files = write_plot_data(result, cfg.limits(), out)
    if plots:
        files += render_plots(result, cfg.limits(), out)
    with open(out / "tracking_metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state_group", "nrmse_eval_window", "nrmse_full"])
        for g in STATE_GROUPS:
            a, b = summary["nrmse_eval_window"][g], summary["nrmse_full"][g]
            w.writerow([g, "" if a is None else _fmt(a), "" if b is None else _fmt(b)])
    schemas.check_csv_header(out / "run.csv", schemas.RUN_COLUMNS)
    schemas.check_csv_header(out / "plot_states.csv", schemas.PLOT_STATE_COLUMNS)
    schemas.check_csv_header(out / "plot_inputs.csv", schemas.PLOT_INPUT_COLUMNS)
    schemas.check_json(out / "summary.json", schemas.TRACK_SUMMARY_SCHEMA)
    return {"result": result, "summary": summary}


def cmd_sweep(cfg: ExperimentConfig, orders, horizons, out: Path) -> dict:
    """Train/validate per observable order and track per horizon; failures are recorded, not raised."""
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for p in orders:
        try:
            pcfg = dataclasses.replace(cfg, lift_order=int(p))
            pcfg.validate()
            model, _ = train_model(pcfg)
            val = validate_model(
                model, generate_trajectories(pcfg.validation, pcfg.quad, pcfg.workers), pcfg.workers
            )
            failure = None
        except (Se3KoopmanError, ValueError) as exc:
            model, val, failure = None, None, f"{type(exc).__name__}: {exc}"
        for nh in horizons:
            row = {"p": int(p), "N_h": None if nh is None else int(nh), "status": "ok", "error": ""}
            if failure is not None:
                row.update(status="failed", error=failure)
                rows.append(row)
                continue
            for g in METRIC_ROWS:
                row[f"nrmse_{g}"] = val["summary"][g][0]
            if nh is not None:
                try:
                    hcfg = dataclasses.replace(pcfg, mpc=dataclasses.replace(pcfg.mpc, horizon=int(nh)))
                    hcfg.validate()
                    _, summary = track(hcfg, model)
                    row["track_nrmse_p"] = summary["nrmse_eval_window"]["p"]
                    row["track_mean_ms"] = summary["timing"]["mean_ms"]
                except (Se3KoopmanError, ValueError) as exc:
                    row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            rows.append(row)
    path = out / "sweep.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schemas.SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_sweep_cell(r.get(c)) for c in schemas.SWEEP_COLUMNS])
    schemas.check_csv_header(path, schemas.SWEEP_COLUMNS)
    return {"rows": rows, "path": path, "failed": sum(r["status"] != "ok" for r in rows)}


def _sweep_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return _fmt(v)
    return str(v)
