"""Linear MPC in the lifted space, condensed to a dense QP.

Over a horizon of ``N_h`` steps the stacked lifted prediction is
``Z = A_qp z0 + B_qp U`` with ``A_qp = [A; A^2; ...; A^N_h]`` and
``B_qp[i, j] = A^(i-j) B`` for ``i >= j``. The tracking cost
``sum_k (z_k - r_k)^T Qbar (z_k - r_k) + u_k^T R u_k`` then becomes the QP
``1/2 U^T H U + U^T G`` with::

    H = 2 (B_qp^T Qbar_h B_qp + R_h)
    G = 2 B_qp^T Qbar_h (A_qp z0 - y)

where ``Qbar = blkdiag(Q, 0)`` acts only on the first 24 lifted coordinates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ActuatorLimits, ControlInput, QuadParams, QuadState, Trajectory, step
from .edmd import KoopmanModel
from .errors import DimensionMismatchError, IntegrationDivergedError, QpInfeasibleError
from .lift import BASE_DIM, N_INPUTS, lift
from .qp import ActiveSetSolver, QpProblem, QpSolution, QpStatus


def default_state_weights(position=100.0, velocity=10.0, rotation=10.0, rate=1.0) -> np.ndarray:
    """Diagonal of the 24x24 state cost in lifted-coordinate order."""
    return np.concatenate(
        [np.full(3, position), np.full(3, velocity), np.full(9, rotation), np.full(9, rate)]
    )


@dataclass
class MpcConfig:
    N_h: int = 10
    Q: np.ndarray = field(default_factory=lambda: np.diag(default_state_weights()))
    R_ctrl: np.ndarray = field(default_factory=lambda: np.diag([0.1, 0.1, 0.1, 0.1]))
    limits: ActuatorLimits | None = field(default_factory=ActuatorLimits)
    t_s: float = 0.001
    qp_tol: float = 1e-8
    qp_max_iter: int = 200

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R_ctrl = np.asarray(self.R_ctrl, dtype=float)
        if self.N_h < 1:
            raise ValueError("horizon must be at least one step")
        if self.Q.shape != (BASE_DIM, BASE_DIM) or self.R_ctrl.shape != (N_INPUTS, N_INPUTS):
            raise DimensionMismatchError("Q must be 24x24 and R_ctrl 4x4")
        if np.min(np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))) < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(0.5 * (self.R_ctrl + self.R_ctrl.T))) <= 0:
            raise ValueError("R_ctrl must be positive definite")


@dataclass
class MpcProblem:
    A_qp: np.ndarray
    B_qp: np.ndarray
    H: np.ndarray
    G: np.ndarray
    y: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray

    def qp(self) -> QpProblem:
        return QpProblem(self.H, self.G, self.A_ineq, self.b_ineq)


def stacked_prediction_matrices(A: np.ndarray, B: np.ndarray, N_h: int):
    """Return ``(A_qp, B_qp)`` for horizon ``N_h``."""
    N, m = B.shape
    powers = [np.eye(N)]
    for _ in range(N_h):
        powers.append(A @ powers[-1])
    A_qp = np.vstack(powers[1:])
    impulse = [powers[k] @ B for k in range(N_h)]  # A^k B
    B_qp = np.zeros((N * N_h, m * N_h))
    for i in range(N_h):
        for j in range(i + 1):
            B_qp[i * N : (i + 1) * N, j * m : (j + 1) * m] = impulse[i - j]
    return A_qp, B_qp


def lifted_state_cost(Q: np.ndarray, N: int) -> np.ndarray:
    Qbar = np.zeros((N, N))
    Qbar[:BASE_DIM, :BASE_DIM] = Q
    return Qbar


def input_constraints(limits: ActuatorLimits | None, N_h: int):
    """Box on every ``u_k``: rows ``[I; -I]`` per step."""
    if limits is None:
        return np.zeros((0, N_INPUTS * N_h)), np.zeros(0)
    block_A = np.vstack([np.eye(N_INPUTS), -np.eye(N_INPUTS)])
    block_b = np.concatenate([limits.upper, -limits.lower])
    return np.kron(np.eye(N_h), block_A), np.tile(block_b, N_h)


def horizon_cost(U, z0, y, A_qp, B_qp, Qbar_h, R_h) -> float:
    """``J(U) = (Z - y)^T Qbar_h (Z - y) + U^T R_h U`` with ``Z = A_qp z0 + B_qp U``."""
    e = A_qp @ z0 + B_qp @ U - y
    return float(e @ Qbar_h @ e + U @ R_h @ U)


class Condenser:
    """Precomputes everything that does not depend on ``z0`` or the reference."""

    def __init__(self, model: KoopmanModel, cfg: MpcConfig):
        self.N = model.dim
        self.N_h = cfg.N_h
        self.A_qp, self.B_qp = stacked_prediction_matrices(model.A, model.B, cfg.N_h)
        Qbar = lifted_state_cost(cfg.Q, self.N)
        self.Qbar_h = np.kron(np.eye(cfg.N_h), Qbar)
        self.R_h = np.kron(np.eye(cfg.N_h), cfg.R_ctrl)
        self._BtQ2 = 2.0 * self.B_qp.T @ self.Qbar_h
        H = self._BtQ2 @ self.B_qp + 2.0 * self.R_h
        self.H = 0.5 * (H + H.T)
        self.A_ineq, self.b_ineq = input_constraints(cfg.limits, cfg.N_h)

    def problem(self, z0, ref_window) -> MpcProblem:
        z0 = np.asarray(z0, dtype=float)
        y = np.asarray(ref_window, dtype=float).reshape(-1)
        if z0.shape != (self.N,) or y.shape != (self.N * self.N_h,):
            raise DimensionMismatchError(
                f"expected z0 of length {self.N} and {self.N_h} lifted references, got {z0.shape}, {y.shape}"
            )
        G = self._BtQ2 @ (self.A_qp @ z0 - y)
        return MpcProblem(self.A_qp, self.B_qp, self.H, G, y, self.A_ineq, self.b_ineq)


def condense(model: KoopmanModel, cfg: MpcConfig, z0, ref_window) -> MpcProblem:
    if cfg.t_s != model.t_s:
        raise DimensionMismatchError(f"MPC sample time {cfg.t_s} differs from model sample time {model.t_s}")
    return Condenser(model, cfg).problem(z0, ref_window)


class MpcController:
    """Receding-horizon controller: one instance per closed-loop run."""

    def __init__(self, model: KoopmanModel, cfg: MpcConfig):
        if cfg.t_s != model.t_s:
            raise DimensionMismatchError(f"MPC sample time {cfg.t_s} differs from model sample time {model.t_s}")
        self.model = model
        self.cfg = cfg
        self.condenser = Condenser(model, cfg)
        self.solver = ActiveSetSolver(cfg.qp_tol, cfg.qp_max_iter)
        self.last_solution: QpSolution | None = None

    def step(self, x: QuadState, ref_window) -> ControlInput:
        """Lift ``x``, solve the condensed QP and return the first input."""
        ref_window = np.asarray(ref_window, dtype=float)
        if ref_window.ndim == 2 and ref_window.shape[1] != self.model.dim:
            raise DimensionMismatchError("reference window must hold lifted states")
        prob = self.condenser.problem(lift(x, self.model.cfg), ref_window)
        sol = self.solver.solve(prob.qp())
        self.last_solution = sol
        if sol.status is QpStatus.INFEASIBLE:
            raise QpInfeasibleError("MPC quadratic program is infeasible")
        if sol.status is not QpStatus.OPTIMAL:
            raise QpInfeasibleError(f"MPC quadratic program not solved: {sol.status.value}")
        return ControlInput.from_array(sol.U[:N_INPUTS])


def mpc_step(model: KoopmanModel, cfg: MpcConfig, x: QuadState, ref_window, controller: MpcController | None = None):
    """Single MPC solve; pass ``controller`` to keep the solver's warm start."""
    controller = controller or MpcController(model, cfg)
    return controller.step(x, ref_window)


@dataclass
class ClosedLoopResult:
    actual: Trajectory
    inputs: list
    reference: Trajectory
    qp_iterations: list
    solve_times: list  # seconds per MPC step
    timing: dict

    @property
    def mean_step_time(self) -> float:
        return self.timing["mean_s"]


def lift_reference(ref: Trajectory, cfg) -> np.ndarray:
    from .lift import lift_many

    return lift_many(ref.states, cfg)


def run_closed_loop(
    model: KoopmanModel,
    cfg: MpcConfig,
    params: QuadParams,
    x0: QuadState,
    ref: Trajectory,
    duration: float,
) -> ClosedLoopResult:
    """Track ``ref`` with MPC on the nonlinear plant.

    At step ``k`` the horizon references are ``ref[k+1 .. k+N_h]``; beyond
    the end of ``ref`` the last state is held.
    """
    n_steps = int(round(duration / cfg.t_s))
    if len(ref.states) < n_steps + 1:
        raise ValueError(f"reference has {len(ref.states)} states, need {n_steps + 1}")
    Zref = lift_reference(ref, model.cfg)
    pad = np.repeat(Zref[-1:], cfg.N_h, axis=0)
    Zref = np.vstack([Zref, pad])

    controller = MpcController(model, cfg)
    states = [x0]
    inputs, iters, times = [], [], []
    x = x0
    for k in range(n_steps):
        window = Zref[k + 1 : k + 1 + cfg.N_h]
        t0 = time.perf_counter()
        try:
            u = controller.step(x, window)
        except QpInfeasibleError as exc:
            raise QpInfeasibleError(f"closed loop aborted at step {k}: {exc}", step_index=k) from exc
        times.append(time.perf_counter() - t0)
        iters.append(controller.last_solution.iterations)
        try:
            x = step(x, u, params, cfg.t_s)
        except IntegrationDivergedError as exc:
            raise IntegrationDivergedError(f"closed loop aborted at step {k}: {exc}", step_index=k) from exc
        states.append(x)
        inputs.append(u)

    t = np.array(times)
    timing = {
        "mean_s": float(t.mean()) if t.size else 0.0,
        "max_s": float(t.max()) if t.size else 0.0,
        "p50_s": float(np.percentile(t, 50)) if t.size else 0.0,
        "p95_s": float(np.percentile(t, 95)) if t.size else 0.0,
        "rate_hz": float(1.0 / t.mean()) if t.size and t.mean() > 0 else float("inf"),
    }
    actual = Trajectory(cfg.t_s, states, inputs)
    ref_cut = Trajectory(ref.t_s, ref.states[: n_steps + 1], ref.inputs[:n_steps])
    return ClosedLoopResult(actual, inputs, ref_cut, iters, times, timing)
