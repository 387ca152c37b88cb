"""Lifted linear (Koopman/EDMD) model of a quadrotor on SE(3) and linear MPC on top of it."""

from .dynamics import ActuatorLimits, ControlInput, QuadParams, QuadState, Trajectory, simulate, step
from .edmd import KoopmanModel, fit, load_model, nrmse, predict_rollout, save_model
from .lift import LiftConfig, lift, reconstruct_state
from .mpc import MpcConfig, MpcController, condense, run_closed_loop
from .qp import ActiveSetSolver, QpProblem, QpStatus, check_kkt

__all__ = [
    "ActiveSetSolver",
    "ActuatorLimits",
    "ControlInput",
    "KoopmanModel",
    "LiftConfig",
    "MpcConfig",
    "MpcController",
    "QpProblem",
    "QpStatus",
    "QuadParams",
    "QuadState",
    "Trajectory",
    "check_kkt",
    "condense",
    "fit",
    "lift",
    "load_model",
    "nrmse",
    "predict_rollout",
    "reconstruct_state",
    "run_closed_loop",
    "save_model",
    "simulate",
    "step",
]
