"""Extended DMD with control: fit ``Psi(y) ~ A Psi(x) + B u`` from snapshots."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import ControlInput, QuadState, Trajectory
from .errors import (
    CorruptFileError,
    DegenerateDataError,
    DimensionMismatchError,
    EmptyDatasetError,
    FormatVersionMismatchError,
    PredictionDivergedError,
    ZeroReferenceError,
)
from .lift import BASE_DIM, N_INPUTS, LiftConfig, lift, lift_many, reconstruct_state, recovery_matrix
from .se3 import so3_log_vec

log = logging.getLogger(__name__)

PINV_RTOL = 1e-10
DIVERGENCE_LIMIT = 1e8
MODEL_FORMAT = "se3-koopman-model"
MODEL_VERSION = 1
STATE_GROUPS = ("p", "v", "Theta", "omega")


@dataclass
class SnapshotDataset:
    """Paired one-step snapshots ``(x_i, u_i, y_i)``."""

    x: list
    u: list
    y: list
    t_s: float
    cfg: LiftConfig

    def __post_init__(self):
        if not (len(self.x) == len(self.u) == len(self.y)):
            raise DimensionMismatchError("snapshot lists must have equal length")

    def __len__(self):
        return len(self.x)

    def lifted(self):
        """Return ``(Psi_x, U, Psi_y)`` with one snapshot per row."""
        Zx = lift_many(self.x, self.cfg)
        U = np.array([u.as_array() for u in self.u]).reshape(-1, N_INPUTS)
        Zy = lift_many(self.y, self.cfg)
        return Zx, U, Zy


@dataclass
class KoopmanModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    p: int
    t_s: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        N = BASE_DIM + 9 * self.p
        if self.A.shape != (N, N) or self.B.shape != (N, N_INPUTS) or self.C.shape != (BASE_DIM, N):
            raise DimensionMismatchError(
                f"model matrices {self.A.shape}, {self.B.shape}, {self.C.shape} inconsistent with p={self.p}"
            )

    @property
    def cfg(self) -> LiftConfig:
        return LiftConfig(self.p)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> np.ndarray:
        return np.hstack([self.A, self.B])


def build_dataset(trajs: Sequence[Trajectory], cfg: LiftConfig) -> SnapshotDataset:
    xs, us, ys = [], [], []
    t_s = None
    for traj in trajs:
        if len(traj.states) < 2:
            raise ValueError("each trajectory needs at least two states")
        if t_s is None:
            t_s = traj.t_s
        elif traj.t_s != t_s:
            raise ValueError("trajectories have different sample times")
        xs.extend(traj.states[:-1])
        us.extend(traj.inputs)
        ys.extend(traj.states[1:])
    if not xs:
        raise EmptyDatasetError("no snapshot pairs: the trajectory list is empty")
    return SnapshotDataset(xs, us, ys, t_s, cfg)


def truncated_pinv(G: np.ndarray, rtol: float = PINV_RTOL):
    """Pseudo-inverse dropping singular values below ``rtol * sigma_max``.

    Returns ``(G_pinv, rank, sigma_max)``.
    """
    U, s, Vt = np.linalg.svd(G)
    smax = s[0] if s.size else 0.0
    if not smax > 0.0:
        raise DegenerateDataError("Gram matrix is numerically zero")
    keep = s > rtol * smax
    rank = int(np.count_nonzero(keep))
    G_pinv = (Vt[keep].T / s[keep]) @ U[:, keep].T
    return G_pinv, rank, float(smax)


def edmd_operator(Zx, U, Zy, rtol: float = PINV_RTOL):
    """``K = G1 G2^+`` for generic snapshot rows; returns ``(K, diagnostics)``.

    ``G1 = (1/M) sum Psi(y_i) Psi_a(x_i)^T`` and ``G2 = (1/M) sum Psi_a(x_i)
    Psi_a(x_i)^T``, where ``Psi_a`` appends the input to the lifted state.
    """
    Zx = np.asarray(Zx, dtype=float)
    Zy = np.asarray(Zy, dtype=float)
    n_samples = Zx.shape[0]
    if n_samples == 0:
        raise EmptyDatasetError("no snapshots to fit")
    U = np.asarray(U, dtype=float).reshape(n_samples, -1)
    if Zy.shape != Zx.shape:
        raise DimensionMismatchError("snapshot arrays have inconsistent shapes")
    n_reg = Zx.shape[1] + U.shape[1]
    if n_samples < n_reg:
        warnings.warn(
            f"only {n_samples} snapshots for {n_reg} regressors; the fit is underdetermined",
            stacklevel=3,
        )
    Za = np.hstack([Zx, U])
    G1 = (Zy.T @ Za) / n_samples
    G2 = (Za.T @ Za) / n_samples
    G2_pinv, rank, smax = truncated_pinv(G2, rtol)
    K = G1 @ G2_pinv

    resid_sq = fit_residual(K, Zx, U, Zy)
    denom = float(np.sum(Zy**2))
    diagnostics = {
        "n_samples": int(n_samples),
        "residual_sq": resid_sq,
        "relative_residual": float(np.sqrt(resid_sq / denom)) if denom > 0 else 0.0,
        "g2_rank": rank,
        "g2_sigma_max": smax,
        "pinv_rtol": float(rtol),
    }
    return K, diagnostics


def fit_lifted(Zx, U, Zy, p: int, t_s: float, rtol: float = PINV_RTOL) -> KoopmanModel:
    """Fit the lifted predictor on already lifted snapshot rows."""
    if len(Zx) == 0:
        raise EmptyDatasetError("no snapshots to fit")
    U = np.asarray(U, dtype=float).reshape(len(Zx), -1)
    if U.shape[1] != N_INPUTS:
        raise DimensionMismatchError(f"expected {N_INPUTS} input columns, got {U.shape[1]}")
    K, diagnostics = edmd_operator(Zx, U, Zy, rtol)
    N = K.shape[0]
    log.info("EDMD fit: %d snapshots, G2 rank %d/%d", len(U), diagnostics["g2_rank"], N + N_INPUTS)
    return KoopmanModel(K[:, :N], K[:, N:], recovery_matrix(LiftConfig(p)), p, t_s, diagnostics)


def fit(data: SnapshotDataset, rtol: float = PINV_RTOL) -> KoopmanModel:
    if len(data) == 0:
        raise EmptyDatasetError("dataset is empty")
    Zx, U, Zy = data.lifted()
    return fit_lifted(Zx, U, Zy, data.cfg.p, data.t_s, rtol)


def fit_residual(K, Zx, U, Zy) -> float:
    Za = np.hstack([Zx, U])
    return float(np.sum((Zy - Za @ np.asarray(K).T) ** 2))


def rollout_lifted(model: KoopmanModel, z0, U) -> np.ndarray:
    """Pure lifted-space rollout, one row per step including ``z0``."""
    U = np.asarray(U, dtype=float).reshape(-1, N_INPUTS)
    Z = np.empty((len(U) + 1, model.dim))
    Z[0] = z0
    for k, u in enumerate(U):
        Z[k + 1] = model.A @ Z[k] + model.B @ u
        if not np.all(np.isfinite(Z[k + 1])) or np.linalg.norm(Z[k + 1]) > DIVERGENCE_LIMIT:
            raise PredictionDivergedError(f"lifted prediction diverged at step {k}", step_index=k)
    return Z


def predict_rollout(model: KoopmanModel, x0: QuadState, inputs: Sequence[ControlInput]) -> Trajectory:
    """Open-loop prediction; the lifted state is never re-lifted mid-rollout."""
    U = np.array([u.as_array() for u in inputs]).reshape(-1, N_INPUTS)
    Z = rollout_lifted(model, lift(x0, model.cfg), U)
    states = [x0] + [reconstruct_state(z)[0] for z in Z[1:]]
    return Trajectory(model.t_s, states, list(inputs))


def state_groups(traj: Trajectory) -> dict:
    """Per-group arrays (T x 3): position, velocity, rotation vector, body rate."""
    return {
        "p": np.array([x.p for x in traj.states]),
        "v": np.array([x.v for x in traj.states]),
        "Theta": np.array([so3_log_vec(x.R) for x in traj.states]),
        "omega": np.array([x.w for x in traj.states]),
    }


def nrmse_arrays(pred, truth) -> float:
    """``100 * ||pred - truth||_2 / ||truth||_2`` over all timesteps and components."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise DimensionMismatchError(f"shape mismatch {pred.shape} vs {truth.shape}")
    denom = np.sqrt(np.sum(truth**2))
    if denom == 0.0:
        raise ZeroReferenceError("reference signal is identically zero")
    return float(100.0 * np.sqrt(np.sum((pred - truth) ** 2)) / denom)


def nrmse(predicted: Trajectory, truth: Trajectory, block: str = "all") -> float:
    if len(predicted) != len(truth):
        raise DimensionMismatchError("trajectories have different lengths")
    gp, gt = state_groups(predicted), state_groups(truth)
    if block == "all":
        return nrmse_arrays(
            np.hstack([gp[g] for g in STATE_GROUPS]), np.hstack([gt[g] for g in STATE_GROUPS])
        )
    if block not in STATE_GROUPS:
        raise ValueError(f"unknown state group {block!r}; expected one of {STATE_GROUPS + ('all',)}")
    return nrmse_arrays(gp[block], gt[block])


def _matrix_to_json(M: np.ndarray) -> dict:
    return {"shape": list(M.shape), "data": [float(v) for v in np.asarray(M).ravel(order="C")]}


def _matrix_from_json(obj) -> np.ndarray:
    shape = tuple(int(s) for s in obj["shape"])
    data = np.array(obj["data"], dtype=float)
    if data.size != int(np.prod(shape)):
        raise CorruptFileError(f"matrix payload has {data.size} entries for shape {shape}")
    return data.reshape(shape)


def model_to_dict(model: KoopmanModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "p": model.p,
        "t_s": model.t_s,
        "A": _matrix_to_json(model.A),
        "B": _matrix_to_json(model.B),
        "C": _matrix_to_json(model.C),
        "diagnostics": model.diagnostics,
    }


def save_model(model: KoopmanModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1), encoding="utf-8")


def load_model(path) -> KoopmanModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"{path}: not a readable model file ({exc})") from exc
    if not isinstance(data, dict) or data.get("format") != MODEL_FORMAT:
        raise CorruptFileError(f"{path}: missing model format tag")
    if data.get("version") != MODEL_VERSION:
        raise FormatVersionMismatchError(
            f"{path}: model format version {data.get('version')!r}, this library reads {MODEL_VERSION}"
        )
    try:
        return KoopmanModel(
            _matrix_from_json(data["A"]),
            _matrix_from_json(data["B"]),
            _matrix_from_json(data["C"]),
            int(data["p"]),
            float(data["t_s"]),
            dict(data.get("diagnostics", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{path}: malformed model file ({exc})") from exc
