"""Physics-informed observables on SE(3).

Lifted-state index map for order ``p`` (``N = 24 + 9 p``)::

    0:3     position p
    3:6     velocity v
    6:15    vec(R)
    15:24   vec(hat(w))
    24+9(i-1) : 24+9i    vec(R @ hat(w)^i),  i = 1..p

``vec`` stacks columns (see :mod:`se3_koopman.se3`). The augmented vector
used for regression appends ``(f_t, M1, M2, M3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ControlInput, QuadState
from .errors import ReconstructionFailedError, SingularProjectionError
from .se3 import devectorize, hat, project_to_so3, skew_part, so3_log, vectorize, vee

BASE_DIM = 24
N_INPUTS = 4
MAX_ORDER = 6

P_SLICE = slice(0, 3)
V_SLICE = slice(3, 6)
R_SLICE = slice(6, 15)
W_SLICE = slice(15, 24)


@dataclass(frozen=True)
class LiftConfig:
    p: int = 3

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or not 1 <= self.p <= MAX_ORDER:
            raise ValueError(f"observable order must be an integer in 1..{MAX_ORDER}, got {self.p!r}")

    @property
    def dim(self) -> int:
        return BASE_DIM + 9 * self.p

    def h_slice(self, i: int) -> slice:
        start = BASE_DIM + 9 * (i - 1)
        return slice(start, start + 9)


def lift(x: QuadState, cfg: LiftConfig) -> np.ndarray:
    W = hat(x.w)
    z = np.empty(cfg.dim)
    z[P_SLICE] = x.p
    z[V_SLICE] = x.v
    z[R_SLICE] = vectorize(x.R)
    z[W_SLICE] = vectorize(W)
    h = x.R
    for i in range(1, cfg.p + 1):
        h = h @ W
        z[cfg.h_slice(i)] = vectorize(h)
    return z


def lift_augmented(x: QuadState, u: ControlInput, cfg: LiftConfig) -> np.ndarray:
    return np.concatenate([lift(x, cfg), u.as_array()])


def lift_many(states, cfg: LiftConfig) -> np.ndarray:
    """Stack ``lift`` of each state as rows of an array."""
    return np.array([lift(x, cfg) for x in states]).reshape(-1, cfg.dim)


def recovery_matrix(cfg: LiftConfig) -> np.ndarray:
    C = np.zeros((BASE_DIM, cfg.dim))
    C[:, :BASE_DIM] = np.eye(BASE_DIM)
    return C


def reconstruct_state(z) -> tuple:
    """Map a (possibly predicted) lifted vector back to ``(QuadState, Theta)``.

    The rotation block is projected onto SO(3) and the angular-rate block is
    skew-symmetrized before ``vee``, since linear predictions drift off both
    manifolds.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z[:BASE_DIM])):
        raise ReconstructionFailedError("lifted state has non-finite entries")
    try:
        R = project_to_so3(devectorize(z[R_SLICE]))
    except SingularProjectionError as exc:
        raise ReconstructionFailedError(str(exc)) from exc
    w = vee(skew_part(devectorize(z[W_SLICE])))
    x = QuadState(z[P_SLICE], z[V_SLICE], R, w)
    return x, vee(so3_log(R))
