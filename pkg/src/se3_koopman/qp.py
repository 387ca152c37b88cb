"""Dense strictly convex QP solver (primal active-set)::

    minimize    1/2 U^T H U + U^T G
    subject to  A_ineq U <= b_ineq

Multiplier sign convention: ``H U + G + A_ineq^T lam = 0`` with ``lam >= 0``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import DimensionMismatchError, NotPositiveDefiniteError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


@dataclass
class QpProblem:
    H: np.ndarray
    G: np.ndarray
    A_ineq: np.ndarray = None
    b_ineq: np.ndarray = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        n = H.shape[0]
        if H.shape != (n, n):
            raise DimensionMismatchError(f"H must be square, got {H.shape}")
        if np.linalg.norm(H - H.T) > 1e-9 * max(1.0, np.linalg.norm(H)):
            raise ValueError("H is not symmetric")
        self.H = 0.5 * (H + H.T)
        self.G = np.asarray(self.G, dtype=float).reshape(n)
        if self.A_ineq is None:
            self.A_ineq = np.zeros((0, n))
            self.b_ineq = np.zeros(0)
        self.A_ineq = np.asarray(self.A_ineq, dtype=float).reshape(-1, n)
        self.b_ineq = np.asarray(self.b_ineq, dtype=float).reshape(-1)
        if self.b_ineq.shape[0] != self.A_ineq.shape[0]:
            raise DimensionMismatchError("A_ineq and b_ineq row counts differ")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, U) -> float:
        return float(0.5 * U @ self.H @ U + U @ self.G)

    def to_dict(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist() for k in ("H", "G", "A_ineq", "b_ineq")}

    @classmethod
    def from_dict(cls, d) -> "QpProblem":
        n = len(d["G"])
        A = np.array(d["A_ineq"], dtype=float).reshape(-1, n)
        return cls(np.array(d["H"]), np.array(d["G"]), A, np.array(d["b_ineq"], dtype=float))


@dataclass
class KktResiduals:
    stationarity: float
    primal: float
    complementarity: float
    dual: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity, self.dual)


@dataclass
class QpSolution:
    U: np.ndarray
    objective: float
    iterations: int
    status: QpStatus
    kkt_residuals: KktResiduals = None
    multipliers: np.ndarray = None
    active_set: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residuals(qp: QpProblem, U, lam) -> KktResiduals:
    U = np.asarray(U, dtype=float)
    lam = np.asarray(lam, dtype=float)
    slack = qp.A_ineq @ U - qp.b_ineq
    grad = qp.H @ U + qp.G + qp.A_ineq.T @ lam
    return KktResiduals(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        primal=float(max(np.max(slack, initial=0.0), 0.0)),
        complementarity=float(abs(lam @ slack)),
        dual=float(max(-np.min(lam, initial=0.0), 0.0)),
    )


def check_kkt(qp: QpProblem, U, tol: float = DEFAULT_TOL, active_tol: float = None) -> KktResiduals:
    """Certify a candidate solution without trusting solver multipliers.

    Multipliers are recomputed by nonnegative least squares over the
    constraints active at ``U``; the returned residuals use them.
    """
    U = np.asarray(U, dtype=float)
    if active_tol is None:
        active_tol = max(1e3 * tol, 1e-9)
    slack = qp.A_ineq @ U - qp.b_ineq
    scale = np.maximum(1.0, np.abs(qp.b_ineq))
    active = np.flatnonzero(slack >= -active_tol * scale)
    lam = np.zeros(qp.A_ineq.shape[0])
    rhs = -(qp.H @ U + qp.G)
    if active.size:
        lam_act, _ = scipy.optimize.nnls(qp.A_ineq[active].T, rhs)
        lam[active] = lam_act
    return kkt_residuals(qp, U, lam)


def solve_unconstrained(H, G) -> np.ndarray:
    """Solve ``H U = -G`` by Cholesky factorization."""
    try:
        c, low = scipy.linalg.cho_factor(np.asarray(H, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("H is not positive definite") from exc
    return scipy.linalg.cho_solve((c, low), -np.asarray(G, dtype=float))


def _box_structure(A: np.ndarray):
    """If every row of ``A`` has one nonzero entry, return ``(cols, coeffs)``."""
    if A.shape[0] == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    nz = A != 0.0
    if not np.all(nz.sum(axis=1) == 1):
        return None
    cols = np.argmax(nz, axis=1)
    return cols, A[np.arange(A.shape[0]), cols]


class ActiveSetSolver:
    """Primal active-set method with warm starts.

    A solver instance remembers the working set of its last solve and tries
    it first on the next call, which suits receding-horizon MPC where
    neighbouring problems share most of their active constraints. Each
    instance must be used from a single thread.
    """

    def __init__(self, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, check_monotone: bool = False):
        if not tol > 0:
            raise ValueError("tol must be positive")
        self.tol = tol
        self.max_iter = max_iter
        self.check_monotone = check_monotone
        self._warm: tuple | None = None
        self.objective_history: list = []

    def reset(self) -> None:
        self._warm = None

    def solve(self, qp: QpProblem, warm_start: bool = True) -> QpSolution:
        A, b = qp.A_ineq, qp.b_ineq
        tol = self.tol
        self.objective_history = []

        start = None
        if warm_start and self._warm is not None:
            start = self._warm_point(qp, self._warm)
        if start is None:
            start = self._cold_point(qp)
        if start is None:
            sol = QpSolution(np.full(qp.n, np.nan), np.nan, 0, QpStatus.INFEASIBLE)
            self._warm = None
            return sol
        x, W = start

        lam_W = np.zeros(0)
        for it in range(1, self.max_iter + 1):
            x_eq, lam_W = self._eqp(qp, W)
            p = x_eq - x
            if np.max(np.abs(p), initial=0.0) <= tol * max(1.0, np.max(np.abs(x), initial=0.0)):
                x = x_eq
                if not W or np.min(lam_W) >= -tol:
                    return self._finish(qp, x, W, lam_W, it, QpStatus.OPTIMAL)
                drop = int(np.argmin(lam_W))
                W = W[:drop] + W[drop + 1 :]
                continue

            alpha, blocking = 1.0, None
            Ap = A @ p
            slack = b - A @ x
            in_W = np.zeros(A.shape[0], dtype=bool)
            in_W[list(W)] = True
            cand = np.flatnonzero(~in_W & (Ap > 1e-14 * max(1.0, np.linalg.norm(p))))
            if cand.size:
                ratios = np.maximum(slack[cand], 0.0) / Ap[cand]
                j = int(np.argmin(ratios))
                if ratios[j] < 1.0:
                    alpha, blocking = float(ratios[j]), int(cand[j])
            x = x + alpha * p
            if self.check_monotone:
                self.objective_history.append(qp.objective(x))
                if len(self.objective_history) > 1:
                    assert self.objective_history[-1] <= self.objective_history[-2] + 1e-12 * (
                        1.0 + abs(self.objective_history[-2])
                    ), "objective increased"
            if blocking is not None:
                W = W + [blocking]

        return self._finish(qp, x, W, lam_W, self.max_iter, QpStatus.MAX_ITERATIONS)

    def _finish(self, qp, x, W, lam_W, iterations, status) -> QpSolution:
        lam = np.zeros(qp.A_ineq.shape[0])
        # On an iteration-limit exit W may have grown since lam_W was computed.
        if W and len(lam_W) == len(W):
            lam[W] = lam_W
        res = kkt_residuals(qp, x, lam)
        if status is QpStatus.OPTIMAL and res.max() > self.tol * 10 * max(1.0, np.abs(qp.G).max(initial=0.0)):
            status = QpStatus.MAX_ITERATIONS
        self._warm = (tuple(W), x.copy()) if status is QpStatus.OPTIMAL else None
        return QpSolution(x, qp.objective(x), iterations, status, res, lam, tuple(W))

    @staticmethod
    def _eqp(qp: QpProblem, W):
        """Minimize the objective subject to the working set held as equalities."""
        n = qp.n
        if not W:
            return solve_unconstrained(qp.H, qp.G), np.zeros(0)
        Aw = qp.A_ineq[W]
        m = len(W)
        kkt = np.zeros((n + m, n + m))
        kkt[:n, :n] = qp.H
        kkt[:n, n:] = Aw.T
        kkt[n:, :n] = Aw
        rhs = np.concatenate([-qp.G, qp.b_ineq[W]])
        sol = np.linalg.solve(kkt, rhs)
        return sol[:n], sol[n:]

    def _warm_point(self, qp: QpProblem, warm):
        W_prev, _ = warm
        m = qp.A_ineq.shape[0]
        W = [i for i in W_prev if i < m]
        if W and np.linalg.matrix_rank(qp.A_ineq[W]) < len(W):
            return None
        try:
            x, _ = self._eqp(qp, W)
        except np.linalg.LinAlgError:
            return None
        if np.all(qp.A_ineq @ x - qp.b_ineq <= self.tol):
            return x, W
        return None

    def _cold_point(self, qp: QpProblem):
        """Feasible starting point and a linearly independent working set."""
        A, b = qp.A_ineq, qp.b_ineq
        x = solve_unconstrained(qp.H, qp.G)
        if A.shape[0] == 0:
            return x, []
        box = _box_structure(A)
        if box is not None:
            cols, coef = box
            lo = np.full(qp.n, -np.inf)
            hi = np.full(qp.n, np.inf)
            lo_row = np.full(qp.n, -1)
            hi_row = np.full(qp.n, -1)
            for r, (c, a) in enumerate(zip(cols, coef)):
                bound = b[r] / a
                if a > 0 and bound < hi[c]:
                    hi[c], hi_row[c] = bound, r
                elif a < 0 and bound > lo[c]:
                    lo[c], lo_row[c] = bound, r
            if np.any(lo > hi + self.tol):
                return None
            W = []
            for c in range(qp.n):
                if x[c] >= hi[c]:
                    x[c] = hi[c]
                    W.append(int(hi_row[c]))
                elif x[c] <= lo[c]:
                    x[c] = lo[c]
                    W.append(int(lo_row[c]))
            return x, W
        if np.all(A @ x - b <= self.tol):
            return x, []
        lp = scipy.optimize.linprog(
            np.zeros(qp.n), A_ub=A, b_ub=b, bounds=[(None, None)] * qp.n, method="highs"
        )
        if lp.status == 2:
            return None
        if lp.status != 0:
            return None
        x = lp.x
        W = []
        active = np.flatnonzero(A @ x - b >= -self.tol * np.maximum(1.0, np.abs(b)))
        for i in active:
            cand = W + [int(i)]
            if np.linalg.matrix_rank(A[cand]) == len(cand):
                W = cand
            if len(W) == qp.n:
                break
        return x, W


def solve(qp: QpProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> QpSolution:
    """Cold-start solve; pure and thread-safe."""
    return ActiveSetSolver(tol, max_iter).solve(qp, warm_start=False)


def dump_debug(qp: QpProblem, sol: QpSolution, path) -> None:
    payload = {
        "problem": qp.to_dict(),
        "solution": {
            "U": np.asarray(sol.U).tolist(),
            "objective": sol.objective,
            "iterations": sol.iterations,
            "status": sol.status.value,
            "active_set": list(sol.active_set),
        },
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_debug(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return QpProblem.from_dict(data["problem"]), data["solution"]
