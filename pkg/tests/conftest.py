import numpy as np
import pytest

from se3_koopman.config import ExperimentConfig
from se3_koopman.dynamics import QuadState
from se3_koopman.experiments import generate_trajectories, train_model
from se3_koopman.se3 import so3_exp


def random_rotation(rng) -> np.ndarray:
    w = rng.standard_normal(3)
    w *= rng.uniform(0.0, 3.0) / max(np.linalg.norm(w), 1e-12)
    return so3_exp(w)


def random_state(rng, scale=1.0) -> QuadState:
    return QuadState(
        scale * rng.standard_normal(3),
        scale * rng.standard_normal(3),
        random_rotation(rng),
        scale * rng.standard_normal(3),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def training_trajs(default_cfg):
    return generate_trajectories(default_cfg.training, default_cfg.quad)


@pytest.fixture(scope="session")
def trained(default_cfg, training_trajs):
    """Model fitted with the default training protocol (shared across tests)."""
    return train_model(default_cfg, training_trajs)


def planted_system(seed=0, N=51, m=4, n_traj=40, steps=100):
    """Stable random lifted-linear system and trajectories driven by white-noise inputs.

    Returns ``(A0, B0, Zx, U, Zy, runs)``; ``runs`` holds ``(Z, U)`` per trajectory.
    """
    rng = np.random.default_rng(seed)
    A0 = rng.standard_normal((N, N))
    A0 *= 0.95 / np.max(np.abs(np.linalg.eigvals(A0)))
    B0 = rng.standard_normal((N, m))
    runs = []
    for _ in range(n_traj):
        U = rng.standard_normal((steps, m))
        Z = np.empty((steps + 1, N))
        Z[0] = rng.standard_normal(N)
        for k in range(steps):
            Z[k + 1] = A0 @ Z[k] + B0 @ U[k]
        runs.append((Z, U))
    Zx = np.vstack([Z[:-1] for Z, _ in runs])
    Zy = np.vstack([Z[1:] for Z, _ in runs])
    Ua = np.vstack([U for _, U in runs])
    return A0, B0, Zx, Ua, Zy, runs


def enumerate_box_qp(H, G, lo, hi):
    """Exhaustive active-set oracle for ``min 1/2 U'HU + G'U`` s.t. ``lo <= U <= hi``.

    Every variable is free, at its lower or at its upper bound (3^n patterns);
    the equality-constrained minimizer of each pattern is kept if feasible and
    the best objective wins.
    """
    import itertools

    n = len(G)
    best_f, best_x = np.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        x = np.zeros(n)
        free = [i for i in range(n) if pattern[i] == 0]
        fixed = [i for i in range(n) if pattern[i] != 0]
        for i in fixed:
            x[i] = lo[i] if pattern[i] == 1 else hi[i]
        if free:
            rhs = -(G[free] + H[np.ix_(free, fixed)] @ x[fixed])
            x[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        if np.all(x >= lo - 1e-12) and np.all(x <= hi + 1e-12):
            f = 0.5 * x @ H @ x + G @ x
            if f < best_f:
                best_f, best_x = f, x
    return best_x


def random_box_qp(rng, n):
    L = rng.standard_normal((n, n))
    H = L @ L.T + 0.1 * np.eye(n)
    G = 3.0 * rng.standard_normal(n)
    lo = -rng.uniform(0.1, 2.0, n)
    hi = rng.uniform(0.1, 2.0, n)
    return H, G, lo, hi
