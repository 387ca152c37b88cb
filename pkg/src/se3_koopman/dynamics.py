"""Rigid-body quadrotor model on SE(3) x R^6.

Equations of motion (inertial position/velocity, body angular velocity)::

    p_dot = v
    v_dot = R @ [0, 0, f_t] / m - [0, 0, g]
    R_dot = R @ hat(w)
    w_dot = J^-1 (M - w x J w)

Integration is classical RK4 with the input held over the step, followed by
projecting ``R`` back onto SO(3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IntegrationDivergedError
from .se3 import hat, is_rotation, project_to_so3

DIVERGENCE_LIMIT = 1e8


@dataclass(frozen=True)
class QuadParams:
    m: float = 4.34
    Ixx: float = 0.0820
    Iyy: float = 0.0845
    Izz: float = 0.1377
    d: float = 0.315
    c_tau: float = 8e-4
    g: float = 9.81

    def __post_init__(self):
        if not (self.m > 0 and self.d > 0 and self.g > 0):
            raise ValueError("mass, moment arm and gravity must be positive")
        if min(self.Ixx, self.Iyy, self.Izz) <= 0:
            raise ValueError("inertia must be positive definite")

    @property
    def J(self) -> np.ndarray:
        return np.diag([self.Ixx, self.Iyy, self.Izz])

    @property
    def hover_thrust(self) -> float:
        return self.m * self.g


@dataclass(frozen=True)
class QuadState:
    """Full quadrotor state; ``R`` maps body to inertial, ``w`` is body rate."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name, shape in (("p", (3,)), ("v", (3,)), ("R", (3, 3)), ("w", (3,))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def is_valid(self, tol: float = 1e-9) -> bool:
        finite = all(np.all(np.isfinite(a)) for a in (self.p, self.v, self.w))
        return finite and is_rotation(self.R, tol)

    def allclose(self, other: "QuadState", atol: float) -> bool:
        return all(
            np.allclose(a, b, rtol=0.0, atol=atol)
            for a, b in zip((self.p, self.v, self.R, self.w), (other.p, other.v, other.R, other.w))
        )


@dataclass(frozen=True)
class ControlInput:
    f_t: float = 0.0
    M: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "f_t", float(self.f_t))
        M = np.array(self.M, dtype=float).reshape(3)
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    def as_array(self) -> np.ndarray:
        return np.array([self.f_t, self.M[0], self.M[1], self.M[2]])

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        u = np.asarray(u, dtype=float)
        return cls(u[0], u[1:4])


@dataclass(frozen=True)
class RotorForces:
    f1: float
    f2: float
    f3: float
    f4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.f3, self.f4])


@dataclass(frozen=True)
class ActuatorLimits:
    """Box bounds on ``(f_t, M)``.

    The default bounds are ``f_t in [0, 2 m g]`` and ``|M_i| <= 5`` N m; use
    :meth:`default_for` to build them from a parameter set.
    """

    f_t_min: float = 0.0
    f_t_max: float = 2 * 4.34 * 9.81
    M_abs_max: tuple = (5.0, 5.0, 5.0)

    def __post_init__(self):
        object.__setattr__(self, "M_abs_max", tuple(float(x) for x in self.M_abs_max))
        if not self.f_t_min < self.f_t_max:
            raise ValueError("f_t_min must be below f_t_max")
        if len(self.M_abs_max) != 3 or min(self.M_abs_max) <= 0:
            raise ValueError("moment bounds must be three positive numbers")

    @classmethod
    def default_for(cls, params: QuadParams) -> "ActuatorLimits":
        return cls(0.0, 2.0 * params.hover_thrust, (5.0, 5.0, 5.0))

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.f_t_min, *(-m for m in self.M_abs_max)])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.f_t_max, *self.M_abs_max])

    def contains(self, u: ControlInput, tol: float = 0.0) -> bool:
        a = u.as_array()
        return bool(np.all(a >= self.lower - tol) and np.all(a <= self.upper + tol))

    def clamp(self, u: ControlInput) -> ControlInput:
        return ControlInput.from_array(np.clip(u.as_array(), self.lower, self.upper))


@dataclass
class Trajectory:
    t_s: float
    states: list
    inputs: list

    def __post_init__(self):
        if not self.t_s > 0:
            raise ValueError("t_s must be positive")
        if len(self.states) == 0 or len(self.inputs) != len(self.states) - 1:
            raise ValueError(
                f"need len(inputs) == len(states) - 1, got {len(self.inputs)} and {len(self.states)}"
            )

    def __len__(self):
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.t_s

    def positions(self) -> np.ndarray:
        return np.array([s.p for s in self.states])

    def input_array(self) -> np.ndarray:
        return np.array([u.as_array() for u in self.inputs]).reshape(-1, 4)


def mixer_matrix(params: QuadParams) -> np.ndarray:
    d, c = params.d, params.c_tau
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [0.0, -d, 0.0, d],
            [d, 0.0, -d, 0.0],
            [-c, c, -c, c],
        ]
    )


def mixer(rotors: RotorForces, params: QuadParams) -> ControlInput:
    return ControlInput.from_array(mixer_matrix(params) @ rotors.as_array())


def inverse_mixer(u: ControlInput, params: QuadParams) -> RotorForces:
    f = np.linalg.solve(mixer_matrix(params), u.as_array())
    return RotorForces(*f)


def dynamics(x: QuadState, u: ControlInput, params: QuadParams):
    """State derivative ``(p_dot, v_dot, R_dot, w_dot)``."""
    return _deriv(x.v, x.R, x.w, u.f_t, u.M, params)


def _deriv(v, R, w, f_t, M, params):
    J = params.J
    p_dot = v
    v_dot = R[:, 2] * (f_t / params.m) - np.array([0.0, 0.0, params.g])
    R_dot = R @ hat(w)
    w_dot = np.linalg.solve(J, M - np.cross(w, J @ w))
    return p_dot, v_dot, R_dot, w_dot


def step(x: QuadState, u: ControlInput, params: QuadParams, dt: float) -> QuadState:
    """One RK4 step with zero-order-hold input and SO(3) re-projection."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    p, v, R, w = x.p, x.v, x.R, x.w
    f_t, M = u.f_t, u.M

    k1 = _deriv(v, R, w, f_t, M, params)
    k2 = _deriv(v + 0.5 * dt * k1[1], R + 0.5 * dt * k1[2], w + 0.5 * dt * k1[3], f_t, M, params)
    k3 = _deriv(v + 0.5 * dt * k2[1], R + 0.5 * dt * k2[2], w + 0.5 * dt * k2[3], f_t, M, params)
    k4 = _deriv(v + dt * k3[1], R + dt * k3[2], w + dt * k3[3], f_t, M, params)

    def combine(i):
        return (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0)

    p_new = p + combine(0)
    v_new = v + combine(1)
    R_new = R + combine(2)
    w_new = w + combine(3)

    for arr in (p_new, v_new, R_new, w_new):
        if not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > DIVERGENCE_LIMIT:
            raise IntegrationDivergedError("state left the finite range during integration")
    return QuadState(p_new, v_new, project_to_so3(R_new), w_new)


def simulate(x0: QuadState, inputs: Sequence[ControlInput], params: QuadParams, t_s: float) -> Trajectory:
    if len(inputs) == 0:
        raise ValueError("simulate needs at least one input")
    states = [x0]
    for k, u in enumerate(inputs):
        try:
            states.append(step(states[-1], u, params, t_s))
        except IntegrationDivergedError as exc:
            raise IntegrationDivergedError(f"integration diverged at step {k}", step_index=k) from exc
    return Trajectory(t_s, states, list(inputs))


def sample_random_inputs(n_steps: int, mean, cov_diag, rng_seed) -> list:
    """I.i.d. Gaussian inputs in ``(f_t, M1, M2, M3)`` coordinates.

    Draws come from ``numpy.random.Generator(PCG64(rng_seed))`` so the
    sequence is reproducible across platforms for a given seed.
    """
    mean = np.asarray(mean, dtype=float).reshape(4)
    cov_diag = np.asarray(cov_diag, dtype=float).reshape(4)
    if np.any(cov_diag < 0):
        raise ValueError("covariance diagonal must be nonnegative")
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    draws = mean + rng.standard_normal((n_steps, 4)) * np.sqrt(cov_diag)
    return [ControlInput.from_array(row) for row in draws]


def mechanical_energy(x: QuadState, params: QuadParams) -> float:
    return float(
        0.5 * params.m * x.v @ x.v + 0.5 * x.w @ params.J @ x.w + params.m * params.g * x.p[2]
    )
