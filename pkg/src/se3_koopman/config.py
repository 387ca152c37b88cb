"""Experiment configuration (YAML) for the train/validate/track pipeline."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .dynamics import ActuatorLimits, QuadParams
from .errors import ConfigError
from .lift import LiftConfig
from .mpc import MpcConfig, default_state_weights


@dataclass
class InitialStateSpread:
    """Half-widths of the uniform boxes initial states are drawn from.

    ``attitude`` bounds each rotation-vector component (rad), ``rate`` each
    body-rate component (rad/s). All zeros starts every trajectory at rest
    at the origin.
    """

    position: float = 1.0
    velocity: float = 0.5
    attitude: float = 0.3
    rate: float = 0.5


@dataclass
class TrajectorySpec:
    n_traj: int = 100
    steps: int = 100
    t_s: float = 0.001
    input_mean: list = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    input_cov: list = field(default_factory=lambda: [10.0, 10.0, 10.0, 10.0])
    # Adds m*g to the thrust mean so the excitation is centred on hover.
    gravity_feedforward: bool = True
    initial_state: InitialStateSpread = field(default_factory=InitialStateSpread)
    seed: int = 1


@dataclass
class ReferenceSpec:
    input_mean: list = field(default_factory=lambda: [2.0, 2.0, 2.0, 2.0])
    input_cov: list = field(default_factory=lambda: [30.0, 30.0, 30.0, 30.0])
    gravity_feedforward: bool = True
    initial_state: InitialStateSpread = field(
        default_factory=lambda: InitialStateSpread(0.0, 0.0, 0.0, 0.0)
    )
    seed: int = 3


@dataclass
class StateWeights:
    position: float = 1e4
    velocity: float = 1e3
    rotation: float = 10.0
    rate: float = 1.0


@dataclass
class LimitsSpec:
    f_t_min: float = 0.0
    f_t_max: float | None = None  # None means 2 m g
    moment_max: list = field(default_factory=lambda: [5.0, 5.0, 5.0])


@dataclass
class MpcSpec:
    horizon: int = 10
    state_weights: StateWeights = field(default_factory=StateWeights)
    input_weights: list = field(default_factory=lambda: [1e-5, 1e-5, 1e-5, 1e-5])
    limits: LimitsSpec = field(default_factory=LimitsSpec)
    qp_tol: float = 1e-8
    qp_max_iter: int = 200
    duration: float = 1.2
    eval_window: float = 1.0
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)


@dataclass
class ExperimentConfig:
    quad: QuadParams = field(default_factory=QuadParams)
    lift_order: int = 3
    training: TrajectorySpec = field(default_factory=TrajectorySpec)
    validation: TrajectorySpec = field(
        default_factory=lambda: TrajectorySpec(n_traj=50, input_cov=[20.0, 20.0, 20.0, 20.0], seed=2)
    )
    mpc: MpcSpec = field(default_factory=MpcSpec)
    workers: int = 1
    output_dir: str = "out"

    def validate(self) -> None:
        try:
            LiftConfig(self.lift_order)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for name, spec in (("training", self.training), ("validation", self.validation)):
            if spec.n_traj < 0 or spec.steps < 1 or not spec.t_s > 0:
                raise ConfigError(f"{name}: n_traj >= 0, steps >= 1 and t_s > 0 required")
            _check_vec4(f"{name}.input_mean", spec.input_mean)
            _check_vec4(f"{name}.input_cov", spec.input_cov)
            if min(spec.input_cov) < 0:
                raise ConfigError(f"{name}.input_cov must be nonnegative")
        _check_vec4("mpc.reference.input_mean", self.mpc.reference.input_mean)
        _check_vec4("mpc.reference.input_cov", self.mpc.reference.input_cov)
        if self.mpc.horizon < 1:
            raise ConfigError("mpc.horizon must be at least 1")
        if not 0 < self.mpc.eval_window <= self.mpc.duration:
            raise ConfigError("mpc.eval_window must lie in (0, duration]")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.limits()
            self.mpc_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def limits(self) -> ActuatorLimits:
        lim = self.mpc.limits
        f_max = 2.0 * self.quad.hover_thrust if lim.f_t_max is None else lim.f_t_max
        return ActuatorLimits(lim.f_t_min, f_max, tuple(lim.moment_max))

    def mpc_config(self) -> MpcConfig:
        w = self.mpc.state_weights
        return MpcConfig(
            N_h=self.mpc.horizon,
            Q=np.diag(default_state_weights(w.position, w.velocity, w.rotation, w.rate)),
            R_ctrl=np.diag(np.asarray(self.mpc.input_weights, dtype=float)),
            limits=self.limits(),
            t_s=self.training.t_s,
            qp_tol=self.mpc.qp_tol,
            qp_max_iter=self.mpc.qp_max_iter,
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Rebase every seed on one master seed (training, validation, reference)."""
        cfg = dataclasses.replace(
            self,
            training=dataclasses.replace(self.training, seed=seed),
            validation=dataclasses.replace(self.validation, seed=seed + 1),
            mpc=dataclasses.replace(
                self.mpc, reference=dataclasses.replace(self.mpc.reference, seed=seed + 2)
            ),
        )
        return cfg


def _check_vec4(name, vals):
    if len(vals) != 4:
        raise ConfigError(f"{name} must have 4 entries, got {len(vals)}")


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def _build(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = _NESTED.get((cls, name))
        if ftype is not None:
            kwargs[name] = _build(ftype, value, f"{path}.{name}" if path else name)
        elif isinstance(value, list):
            kwargs[name] = [float(v) for v in value]
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


_NESTED = {
    (ExperimentConfig, "quad"): QuadParams,
    (ExperimentConfig, "training"): TrajectorySpec,
    (ExperimentConfig, "validation"): TrajectorySpec,
    (ExperimentConfig, "mpc"): MpcSpec,
    (TrajectorySpec, "initial_state"): InitialStateSpread,
    (ReferenceSpec, "initial_state"): InitialStateSpread,
    (MpcSpec, "state_weights"): StateWeights,
    (MpcSpec, "limits"): LimitsSpec,
    (MpcSpec, "reference"): ReferenceSpec,
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"{path or 'config'}: unknown key {key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, f"{path}.{key}" if path else key)
        else:
            out[key] = value
    return out


def from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a (possibly partial) mapping; missing keys take defaults."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    cfg = _build(ExperimentConfig, _merge(to_dict(ExperimentConfig()), data), "")
    cfg.validate()
    return cfg


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return from_dict(data)


def load(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def save(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``train``, ``validate``, ``track``)."""
    return Path(str(resources.files("se3_koopman") / "configs" / f"{name}.yaml"))
