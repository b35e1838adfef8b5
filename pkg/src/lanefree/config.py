"""Scenario and trainer configuration, loadable from a TOML file.

Sections and keys (all optional; defaults reproduce the 6-agent ring)::

    [scenario]  kind, road_length, road_width, n_agents, dt, max_steps, acc_max,
                v_lat_max, veh_length, veh_width, speed_min, speed_max,
                speed_sampling, terminate_on_collision, seed
    [freeway]   inflow_veh_h, exit_fraction, onramp_inflow_veh_h, offramp_gore,
                decel_length, onramp_gore, accel_length, aux_lane_width,
                virtual_force, pre_diverge_lead
    [geometry]  d0_lon, d0_lat, t_ds, dec_max, alpha, detection_margin
    [reward]    w_jer, w_acc, f_rep_t, r_pen_lat, lateral_deadband
    [trainer]   every field of :class:`TrainerConfig`

``d0_lon``/``d0_lat`` default to vehicle length + 1.0 m and width + 0.3 m,
``dec_max`` to ``acc_max``.
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import GeometryParams
from .reward import RewardWeights


class ConfigError(ValueError):
    """Raised for malformed or infeasible configurations."""


@dataclass(frozen=True)
class FreewayConfig:
    inflow_veh_h: float = 7200.0
    exit_fraction: float = 0.1
    onramp_inflow_veh_h: float = 600.0
    offramp_gore: float = 1700.0
    decel_length: float = 260.0
    onramp_gore: float = 1800.0
    accel_length: float = 250.0
    aux_lane_width: float = 3.4
    virtual_force: float = 0.5
    pre_diverge_lead: float = 700.0


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "ring"
    road_length: float = 400.0
    road_width: float = 10.2
    n_agents: int = 6
    dt: float = 0.25
    max_steps: int = 1000
    acc_max: float = 4.0
    v_lat_max: float = 1.5
    veh_length: float = 3.2
    veh_width: float = 1.8
    speed_min: float = 25.0
    speed_max: float = 35.0
    speed_sampling: str = "uniform"
    terminate_on_collision: bool = True
    seed: int = 0
    freeway: FreewayConfig = field(default_factory=FreewayConfig)
    geometry: dict = field(default_factory=dict)
    reward: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("ring", "freeway"):
            raise ConfigError(f"scenario.kind must be 'ring' or 'freeway', got {self.kind!r}")
        if self.speed_sampling not in ("uniform", "stratified"):
            raise ConfigError("scenario.speed_sampling must be 'uniform' or 'stratified'")
        for name in ("road_length", "road_width", "dt", "acc_max", "v_lat_max", "veh_length", "veh_width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"scenario.{name} must be positive")
        if self.n_agents < 0 or self.max_steps < 1:
            raise ConfigError("scenario.n_agents must be >= 0 and max_steps >= 1")
        if not 0 < self.speed_min <= self.speed_max:
            raise ConfigError("need 0 < speed_min <= speed_max")
        if self.veh_width >= self.road_width:
            raise ConfigError("vehicles are wider than the road")

    def geometry_params(self) -> GeometryParams:
        kw = {"d0_lon": self.veh_length + 1.0, "d0_lat": self.veh_width + 0.3, "dec_max": self.acc_max}
        kw.update(self.geometry)
        try:
            return GeometryParams(**kw)
        except TypeError as exc:
            raise ConfigError(f"[geometry]: {exc}") from None

    def reward_weights(self) -> RewardWeights:
        kw = dict(self.reward)
        if "r_pen_lat" in kw:
            kw["r_pen_lat_value"] = kw.pop("r_pen_lat")
        try:
            return RewardWeights.from_limits(self.acc_max, self.v_lat_max, dt=self.dt, **kw)
        except TypeError as exc:
            raise ConfigError(f"[reward]: {exc}") from None


@dataclass(frozen=True)
class TrainerConfig:
    gamma: float = 0.95
    tau: float = 0.01
    batch_size: int = 128
    buffer_capacity: int = 1_000_000
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    update_interval: int = 1
    episodes: int = 600
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_episodes: int = 200
    ou_theta: float = 0.15
    ou_sigma_frac: float = 0.2
    actor_hidden: tuple[int, ...] = (512, 128, 64, 32)
    critic_hidden: tuple[int, ...] = (500, 400, 256, 400, 500, 128, 32)
    checkpoint_every: int = 50
    policy_assignment: str = "replicate"
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0 < self.gamma <= 1 and 0 < self.tau <= 1):
            raise ConfigError("trainer.gamma and trainer.tau must lie in (0, 1]")
        for name in ("batch_size", "buffer_capacity", "update_interval", "eps_decay_episodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"trainer.{name} must be >= 1")
        if self.episodes < 0:
            raise ConfigError("trainer.episodes must be >= 0")
        if not 0.0 < self.eps_end <= self.eps_start <= 1.0:
            raise ConfigError("need 0 < eps_end <= eps_start <= 1")
        if self.policy_assignment not in ("replicate", "round_robin"):
            raise ConfigError("trainer.policy_assignment must be 'replicate' or 'round_robin'")
        object.__setattr__(self, "actor_hidden", tuple(int(h) for h in self.actor_hidden))
        object.__setattr__(self, "critic_hidden", tuple(int(h) for h in self.critic_hidden))

    def epsilon(self, episode: int) -> float:
        """Exploration probability for a zero-based episode index (linear decay, then flat)."""
        frac = min(1.0, episode / self.eps_decay_episodes)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


_SECTIONS = ("scenario", "freeway", "geometry", "reward", "trainer")


def _build(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"[{section}]: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def config_from_dict(data: dict[str, Any]) -> tuple[ScenarioConfig, TrainerConfig]:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    scen = dict(data.get("scenario", {}))
    scen["freeway"] = _build(FreewayConfig, dict(data.get("freeway", {})), "freeway")
    scen["geometry"] = dict(data.get("geometry", {}))
    scen["reward"] = dict(data.get("reward", {}))
    scenario = _build(ScenarioConfig, scen, "scenario")
    scenario.geometry_params()
    scenario.reward_weights()
    trainer = _build(TrainerConfig, dict(data.get("trainer", {})), "trainer")
    return scenario, trainer


def load_config(path: str | Path) -> tuple[ScenarioConfig, TrainerConfig]:
    """Read a TOML configuration file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def config_to_dict(scenario: ScenarioConfig, trainer: TrainerConfig | None = None) -> dict[str, Any]:
    scen = asdict(scenario)
    out: dict[str, Any] = {
        "freeway": scen.pop("freeway"),
        "geometry": scen.pop("geometry"),
        "reward": scen.pop("reward"),
        "scenario": scen,
    }
    if trainer is not None:
        tr = asdict(trainer)
        tr["actor_hidden"] = list(tr["actor_hidden"])
        tr["critic_hidden"] = list(tr["critic_hidden"])
        out["trainer"] = tr
    return out


def config_hash(scenario: ScenarioConfig, trainer: TrainerConfig | None = None) -> str:
    blob = json.dumps(config_to_dict(scenario, trainer), sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def with_overrides(scenario: ScenarioConfig, **kwargs) -> ScenarioConfig:
    try:
        return replace(scenario, **kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
