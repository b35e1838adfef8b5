"""Continuous two-dimensional lane-free road: ring or freeway with one off- and one on-ramp.

The fleet is stored as parallel numpy arrays so that forces, observations
and rewards for every vehicle are computed in a handful of vectorized
operations.  Scalar helpers (:func:`ivgs`, :func:`lateral_freedoms`,
:func:`collision_check`, :func:`ramp_protocol`) work on
:class:`~lanefree.vehicle.VehicleState` objects and double as test oracles
for the vectorized path.

Kinematics are explicit Euler at ``dt``: longitudinal speed first, then
position; the lateral speed is set directly by the action.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import geometry
from .config import ConfigError, ScenarioConfig
from .geometry import GeometryParams
from .reward import RewardBreakdown, reward, wrong_lateral
from .vehicle import RampPhase, Route, VehicleState

OBS_FIELDS = ("s_d", "v_lon", "acc_lon", "v_lat", "fr_l", "fr_r", "f_rep", "f_nud")
OBS_DIM = len(OBS_FIELDS)
ACT_DIM = 2


@dataclass(frozen=True)
class Action:
    acc_lon_cmd: float
    v_lat_cmd: float
    acc_max: float = 4.0
    v_lat_max: float = 1.5

    def __post_init__(self) -> None:
        if abs(self.acc_lon_cmd) > self.acc_max or abs(self.v_lat_cmd) > self.v_lat_max:
            raise ValueError(
                f"action ({self.acc_lon_cmd}, {self.v_lat_cmd}) outside "
                f"[+-{self.acc_max}] x [+-{self.v_lat_max}]"
            )


@dataclass(frozen=True)
class Ramp:
    kind: str  # "on" | "off"
    gore_x: float
    aux_lane_span: tuple[float, float]
    aux_lane_width: float


@dataclass(frozen=True)
class RoadTopology:
    kind: str
    length: float
    width: float
    ramps: tuple[Ramp, ...] = ()
    virtual_force_magnitude: float = 0.5
    pre_diverge_lead: float = 700.0

    def __post_init__(self) -> None:
        if self.kind == "ring" and self.ramps:
            raise ConfigError("a ring road has no ramps")
        for r in self.ramps:
            lo, hi = r.aux_lane_span
            if not 0 <= lo < hi <= self.length:
                raise ConfigError(f"ramp span {r.aux_lane_span} outside road [0, {self.length}]")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "RoadTopology":
        if cfg.kind == "ring":
            return cls("ring", cfg.road_length, cfg.road_width)
        fw = cfg.freeway
        ramps = (
            Ramp("off", fw.offramp_gore, (fw.offramp_gore - fw.decel_length, fw.offramp_gore), fw.aux_lane_width),
            Ramp("on", fw.onramp_gore, (fw.onramp_gore, fw.onramp_gore + fw.accel_length), fw.aux_lane_width),
        )
        return cls("freeway", cfg.road_length, cfg.road_width, ramps, fw.virtual_force, fw.pre_diverge_lead)

    @property
    def ring_length(self) -> float | None:
        return self.length if self.kind == "ring" else None

    def ramp(self, kind: str) -> Ramp | None:
        for r in self.ramps:
            if r.kind == kind:
                return r
        return None


@dataclass
class StepOutcome:
    ids: np.ndarray
    observations: np.ndarray
    rewards: np.ndarray
    breakdown: RewardBreakdown
    collided: bool
    collided_pairs: list[tuple[int, int]]
    done: bool
    wrong_lateral: np.ndarray
    boundary_clamped: np.ndarray
    removed: list[int] = field(default_factory=list)
    step: int = 0
    # post-step fleet state before any removal/spawning, aligned with ids
    snapshot: dict[str, np.ndarray] = field(default_factory=dict)


# --------------------------------------------------------------------------
# scalar helpers


def ivgs(v_lon_prev: float, params: GeometryParams) -> float:
    """Desired longitudinal space gap to leaders."""
    return params.d0_lon + params.t_ds * v_lon_prev


def classify_phase(route: Route, phase: RampPhase, x: float, y: float, width: float, topology: RoadTopology) -> RampPhase:
    """Ramp phase implied by route, position and the phase held so far."""
    half = topology.width / 2
    if route == Route.ENTERING:
        if phase == RampPhase.ON_ACCEL_LANE and y < -(half - width / 2):
            return RampPhase.ON_ACCEL_LANE
        return RampPhase.NONE
    if route == Route.EXITING:
        off = topology.ramp("off")
        if off is None:
            return RampPhase.NONE
        start, end = off.aux_lane_span
        if phase == RampPhase.ON_DECEL_LANE:
            return phase
        if start <= x < end and y + width / 2 <= -half:
            return RampPhase.ON_DECEL_LANE
        if start - topology.pre_diverge_lead <= x < end:
            return RampPhase.PRE_DIVERGE
    return RampPhase.NONE


def ramp_protocol(vehicle: VehicleState, topology: RoadTopology) -> tuple[float, float, bool]:
    """Virtual (repulsion, nudge) on a ramp vehicle and whether leftward moves are suppressed."""
    phase = classify_phase(vehicle.route, vehicle.ramp_phase, vehicle.x, vehicle.y, vehicle.width, topology)
    mag = topology.virtual_force_magnitude
    if vehicle.route == Route.ENTERING and phase == RampPhase.ON_ACCEL_LANE:
        return mag, 0.0, False
    if vehicle.route == Route.EXITING and phase == RampPhase.PRE_DIVERGE:
        return 0.0, mag, True
    return 0.0, 0.0, False


def road_edges(vehicle: VehicleState, topology: RoadTopology) -> tuple[float, float]:
    """(left edge, right edge) of the area this vehicle may use."""
    half = topology.width / 2
    left, right = half, -half
    if vehicle.route == Route.ENTERING and vehicle.ramp_phase == RampPhase.ON_ACCEL_LANE:
        right = -half - topology.ramp("on").aux_lane_width
    elif vehicle.route == Route.EXITING:
        off = topology.ramp("off")
        if vehicle.ramp_phase == RampPhase.ON_DECEL_LANE:
            left, right = -half, -half - off.aux_lane_width
        elif vehicle.ramp_phase == RampPhase.PRE_DIVERGE and vehicle.x >= off.aux_lane_span[0]:
            right = -half - off.aux_lane_width
    return left, right


def lateral_freedoms(
    ego: VehicleState,
    others: Sequence[VehicleState],
    topology: RoadTopology,
    params: GeometryParams,
) -> tuple[float, float]:
    """Smallest lateral clearance on the left and on the right.

    Only leaders whose longitudinal space gap is below the ego's IVGS count;
    the road edges always bound the result.
    """
    left_edge, right_edge = road_edges(ego, topology)
    fr_l = left_edge - (ego.y + ego.width / 2)
    fr_r = (ego.y - ego.width / 2) - right_edge
    limit = ivgs(ego.prev_speed, params)
    for o in others:
        if o.id == ego.id:
            continue
        dx = geometry._wrap(o.x - ego.x, topology.ring_length)
        if dx <= 0 or dx - (o.length + ego.length) / 2 >= limit:
            continue
        if o.y >= ego.y:
            fr_l = min(fr_l, max(0.0, (o.y - o.width / 2) - (ego.y + ego.width / 2)))
        else:
            fr_r = min(fr_r, max(0.0, (ego.y - ego.width / 2) - (o.y + o.width / 2)))
    return max(0.0, fr_l), max(0.0, fr_r)


def collision_check(vehicles: Sequence[VehicleState], ring_length: float | None = None) -> list[tuple[int, int]]:
    """Pairs of ids whose footprints overlap with positive area."""
    pairs = []
    for a in range(len(vehicles)):
        for b in range(a + 1, len(vehicles)):
            va, vb = vehicles[a], vehicles[b]
            dx = abs(geometry._wrap(vb.x - va.x, ring_length))
            dy = abs(vb.y - va.y)
            if dx < (va.length + vb.length) / 2 and dy < (va.width + vb.width) / 2:
                pairs.append((va.id, vb.id))
    return pairs


# --------------------------------------------------------------------------
# vectorized simulator

_FLOAT_FIELDS = ("x", "y", "v", "v_lat", "acc", "v_des", "length", "width", "v_prev", "y_prev", "acc_prev", "v_lat_prev")
_INT_FIELDS = ("ids", "route", "phase")


class LaneFreeEnv:
    """Multi-vehicle lane-free simulator.

    Actions and observations are aligned with :attr:`ids`.  On the ring the
    fleet is fixed after :meth:`reset`; on the freeway vehicles are spawned
    by Poisson arrivals and removed at the road end or the off-ramp, so
    ``ids`` may change after every step.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.topology = RoadTopology.from_config(config)
        self.params = config.geometry_params()
        self.weights = config.reward_weights()
        self.rng = np.random.default_rng(config.seed)
        self.step_count = 0
        self.spawn_rejections = 0
        self.exited: list[int] = []
        self._next_id = 0
        self._clear()

    # -- fleet storage ---------------------------------------------------
    def _clear(self) -> None:
        for name in _FLOAT_FIELDS:
            setattr(self, name, np.zeros(0))
        for name in _INT_FIELDS:
            setattr(self, name, np.zeros(0, dtype=int))
        self._obs = np.zeros((0, OBS_DIM))
        self._suppress = np.zeros(0, dtype=bool)

    def _append(self, x, y, v, v_des, route, phase) -> None:
        n = len(x)
        cfg = self.config
        new = {
            "x": x, "y": y, "v": v, "v_lat": np.zeros(n), "acc": np.zeros(n), "v_des": v_des,
            "length": np.full(n, cfg.veh_length), "width": np.full(n, cfg.veh_width),
            "v_prev": v.copy(), "y_prev": y.copy(), "acc_prev": np.zeros(n), "v_lat_prev": np.zeros(n),
            "ids": np.arange(self._next_id, self._next_id + n), "route": route, "phase": phase,
        }
        self._next_id += n
        for name, arr in new.items():
            setattr(self, name, np.concatenate([getattr(self, name), arr]))

    def _keep(self, mask: np.ndarray) -> None:
        for name in _FLOAT_FIELDS + _INT_FIELDS:
            setattr(self, name, getattr(self, name)[mask])

    @property
    def n_vehicles(self) -> int:
        return len(self.ids)

    def vehicles(self) -> list[VehicleState]:
        return [
            VehicleState(
                id=int(self.ids[k]), x=float(self.x[k]), y=float(self.y[k]), v_lon=float(self.v[k]),
                v_lat=float(self.v_lat[k]), acc_lon=float(self.acc[k]), v_des=float(self.v_des[k]),
                length=float(self.length[k]), width=float(self.width[k]), route=Route(int(self.route[k])),
                ramp_phase=RampPhase(int(self.phase[k])), v_lon_prev=float(self.v_prev[k]),
                y_prev=float(self.y_prev[k]),
            )
            for k in range(self.n_vehicles)
        ]

    def observation(self) -> np.ndarray:
        """Current observations, one row per entry of :attr:`ids`."""
        return self._obs.copy()

    # -- reset -------------------------------------------------------------
    def _speeds(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        lo, hi = cfg.speed_min, cfg.speed_max
        v0 = self.rng.uniform(lo, hi, n)
        if cfg.speed_sampling == "stratified":
            v_des = lo + (hi - lo) * (np.arange(n) + 0.5) / max(n, 1)
            v_des = self.rng.permutation(v_des)
        else:
            v_des = self.rng.uniform(lo, hi, n)
        return v0, v_des

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Place the initial fleet and return its observations."""
        cfg = self.config
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        else:
            self.rng = np.random.default_rng(cfg.seed)
        self._clear()
        self._next_id = 0
        self.step_count = 0
        self.spawn_rejections = 0
        self.exited = []
        if cfg.kind == "ring":
            n = cfg.n_agents
            if n > 0 and cfg.road_length / n <= cfg.veh_length:
                raise ConfigError(
                    f"{n} vehicles of length {cfg.veh_length} m do not fit on a {cfg.road_length} m ring"
                )
            half = (cfg.road_width - cfg.veh_width) / 2
            x = np.arange(n) * cfg.road_length / max(n, 1)
            y = self.rng.uniform(-half, half, n)
            v0, v_des = self._speeds(n)
            self._append(x, y, v0, v_des, np.zeros(n, dtype=int), np.zeros(n, dtype=int))
        self._refresh()
        return self.observation()

    # -- lateral limits ----------------------------------------------------
    def _edges(self) -> tuple[np.ndarray, np.ndarray]:
        half = self.topology.width / 2
        n = self.n_vehicles
        left, right = np.full(n, half), np.full(n, -half)
        if self.topology.kind == "freeway":
            on, off = self.topology.ramp("on"), self.topology.ramp("off")
            accel = (self.route == Route.ENTERING) & (self.phase == RampPhase.ON_ACCEL_LANE)
            right[accel] = -half - on.aux_lane_width
            decel = (self.route == Route.EXITING) & (self.phase == RampPhase.PRE_DIVERGE) & (self.x >= off.aux_lane_span[0])
            right[decel] = -half - off.aux_lane_width
            on_decel = (self.route == Route.EXITING) & (self.phase == RampPhase.ON_DECEL_LANE)
            left[on_decel] = -half
            right[on_decel] = -half - off.aux_lane_width
        return left, right

    def _update_phases(self) -> None:
        if self.topology.kind != "freeway":
            return
        for k in np.flatnonzero(self.route != Route.MAINLINE):
            self.phase[k] = classify_phase(
                Route(int(self.route[k])), RampPhase(int(self.phase[k])), self.x[k], self.y[k], self.width[k], self.topology
            )

    # -- observations ------------------------------------------------------
    def _forces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Aggregated (f_rep, f_nud, suppress_left) for the current fleet."""
        n = self.n_vehicles
        ring = self.topology.ring_length
        rep, nud = geometry.pairwise_forces(
            self.x, self.y, self.v, self.v_prev, self.y_prev, self.v_des, self.length, self.width, self.params, ring
        )
        f_rep = rep.max(axis=1) if n else np.zeros(0)
        f_nud = nud.max(axis=0) if n else np.zeros(0)
        suppress = np.zeros(n, dtype=bool)
        if self.topology.kind == "freeway" and n:
            mag = self.topology.virtual_force_magnitude
            merging = (self.route == Route.ENTERING) & (self.phase == RampPhase.ON_ACCEL_LANE)
            diverging = (self.route == Route.EXITING) & (self.phase == RampPhase.PRE_DIVERGE)
            f_rep = np.where(merging, np.maximum(f_rep, mag), f_rep)
            f_nud = np.where(diverging, mag, f_nud)
            suppress = diverging
        return f_rep, f_nud, suppress

    def _freedoms(self) -> tuple[np.ndarray, np.ndarray]:
        left_edge, right_edge = self._edges()
        fr_l = left_edge - (self.y + self.width / 2)
        fr_r = (self.y - self.width / 2) - right_edge
        if self.n_vehicles > 1:
            dx = self.x[None, :] - self.x[:, None]
            ring = self.topology.ring_length
            if ring is not None:
                dx = (dx + ring / 2) % ring - ring / 2
            limit = self.params.d0_lon + self.params.t_ds * self.v_prev
            space = dx - (self.length[None, :] + self.length[:, None]) / 2
            near = (dx > 0) & (space < limit[:, None])
            dy_edge_l = (self.y[None, :] - self.width[None, :] / 2) - (self.y[:, None] + self.width[:, None] / 2)
            dy_edge_r = (self.y[:, None] - self.width[:, None] / 2) - (self.y[None, :] + self.width[None, :] / 2)
            is_left = self.y[None, :] >= self.y[:, None]
            gl = np.where(near & is_left, np.maximum(0.0, dy_edge_l), np.inf).min(axis=1)
            gr = np.where(near & ~is_left, np.maximum(0.0, dy_edge_r), np.inf).min(axis=1)
            fr_l = np.minimum(fr_l, gl)
            fr_r = np.minimum(fr_r, gr)
        return np.maximum(fr_l, 0.0), np.maximum(fr_r, 0.0)

    def _refresh(self) -> None:
        f_rep, f_nud, suppress = self._forces()
        fr_l, fr_r = self._freedoms()
        s_d = (self.v_des - self.v) / self.v_des
        self._obs = np.column_stack([s_d, self.v, self.acc, self.v_lat, fr_l, fr_r, f_rep, f_nud]) if self.n_vehicles else np.zeros((0, OBS_DIM))
        self._suppress = suppress

    # -- stepping ----------------------------------------------------------
    def _coerce_actions(self, actions) -> np.ndarray:
        n = self.n_vehicles
        if isinstance(actions, Mapping):
            known = set(int(i) for i in self.ids)
            unknown = [k for k in actions if int(k) not in known]
            if unknown:
                raise KeyError(f"actions for unknown vehicle ids {unknown}")
            out = np.zeros((n, ACT_DIM))
            index = {int(i): k for k, i in enumerate(self.ids)}
            for vid, act in actions.items():
                if isinstance(act, Action):
                    act = (act.acc_lon_cmd, act.v_lat_cmd)
                out[index[int(vid)]] = act
            missing = known - {int(k) for k in actions}
            if missing:
                raise KeyError(f"no action for vehicle ids {sorted(missing)}")
            return out
        arr = np.asarray(actions, dtype=float).reshape(-1, ACT_DIM) if n else np.zeros((0, ACT_DIM))
        if arr.shape != (n, ACT_DIM):
            raise ValueError(f"expected actions of shape ({n}, {ACT_DIM}), got {arr.shape}")
        return arr

    def collision_pairs(self) -> list[tuple[int, int]]:
        n = self.n_vehicles
        if n < 2:
            return []
        dx = self.x[None, :] - self.x[:, None]
        ring = self.topology.ring_length
        if ring is not None:
            dx = (dx + ring / 2) % ring - ring / 2
        dy = self.y[None, :] - self.y[:, None]
        hit = (np.abs(dx) < (self.length[None, :] + self.length[:, None]) / 2) & (
            np.abs(dy) < (self.width[None, :] + self.width[:, None]) / 2
        )
        a, b = np.nonzero(np.triu(hit, k=1))
        return [(int(self.ids[i]), int(self.ids[j])) for i, j in zip(a, b)]

    def step(self, actions) -> StepOutcome:
        cfg, w = self.config, self.weights
        acts = self._coerce_actions(actions)
        obs_before = self._obs
        suppress = self._suppress
        acc_cmd = np.clip(acts[:, 0], -cfg.acc_max, cfg.acc_max)
        v_lat_req = np.clip(acts[:, 1], -cfg.v_lat_max, cfg.v_lat_max)
        v_lat_cmd = np.where(suppress & (v_lat_req > 0), 0.0, v_lat_req)

        self.v_prev, self.y_prev = self.v.copy(), self.y.copy()
        self.acc_prev, self.v_lat_prev = self.acc.copy(), self.v_lat.copy()
        self.v = np.maximum(0.0, self.v + acc_cmd * cfg.dt)
        self.x = self.x + self.v * cfg.dt
        if self.topology.kind == "ring":
            self.x = np.mod(self.x, self.topology.length)
        self.acc = acc_cmd
        self.v_lat = v_lat_cmd
        target = self.y + v_lat_cmd * cfg.dt
        left_edge, right_edge = self._edges()
        self.y = np.clip(target, right_edge + self.width / 2, left_edge - self.width / 2)
        clamped = (np.abs(self.y - target) > 1e-12) & (np.abs(v_lat_cmd) > w.lateral_deadband)
        clamped |= self._force_merges()
        self._update_phases()
        self.step_count += 1

        self._refresh()
        obs = self._obs
        wrong = wrong_lateral(
            v_lat_req, obs_before[:, 4], obs_before[:, 5], obs_before[:, 6], obs_before[:, 7], cfg.dt,
            suppress_left=suppress, boundary_clamped=clamped, deadband=w.lateral_deadband,
        )
        wrong = np.asarray(wrong, dtype=bool).reshape(-1)
        parts = reward(obs[:, 0], obs[:, 6], obs[:, 7], self.acc, self.acc_prev, self.v_lat, self.v_lat_prev, wrong, w)
        pairs = self.collision_pairs()
        collided = bool(pairs)
        done = (collided and cfg.terminate_on_collision) or self.step_count >= cfg.max_steps
        outcome = StepOutcome(
            ids=self.ids.copy(), observations=obs.copy(), rewards=np.asarray(parts.total, dtype=float).reshape(-1),
            breakdown=parts, collided=collided, collided_pairs=pairs, done=done, wrong_lateral=wrong,
            boundary_clamped=clamped, step=self.step_count,
            snapshot={k: getattr(self, k).copy() for k in ("x", "y", "v_des", "route", "phase")},
        )
        if self.topology.kind == "freeway":
            outcome.removed = self._remove_and_spawn()
        return outcome

    # -- freeway flow ------------------------------------------------------
    def _force_merges(self) -> np.ndarray:
        """Entering vehicles at the end of the acceleration lane are pushed onto the mainline."""
        forced = np.zeros(self.n_vehicles, dtype=bool)
        if self.topology.kind != "freeway":
            return forced
        on = self.topology.ramp("on")
        lo = -(self.topology.width - self.width) / 2
        stuck = (self.route == Route.ENTERING) & (self.phase == RampPhase.ON_ACCEL_LANE) & (self.x >= on.aux_lane_span[1]) & (self.y < lo)
        self.y = np.where(stuck, lo, self.y)
        return stuck

    def _remove_and_spawn(self) -> list[int]:
        off = self.topology.ramp("off")
        leaving = self.x >= self.topology.length
        leaving |= (self.phase == RampPhase.ON_DECEL_LANE) & (self.x >= off.aux_lane_span[1])
        removed = [int(i) for i in self.ids[leaving]]
        self.exited.extend(removed)
        changed = bool(removed)
        if removed:
            self._keep(~leaving)
        changed |= self._spawn()
        if changed:
            self._refresh()
        return removed

    def _fits(self, x: float, y: float) -> bool:
        cfg = self.config
        return not np.any(
            (np.abs(self.x - x) < (self.length + cfg.veh_length) / 2) & (np.abs(self.y - y) < (self.width + cfg.veh_width) / 2)
        )

    def _spawn(self) -> bool:
        cfg, fw = self.config, self.config.freeway
        spawned = False
        half = (cfg.road_width - cfg.veh_width) / 2
        for _ in range(self.rng.poisson(fw.inflow_veh_h / 3600.0 * cfg.dt)):
            y = self.rng.uniform(-half, half)
            v0, v_des = self._speeds(1)
            route = Route.EXITING if self.rng.random() < fw.exit_fraction else Route.MAINLINE
            if not self._fits(0.0, y):
                self.spawn_rejections += 1
                continue
            self._append(np.array([0.0]), np.array([y]), v0, v_des, np.array([int(route)]), np.array([int(RampPhase.NONE)]))
            spawned = True
        on = self.topology.ramp("on")
        y_on = -cfg.road_width / 2 - on.aux_lane_width / 2
        for _ in range(self.rng.poisson(fw.onramp_inflow_veh_h / 3600.0 * cfg.dt)):
            v0, v_des = self._speeds(1)
            x0 = on.aux_lane_span[0]
            if not self._fits(x0, y_on):
                self.spawn_rejections += 1
                continue
            self._append(np.array([x0]), np.array([y_on]), v0, v_des, np.array([int(Route.ENTERING)]), np.array([int(RampPhase.ON_ACCEL_LANE)]))
            spawned = True
        if spawned:
            self._update_phases()
        return spawned
