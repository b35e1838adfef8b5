"""Multi-objective per-agent reward.

All functions accept scalars or numpy arrays (one entry per agent) and
broadcast elementwise, so the simulator evaluates the whole fleet in one
call while tests can feed plain floats.

Each comfort weight is applied exactly once: the jerk and lateral
acceleration terms already carry ``w_jer`` / ``w_acc`` and are summed
without a second multiplication.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RewardWeights:
    w_jer: float = 0.4
    w_acc: float = 0.4
    f_rep_t: float = 0.3
    r_pen_lat_value: float = -5.0
    delta_acc_max: float = 8.0
    delta_vlat_max: float = 3.0
    dt: float = 0.25
    # lateral commands at or below this speed do not count as lateral moves
    lateral_deadband: float = 0.1

    def __post_init__(self) -> None:
        if self.f_rep_t <= 0:
            raise ValueError("f_rep_t must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.r_pen_lat_value > 0:
            raise ValueError("r_pen_lat_value is a penalty and must be <= 0")

    @classmethod
    def from_limits(cls, acc_max: float, v_lat_max: float, **kwargs) -> "RewardWeights":
        return cls(delta_acc_max=2 * acc_max, delta_vlat_max=2 * v_lat_max, **kwargs)


@dataclass(frozen=True)
class RewardBreakdown:
    r_rep: np.ndarray | float
    r_nud: np.ndarray | float
    r_jerk: np.ndarray | float
    r_lat_acc: np.ndarray | float
    r_pen: np.ndarray | float

    @property
    def total(self):
        return self.r_rep + self.r_nud + self.r_jerk + self.r_lat_acc + self.r_pen


def w_nud(f_rep, f_rep_t: float):
    """Weight of the speed/nudge term; zero once repulsion reaches the threshold."""
    return np.maximum(0.0, 1.0 - np.asarray(f_rep, dtype=float) / f_rep_t)


def reward(
    s_d,
    f_rep,
    f_nud,
    acc_lon,
    acc_lon_prev,
    v_lat,
    v_lat_prev,
    wrong_lateral,
    weights: RewardWeights,
) -> RewardBreakdown:
    """Reward components for the post-step snapshot.

    ``s_d`` enters through its magnitude so that driving above the desired
    speed is penalized like driving below it.
    """
    s_d = np.clip(np.asarray(s_d, dtype=float), -1.0, None)
    f_rep = np.asarray(f_rep, dtype=float)
    dt = weights.dt
    r_rep = -f_rep
    r_nud = -w_nud(f_rep, weights.f_rep_t) * (np.abs(s_d) + np.asarray(f_nud, dtype=float))
    jerk = (np.asarray(acc_lon, dtype=float) - acc_lon_prev) / dt
    r_jerk = -weights.w_jer * dt * np.abs(jerk) / weights.delta_acc_max
    acc_lat = (np.asarray(v_lat, dtype=float) - v_lat_prev) / dt
    r_lat_acc = -weights.w_acc * dt * np.abs(acc_lat) / weights.delta_vlat_max
    r_pen = np.where(wrong_lateral, weights.r_pen_lat_value, 0.0)
    if r_rep.ndim == 0:
        return RewardBreakdown(*(float(r) for r in (r_rep, r_nud, r_jerk, r_lat_acc, r_pen)))
    return RewardBreakdown(r_rep, r_nud, r_jerk, r_lat_acc, r_pen)


def wrong_lateral(
    v_lat_cmd,
    fr_l,
    fr_r,
    f_rep,
    f_nud,
    dt: float,
    suppress_left=False,
    boundary_clamped=False,
    deadband: float = 0.0,
):
    """Flag lateral commands that break the lateral rules.

    A command is wrong when its one-step displacement exceeds the freedom on
    that side, when it moves left while the nudge dominates, when it moves
    right while the repulsion dominates, or when the road edge clipped it.
    Under ``suppress_left`` a leftward command is not executed and is judged
    as no lateral movement.
    """
    v = np.asarray(v_lat_cmd, dtype=float)
    v = np.where(np.asarray(suppress_left) & (v > 0), 0.0, v)
    left = v > deadband
    right = v < -deadband
    f_rep = np.asarray(f_rep, dtype=float)
    f_nud = np.asarray(f_nud, dtype=float)
    exceeds = (left & (v * dt > fr_l)) | (right & (-v * dt > fr_r))
    against = (left & (f_nud > f_rep)) | (right & (f_rep > f_nud))
    out = exceeds | against | np.asarray(boundary_clamped, dtype=bool)
    return bool(out) if out.ndim == 0 else out
