"""Dynamic elliptical safety borders and the nudging/repulsion forces they induce.

Every follower ``i`` carries one semi-ellipse per leader ``j`` in its
detection range.  The ellipse is centered on the follower (point C), the
semi-major axis runs along the road and the semi-minor axis across it.
The nearest point of the leader's footprint (point A) is tested against
the ellipse; when it lies inside, the depth of the intrusion measured along
the ray C->A sets the repulsion on the follower and part of the nudge on the
leader.

Two code paths are provided.  The scalar functions follow the geometric
construction literally (angle, border intercept B, distance ratio) and are
meant for inspection and testing.  :func:`pairwise_forces` evaluates all
pairs at once with numpy and uses the closed form ``1 - sqrt(q)`` for the
intrusion percent, which is what the simulator calls every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .vehicle import VehicleState

Point = tuple[float, float]


@dataclass(frozen=True)
class GeometryParams:
    """Constants of the safety border.

    ``d0_lon`` and ``d0_lat`` default to vehicle length + 1.0 m and vehicle
    width + 0.3 m for the 3.2 m x 1.8 m reference vehicle.
    """

    d0_lon: float = 4.2
    d0_lat: float = 2.1
    t_ds: float = 0.5
    dec_max: float = 4.0
    alpha: float = 0.5
    detection_margin: float = 10.0

    def __post_init__(self) -> None:
        for name in ("d0_lon", "d0_lat", "t_ds", "dec_max", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.detection_margin < 0:
            raise ValueError("detection_margin must be non-negative")

    @classmethod
    def for_vehicle(cls, length: float, width: float, **kwargs) -> "GeometryParams":
        return cls(d0_lon=length + 1.0, d0_lat=width + 0.3, **kwargs)


@dataclass(frozen=True)
class EllipseAxes:
    e_b: float  # semi-major, longitudinal
    e_a: float  # semi-minor, lateral


@dataclass(frozen=True)
class PairGeometry:
    """Geometric points of one follower/leader pair, in road coordinates."""

    c: Point
    a: Point
    b: Point
    beta: float
    q: float
    int_per: float


@dataclass(frozen=True)
class ForceSet:
    f_rep: float = 0.0
    f_nud: float = 0.0
    virtual_rep: float = 0.0
    virtual_nud: float = 0.0


def semi_major(v_lon_prev: float, v_follower: float, v_leader: float, params: GeometryParams) -> float:
    """Longitudinal semi-axis: standstill gap + time headway + braking distance.

    The braking term is the distance covered while shedding the closing
    speed at ``dec_max``; it vanishes when the leader is at least as fast.
    """
    dv = v_follower - v_leader
    if dv > 0:
        t_r = dv / params.dec_max
        d_v_lon = 0.5 * params.dec_max * t_r**2 + dv * t_r
    else:
        d_v_lon = 0.0
    return params.d0_lon + params.t_ds * v_lon_prev + d_v_lon


def semi_minor(d_lat_now: float, d_lat_prev: float, d_lon: float, e_b: float, params: GeometryParams) -> float:
    """Lateral semi-axis, widened while the pair closes in laterally inside ``e_b``."""
    closing = d_lat_now - d_lat_prev
    if closing < 0 and d_lon < e_b:
        d_v_lat = -math.sqrt(e_b**2 + d_lon**2) * closing / e_b
    else:
        d_v_lat = 0.0
    return params.d0_lat + d_v_lat


def intrusion_metric(c: Point, a: Point, axes: EllipseAxes) -> float:
    """Normalized ellipse equation evaluated at A; ``q <= 1`` means A is inside."""
    if a[0] < c[0]:
        raise ValueError("leader point A must not lie behind the follower center C")
    return (a[0] - c[0]) ** 2 / axes.e_b**2 + (a[1] - c[1]) ** 2 / axes.e_a**2


def border_intercept(beta: float, axes: EllipseAxes) -> Point:
    """Point where the ray from C at angle ``beta`` leaves the ellipse (relative to C).

    Written with cos/sin so that ``|beta| = pi/2`` needs no special case; for
    other angles this equals ``x_B = sqrt(e_b^2 e_a^2 / (e_b^2 tan^2 beta + e_a^2))``.
    """
    if abs(beta) > math.pi / 2 + 1e-12:
        raise ValueError("beta must lie in [-pi/2, pi/2]")
    cb, sb = math.cos(beta), math.sin(beta)
    if abs(beta) >= math.pi / 2 - 1e-15:
        return 0.0, math.copysign(axes.e_a, beta)
    denom = math.sqrt(axes.e_b**2 * sb**2 + axes.e_a**2 * cb**2)
    x_b = axes.e_a * axes.e_b * cb / denom
    return x_b, x_b * math.tan(beta)


def intrusion_percent(c: Point, a: Point, b: Point) -> float:
    """``|AB| / |CB|`` clamped to [0, 1]."""
    cb = math.dist(c, b)
    if cb == 0.0:
        return 1.0
    return min(1.0, max(0.0, math.dist(a, b) / cb))


def pair_geometry(c: Point, a: Point, axes: EllipseAxes) -> PairGeometry:
    q = intrusion_metric(c, a, axes)
    beta = math.atan2(a[1] - c[1], a[0] - c[0])
    bx, by = border_intercept(beta, axes)
    b = (c[0] + bx, c[1] + by)
    int_per = intrusion_percent(c, a, b) if q <= 1.0 else 0.0
    if q == 1.0:
        int_per = 0.0
    return PairGeometry(c=c, a=a, b=b, beta=beta, q=q, int_per=int_per)


def nudge_force(int_per: float, s_d: float, params: GeometryParams) -> float:
    """Nudge a follower puts on its leader.

    ``s_d`` is the *follower's* speed deficit; only its positive part counts.
    The second term keeps a slow follower pushing even when the leader sits
    exactly on the border, and fades as the intrusion deepens.
    """
    boost = max(0.0, s_d) / (1.0 + params.alpha * int_per)
    return params.alpha * int_per + boost


def _wrap(dx: float, ring_length: float | None) -> float:
    if ring_length is None:
        return dx
    return (dx + ring_length / 2) % ring_length - ring_length / 2


def nearest_point(follower: VehicleState, leader: VehicleState, ring_length: float | None = None) -> Point:
    """Closest point of the leader's rectangle to the follower center, never behind it.

    Returned relative to the follower center, so C is the origin.
    """
    dx = _wrap(leader.x - follower.x, ring_length)
    dy = leader.y - follower.y
    ax = max(0.0, dx - leader.length / 2)
    ay = min(max(0.0, dy - leader.width / 2), dy + leader.width / 2)
    return ax, ay


def pair_forces(
    follower: VehicleState,
    leader: VehicleState,
    params: GeometryParams,
    prev_lat_gap: float | None = None,
    ring_length: float | None = None,
) -> tuple[float, float]:
    """Repulsion on ``follower`` and nudge on ``leader`` for one pair.

    Returns ``(0, 0)`` when the leader's center is not ahead or when the
    leader is beyond ``e_b + detection_margin``.
    """
    dx = _wrap(leader.x - follower.x, ring_length)
    if dx <= 0:
        return 0.0, 0.0
    ax, ay = nearest_point(follower, leader, ring_length)
    e_b = semi_major(follower.prev_speed, follower.v_lon, leader.v_lon, params)
    if ax >= e_b + params.detection_margin:
        return 0.0, 0.0
    d_lat_now = abs(leader.y - follower.y)
    if prev_lat_gap is None:
        prev_lat_gap = abs(leader.prev_y - follower.prev_y)
    e_a = semi_minor(d_lat_now, prev_lat_gap, ax, e_b, params)
    geom = pair_geometry((0.0, 0.0), (ax, ay), EllipseAxes(e_b, e_a))
    return geom.int_per, nudge_force(geom.int_per, follower.speed_deficit, params)


def aggregate_forces(
    reps: Iterable[float],
    nuds: Iterable[float],
    virtual_rep: float = 0.0,
    virtual_nud: float = 0.0,
    ignore_real_nudges: bool = False,
) -> ForceSet:
    """Worst-case (maximum) forces on one vehicle, virtual ramp forces included."""
    f_rep = max([0.0, virtual_rep, *reps])
    real_nuds = [] if ignore_real_nudges else list(nuds)
    f_nud = max([0.0, virtual_nud, *real_nuds])
    return ForceSet(f_rep=f_rep, f_nud=f_nud, virtual_rep=virtual_rep, virtual_nud=virtual_nud)


def pairwise_forces(
    x: np.ndarray,
    y: np.ndarray,
    v: np.ndarray,
    v_prev: np.ndarray,
    y_prev: np.ndarray,
    v_des: np.ndarray,
    length: np.ndarray,
    width: np.ndarray,
    params: GeometryParams,
    ring_length: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs version of :func:`pair_forces`.

    Returns ``(rep, nud)`` of shape (N, N) where row ``i`` is the follower and
    column ``j`` the leader: ``rep[i, j]`` acts on ``i``, ``nud[i, j]`` on ``j``.
    """
    n = len(x)
    if n == 0:
        empty = np.zeros((0, 0))
        return empty, empty.copy()
    dx = x[None, :] - x[:, None]
    if ring_length is not None:
        dx = (dx + ring_length / 2) % ring_length - ring_length / 2
    dy = y[None, :] - y[:, None]
    ax = np.maximum(0.0, dx - length[None, :] / 2)
    ay = np.minimum(np.maximum(0.0, dy - width[None, :] / 2), dy + width[None, :] / 2)

    dv = v[:, None] - v[None, :]
    t_r = np.maximum(dv, 0.0) / params.dec_max
    d_v_lon = 0.5 * params.dec_max * t_r**2 + np.maximum(dv, 0.0) * t_r
    e_b = params.d0_lon + params.t_ds * v_prev[:, None] + d_v_lon

    closing = np.abs(dy) - np.abs(y_prev[None, :] - y_prev[:, None])
    widen = (closing < 0) & (ax < e_b)
    d_v_lat = np.where(widen, -np.sqrt(e_b**2 + ax**2) * closing / e_b, 0.0)
    e_a = params.d0_lat + d_v_lat

    q = ax**2 / e_b**2 + ay**2 / e_a**2
    active = (dx > 0) & (ax < e_b + params.detection_margin)
    int_per = np.where(active & (q < 1.0), 1.0 - np.sqrt(np.minimum(q, 1.0)), 0.0)

    s_d = np.maximum(0.0, (v_des - v) / v_des)
    nud = params.alpha * int_per + s_d[:, None] / (1.0 + params.alpha * int_per)
    nud = np.where(active, nud, 0.0)
    return int_per, nud
