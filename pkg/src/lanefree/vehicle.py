"""Per-vehicle state shared by the geometry, environment and reward code."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class Route(IntEnum):
    MAINLINE = 0
    EXITING = 1
    ENTERING = 2


class RampPhase(IntEnum):
    NONE = 0
    ON_ACCEL_LANE = 1
    PRE_DIVERGE = 2
    ON_DECEL_LANE = 3


@dataclass
class VehicleState:
    """Snapshot of one vehicle.

    ``x`` runs along the road axis, ``y`` is the lateral offset from the
    centerline with positive values to the left.  ``v_lon_prev`` and
    ``y_prev`` hold the values of the previous simulation step, which the
    safety ellipse needs.
    """

    id: int
    x: float
    y: float
    v_lon: float
    v_lat: float = 0.0
    acc_lon: float = 0.0
    v_des: float = 30.0
    length: float = 3.2
    width: float = 1.8
    route: Route = Route.MAINLINE
    ramp_phase: RampPhase = RampPhase.NONE
    v_lon_prev: float | None = None
    y_prev: float | None = None

    @property
    def speed_deficit(self) -> float:
        """Normalized shortfall from the desired speed, ``(v_des - v) / v_des``."""
        return (self.v_des - self.v_lon) / self.v_des

    @property
    def prev_speed(self) -> float:
        return self.v_lon if self.v_lon_prev is None else self.v_lon_prev

    @property
    def prev_y(self) -> float:
        return self.y if self.y_prev is None else self.y_prev
