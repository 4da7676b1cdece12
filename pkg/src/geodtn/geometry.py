"""Planar vector math and the two geographic relay metrics.

All angles are radians, positions are metres, speeds metres/second.
"""

from __future__ import annotations

import math
from typing import NamedTuple


class GeometryError(ValueError):
    pass


class ZeroSpeed(GeometryError):
    pass


class CoincidentDestination(GeometryError):
    pass


class InvalidHeading(GeometryError):
    pass


class AlreadyInRange(GeometryError):
    pass


class Position(NamedTuple):
    x: float
    y: float


class Velocity(NamedTuple):
    dx: float
    dy: float

    @property
    def speed(self) -> float:
        return math.hypot(self.dx, self.dy)


def distance(a, b) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def relative_angle(pos, vel, dest) -> float:
    """Angle in [0, pi] between the heading ``vel`` and the bearing ``pos -> dest``."""
    speed = math.hypot(vel[0], vel[1])
    if speed == 0.0:
        raise ZeroSpeed("relative angle undefined for a stationary node")
    bx = dest[0] - pos[0]
    by = dest[1] - pos[1]
    dist = math.hypot(bx, by)
    if dist == 0.0:
        raise CoincidentDestination("node sits on the destination")
    cos_phi = (vel[0] * bx + vel[1] * by) / (speed * dist)
    # floating-point drift can push |cos| slightly past 1
    cos_phi = max(-1.0, min(1.0, cos_phi))
    return math.acos(cos_phi)


def intersect_time(dist: float, range_: float, speed: float, phi: float) -> float:
    """Heuristic time (s) for a node to reach the destination's radio range.

    ``(dist - range_) / (speed * cos(phi))``. Only defined while heading towards
    the destination (``phi < pi/2``) and still outside its range.
    """
    if speed <= 0.0:
        raise ZeroSpeed("intersect time needs a moving node")
    if not phi < math.pi / 2:
        raise InvalidHeading(f"heading {phi:.6f} rad is not towards the destination")
    if dist <= range_:
        raise AlreadyInRange(f"distance {dist} within range {range_}")
    return (dist - range_) / (speed * math.cos(phi))


def projected_distance(dist: float, window: float, speed: float, phi: float, range_: float) -> float:
    """Distance to the destination after travelling ``window`` seconds, less the range."""
    if phi == math.pi / 2:
        # cos(pi/2) is 6e-17 in floating point; keep the perpendicular case exact
        return dist - range_
    return dist - window * math.cos(phi) * speed - range_
