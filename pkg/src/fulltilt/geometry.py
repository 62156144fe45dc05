"""Coordinate conventions, tilt schedules, and the 3D<->2D projection.

Single-axis tilt about y: a 3D point projects onto a tilt image as

    x_proj = (x - W/2) * cos(theta) + (z - D/2) * sin(theta) + W/2
    y_proj = y

Coordinates are continuous, voxel-center convention: voxel (0,0,0) spans
[0,1)^3 and its center is (0.5, 0.5, 0.5). Angles are degrees everywhere
outside this module; conversion to radians happens at the trig boundary.

Both the simulator and the detector's decoder share this one forward model.
All functions here are pure and total (no clamping); callers decide whether
an out-of-bounds projection is valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class TomogramDims:
    """Volume extent in pixels (width W, height H, depth D)."""

    w: int
    h: int
    d: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0 or self.d <= 0:
            raise ValueError(f"dims must be strictly positive, got {self}")


@dataclass(frozen=True)
class TiltSchedule:
    """Strictly increasing tilt angles in degrees, each in (-90, 90)."""

    angles_deg: tuple[float, ...]

    def __post_init__(self):
        if len(self.angles_deg) < 1:
            raise ValueError("schedule needs at least one angle")
        for a in self.angles_deg:
            if not -90.0 < a < 90.0:
                raise ValueError(f"angle {a} outside (-90, 90)")
        for lo, hi in zip(self.angles_deg, self.angles_deg[1:]):
            if hi <= lo:
                raise ValueError("angles must be strictly increasing")

    def __len__(self):
        return len(self.angles_deg)


@dataclass(frozen=True)
class Point3D:
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Particle3D:
    """A spherical target: center, diameter (pixels), positive class label."""

    x: float
    y: float
    z: float
    d: float
    class_label: int

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("diameter must be positive")
        if self.class_label <= 0:
            raise ValueError("class label must be a positive integer")

    @property
    def center(self) -> Point3D:
        return Point3D(self.x, self.y, self.z)


@dataclass(frozen=True)
class Box2D:
    """A square 2D box (x, y, d, d) on one tilt image."""

    tilt_index: int
    x: float
    y: float
    d: float
    class_label: int

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("diameter must be positive")


def project_point(p: Point3D, theta_deg: float, dims: TomogramDims) -> tuple[float, float]:
    """Project a 3D point onto the tilt image at angle theta (degrees).

    Returns continuous pixel coordinates (x_proj, y_proj); the result may
    lie outside [0, W].
    """
    t = math.radians(theta_deg)
    x_proj = (p.x - dims.w / 2.0) * math.cos(t) + (p.z - dims.d / 2.0) * math.sin(t) + dims.w / 2.0
    return x_proj, p.y


def project_particle(p: Particle3D, theta_deg: float, dims: TomogramDims, tilt_index: int = 0) -> Box2D:
    """Project a spherical particle onto a tilt image.

    The orthographic silhouette of a sphere is a disc of the same diameter
    at every angle, so only the center moves.
    """
    x_proj, y_proj = project_point(p.center, theta_deg, dims)
    return Box2D(tilt_index=tilt_index, x=x_proj, y=y_proj, d=p.d, class_label=p.class_label)


def tilt_schedule(min_deg: float, max_deg: float, step_deg: float) -> TiltSchedule:
    """Uniform schedule min, min+step, ... up to and including max when it lands on the grid."""
    if step_deg <= 0:
        raise ValueError("step must be positive")
    if min_deg > max_deg:
        raise ValueError("min angle exceeds max angle")
    n = int(math.floor((max_deg - min_deg) / step_deg + 1e-9)) + 1
    return TiltSchedule(tuple(min_deg + i * step_deg for i in range(n)))


def nearest_zero_tilt(schedule: TiltSchedule) -> int:
    """Index of the angle with smallest |theta|; ties break toward the lower index."""
    best = 0
    for i, a in enumerate(schedule.angles_deg):
        if abs(a) < abs(schedule.angles_deg[best]):
            best = i
    return best


def normalize_box(x: float, y: float, z: float, d: float, dims: TomogramDims) -> tuple[float, float, float, float]:
    """Pixel box (x, y, z, d) -> unit-cube coordinates (x/W, y/H, z/D, d/W)."""
    return x / dims.w, y / dims.h, z / dims.d, d / dims.w


def denormalize_box(x: float, y: float, z: float, d: float, dims: TomogramDims) -> tuple[float, float, float, float]:
    """Inverse of :func:`normalize_box`, exact up to floating point."""
    return x * dims.w, y * dims.h, z * dims.d, d * dims.w
