"""Planar geometry shared by the perception, tracking, planning and sim layers.

Frame convention: in the ego frame +y points forward and +x to the right.
World headings use the same convention, so heading 0 faces world +y and
headings grow counter-clockwise. The unit forward vector of a heading ``h``
is ``(-sin h, cos h)`` and its right vector is ``(cos h, sin h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap ``theta`` into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    a = math.remainder(theta, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def forward_vector(heading: float) -> tuple[float, float]:
    return -math.sin(heading), math.cos(heading)


def heading_of(dx: float, dy: float) -> float:
    """Heading whose forward vector points along (dx, dy)."""
    return normalize_angle(math.atan2(-dx, dy))


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", normalize_angle(self.heading))


@dataclass(frozen=True)
class OrientedBox:
    """Closed rectangle; ``half_length`` runs along the heading."""

    x: float
    y: float
    half_length: float
    half_width: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        if not (self.half_length > 0 and self.half_width > 0):
            raise ValueError(
                f"box extents must be positive, got {self.half_length}, {self.half_width}"
            )

    def moved(self, x: float, y: float, heading: float | None = None) -> "OrientedBox":
        return replace(self, x=x, y=y, heading=self.heading if heading is None else heading)

    def scaled(self, factor: float) -> "OrientedBox":
        return replace(
            self, half_length=self.half_length * factor, half_width=self.half_width * factor
        )

    @property
    def radius(self) -> float:
        return math.hypot(self.half_length, self.half_width)

    def corners(self) -> np.ndarray:
        return box_corners(self.x, self.y, self.heading, self.half_length, self.half_width)


def box_corners(x, y, heading, half_length, half_width) -> np.ndarray:
    """Corners of one or many boxes, shape (..., 4, 2), counter-clockwise."""
    x, y, heading = np.asarray(x, float), np.asarray(y, float), np.asarray(heading, float)
    fx, fy = -np.sin(heading), np.cos(heading)
    rx, ry = np.cos(heading), np.sin(heading)
    signs = np.array([(1, 1), (1, -1), (-1, -1), (-1, 1)], float)
    lon = signs[:, 0] * np.asarray(half_length, float)[..., None]
    lat = signs[:, 1] * np.asarray(half_width, float)[..., None]
    cx = x[..., None] + lon * fx[..., None] + lat * rx[..., None]
    cy = y[..., None] + lon * fy[..., None] + lat * ry[..., None]
    return np.stack([cx, cy], axis=-1)


def _box_axes(heading: float) -> tuple[tuple[float, float], tuple[float, float]]:
    return (-math.sin(heading), math.cos(heading)), (math.cos(heading), math.sin(heading))


def boxes_intersect(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis test on the four edge normals; touching counts as overlap."""
    dx, dy = b.x - a.x, b.y - a.y
    if dx * dx + dy * dy > (a.radius + b.radius) ** 2:
        return False
    fa, ra = _box_axes(a.heading)
    fb, rb = _box_axes(b.heading)
    for ax, ay in (fa, ra, fb, rb):
        dist = abs(dx * ax + dy * ay)
        ext_a = a.half_length * abs(fa[0] * ax + fa[1] * ay) + a.half_width * abs(
            ra[0] * ax + ra[1] * ay
        )
        ext_b = b.half_length * abs(fb[0] * ax + fb[1] * ay) + b.half_width * abs(
            rb[0] * ax + rb[1] * ay
        )
        if dist > ext_a + ext_b:
            return False
    return True


def boxes_intersect_many(
    xs: np.ndarray,
    ys: np.ndarray,
    headings: np.ndarray,
    half_length: float,
    half_width: float,
    other: OrientedBox,
) -> np.ndarray:
    """Vectorised :func:`boxes_intersect` of N same-sized boxes against ``other``."""
    dx, dy = other.x - xs, other.y - ys
    fax, fay = -np.sin(headings), np.cos(headings)
    rax, ray = np.cos(headings), np.sin(headings)
    (fbx, fby), (rbx, rby) = _box_axes(other.heading)
    hit = np.ones(xs.shape, bool)
    for ax, ay in ((fax, fay), (rax, ray), (fbx, fby), (rbx, rby)):
        dist = np.abs(dx * ax + dy * ay)
        ext_a = half_length * np.abs(fax * ax + fay * ay) + half_width * np.abs(rax * ax + ray * ay)
        ext_b = other.half_length * np.abs(fbx * ax + fby * ay) + other.half_width * np.abs(
            rbx * ax + rby * ay
        )
        hit &= dist <= ext_a + ext_b
    return hit


def world_to_ego(px: float, py: float, ego: Pose2) -> tuple[float, float]:
    dx, dy = px - ego.x, py - ego.y
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    return c * dx + s * dy, -s * dx + c * dy


def ego_to_world(ex: float, ey: float, ego: Pose2) -> tuple[float, float]:
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    return ego.x + c * ex - s * ey, ego.y + s * ex + c * ey


@dataclass(frozen=True)
class WaypointPath:
    points: tuple[tuple[float, float], ...]

    def __init__(self, points: Sequence[Sequence[float]]):
        object.__setattr__(self, "points", tuple((float(p[0]), float(p[1])) for p in points))

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, float).reshape(-1, 2)

    def cumulative_length(self) -> np.ndarray:
        pts = self.as_array()
        seg = np.hypot(*np.diff(pts, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.cumulative_length()[-1])

    def segment_headings(self) -> list[float]:
        """Tangent heading per segment; zero-length segments reuse the previous one."""
        out: list[float] = []
        prev = 0.0
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            if x1 != x0 or y1 != y0:
                prev = heading_of(x1 - x0, y1 - y0)
            out.append(prev)
        return out


def path_point_at_arclength(path: WaypointPath, s: float) -> tuple[float, float, float]:
    """Point and tangent heading at arclength ``s`` along the polyline.

    Beyond the end the final point is returned with the final segment heading.
    """
    if len(path) < 2:
        raise ValueError("path needs at least two points")
    if s < 0:
        raise ValueError(f"arclength must be non-negative, got {s}")
    cum = path.cumulative_length()
    headings = path.segment_headings()
    if s >= cum[-1]:
        x, y = path.points[-1]
        return x, y, headings[-1]
    k = int(np.searchsorted(cum, s, side="right")) - 1
    seg = cum[k + 1] - cum[k]
    u = (s - cum[k]) / seg
    (x0, y0), (x1, y1) = path.points[k], path.points[k + 1]
    return x0 + u * (x1 - x0), y0 + u * (y1 - y0), headings[k]


def sample_path(path: WaypointPath, s_values: np.ndarray) -> np.ndarray:
    """Vectorised :func:`path_point_at_arclength`; returns (N, 3) rows of x, y, heading."""
    if len(path) < 2:
        raise ValueError("path needs at least two points")
    pts = path.as_array()
    cum = path.cumulative_length()
    headings = np.asarray(path.segment_headings())
    s = np.clip(np.asarray(s_values, float), 0.0, cum[-1])
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2)
    seg = cum[k + 1] - cum[k]
    u = np.divide(s - cum[k], seg, out=np.zeros_like(s), where=seg > 0)
    xy = pts[k] + u[:, None] * (pts[k + 1] - pts[k])
    return np.column_stack([xy, headings[k]])


def project_onto_polyline(
    points: np.ndarray, cum: np.ndarray, px: float, py: float, lo: float = 0.0, hi: float = math.inf
) -> tuple[float, float]:
    """Arclength of the closest polyline point with arclength in [lo, hi], and its distance."""
    best_s, best_d = lo, math.inf
    for k in range(len(points) - 1):
        if cum[k + 1] < lo or cum[k] > hi:
            continue
        (x0, y0), (x1, y1) = points[k], points[k + 1]
        ex, ey = x1 - x0, y1 - y0
        seg2 = ex * ex + ey * ey
        u = 0.0 if seg2 == 0 else ((px - x0) * ex + (py - y0) * ey) / seg2
        u = min(max(u, 0.0), 1.0)
        s = min(max(cum[k] + u * (cum[k + 1] - cum[k]), lo), hi)
        d = math.hypot(px - (x0 + u * ex), py - (y0 + u * ey))
        if d < best_d:
            best_s, best_d = s, d
    return best_s, best_d
