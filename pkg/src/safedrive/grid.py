"""Object density map, LiDAR BEV histogram, waypoint accumulation, perception stub.

Cell (i, j) of an R x R map covers x in [-R/2 + j, -R/2 + j + 1) and
y in [i, i + 1) metres of the ego frame, so rows grow forward and the map
reaches R metres ahead and R/2 metres to either side.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .geometry import WaypointPath, normalize_angle

CHANNELS = ("prob", "offset_x", "offset_y", "heading", "speed", "box_x", "box_y")
N_CHANNELS = len(CHANNELS)
OBJECT_CLASSES = ("vehicle", "pedestrian", "bicycle", "static")

# default footprint (half extents) for spurious detections
_FP_HALF_LENGTH, _FP_HALF_WIDTH = 2.3, 0.95
# decoded box extents are floored here so every detection has a proper box
MIN_BOX_EXTENT = 0.05


@dataclass(frozen=True)
class DetectedObject:
    x: float
    y: float
    heading: float
    speed: float
    half_length: float
    half_width: float
    confidence: float = 1.0
    cls: str = "vehicle"

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if not (self.half_length > 0 and self.half_width > 0):
            raise ValueError("box extents must be positive")
        if self.cls not in OBJECT_CLASSES:
            raise ValueError(f"unknown object class {self.cls!r}")


@dataclass(frozen=True, eq=False)
class DensityMap:
    """R x R x 7 grid. ``classes`` rides along out-of-band and is never serialised."""

    cells: np.ndarray
    classes: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.ndim != 3 or cells.shape[0] != cells.shape[1] or cells.shape[2] != N_CHANNELS:
            raise ValueError(f"density map must be R x R x 7, got shape {cells.shape}")
        if not np.all(np.isfinite(cells)):
            raise ValueError("density map values must be finite")
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def R(self) -> int:
        return self.cells.shape[0]

    @property
    def prob(self) -> np.ndarray:
        return self.cells[..., 0]

    @classmethod
    def zeros(cls, R: int) -> "DensityMap":
        return cls(np.zeros((R, R, N_CHANNELS)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DensityMap) and np.array_equal(self.cells, other.cells)

    # Text record: first line "R 7", then one line per cell (row-major, i then j)
    # holding the 7 channel values. Binary record: two little-endian int32 (R, 7)
    # followed by R*R*7 little-endian float64 in the same order.
    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.R} {N_CHANNELS}\n")
        for row in self.cells.reshape(-1, N_CHANNELS):
            buf.write(" ".join(repr(float(v)) for v in row))
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "DensityMap":
        lines = text.strip().splitlines()
        if not lines:
            raise ValueError("empty density map record")
        header = lines[0].split()
        if len(header) != 2 or int(header[1]) != N_CHANNELS:
            raise ValueError(f"bad density map header {lines[0]!r}")
        R = int(header[0])
        if len(lines) - 1 != R * R:
            raise ValueError(f"expected {R * R} cell lines, got {len(lines) - 1}")
        values = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
        return cls(values.reshape(R, R, N_CHANNELS))

    def to_bytes(self) -> bytes:
        return struct.pack("<ii", self.R, N_CHANNELS) + self.cells.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "DensityMap":
        R, C = struct.unpack_from("<ii", data)
        if C != N_CHANNELS:
            raise ValueError(f"bad channel count {C}")
        values = np.frombuffer(data, dtype="<f8", offset=8)
        if values.size != R * R * C:
            raise ValueError("truncated density map record")
        return cls(values.reshape(R, R, C))


def cell_of(x: float, y: float, R: int) -> tuple[int, int] | None:
    """Row/column of the cell containing ego-frame point (x, y), or None if uncovered."""
    half = R / 2
    if not (-half <= x < half and 0.0 <= y < R):
        return None
    j = int(math.floor(x + half))
    # x + half can round across a cell edge; cell edges themselves are exact
    if x < -half + j:
        j -= 1
    elif x >= -half + j + 1:
        j += 1
    return int(math.floor(y)), j


def cell_center(i: int, j: int, R: int) -> tuple[float, float]:
    return -R / 2 + j + 0.5, i + 0.5


def encode_density_map(objects: Iterable[DetectedObject], R: int = 20) -> DensityMap:
    if R <= 0:
        raise ValueError(f"grid size must be positive, got {R}")
    cells = np.zeros((R, R, N_CHANNELS))
    classes = np.full((R, R), "", dtype=object)
    best = np.full((R, R), np.inf)
    for obj in objects:
        ij = cell_of(obj.x, obj.y, R)
        if ij is None:
            continue
        i, j = ij
        dist = math.hypot(obj.x, obj.y)
        if dist >= best[i, j]:
            continue  # nearer object already owns the cell
        best[i, j] = dist
        cx, cy = cell_center(i, j, R)
        cells[i, j] = (
            1.0,
            obj.x - cx,
            obj.y - cy,
            normalize_angle(obj.heading),
            obj.speed,
            obj.half_width,
            obj.half_length,
        )
        classes[i, j] = obj.cls
    return DensityMap(cells, classes)


def detection_mask(prob: np.ndarray, threshold1: float, threshold2: float) -> np.ndarray:
    """Cells passing the two-threshold rule (high confidence, or strict local max)."""
    R0, R1 = prob.shape
    padded = np.zeros((R0 + 2, R1 + 2))
    padded[1:-1, 1:-1] = prob
    neighbour_max = np.full(prob.shape, -np.inf)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neighbour_max = np.maximum(
                neighbour_max, padded[1 + di : 1 + di + R0, 1 + dj : 1 + dj + R1]
            )
    return (prob > threshold1) | ((prob > threshold2) & (prob > neighbour_max))


def decode_density_map(
    dmap: DensityMap, threshold1: float = 0.9, threshold2: float = 0.5
) -> list[DetectedObject]:
    if not threshold2 < threshold1:
        raise ValueError(f"threshold2 ({threshold2}) must be below threshold1 ({threshold1})")
    R = dmap.R
    cells = dmap.cells
    out = []
    for i, j in zip(*np.nonzero(detection_mask(cells[..., 0], threshold1, threshold2))):
        p, ox, oy, heading, speed, bx, by = (float(v) for v in cells[i, j])
        cx, cy = cell_center(int(i), int(j), R)
        cls = "vehicle"
        if dmap.classes is not None and dmap.classes[i, j]:
            cls = str(dmap.classes[i, j])
        out.append(
            DetectedObject(
                x=cx + min(max(ox, -0.5), 0.5),
                y=cy + min(max(oy, -0.5), 0.5),
                heading=normalize_angle(heading),
                speed=speed,
                half_length=max(by, MIN_BOX_EXTENT),
                half_width=max(bx, MIN_BOX_EXTENT),
                confidence=min(max(p, 0.0), 1.0),
                cls=cls,
            )
        )
    return out


@dataclass(frozen=True)
class BevHistogram:
    """Channel 0 counts points above the ground plane, channel 1 the rest."""

    counts: np.ndarray
    cell_size: float
    ahead: float
    side: float

    @property
    def total(self) -> int:
        return int(self.counts.sum())


BEV_CELL_SIZE = math.sqrt(0.125)
BEV_AHEAD = 28.0
BEV_SIDE = 14.0


def bev_shape(cell_size: float = BEV_CELL_SIZE, ahead: float = BEV_AHEAD, side: float = BEV_SIDE):
    return math.ceil(ahead / cell_size), math.ceil(2 * side / cell_size)


def lidar_to_bev(
    points: np.ndarray | Sequence[Sequence[float]],
    ground_z: float = 0.0,
    cell_size: float = BEV_CELL_SIZE,
    ahead: float = BEV_AHEAD,
    side: float = BEV_SIDE,
) -> BevHistogram:
    rows, cols = bev_shape(cell_size, ahead, side)
    counts = np.zeros((2, rows, cols), dtype=np.int64)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts):
        x, y, z = pts.T
        keep = (y >= 0) & (y < ahead) & (x >= -side) & (x < side)
        x, y, z = x[keep], y[keep], z[keep]
        i = np.minimum((y / cell_size).astype(np.int64), rows - 1)
        j = np.minimum(((x + side) / cell_size).astype(np.int64), cols - 1)
        ch = np.where(z > ground_z, 0, 1)
        np.add.at(counts, (ch, i, j), 1)
    return BevHistogram(counts, cell_size, ahead, side)


def accumulate_waypoints(deltas: Sequence[Sequence[float]]) -> WaypointPath:
    """Turn per-step displacements into ego-frame waypoints by running sums."""
    d = np.asarray(deltas, dtype=float).reshape(-1, 2)
    if len(d) < 1:
        raise ValueError("need at least one waypoint displacement")
    return WaypointPath(np.cumsum(d, axis=0))


@dataclass(frozen=True)
class NoiseConfig:
    position_sigma: float = 0.0
    dropout_prob: float = 0.0
    false_positive_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.position_sigma < 0 or self.false_positive_rate < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must be in [0, 1]")


def corrupt_perception(
    objects: Sequence[DetectedObject], cfg: NoiseConfig, R: int = 20
) -> list[DetectedObject]:
    """Stand-in for a learned detector: jitter, drop and hallucinate objects."""
    rng = np.random.default_rng(cfg.seed)
    out = []
    for obj in objects:
        if cfg.dropout_prob > 0 and rng.random() < cfg.dropout_prob:
            continue
        if cfg.position_sigma > 0:
            dx, dy = rng.normal(0.0, cfg.position_sigma, size=2)
            obj = replace(obj, x=obj.x + float(dx), y=obj.y + float(dy))
        out.append(obj)
    if cfg.false_positive_rate > 0:
        for _ in range(int(rng.poisson(cfg.false_positive_rate))):
            x = float(rng.uniform(-R / 2, R / 2))
            y = float(rng.uniform(0.0, R))
            out.append(
                DetectedObject(
                    x=x,
                    y=y,
                    heading=float(rng.uniform(-math.pi, math.pi)),
                    speed=0.0,
                    half_length=_FP_HALF_LENGTH,
                    half_width=_FP_HALF_WIDTH,
                    confidence=1.0,
                    cls="vehicle",
                )
            )
    return out
