"""Independent reference implementations used by the unit and acceptance tests."""

from __future__ import annotations

import math

import numpy as np

from safedrive.geometry import OrientedBox, WaypointPath, boxes_intersect, sample_path
from safedrive.grid import MIN_BOX_EXTENT, OBJECT_CLASSES, DetectedObject, bev_shape
from safedrive.losses import BCE_EPS

LP_GRID = 1e-3


def lp_grid_oracle(v0, s1, s2, T, a_max, v_max, step=LP_GRID):
    """Largest grid v1 for which some grid v2 satisfies every LP constraint.

    v1 runs over the grid k * step in [0, v_max]. For each v1 the constraints
    leave v2 an interval; a grid v2 exists iff that interval holds a multiple
    of ``step``. Returns ``(feasible, v1)``.
    """
    k = np.arange(int(math.floor(v_max / step + 1e-9)) + 1)
    v1 = k * step
    ok = ((v0 + v1) * T <= s1) & (np.abs(v1 - v0) * T <= a_max) & (v1 <= v_max)
    lo = np.maximum(0.0, v1 - a_max / T)
    hi = np.minimum.reduce([
        np.full_like(v1, v_max),
        v1 + a_max / T,
        s2 / T - v0 - 2.0 * v1,
    ])
    # the v2 constraints are rechecked on the chosen grid value itself
    k2 = np.ceil(lo / step - 1e-9)
    v2 = k2 * step
    ok &= v2 <= hi + 1e-12
    ok &= ((v0 + v1) * T + (v1 + v2) * T <= s2) & (np.abs(v2 - v1) * T <= a_max) & (v2 <= v_max)
    if not ok.any():
        return False, 0.0
    return True, float(v1[np.flatnonzero(ok)[-1]])


def lp_dense_grid(v0, s1, s2, T, a_max, v_max, step=LP_GRID):
    """Literal two-dimensional grid search; slow, for a handful of instances."""
    g = np.arange(int(math.floor(v_max / step + 1e-9)) + 1) * step
    best = None
    v2 = g[None, :]
    for start in range(0, len(g), 512):
        v1 = g[start:start + 512, None]
        ok = (
            ((v0 + v1) * T <= s1)
            & ((v0 + v1) * T + (v1 + v2) * T <= s2)
            & (np.abs(v1 - v0) * T <= a_max)
            & (np.abs(v2 - v1) * T <= a_max)
        )
        rows = np.flatnonzero(ok.any(axis=1))
        if rows.size:
            best = float(g[start + rows[-1]])
    if best is None:
        return False, 0.0
    return True, best


def fine_sweep_free_distance(path: WaypointPath, ego: OrientedBox, obstacles, step=1e-3) -> float:
    """Arclength of the last collision-free 1 mm sample before the first contact."""
    length = path.length
    s = np.arange(int(math.floor(length / step)) + 1) * step
    poses = sample_path(path, s)
    prev = 0.0
    for si, (x, y, h) in zip(s, poses):
        probe = OrientedBox(float(x), float(y), ego.half_length, ego.half_width, float(h))
        if any(boxes_intersect(probe, b) for b in obstacles):
            return prev
        prev = float(si)
    return length


def circular_mean(angles) -> float:
    return math.atan2(sum(math.sin(a) for a in angles), sum(math.cos(a) for a in angles))


def naive_decode(cells, t1, t2):
    R = cells.shape[0]
    found = []
    for i in range(R):
        for j in range(R):
            p = cells[i, j, 0]
            neighbours = []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    ii, jj = i + di, j + dj
                    neighbours.append(cells[ii, jj, 0] if 0 <= ii < R and 0 <= jj < R else 0.0)
            if p > t1 or (p > t2 and all(p > q for q in neighbours)):
                ox = min(max(cells[i, j, 1], -0.5), 0.5)
                oy = min(max(cells[i, j, 2], -0.5), 0.5)
                heading, speed, bx, by = cells[i, j, 3:]
                found.append((-R / 2 + j + 0.5 + ox, i + 0.5 + oy, heading, speed,
                              max(bx, MIN_BOX_EXTENT), max(by, MIN_BOX_EXTENT)))
    return found


def spaced_scene(rng, n):
    """``n`` random objects whose centres are pairwise more than 2 m apart."""
    pts = []
    while len(pts) < n:
        p = (rng.uniform(-10, 10), rng.uniform(0, 20))
        if all(math.hypot(p[0] - q[0], p[1] - q[1]) > 2.0 for q in pts):
            pts.append(p)
    return [
        DetectedObject(x, y, heading=rng.uniform(-math.pi, math.pi), speed=rng.uniform(0, 10),
                       half_length=rng.uniform(0.3, 2.5), half_width=rng.uniform(0.3, 1.2),
                       cls=OBJECT_CLASSES[rng.integers(4)])
        for x, y in pts
    ]


def brute_force_bev(points, ground_z, cs, ahead, side):
    rows, cols = bev_shape(cs, ahead, side)
    counts = np.zeros((2, rows, cols), dtype=np.int64)
    for x, y, z in points:
        if not (0 <= y < ahead and -side <= x < side):
            continue
        i = math.floor(y / cs)
        while i * cs > y:
            i -= 1
        while (i + 1) * cs <= y and i + 1 < rows:
            i += 1
        j = math.floor((x + side) / cs)
        while j * cs > x + side:
            j -= 1
        while (j + 1) * cs <= x + side and j + 1 < cols:
            j += 1
        counts[0 if z > ground_z else 1, i, j] += 1
    return counts


# loss oracles: plain loops, no numpy reductions

def oracle_waypoint(p, t):
    total = 0.0
    for (px, py), (tx, ty) in zip(p, t):
        total += abs(px - tx) + abs(py - ty)
    return total


def oracle_prob(pred, target):
    R = len(target)
    s0 = s1 = 0.0
    c0 = c1 = 0
    for i in range(R):
        for j in range(R):
            e = abs(target[i][j][0] - pred[i][j][0])
            if target[i][j][0] == 1.0:
                s1 += e
                c1 += 1
            else:
                s0 += e
                c0 += 1
    return 0.5 * ((s0 / c0 if c0 else 0.0) + (s1 / c1 if c1 else 0.0))


def oracle_meta(pred, target):
    R = len(target)
    total, c1 = 0.0, 0
    for i in range(R):
        for j in range(R):
            if target[i][j][0] != 1.0:
                continue
            c1 += 1
            for k in range(1, 7):
                total += abs(target[i][j][k] - pred[i][j][k])
    return total / c1 if c1 else 0.0


def oracle_traffic(pred, target, w):
    out = 0.0
    for weight, p, t in zip((w.light, w.stop, w.junction), pred, target):
        p = min(max(p, BCE_EPS), 1 - BCE_EPS)
        out += weight * -(t * math.log(p) + (1 - t) * math.log(1 - p))
    return out
