"""Safety-enhanced controller: scene recovery, safe distances, speed LP, PIDs, rule gate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import (
    OrientedBox,
    Pose2,
    WaypointPath,
    boxes_intersect,
    boxes_intersect_many,
    ego_to_world,
    heading_of,
    normalize_angle,
    sample_path,
    world_to_ego,
)
from .grid import DensityMap, DetectedObject, accumulate_waypoints, decode_density_map
from .losses import TrafficState
from .tracking import Forecast, Observation, TrackerParams, TrackSet

ENLARGED_CLASSES = ("pedestrian", "bicycle")
BINDING = ("s1", "s2", "accel", "v_max", "none")


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float
    integral_clamp: float = 2.0


@dataclass(frozen=True)
class SafetyParams:
    T: float = 0.5
    a_max: float = 1.0
    v_max: float = 6.5
    s_bar: float = 2.0
    ped_bike_scale: float = 2.0
    safety_factor: float = 1.0
    collision_sample_step: float = 0.1
    forecast_horizons: tuple[float, ...] = (0.5, 1.0)
    threshold1: float = 0.9
    threshold2: float = 0.5
    heading_mode: str = "bearing"
    lateral: PidGains = PidGains(1.2, 0.0, 0.2)
    longitudinal: PidGains = PidGains(0.8, 0.05, 0.0)
    tracker: TrackerParams = TrackerParams()

    def __post_init__(self) -> None:
        if not (self.T > 0 and self.a_max > 0 and self.v_max > 0):
            raise ValueError("T, a_max and v_max must be positive")
        if self.s_bar < 0:
            raise ValueError("s_bar must be non-negative")
        if not self.safety_factor > 0:
            raise ValueError("safety_factor must be positive")
        if not self.collision_sample_step > 0:
            raise ValueError("collision_sample_step must be positive")
        if self.heading_mode not in ("bearing", "tangent"):
            raise ValueError(f"unknown heading_mode {self.heading_mode!r}")
        object.__setattr__(self, "forecast_horizons", tuple(float(h) for h in self.forecast_horizons))

    @property
    def effective_v_max(self) -> float:
        return self.v_max / self.safety_factor

    @property
    def effective_s_bar(self) -> float:
        return self.s_bar * self.safety_factor

    @property
    def tracker_gate(self) -> float:
        return max(self.tracker.gate, self.v_max * self.T)


@dataclass(frozen=True)
class SpeedPlan:
    v_d1: float
    v_d2: float
    feasible: bool
    binding_constraint: str


@dataclass(frozen=True)
class VehicleCommand:
    steer: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0

    def __post_init__(self) -> None:
        if not -1.0 <= self.steer <= 1.0:
            raise ValueError(f"steer out of range: {self.steer}")
        if not (0.0 <= self.throttle <= 1.0 and 0.0 <= self.brake <= 1.0):
            raise ValueError("throttle and brake must be in [0, 1]")
        if self.throttle > 0 and self.brake > 0:
            raise ValueError("throttle and brake cannot both be engaged")


@dataclass(frozen=True)
class PidState:
    gains: PidGains
    integral: float = 0.0
    prev_error: float | None = None


def augment_objects(
    objects: Sequence[DetectedObject], params: SafetyParams
) -> list[DetectedObject]:
    """Enlarge pedestrian and bicycle footprints by ``ped_bike_scale``."""
    k = params.ped_bike_scale
    return [
        replace(o, half_length=o.half_length * k, half_width=o.half_width * k)
        if o.cls in ENLARGED_CLASSES
        else o
        for o in objects
    ]


def _first_free_arclength(
    samples: np.ndarray, s_values: np.ndarray, path: WaypointPath, ego_box: OrientedBox,
    obstacles: Sequence[OrientedBox], refine_steps: int = 14,
) -> float:
    hl, hw = ego_box.half_length, ego_box.half_width
    reach = float(np.max(np.hypot(samples[:, 0], samples[:, 1]))) + ego_box.radius
    first = len(s_values)
    for box in obstacles:
        if math.hypot(box.x, box.y) - box.radius > reach + ego_box.radius:
            continue
        hit = boxes_intersect_many(
            samples[:first, 0], samples[:first, 1], samples[:first, 2], hl, hw, box
        )
        idx = np.flatnonzero(hit)
        if idx.size:
            first = int(idx[0])
            if first == 0:
                return 0.0
    if first == len(s_values):
        return float(s_values[-1])

    def collides(s: float) -> bool:
        x, y, h = sample_path(path, np.array([s]))[0]
        probe = OrientedBox(float(x), float(y), hl, hw, float(h))
        return any(boxes_intersect(probe, b) for b in obstacles)

    lo, hi = float(s_values[first - 1]), float(s_values[first])
    for _ in range(refine_steps):
        mid = 0.5 * (lo + hi)
        if collides(mid):
            hi = mid
        else:
            lo = mid
    return lo


def max_safe_distance_raw(
    path: WaypointPath,
    ego_box: OrientedBox,
    forecasts: Sequence[Forecast],
    horizon: float,
    params: SafetyParams,
) -> float:
    """Collision-free arclength along ``path`` before subtracting the safety margin."""
    length = path.length
    step = params.collision_sample_step
    n = int(math.floor(length / step))
    s_values = np.arange(n + 1) * step
    if s_values[-1] < length:
        s_values = np.append(s_values, length)
    obstacles = [b for f in forecasts for b in f.boxes_until(horizon)]
    if not obstacles:
        return length
    samples = sample_path(path, s_values)
    return _first_free_arclength(samples, s_values, path, ego_box, obstacles)


def max_safe_distance(
    path: WaypointPath,
    ego_box: OrientedBox,
    forecasts: Sequence[Forecast],
    horizon: float,
    params: SafetyParams,
) -> float:
    raw = max_safe_distance_raw(path, ego_box, forecasts, horizon, params)
    return max(raw - params.effective_s_bar, 0.0)


def desired_speed_lp(v0: float, s1: float, s2: float, params: SafetyParams) -> SpeedPlan:
    """Closed-form maximiser of the first-step speed over the two-step LP.

    Constraints, with A = a_max / T and V = v_max / safety_factor:
      (v0 + v1) T <= s1,  (v0 + v1) T + (v1 + v2) T <= s2,
      |v1 - v0| <= A,  |v2 - v1| <= A,  0 <= v1, v2 <= V.
    Eliminating v2 leaves v1 <= (s2/T - v0) / 2 (v2 at 0) and
    v1 <= (s2/T - v0 + A) / 3 (v2 at v1 - A).
    """
    if v0 < 0 or s1 < 0 or s2 < 0:
        raise ValueError(f"v0, s1 and s2 must be non-negative, got {v0}, {s1}, {s2}")
    T = params.T
    A = params.a_max / T
    V = params.effective_v_max
    bounds = {
        "s1": s1 / T - v0,
        "s2": min((s2 / T - v0) / 2.0, (s2 / T - v0 + A) / 3.0),
        "accel": v0 + A,
        "v_max": V,
    }
    binding = min(bounds, key=bounds.__getitem__)
    upper = bounds[binding]
    lower = max(0.0, v0 - A)
    if upper < lower:
        return SpeedPlan(0.0, 0.0, False, "none")
    v1 = upper
    v2_low = max(0.0, v1 - A)
    if binding == "s2":
        v2 = v2_low
    else:
        # v2 is free; take the largest value the constraints allow
        v2 = max(min(V, v1 + A, s2 / T - v0 - 2.0 * v1), v2_low)
    return SpeedPlan(v1, v2, True, binding)


def lp_constraint_violation(v0: float, s1: float, s2: float, plan: SpeedPlan, params: SafetyParams) -> float:
    """Largest violation of any LP constraint by ``plan`` (<= 0 means satisfied)."""
    T, a, V = params.T, params.a_max, params.effective_v_max
    v1, v2 = plan.v_d1, plan.v_d2
    return max(
        (v0 + v1) * T - s1,
        (v0 + v1) * T + (v1 + v2) * T - s2,
        abs(v1 - v0) * T - a,
        abs(v2 - v1) * T - a,
        -v1, v1 - V, -v2, v2 - V,
    )


def desired_heading(path: WaypointPath, mode: str = "bearing") -> float:
    """Steering target from the first two waypoints; positive means to the right."""
    if len(path) < 2:
        raise ValueError("need at least two waypoints")
    (x1, y1), (x2, y2) = path.points[0], path.points[1]
    if mode == "bearing":
        angles = [
            math.atan2(x, y) if (x != 0.0 or y != 0.0) else 0.0 for x, y in ((x1, y1), (x2, y2))
        ]
    elif mode == "tangent":
        segments = ((x1, y1), (x2 - x1, y2 - y1))
        angles = [-heading_of(dx, dy) if (dx or dy) else 0.0 for dx, dy in segments]
    else:
        raise ValueError(f"unknown heading mode {mode!r}")
    sx = sum(math.sin(a) for a in angles)
    cx = sum(math.cos(a) for a in angles)
    if sx == 0.0 and cx == 0.0:
        return normalize_angle(angles[0])
    return normalize_angle(math.atan2(sx, cx))


def pid_step(state: PidState, error: float, dt: float) -> tuple[float, PidState]:
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = state.gains
    integral = min(max(state.integral + error * dt, -g.integral_clamp), g.integral_clamp)
    derivative = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    out = g.kp * error + g.ki * integral + g.kd * derivative
    return out, PidState(g, integral, error)


def traffic_gate(state: TrafficState) -> bool:
    """Emergency stop unless the light is green and no stop sign is ahead."""
    return state.light_green < 0.5 or state.stop_sign >= 0.5


def longitudinal_command(out: float) -> tuple[float, float]:
    if out >= 0:
        return min(out, 1.0), 0.0
    return 0.0, min(-out, 1.0)


EGO_HALF_LENGTH = 2.3
EGO_HALF_WIDTH = 0.95


@dataclass
class TickResult:
    command: VehicleCommand
    diagnostics: dict = field(default_factory=dict)


class SafetyController:
    """Per-episode controller state and the tick pipeline.

    ``variant="no_safety"`` ignores perceived objects and cruises at the
    effective speed limit; the traffic-rule gate stays active.
    """

    def __init__(
        self,
        params: SafetyParams | None = None,
        variant: str = "full",
        ego_half_length: float = EGO_HALF_LENGTH,
        ego_half_width: float = EGO_HALF_WIDTH,
    ):
        if variant not in ("full", "no_safety"):
            raise ValueError(f"unknown controller variant {variant!r}")
        self.params = params or SafetyParams()
        self.variant = variant
        self.ego_box = OrientedBox(0.0, 0.0, ego_half_length, ego_half_width, 0.0)
        self.tracks = TrackSet(replace(self.params.tracker, gate=self.params.tracker_gate))
        self.lateral = PidState(self.params.lateral)
        self.longitudinal = PidState(self.params.longitudinal)

    def _ingest(self, t: float, ego: Pose2, objects: Sequence[DetectedObject]) -> list[Forecast]:
        observations = []
        for o in augment_objects(objects, self.params):
            wx, wy = ego_to_world(o.x, o.y, ego)
            observations.append(
                Observation(wx, wy, normalize_angle(o.heading + ego.heading),
                            o.half_length, o.half_width, o.cls)
            )
        self.tracks.update(observations, t)
        return self.tracks.forecasts(self.params.forecast_horizons)

    def _to_ego(self, f: Forecast, ego: Pose2) -> Forecast:
        def conv(b: OrientedBox) -> OrientedBox:
            x, y = world_to_ego(b.x, b.y, ego)
            return b.moved(x, y, normalize_angle(b.heading - ego.heading))

        return replace(
            f, current=conv(f.current),
            samples=tuple(replace(s, box=conv(s.box)) for s in f.samples),
        )

    def control_tick(
        self,
        t: float,
        ego: Pose2,
        speed: float,
        perception: DensityMap | Sequence[DetectedObject],
        waypoint_deltas: Sequence[Sequence[float]],
        traffic: TrafficState,
    ) -> TickResult:
        p = self.params
        if isinstance(perception, DensityMap):
            objects = decode_density_map(perception, p.threshold1, p.threshold2)
        else:
            objects = list(perception)
        waypoints = accumulate_waypoints(waypoint_deltas)
        route = WaypointPath(((0.0, 0.0),) + waypoints.points)
        v0 = max(speed, 0.0)
        diag: dict = {
            "objects": [asdict(o) for o in objects],
            "v_max_eff": p.effective_v_max,
            "s_bar_eff": p.effective_s_bar,
        }

        forecasts = self._ingest(t, ego, objects)
        if self.variant == "full":
            ego_forecasts = [self._to_ego(f, ego) for f in forecasts]
            s1_raw = max_safe_distance_raw(route, self.ego_box, ego_forecasts, p.T, p)
            s2_raw = max_safe_distance_raw(route, self.ego_box, ego_forecasts, 2 * p.T, p)
            s1 = max(s1_raw - p.effective_s_bar, 0.0)
            s2 = max(s2_raw - p.effective_s_bar, 0.0)
            plan = desired_speed_lp(v0, s1, s2, p)
            v_target = plan.v_d1
            diag.update(s1=s1, s2=s2, s1_raw=s1_raw, s2_raw=s2_raw, plan=asdict(plan))
        else:
            plan = None
            v_target = p.effective_v_max
        diag["v_target"] = v_target

        psi = desired_heading(waypoints, p.heading_mode)
        steer_out, self.lateral = pid_step(self.lateral, psi, p.T)
        lon_out, self.longitudinal = pid_step(self.longitudinal, v_target - v0, p.T)
        steer = min(max(steer_out, -1.0), 1.0)
        throttle, brake = longitudinal_command(lon_out)

        infeasible = plan is not None and not plan.feasible
        stop = traffic_gate(traffic)
        if stop or infeasible:
            throttle, brake = 0.0, 1.0
        diag.update(
            desired_heading=psi,
            emergency_stop=stop,
            lp_infeasible=infeasible,
            tracks=[
                {
                    "id": tr.id,
                    "cls": tr.cls,
                    "position": [tr.x, tr.y],
                    "velocity": list(tr.velocity_estimate(p.tracker.window)),
                    "forecast": [[s.time_offset, s.box.x, s.box.y] for s in f.samples],
                }
                for tr, f in zip(self.tracks.tracks, forecasts)
            ],
        )
        return TickResult(VehicleCommand(steer, throttle, brake), diag)
