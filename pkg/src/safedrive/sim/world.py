"""Deterministic 2D world: kinematic ego, scripted agents, timed traffic rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import (
    OrientedBox,
    Pose2,
    WaypointPath,
    forward_vector,
    normalize_angle,
    project_onto_polyline,
    sample_path,
    world_to_ego,
)
from ..grid import DetectedObject, cell_of
from ..losses import TrafficState
from ..safety import VehicleCommand
from .scenario import AgentSpec, Scenario, ScenarioError


@dataclass(frozen=True)
class EgoLimits:
    wheelbase: float = 2.9
    half_length: float = 2.3
    half_width: float = 0.95
    a_acc_max: float = 3.0
    a_brk_max: float = 6.0
    delta_max: float = 0.6
    v_phys_max: float = 15.0
    drag: float = 0.0


@dataclass(frozen=True)
class EgoState:
    pose: Pose2
    speed: float
    command: VehicleCommand = VehicleCommand()

    def box(self, limits: EgoLimits) -> OrientedBox:
        return OrientedBox(self.pose.x, self.pose.y, limits.half_length, limits.half_width,
                           self.pose.heading)


def step_ego(state: EgoState, command: VehicleCommand, dt: float, limits: EgoLimits) -> EgoState:
    """Forward-Euler kinematic bicycle step. Positive steer turns right (clockwise)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v, h = state.speed, state.pose.heading
    accel = command.throttle * limits.a_acc_max - command.brake * limits.a_brk_max - limits.drag * v
    speed = min(max(v + accel * dt, 0.0), limits.v_phys_max)
    delta = command.steer * limits.delta_max
    fx, fy = forward_vector(h)
    pose = Pose2(
        state.pose.x + v * fx * dt,
        state.pose.y + v * fy * dt,
        h - (v / limits.wheelbase) * math.tan(delta) * dt,
    )
    return EgoState(pose, speed, command)


class AgentState:
    """A scripted agent moving along its polyline at a trigger-controlled speed."""

    def __init__(self, spec: AgentSpec):
        self.spec = spec
        self.s = 0.0
        self.speed = spec.speed
        self.target_speed = spec.speed
        self.rate = 0.0
        self.fired = [False] * len(spec.triggers)
        if len(spec.path) >= 2:
            self._path = WaypointPath(spec.path)
            self._length = self._path.length
        else:
            self._path = None
            self._length = 0.0

    def pose(self) -> Pose2:
        if self._path is None:
            x, y = self.spec.path[0]
            return Pose2(x, y, self.spec.heading)
        x, y, h = sample_path(self._path, np.array([self.s]))[0]
        return Pose2(float(x), float(y), float(h))

    @property
    def at_end(self) -> bool:
        return self._path is None or self.s >= self._length

    @property
    def moving_speed(self) -> float:
        return 0.0 if self.at_end else self.speed

    def box(self) -> OrientedBox:
        p = self.pose()
        return OrientedBox(p.x, p.y, self.spec.half_length, self.spec.half_width, p.heading)

    def step(self, dt: float) -> None:
        if self.speed != self.target_speed:
            dv = self.target_speed - self.speed
            self.speed += math.copysign(min(abs(dv), self.rate * dt), dv)
        if self._path is not None:
            self.s = min(self.s + self.speed * dt, self._length)

    def snapshot(self) -> dict:
        p = self.pose()
        return {
            "id": self.spec.id,
            "cls": self.spec.cls,
            "x": p.x,
            "y": p.y,
            "heading": p.heading,
            "speed": self.moving_speed,
            "half_length": self.spec.half_length,
            "half_width": self.spec.half_width,
        }


class World:
    def __init__(self, scenario: Scenario, limits: EgoLimits | None = None):
        self.scenario = scenario
        self.limits = limits or EgoLimits()
        self.time = 0.0
        self.steps = 0
        self.ego = EgoState(scenario.ego_start, scenario.ego_speed)
        self.agents = [AgentState(a) for a in scenario.agents]
        self.route = WaypointPath(scenario.route)
        self.route_points = self.route.as_array()
        self.route_cum = self.route.cumulative_length()
        self.route_length = float(self.route_cum[-1])
        if self.route_length <= 0:
            raise ScenarioError("route has zero length")
        self.progress = self._project(0.0, self.route_length)
        self.odometer = 0.0
        self.served_stops: set[int] = set()

    def _project(self, lo: float, hi: float) -> float:
        s, _ = project_onto_polyline(
            self.route_points, self.route_cum, self.ego.pose.x, self.ego.pose.y, lo, hi
        )
        return s

    @property
    def front_progress(self) -> float:
        return self.progress + self.limits.half_length

    @property
    def route_completed(self) -> bool:
        return self.progress >= self.route_length

    def rule_state(self) -> TrafficState:
        """Traffic rules affecting the ego right now (ground truth)."""
        front = self.front_progress
        light_green = 1.0
        for light in self.scenario.lights:
            ahead = light.route_s - front
            if 0.0 <= ahead <= light.zone and light.state_at(self.time) == "red":
                light_green = 0.0
        stop = 0.0
        for k, sign in enumerate(self.scenario.stop_signs):
            ahead = sign.route_s - front
            if 0.0 <= ahead <= sign.zone and k not in self.served_stops:
                stop = 1.0
        junction = 0.0
        for rs in [lt.route_s for lt in self.scenario.lights] + [
            ss.route_s for ss in self.scenario.stop_signs
        ]:
            if -10.0 <= rs - self.progress <= 10.0:
                junction = 1.0
        return TrafficState(light_green, stop, junction)

    def snapshot(self) -> dict:
        p = self.ego.pose
        return {
            "time": self.time,
            "ego": {"x": p.x, "y": p.y, "heading": p.heading, "speed": self.ego.speed},
            "progress": self.progress,
            "agents": [a.snapshot() for a in self.agents],
        }


def _trigger_met(cond: str, value: float, world: World, agent: AgentState) -> bool:
    if cond == "at_time":
        return world.time >= value - 1e-9
    if cond == "ego_progress":
        return world.progress >= value
    if cond == "ego_within":
        p = agent.pose()
        return math.hypot(p.x - world.ego.pose.x, p.y - world.ego.pose.y) <= value
    raise ScenarioError(f"unknown trigger condition {cond!r}")


def step_world(world: World, dt: float) -> World:
    """Advance scripted agents, rule bookkeeping and the clock by ``dt``.

    The ego is advanced separately with :func:`step_ego`; this keeps the two
    updates composable for tests.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    for agent in world.agents:
        for k, trig in enumerate(agent.spec.triggers):
            if not agent.fired[k] and _trigger_met(trig.condition, trig.value, world, agent):
                agent.fired[k] = True
                agent.target_speed = trig.target_speed
                agent.rate = trig.rate
        agent.step(dt)
    front = world.front_progress
    for k, sign in enumerate(world.scenario.stop_signs):
        if k not in world.served_stops and 0.0 <= sign.route_s - front <= sign.zone:
            if world.ego.speed < 0.1:
                world.served_stops.add(k)
    world.steps += 1
    world.time = world.steps * dt
    return world


def advance_ego(world: World, command: VehicleCommand, dt: float) -> None:
    old = world.ego.pose
    world.ego = step_ego(world.ego, command, dt, world.limits)
    world.odometer += math.hypot(world.ego.pose.x - old.x, world.ego.pose.y - old.y)
    # progress only moves forward, searched in a window around the last value
    s = world._project(max(world.progress - 5.0, 0.0), world.progress + 25.0)
    world.progress = max(world.progress, s)


def route_waypoints(world: World, n: int = 10, spacing: float = 2.0) -> np.ndarray:
    """Next ``n`` route points ahead of the ego at fixed arclength spacing (world frame).

    Points past the route end continue straight along the final segment.
    """
    s = world.progress + spacing * np.arange(1, n + 1)
    pts = sample_path(world.route, np.minimum(s, world.route_length))[:, :2]
    beyond = s - world.route_length
    if np.any(beyond > 0):
        (x0, y0), (x1, y1) = world.route_points[-2], world.route_points[-1]
        d = math.hypot(x1 - x0, y1 - y0)
        ux, uy = (x1 - x0) / d, (y1 - y0) / d
        extra = np.maximum(beyond, 0.0)
        pts = pts + np.column_stack([extra * ux, extra * uy])
    return pts


def extract_ground_truth(
    world: World, R: int = 20, n_waypoints: int = 10, spacing: float = 2.0
) -> tuple[list[DetectedObject], TrafficState, np.ndarray]:
    """What a perfect perception network would output this instant."""
    ego = world.ego.pose
    objects = []
    for agent in world.agents:
        p = agent.pose()
        ex, ey = world_to_ego(p.x, p.y, ego)
        if cell_of(ex, ey, R) is None:
            continue
        objects.append(
            DetectedObject(
                x=ex,
                y=ey,
                heading=normalize_angle(p.heading - ego.heading),
                speed=agent.moving_speed,
                half_length=agent.spec.half_length,
                half_width=agent.spec.half_width,
                confidence=1.0,
                cls=agent.spec.cls,
            )
        )
    pts = route_waypoints(world, n_waypoints, spacing)
    local = np.array([world_to_ego(x, y, ego) for x, y in pts])
    deltas = np.diff(np.vstack([[0.0, 0.0], local]), axis=0)
    return objects, world.rule_state(), deltas
