from __future__ import annotations

from dataclasses import dataclass

from ..geometry import boxes_intersect
from .world import World

INFRACTION_TYPES = (
    "collision_static",
    "collision_pedestrian",
    "collision_vehicle",
    "red_light",
    "stop_sign",
    "agent_blocked",
)

# Bicycles count as vehicles, as in the CARLA leaderboard.
COLLISION_TYPE = {
    "vehicle": "collision_vehicle",
    "bicycle": "collision_vehicle",
    "pedestrian": "collision_pedestrian",
    "static": "collision_static",
}


@dataclass(frozen=True)
class InfractionEvent:
    type: str
    time: float
    agent: str | None = None

    def to_dict(self) -> dict:
        return {"type": self.type, "time": self.time, "agent": self.agent}


class InfractionMonitor:
    """Stateful detector; collisions are debounced per contact episode."""

    def __init__(self, blocked_window: float, blocked_speed: float = 0.1):
        self.blocked_window = blocked_window
        self.blocked_speed = blocked_speed
        self.in_contact: set[str] = set()
        self.slow_since: float | None = None
        self.blocked = False
        self._prev_front: float | None = None

    def detect(self, world: World) -> list[InfractionEvent]:
        events = []
        t = world.time
        ego_box = world.ego.box(world.limits)
        touching = set()
        for agent in world.agents:
            if boxes_intersect(ego_box, agent.box()):
                touching.add(agent.spec.id)
                if agent.spec.id not in self.in_contact:
                    events.append(InfractionEvent(COLLISION_TYPE[agent.spec.cls], t, agent.spec.id))
        self.in_contact = touching

        front = world.front_progress
        if self._prev_front is not None:
            for light in world.scenario.lights:
                crossed = self._prev_front < light.route_s <= front
                if crossed and light.state_at(t) == "red":
                    events.append(InfractionEvent("red_light", t))
            for k, sign in enumerate(world.scenario.stop_signs):
                if self._prev_front < sign.route_s <= front and k not in world.served_stops:
                    events.append(InfractionEvent("stop_sign", t))
        self._prev_front = front

        if world.ego.speed < self.blocked_speed:
            if self.slow_since is None:
                self.slow_since = t
            elif not self.blocked and t - self.slow_since >= self.blocked_window - 1e-9:
                self.blocked = True
                events.append(InfractionEvent("agent_blocked", t))
        else:
            self.slow_since = None
        return events


def detect_infractions(monitor: InfractionMonitor, world: World) -> list[InfractionEvent]:
    return monitor.detect(world)
