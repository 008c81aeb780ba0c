"""Route completion, infraction score and driving score."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .infractions import INFRACTION_TYPES

# Leaderboard-style multipliers; a configuration default, not a measured quantity.
DEFAULT_PENALTIES: dict[str, float] = {
    "collision_pedestrian": 0.50,
    "collision_vehicle": 0.60,
    "collision_static": 0.65,
    "red_light": 0.70,
    "stop_sign": 0.80,
    "agent_blocked": 1.0,
}

# per-km rates divide by at least this distance
MIN_DISTANCE_KM = 1e-3


@dataclass(frozen=True)
class Metrics:
    route_completion: float
    infraction_score: float
    driving_score: float
    counts: dict[str, int] = field(default_factory=dict)
    per_km: dict[str, float] = field(default_factory=dict)
    distance_km: float = 0.0

    def to_dict(self) -> dict:
        return {
            "route_completion": self.route_completion,
            "infraction_score": self.infraction_score,
            "driving_score": self.driving_score,
            "counts": dict(self.counts),
            "per_km": dict(self.per_km),
            "distance_km": self.distance_km,
        }


def compute_metrics(
    route_length: float,
    progress: float,
    event_types: Iterable[str],
    distance_m: float,
    penalties: Mapping[str, float] | None = None,
) -> Metrics:
    if not route_length > 0:
        raise ValueError("route length must be positive")
    penalties = {**DEFAULT_PENALTIES, **(penalties or {})}
    rc = min(max(progress / route_length, 0.0), 1.0) * 100.0
    counts = {k: 0 for k in INFRACTION_TYPES}
    score = 1.0
    for ev in event_types:
        if ev not in penalties:
            raise ValueError(f"no penalty configured for infraction {ev!r}")
        counts[ev] = counts.get(ev, 0) + 1
        score *= penalties[ev]
    km = distance_m / 1000.0
    denom = max(km, MIN_DISTANCE_KM)
    return Metrics(
        route_completion=rc,
        infraction_score=score,
        driving_score=rc * score,
        counts=counts,
        per_km={k: v / denom for k, v in counts.items()},
        distance_km=km,
    )
