"""Nearest-neighbour tracker with moving-average velocity forecasting.

Tracks live in the world frame so that ego motion does not leak into the
recorded object velocities.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import OrientedBox


@dataclass(frozen=True)
class TrackerParams:
    window: int = 3
    max_misses: int = 2
    gate: float = 2.0


@dataclass(frozen=True)
class Observation:
    """A detection already expressed in the world frame."""

    x: float
    y: float
    heading: float
    half_length: float
    half_width: float
    cls: str = "vehicle"


@dataclass
class Track:
    id: int
    x: float
    y: float
    heading: float
    half_length: float
    half_width: float
    cls: str
    last_update_time: float
    velocity_history: deque = field(default_factory=deque)
    misses: int = 0

    def velocity_estimate(self, window: int | None = None) -> tuple[float, float]:
        hist = list(self.velocity_history)
        if window is not None:
            hist = hist[-window:]
        if not hist:
            return 0.0, 0.0
        vx = sum(v[0] for v in hist) / len(hist)
        vy = sum(v[1] for v in hist) / len(hist)
        return vx, vy

    def box(self) -> OrientedBox:
        return OrientedBox(self.x, self.y, self.half_length, self.half_width, self.heading)


@dataclass(frozen=True)
class ForecastSample:
    time_offset: float
    box: OrientedBox


@dataclass(frozen=True)
class Forecast:
    track_id: int
    cls: str
    current: OrientedBox
    samples: tuple[ForecastSample, ...]

    def boxes_until(self, horizon: float) -> list[OrientedBox]:
        """Current footprint plus every forecast sample no later than ``horizon``."""
        return [self.current] + [s.box for s in self.samples if s.time_offset <= horizon + 1e-12]


@dataclass
class Association:
    matches: dict[int, int]  # track index -> detection index
    unmatched_tracks: list[int]
    unmatched_detections: list[int]


def associate(
    tracks: Sequence[Track], detections: Sequence[Observation], gate: float
) -> Association:
    """Greedy nearest-neighbour matching in increasing distance order."""
    if gate <= 0:
        raise ValueError("gate must be positive")
    pairs = []
    for ti, tr in enumerate(tracks):
        for di, det in enumerate(detections):
            d = float(np.hypot(det.x - tr.x, det.y - tr.y))
            if d <= gate:
                pairs.append((d, ti, di))
    pairs.sort()
    matches: dict[int, int] = {}
    used_dets: set[int] = set()
    for _, ti, di in pairs:
        if ti in matches or di in used_dets:
            continue
        matches[ti] = di
        used_dets.add(di)
    return Association(
        matches=matches,
        unmatched_tracks=[i for i in range(len(tracks)) if i not in matches],
        unmatched_detections=[i for i in range(len(detections)) if i not in used_dets],
    )


class TrackSet:
    """Tracks owned by one episode. Ids are never reused."""

    def __init__(self, params: TrackerParams | None = None):
        self.params = params or TrackerParams()
        self.tracks: list[Track] = []
        self.time: float | None = None
        self._next_id = 0

    def __len__(self) -> int:
        return len(self.tracks)

    def update(self, detections: Sequence[Observation], t: float) -> "TrackSet":
        if self.time is not None and not t > self.time:
            raise ValueError(f"update time {t} must exceed previous time {self.time}")
        assoc = associate(self.tracks, detections, self.params.gate)
        for ti, di in assoc.matches.items():
            tr, det = self.tracks[ti], detections[di]
            dt = t - tr.last_update_time
            tr.velocity_history.append(((det.x - tr.x) / dt, (det.y - tr.y) / dt))
            while len(tr.velocity_history) > self.params.window:
                tr.velocity_history.popleft()
            tr.x, tr.y, tr.heading = det.x, det.y, det.heading
            tr.half_length, tr.half_width, tr.cls = det.half_length, det.half_width, det.cls
            tr.last_update_time = t
            tr.misses = 0
        survivors = []
        for ti, tr in enumerate(self.tracks):
            if ti not in assoc.matches:
                tr.misses += 1
                if tr.misses > self.params.max_misses:
                    continue
            survivors.append(tr)
        for di in assoc.unmatched_detections:
            det = detections[di]
            survivors.append(
                Track(
                    id=self._next_id,
                    x=det.x,
                    y=det.y,
                    heading=det.heading,
                    half_length=det.half_length,
                    half_width=det.half_width,
                    cls=det.cls,
                    last_update_time=t,
                )
            )
            self._next_id += 1
        self.tracks = survivors
        self.time = t
        return self

    def forecasts(self, horizons: Sequence[float]) -> list[Forecast]:
        return [forecast_track(tr, horizons, self.params.window) for tr in self.tracks]


def update_tracks(
    tracks: TrackSet, detections: Sequence[Observation], t: float
) -> TrackSet:
    return tracks.update(detections, t)


def forecast_track(track: Track, horizons: Sequence[float], window: int = 3) -> Forecast:
    """Constant-velocity propagation of the moving-average velocity."""
    if any(h <= 0 for h in horizons) or any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("forecast horizons must be positive and ascending")
    vx, vy = track.velocity_estimate(window)
    current = track.box()
    samples = tuple(
        ForecastSample(h, current.moved(track.x + vx * h, track.y + vy * h)) for h in horizons
    )
    return Forecast(track.id, track.cls, current, samples)
