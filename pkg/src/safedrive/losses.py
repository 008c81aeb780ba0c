"""Training-loss evaluators (no gradients)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import WaypointPath
from .grid import DensityMap

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    pt: float = 0.4
    map: float = 0.4
    tf: float = 1.0
    light: float = 0.2
    stop: float = 0.01
    junction: float = 0.1

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class TrafficState:
    light_green: float = 1.0
    stop_sign: float = 0.0
    at_junction: float = 0.0

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")

    def as_tuple(self) -> tuple[float, float, float]:
        return self.light_green, self.stop_sign, self.at_junction


@dataclass(frozen=True)
class LossParts:
    waypoint: float
    prob: float
    meta: float
    traffic: float


def _as_points(path: WaypointPath | Sequence[Sequence[float]]) -> np.ndarray:
    if isinstance(path, WaypointPath):
        return path.as_array()
    return np.asarray(path, dtype=float).reshape(-1, 2)


def waypoint_loss(pred, target) -> float:
    p, t = _as_points(pred), _as_points(target)
    if p.shape != t.shape:
        raise ValueError(f"waypoint count mismatch: {len(p)} vs {len(t)}")
    return float(np.abs(p - t).sum())


def _check_pair(pred: DensityMap, target: DensityMap) -> np.ndarray:
    if pred.R != target.R:
        raise ValueError(f"map size mismatch: {pred.R} vs {target.R}")
    labels = target.cells[..., 0]
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("target probability channel must be binary")
    return labels


def density_prob_loss(pred: DensityMap, target: DensityMap) -> float:
    """Class-balanced L1 on the probability channel; an empty class contributes 0."""
    labels = _check_pair(pred, target)
    err = np.abs(labels - pred.cells[..., 0])
    terms = []
    for label in (0.0, 1.0):
        mask = labels == label
        terms.append(float(err[mask].mean()) if mask.any() else 0.0)
    return 0.5 * (terms[0] + terms[1])


def density_meta_loss(pred: DensityMap, target: DensityMap) -> float:
    labels = _check_pair(pred, target)
    pos = labels == 1.0
    n_pos = int(pos.sum())
    if n_pos == 0:
        return 0.0
    err = np.abs(target.cells[..., 1:] - pred.cells[..., 1:])
    return float(err[pos].sum() / n_pos)


def binary_cross_entropy(p: float, t: float, eps: float = BCE_EPS) -> float:
    p = min(max(p, eps), 1.0 - eps)
    return -(t * math.log(p) + (1.0 - t) * math.log(1.0 - p))


def traffic_loss(pred: TrafficState, target: TrafficState, w: LossWeights | None = None) -> float:
    w = w or LossWeights()
    heads = zip((w.light, w.stop, w.junction), pred.as_tuple(), target.as_tuple())
    return sum(weight * binary_cross_entropy(p, t) for weight, p, t in heads)


def total_loss(parts: LossParts, w: LossWeights | None = None) -> float:
    w = w or LossWeights()
    return w.pt * parts.waypoint + w.map * (parts.prob + parts.meta) + w.tf * parts.traffic


def evaluate_losses(
    pred_path, target_path, pred_map: DensityMap, target_map: DensityMap,
    pred_tf: TrafficState, target_tf: TrafficState, w: LossWeights | None = None,
) -> tuple[LossParts, float]:
    w = w or LossWeights()
    parts = LossParts(
        waypoint=waypoint_loss(pred_path, target_path),
        prob=density_prob_loss(pred_map, target_map),
        meta=density_meta_loss(pred_map, target_map),
        traffic=traffic_loss(pred_tf, target_tf, w),
    )
    return parts, total_loss(parts, w)
