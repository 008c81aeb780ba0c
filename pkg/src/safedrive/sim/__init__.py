"""Deterministic 2D traffic simulator and benchmark metrics."""

from .episode import EpisodeJob, EpisodeTrace, SimConfig, run_episode, run_jobs
from .infractions import InfractionEvent, InfractionMonitor, detect_infractions
from .metrics import DEFAULT_PENALTIES, Metrics, compute_metrics
from .scenario import Scenario, ScenarioError, load_scenario
from .world import (
    EgoLimits,
    EgoState,
    World,
    extract_ground_truth,
    step_ego,
    step_world,
)

__all__ = [
    "DEFAULT_PENALTIES",
    "EgoLimits",
    "EgoState",
    "EpisodeJob",
    "EpisodeTrace",
    "InfractionEvent",
    "InfractionMonitor",
    "Metrics",
    "Scenario",
    "ScenarioError",
    "SimConfig",
    "World",
    "compute_metrics",
    "detect_infractions",
    "extract_ground_truth",
    "load_scenario",
    "run_episode",
    "run_jobs",
    "step_ego",
    "step_world",
]
