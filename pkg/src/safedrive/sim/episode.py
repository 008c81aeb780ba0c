"""Episode loop, JSONL traces and batch execution.

Trace layout: one JSON object per controller tick (``"type": "tick"``) followed
by one ``"type": "summary"`` object. Tick fields: ``tick``, ``time``, ``ego``
(x, y, heading, speed), ``progress`` (route arclength, m), ``agents``,
``rule_state`` (light_green, stop_sign, at_junction), ``perceived`` (decoded
ego-frame objects), ``diagnostics`` (s1, s2, plan, tracks, ...), ``command``
(steer, throttle, brake) and ``events`` raised while that command was held.
With ``trace_density_map`` enabled a tick also carries ``density_map`` in the
text record format of :class:`~safedrive.grid.DensityMap`.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..grid import NoiseConfig, corrupt_perception, encode_density_map
from ..safety import SafetyController, SafetyParams, VehicleCommand
from .infractions import InfractionMonitor
from .metrics import DEFAULT_PENALTIES, Metrics, compute_metrics
from .scenario import Scenario, load_scenario
from .world import EgoLimits, World, advance_ego, extract_ground_truth, step_world


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 0.05
    control_period: float = 0.5
    grid_size: int = 20
    n_waypoints: int = 10
    waypoint_spacing: float = 2.0
    blocked_window: float | None = None  # None: min(90 s, duration / 2)
    trace_density_map: bool = False
    ego: EgoLimits = EgoLimits()
    penalties: dict = field(default_factory=lambda: dict(DEFAULT_PENALTIES))

    def steps_per_tick(self) -> int:
        n = round(self.control_period / self.physics_dt)
        if n < 1 or not math.isclose(n * self.physics_dt, self.control_period):
            raise ValueError("control_period must be a whole multiple of physics_dt")
        return n


class TraceParseError(ValueError):
    def __init__(self, message: str, tick_index: int, path: str | None = None):
        self.tick_index = tick_index
        prefix = f"{path}: " if path else ""
        super().__init__(f"{prefix}record {tick_index}: {message}")


def _jsonable(obj: Any):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False,
                      default=_jsonable)


@dataclass
class EpisodeTrace:
    ticks: list[dict]
    summary: dict

    def event_types(self) -> list[str]:
        return [ev["type"] for rec in self.ticks for ev in rec["events"]]

    def metrics(self) -> Metrics:
        s = self.summary
        return compute_metrics(
            s["route_length"], s["progress"], self.event_types(), s["distance_m"], s["penalties"]
        )

    def to_jsonl(self) -> str:
        return "".join(dumps(r) + "\n" for r in self.ticks) + dumps(self.summary) + "\n"

    @classmethod
    def from_jsonl(cls, text: str, path: str | None = None) -> "EpisodeTrace":
        ticks, summary = [], None
        for k, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"invalid JSON ({exc.msg})", k, path) from exc
            kind = rec.get("type") if isinstance(rec, dict) else None
            if kind == "tick":
                if summary is not None:
                    raise TraceParseError("tick after summary", k, path)
                for key in ("time", "events", "command", "rule_state"):
                    if key not in rec:
                        raise TraceParseError(f"tick lacks {key!r}", k, path)
                if ticks and not rec["time"] > ticks[-1]["time"]:
                    raise TraceParseError("tick times not increasing", k, path)
                ticks.append(rec)
            elif kind == "summary":
                for key in ("route_length", "progress", "distance_m", "penalties"):
                    if key not in rec:
                        raise TraceParseError(f"summary lacks {key!r}", k, path)
                summary = rec
            else:
                raise TraceParseError(f"unknown record type {kind!r}", k, path)
        if summary is None:
            raise TraceParseError("missing summary record", len(ticks), path)
        return cls(ticks, summary)

    @classmethod
    def read(cls, path: str | Path) -> "EpisodeTrace":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"), str(path))


def tick_seed(noise_seed: int, episode_seed: int, tick: int) -> int:
    return int(np.random.SeedSequence([noise_seed, episode_seed, tick]).generate_state(1)[0])


def run_episode(
    scenario: Scenario,
    seed: int = 0,
    params: SafetyParams | None = None,
    variant: str = "full",
    noise: NoiseConfig | None = None,
    sim: SimConfig | None = None,
) -> EpisodeTrace:
    params = params or SafetyParams()
    noise = noise or NoiseConfig()
    sim = sim or SimConfig()
    dt = sim.physics_dt
    per_tick = sim.steps_per_tick()
    window = sim.blocked_window
    if window is None:
        window = min(90.0, scenario.duration / 2)

    world = World(scenario, sim.ego)
    controller = SafetyController(params, variant, sim.ego.half_length, sim.ego.half_width)
    monitor = InfractionMonitor(window)
    episode_seed = scenario.seed * 1_000_003 + seed

    ticks: list[dict] = []
    command = VehicleCommand()
    status = "timeout"
    tick = 0
    while True:
        if world.steps % per_tick == 0:
            objects, traffic, deltas = extract_ground_truth(
                world, sim.grid_size, sim.n_waypoints, sim.waypoint_spacing
            )
            cfg = NoiseConfig(noise.position_sigma, noise.dropout_prob, noise.false_positive_rate,
                              tick_seed(noise.seed, episode_seed, tick))
            dmap = encode_density_map(corrupt_perception(objects, cfg, sim.grid_size), sim.grid_size)
            result = controller.control_tick(
                world.time, world.ego.pose, world.ego.speed, dmap, deltas, traffic
            )
            command = result.command
            diag = dict(result.diagnostics)
            record = {
                "type": "tick",
                "tick": tick,
                **world.snapshot(),
                "rule_state": asdict(traffic),
                "perceived": diag.pop("objects"),
                "diagnostics": diag,
                "command": asdict(command),
                "events": [],
            }
            if sim.trace_density_map:
                record["density_map"] = dmap.to_text()
            ticks.append(record)
            tick += 1
        advance_ego(world, command, dt)
        step_world(world, dt)
        ticks[-1]["events"].extend(ev.to_dict() for ev in monitor.detect(world))
        if world.route_completed:
            status = "completed"
            break
        if monitor.blocked:
            status = "blocked"
            break
        if world.time >= scenario.duration - 1e-9:
            break

    summary = {
        "type": "summary",
        "scenario": scenario.name,
        "seed": seed,
        "variant": variant,
        "safety_factor": params.safety_factor,
        "status": status,
        "duration": world.time,
        "route_length": world.route_length,
        "progress": world.progress,
        "distance_m": world.odometer,
        "penalties": dict(sim.penalties),
    }
    trace = EpisodeTrace(ticks, summary)
    summary["metrics"] = trace.metrics().to_dict()
    return trace


@dataclass(frozen=True)
class EpisodeJob:
    scenario_path: str
    seed: int
    params: SafetyParams
    variant: str
    noise: NoiseConfig
    sim: SimConfig

    def trace_name(self) -> str:
        stem = Path(self.scenario_path).stem
        return f"{stem}__seed{self.seed}__{self.variant}__f{self.params.safety_factor:g}.jsonl"


def execute_job(job: EpisodeJob, out_dir: str | None = None) -> tuple[dict, str]:
    """Run one job; returns the summary and the trace file path (or the JSONL text)."""
    scenario = load_scenario(job.scenario_path)
    trace = run_episode(scenario, job.seed, job.params, job.variant, job.noise, job.sim)
    text = trace.to_jsonl()
    if out_dir is None:
        return trace.summary, text
    path = Path(out_dir) / job.trace_name()
    path.write_text(text, encoding="utf-8")
    return trace.summary, str(path)


def _execute_star(args):
    return execute_job(*args)


def run_jobs(
    jobs: Sequence[EpisodeJob], out_dir: str | Path | None = None, n_jobs: int | None = None
) -> list[tuple[dict, str]]:
    """Run jobs, in parallel when ``n_jobs`` > 1; results keep the input order."""
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        out_dir = str(out_dir)
    n_jobs = n_jobs or os.cpu_count() or 1
    args = [(job, out_dir) for job in jobs]
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_execute_star(a) for a in args]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_execute_star, args))
