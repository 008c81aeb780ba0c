"""Declarative scenario documents (YAML, ``scenario_version: 1``)."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..geometry import Pose2
from ..grid import OBJECT_CLASSES

SCENARIO_VERSION = 1
TRIGGER_CONDITIONS = ("at_time", "ego_within", "ego_progress")


class ScenarioError(ValueError):
    """Malformed scenario document; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.path = path
        where = ""
        if path:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class _Node(dict):
    line: int | None = None
    key_lines: dict = {}


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader: _LineLoader, node: yaml.MappingNode) -> _Node:
    out = _Node(loader.construct_mapping(node, deep=True))
    out.line = node.start_mark.line + 1
    out.key_lines = {
        k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)
    }
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


@dataclass(frozen=True)
class Trigger:
    condition: str
    value: float
    target_speed: float
    rate: float


@dataclass(frozen=True)
class AgentSpec:
    id: str
    cls: str
    half_length: float
    half_width: float
    path: tuple[tuple[float, float], ...]
    speed: float = 0.0
    triggers: tuple[Trigger, ...] = ()
    heading: float = 0.0  # used only for single-point paths


@dataclass(frozen=True)
class TrafficLightSpec:
    route_s: float
    phases: tuple[tuple[float, str], ...]  # (until, state); last phase lasts forever
    zone: float = 12.0

    def state_at(self, t: float) -> str:
        for until, state in self.phases:
            if t < until:
                return state
        return self.phases[-1][1]


@dataclass(frozen=True)
class StopSignSpec:
    route_s: float
    zone: float = 12.0


@dataclass(frozen=True)
class Scenario:
    name: str
    route: tuple[tuple[float, float], ...]
    ego_start: Pose2
    ego_speed: float
    duration: float
    seed: int = 0
    agents: tuple[AgentSpec, ...] = ()
    lights: tuple[TrafficLightSpec, ...] = ()
    stop_signs: tuple[StopSignSpec, ...] = ()
    description: str = field(default="", compare=False)


def _line(node: Any, key: str | None = None) -> int | None:
    if key is not None and key in getattr(node, "key_lines", {}):
        return node.key_lines[key]
    return getattr(node, "line", None)


def _num(node: dict, key: str, default: Any = None, *, required: bool = False) -> float:
    if key not in node:
        if required:
            raise ScenarioError(f"missing required key {key!r}", _line(node))
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{key!r} must be a number, got {value!r}", _line(node, key))
    return float(value)


def _points(value: Any, what: str, parent: Any, min_len: int) -> tuple[tuple[float, float], ...]:
    if not isinstance(value, list) or len(value) < min_len:
        raise ScenarioError(f"{what} must be a list of at least {min_len} [x, y] points", _line(parent))
    out = []
    for p in value:
        if (
            not isinstance(p, list)
            or len(p) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in p)
        ):
            raise ScenarioError(f"{what} entries must be [x, y] pairs, got {p!r}", _line(parent))
        out.append((float(p[0]), float(p[1])))
    return tuple(out)


def _trigger(node: Any) -> Trigger:
    if not isinstance(node, dict):
        raise ScenarioError(f"trigger must be a mapping, got {node!r}")
    conds = [c for c in TRIGGER_CONDITIONS if c in node]
    if len(conds) != 1:
        raise ScenarioError(
            f"trigger needs exactly one of {', '.join(TRIGGER_CONDITIONS)}", _line(node)
        )
    rate = _num(node, "rate", required=True)
    if rate <= 0:
        raise ScenarioError("trigger rate must be positive", _line(node, "rate"))
    target = _num(node, "target_speed", required=True)
    if target < 0:
        raise ScenarioError("target_speed must be non-negative", _line(node, "target_speed"))
    return Trigger(conds[0], _num(node, conds[0]), target, rate)


def _agent(node: Any, index: int) -> AgentSpec:
    if not isinstance(node, dict):
        raise ScenarioError(f"agent #{index} must be a mapping")
    cls = node.get("class", "vehicle")
    if cls not in OBJECT_CLASSES:
        raise ScenarioError(f"unknown agent class {cls!r}", _line(node, "class"))
    length = _num(node, "length", required=True)
    width = _num(node, "width", required=True)
    if length <= 0 or width <= 0:
        raise ScenarioError("agent length and width must be positive", _line(node))
    speed = _num(node, "speed", 0.0)
    if speed < 0:
        raise ScenarioError("agent speed must be non-negative", _line(node, "speed"))
    triggers = node.get("triggers", []) or []
    if not isinstance(triggers, list):
        raise ScenarioError("triggers must be a list", _line(node, "triggers"))
    return AgentSpec(
        id=str(node.get("id", f"agent{index}")),
        cls=cls,
        half_length=length / 2,
        half_width=width / 2,
        path=_points(node.get("path"), "agent path", node, 1),
        speed=speed,
        triggers=tuple(_trigger(t) for t in triggers),
        heading=_num(node, "heading", 0.0),
    )


def _rule(node: Any):
    if not isinstance(node, dict):
        raise ScenarioError(f"traffic rule must be a mapping, got {node!r}")
    kind = node.get("type")
    route_s = _num(node, "route_s", required=True)
    zone = _num(node, "zone", 12.0)
    if kind == "traffic_light":
        phases = node.get("phases")
        if not isinstance(phases, list) or not phases:
            raise ScenarioError("traffic_light needs a non-empty phases list", _line(node))
        parsed = []
        for ph in phases:
            if not isinstance(ph, dict) or ph.get("state") not in ("red", "green"):
                raise ScenarioError("phase state must be 'red' or 'green'", _line(ph) or _line(node))
            parsed.append((_num(ph, "until", float("inf")), ph["state"]))
        return TrafficLightSpec(route_s, tuple(parsed), zone)
    if kind == "stop_sign":
        return StopSignSpec(route_s, zone)
    raise ScenarioError(f"unknown traffic rule type {kind!r}", _line(node))


def scenario_from_dict(doc: Any, name: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    version = doc.get("scenario_version")
    if version != SCENARIO_VERSION:
        raise ScenarioError(
            f"unsupported scenario_version {version!r} (expected {SCENARIO_VERSION})",
            _line(doc, "scenario_version"),
        )
    duration = _num(doc, "duration", required=True)
    if duration <= 0:
        raise ScenarioError("duration must be positive", _line(doc, "duration"))
    ego = doc.get("ego", {}) or {}
    if not isinstance(ego, dict):
        raise ScenarioError("ego must be a mapping", _line(doc, "ego"))
    ego_speed = _num(ego, "speed", 0.0)
    if ego_speed < 0:
        raise ScenarioError("ego speed must be non-negative", _line(ego, "speed"))
    agents = doc.get("agents", []) or []
    rules = doc.get("traffic_rules", []) or []
    if not isinstance(agents, list) or not isinstance(rules, list):
        raise ScenarioError("agents and traffic_rules must be lists", _line(doc))
    parsed_rules = [_rule(r) for r in rules]
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError("seed must be an integer", _line(doc, "seed"))
    return Scenario(
        name=str(doc.get("name", name)),
        route=_points(doc.get("route"), "route", doc, 2),
        ego_start=Pose2(_num(ego, "x", 0.0), _num(ego, "y", 0.0), _num(ego, "heading", 0.0)),
        ego_speed=ego_speed,
        duration=duration,
        seed=seed,
        agents=tuple(_agent(a, i) for i, a in enumerate(agents)),
        lights=tuple(r for r in parsed_rules if isinstance(r, TrafficLightSpec)),
        stop_signs=tuple(r for r in parsed_rules if isinstance(r, StopSignSpec)),
        description=str(doc.get("description", "")),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read scenario file {path}: {exc.strerror}") from exc
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(str(exc), mark.line + 1 if mark else None, str(path)) from exc
    try:
        return scenario_from_dict(doc, name=path.stem)
    except ScenarioError as exc:
        raise ScenarioError(exc.message, exc.line, str(path)) from exc


def scenario_paths(target: str | Path) -> list[Path]:
    """A scenario file, or every ``*.yaml`` in a directory (sorted)."""
    target = Path(target)
    if target.is_dir():
        return sorted(target.glob("*.yaml"))
    if not target.exists():
        raise FileNotFoundError(f"scenario path not found: {target}")
    return [target]


def builtin_suite_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "scenarios" / "suite"
