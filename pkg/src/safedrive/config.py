"""Run configuration: a YAML file plus dotted ``key=value`` overrides.

Every leaf of :class:`RunConfig` has a dotted address, for example
``safety.safety_factor``, ``safety.lateral.kp``, ``noise.position_sigma`` or
``sim.ego.a_brk_max``. Override values are parsed as YAML scalars or lists.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .grid import NoiseConfig
from .losses import LossWeights
from .safety import SafetyParams
from .sim.episode import SimConfig
from .sim.scenario import builtin_suite_dir

VARIANTS = ("full", "no_safety")
BUILTIN_PREFIX = "builtin:"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenarios: tuple[str, ...] = ()
    seeds: tuple[int, ...] = (0,)
    variant: str = "full"
    out: str = "runs"
    jobs: int | None = None
    factors: tuple[float, ...] = (1.0, 1.5, 2.0)
    safety: SafetyParams = SafetyParams()
    noise: NoiseConfig = NoiseConfig()
    sim: SimConfig = SimConfig()
    loss_weights: LossWeights = LossWeights()

    def validate(self) -> "RunConfig":
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if any(not f > 0 for f in self.factors):
            raise ConfigError("safety factors must be positive")
        return self


def resolve_scenario(entry: str, base: Path | None = None) -> Path:
    """``builtin:suite`` and ``builtin:<name>`` name packaged scenarios."""
    if entry.startswith(BUILTIN_PREFIX):
        name = entry[len(BUILTIN_PREFIX):]
        root = builtin_suite_dir().parent
        if name == "suite":
            return root / "suite"
        for cand in (root / f"{name}.yaml", root / "suite" / f"{name}.yaml"):
            if cand.exists():
                return cand
        raise ConfigError(f"unknown builtin scenario {name!r}")
    p = Path(entry)
    if base is not None and not p.is_absolute():
        p = base / p
    return p


def _to_tree(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_tree(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: _to_tree(v) for k, v in obj.items()}
    return obj


def _merge(base: dict, update: Mapping, prefix: str = "") -> dict:
    out = dict(base)
    for key, value in update.items():
        addr = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {addr!r}")
        if isinstance(base[key], dict) and not addr.endswith("penalties"):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{addr!r} expects a mapping")
            out[key] = _merge(base[key], value, addr + ".")
        elif isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{addr!r} expects a mapping")
            out[key] = {**base[key], **value}
        else:
            out[key] = value
    return out


def _build(template: Any, tree: Any, addr: str) -> Any:
    if dataclasses.is_dataclass(template):
        kwargs = {
            f.name: _build(getattr(template, f.name), tree[f.name], f"{addr}.{f.name}".lstrip("."))
            for f in dataclasses.fields(template)
        }
        try:
            return type(template)(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{addr or 'config'}: {exc}") from exc
    if isinstance(template, tuple):
        items = tree if isinstance(tree, (list, tuple)) else [tree]
        return tuple(items)
    if isinstance(template, bool) or isinstance(tree, bool):
        if not isinstance(tree, bool) or not isinstance(template, bool):
            raise ConfigError(f"{addr}: expected a {type(template).__name__}, got {tree!r}")
        return tree
    if isinstance(template, int):
        if not isinstance(tree, int):
            raise ConfigError(f"{addr}: expected an integer, got {tree!r}")
        return tree
    if isinstance(template, float):
        if not isinstance(tree, (int, float)):
            raise ConfigError(f"{addr}: expected a number, got {tree!r}")
        return float(tree)
    return tree


def parse_override(text: str) -> tuple[list[str], Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like key=value, got {text!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in {text!r}") from exc
    return key.strip().split("."), value


def _nest(path: list[str], value: Any) -> dict:
    out: Any = value
    for part in reversed(path):
        out = {part: out}
    return out


def build_config(
    data: Mapping | None = None,
    overrides: list[str] = (),
    base_dir: Path | None = None,
) -> RunConfig:
    """Defaults, then ``data`` (a parsed config file), then each override."""
    tree = _to_tree(RunConfig())
    if data:
        if not isinstance(data, Mapping):
            raise ConfigError("config document must be a mapping")
        tree = _merge(tree, data)
    for text in overrides:
        path, value = parse_override(text)
        tree = _merge(tree, _nest(path, value))
    for key in ("scenarios", "seeds", "factors"):
        if tree[key] is not None and not isinstance(tree[key], (list, tuple)):
            tree[key] = [tree[key]]
    if tree["jobs"] is not None and not isinstance(tree["jobs"], int):
        raise ConfigError(f"jobs: expected an integer, got {tree['jobs']!r}")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in tree["seeds"]):
        raise ConfigError("seeds must be integers")
    tree["scenarios"] = [str(resolve_scenario(str(s), base_dir)) for s in tree["scenarios"]]
    tree["factors"] = [float(f) for f in tree["factors"]]
    return _build(RunConfig(), tree, "")


def load_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    if path is None:
        return build_config(None, overrides)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return build_config(data, overrides, path.parent)
