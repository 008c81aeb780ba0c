"""Command-line entry point: ``safedrive {run,sweep,report,eval-losses}``.

Exit status is 0 whenever every input parsed, however many infractions the
episodes produced. Parse errors exit with 2, unreadable or missing files with 1.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import statistics
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

from .config import ConfigError, RunConfig, build_config, load_config
from .grid import DensityMap
from .losses import LossWeights, TrafficState, evaluate_losses
from .sim.episode import EpisodeJob, EpisodeTrace, TraceParseError, run_jobs
from .sim.infractions import INFRACTION_TYPES
from .sim.metrics import MIN_DISTANCE_KM
from .sim.scenario import ScenarioError, load_scenario, scenario_paths

EXIT_OK, EXIT_IO, EXIT_PARSE = 0, 1, 2

EPISODE_FIELDS = (
    ["scenario", "seed", "variant", "safety_factor", "status",
     "route_completion", "infraction_score", "driving_score", "distance_km"]
    + [f"count_{t}" for t in INFRACTION_TYPES]
    + ["trace"]
)
AGGREGATE_FIELDS = (
    ["safety_factor", "v_max_eff", "s_bar_eff", "episodes",
     "ds_mean", "ds_std", "rc_mean", "rc_std", "is_mean", "is_std",
     "infractions", "collisions", "distance_km"]
    + [f"per_km_{t}" for t in INFRACTION_TYPES]
)
# display order follows the usual leaderboard table; stop_sign is extra
REPORT_COLUMNS = (
    ("collision_static", "Coll.static"),
    ("collision_pedestrian", "Coll.ped"),
    ("collision_vehicle", "Coll.veh"),
    ("red_light", "Red light"),
    ("stop_sign", "Stop sign"),
    ("agent_blocked", "Blocked"),
)


def _std(values: Sequence[float]) -> float:
    # sample standard deviation, 0 for a single value
    return statistics.stdev(values) if len(values) > 1 else 0.0


def episode_row(summary: dict, trace: str) -> dict:
    m = summary["metrics"]
    row = {
        "scenario": summary["scenario"],
        "seed": summary["seed"],
        "variant": summary["variant"],
        "safety_factor": summary["safety_factor"],
        "status": summary["status"],
        "route_completion": m["route_completion"],
        "infraction_score": m["infraction_score"],
        "driving_score": m["driving_score"],
        "distance_km": m["distance_km"],
        "trace": trace,
    }
    for t in INFRACTION_TYPES:
        row[f"count_{t}"] = m["counts"].get(t, 0)
    return row


def aggregate(rows: Sequence[dict], cfg: RunConfig) -> dict:
    ds = [r["driving_score"] for r in rows]
    rc = [r["route_completion"] for r in rows]
    is_ = [r["infraction_score"] for r in rows]
    km = sum(r["distance_km"] for r in rows)
    counts = {t: sum(r[f"count_{t}"] for r in rows) for t in INFRACTION_TYPES}
    out = {
        "safety_factor": cfg.safety.safety_factor,
        "v_max_eff": cfg.safety.effective_v_max,
        "s_bar_eff": cfg.safety.effective_s_bar,
        "episodes": len(rows),
        "ds_mean": statistics.fmean(ds),
        "ds_std": _std(ds),
        "rc_mean": statistics.fmean(rc),
        "rc_std": _std(rc),
        "is_mean": statistics.fmean(is_),
        "is_std": _std(is_),
        "infractions": sum(counts.values()),
        "collisions": sum(v for k, v in counts.items() if k.startswith("collision_")),
        "distance_km": km,
    }
    for t in INFRACTION_TYPES:
        out[f"per_km_{t}"] = counts[t] / max(km, MIN_DISTANCE_KM)
    return out


def write_csv(path: Path, fields: Sequence[str], rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _expand_scenarios(cfg: RunConfig) -> list[Path]:
    paths: list[Path] = []
    for entry in cfg.scenarios:
        paths.extend(scenario_paths(entry))
    if not paths:
        raise ConfigError("no scenario files found")
    for p in paths:
        load_scenario(p)  # fail fast, before any episode runs
    return paths


def run_suite(cfg: RunConfig, out_dir: Path) -> list[dict]:
    """Run every (scenario, seed) pair; writes traces and ``metrics.csv`` under ``out_dir``."""
    jobs = [
        EpisodeJob(str(p), seed, cfg.safety, cfg.variant, cfg.noise, cfg.sim)
        for p in _expand_scenarios(cfg)
        for seed in cfg.seeds
    ]
    results = run_jobs(jobs, out_dir / "traces", cfg.jobs)
    rows = [episode_row(summary, trace) for summary, trace in results]
    write_csv(out_dir / "metrics.csv", EPISODE_FIELDS, rows)
    return rows


def _print_aggregate(agg: dict) -> None:
    print(
        f"f={agg['safety_factor']:g} episodes={agg['episodes']} "
        f"DS={agg['ds_mean']:.2f} RC={agg['rc_mean']:.2f} IS={agg['is_mean']:.3f} "
        f"infractions={agg['infractions']} collisions={agg['collisions']}"
    )


def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    rows = run_suite(cfg, out)
    agg = aggregate(rows, cfg)
    write_csv(out / "summary.csv", AGGREGATE_FIELDS, [agg])
    _print_aggregate(agg)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    aggs = []
    for f in cfg.factors:
        sub = replace(cfg, safety=replace(cfg.safety, safety_factor=f))
        rows = run_suite(sub, out / f"f{f:g}")
        aggs.append(aggregate(rows, sub))
        _print_aggregate(aggs[-1])
    write_csv(out / "sweep.csv", AGGREGATE_FIELDS, aggs)
    return EXIT_OK


def _trace_files(targets: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for t in targets:
        p = Path(t)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.jsonl")))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(f"trace not found: {p}")
    return files


def report_rows(files: Sequence[Path]) -> list[dict]:
    rows = []
    for path in files:
        trace = EpisodeTrace.read(path)
        m = trace.metrics()
        row = {
            "episode": path.stem,
            "driving_score": m.driving_score,
            "route_completion": m.route_completion,
            "infraction_score": m.infraction_score,
            "distance_km": m.distance_km,
        }
        row.update({f"per_km_{t}": m.per_km[t] for t in INFRACTION_TYPES})
        rows.append(row)
    return rows


def format_report(rows: Sequence[dict]) -> str:
    head = ["Episode", "DS %", "RC %", "IS"] + [label for _, label in REPORT_COLUMNS]
    width = max([len(head[0])] + [len(r["episode"]) for r in rows])

    def line(cells: Sequence[str]) -> str:
        return cells[0].ljust(width) + "".join(c.rjust(12) for c in cells[1:])

    def numbers(r: dict) -> list[str]:
        return [f"{r['driving_score']:.2f}", f"{r['route_completion']:.2f}",
                f"{r['infraction_score']:.3f}"] + [f"{r[f'per_km_{t}']:.2f}" for t, _ in REPORT_COLUMNS]

    out = [line(head), line(["", "", "", ""] + ["#/km"] * len(REPORT_COLUMNS))]
    out += [line([r["episode"]] + numbers(r)) for r in rows]
    keys = ["driving_score", "route_completion", "infraction_score"] + [
        f"per_km_{t}" for t, _ in REPORT_COLUMNS
    ]
    if rows:
        mean = {k: statistics.fmean(r[k] for r in rows) for k in keys}
        std = {k: _std([r[k] for r in rows]) for k in keys}
        out.append(line(["mean"] + numbers(mean)))
        out.append(line(["std"] + numbers(std)))
    return "\n".join(out) + "\n"


def cmd_report(targets: Sequence[str], csv_path: str | None = None) -> int:
    rows = report_rows(_trace_files(targets))
    sys.stdout.write(format_report(rows))
    if csv_path:
        fields = ["episode", "driving_score", "route_completion", "infraction_score",
                  "distance_km"] + [f"per_km_{t}" for t in INFRACTION_TYPES]
        write_csv(Path(csv_path), fields, rows)
    return EXIT_OK


class RecordError(ValueError):
    def __init__(self, message: str, index: int, path: str):
        self.index = index
        super().__init__(f"{path}: record {index}: {message}")


def _side(rec: dict, key: str):
    side = rec.get(key)
    if not isinstance(side, dict):
        raise ValueError(f"missing {key!r} object")
    for field_name in ("waypoints", "density_map", "traffic"):
        if field_name not in side:
            raise ValueError(f"{key} lacks {field_name!r}")
    traffic = side["traffic"]
    if isinstance(traffic, dict):
        tf = TrafficState(**traffic)
    else:
        if len(traffic) != 3:
            raise ValueError("traffic must hold [light_green, stop_sign, at_junction]")
        tf = TrafficState(*map(float, traffic))
    return side["waypoints"], DensityMap(side["density_map"]), tf


def loss_rows(text: str, weights: LossWeights, path: str = "<records>") -> list[dict]:
    """One CSV row per ``{"pred": ..., "target": ...}`` record.

    Each side holds ``waypoints`` (L x 2), ``density_map`` (R x R x 7) and
    ``traffic`` (``[light_green, stop_sign, at_junction]``).
    """
    rows = []
    index = 0
    for line in text.splitlines():
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise ValueError("record must be a JSON object")
            pw, pm, pt = _side(rec, "pred")
            tw, tm, tt = _side(rec, "target")
            parts, total = evaluate_losses(pw, tw, pm, tm, pt, tt, weights)
        except (ValueError, TypeError) as exc:
            raise RecordError(str(exc), index, path) from exc
        rows.append({
            "record": index,
            "L_pt": parts.waypoint,
            "L_prob": parts.prob,
            "L_meta": parts.meta,
            "L_tf": parts.traffic,
            "total": total,
        })
        index += 1
    return rows


def cmd_eval_losses(record_path: str, weights: LossWeights, out: str | None = None) -> int:
    path = Path(record_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    rows = loss_rows(text, weights, str(path))
    fields = ["record", "L_pt", "L_prob", "L_meta", "L_tf", "total"]
    if out:
        write_csv(Path(out), fields, rows)
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _parse_factors(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --factors value {text!r}") from exc
    if not values or any(not (math.isfinite(v) and v > 0) for v in values):
        raise ConfigError("--factors must be positive numbers")
    return values


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", action="append", default=[],
                   help="scenario file or directory; builtin:suite names the packaged suite")
    p.add_argument("--seed", action="append", type=int, default=[])
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. safety.safety_factor=1.5")
    p.add_argument("--variant", choices=("full", "no_safety"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel episodes (default: CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safedrive", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run scenarios and write traces plus metrics.csv")
    _add_run_flags(run)
    sweep = sub.add_parser("sweep", help="run the scenarios at several safety factors")
    _add_run_flags(sweep)
    sweep.add_argument("--factors", help="comma-separated safety factors, e.g. 1,1.5,2")
    report = sub.add_parser("report", help="summarise JSONL traces")
    report.add_argument("traces", nargs="+", help="trace files or directories")
    report.add_argument("--csv", help="also write the table as CSV")
    losses = sub.add_parser("eval-losses", help="evaluate losses on (pred, target) records")
    losses.add_argument("records", help="JSONL file of records")
    losses.add_argument("--config")
    losses.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    losses.add_argument("--out", help="CSV output path (default: stdout)")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.set)
    cfg = load_config(args.config, overrides)
    changes = {}
    if args.scenario:
        changes["scenarios"] = tuple(build_config(
            {"scenarios": args.scenario}).scenarios)
    if args.seed:
        changes["seeds"] = tuple(args.seed)
    if args.variant:
        changes["variant"] = args.variant
    if args.out:
        changes["out"] = args.out
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if getattr(args, "factors", None):
        changes["factors"] = tuple(_parse_factors(args.factors))
    return replace(cfg, **changes).validate()


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(_run_config(args))
        if args.command == "sweep":
            return cmd_sweep(_run_config(args))
        if args.command == "report":
            return cmd_report(args.traces, args.csv)
        cfg = load_config(args.config, list(args.set))
        return cmd_eval_losses(args.records, cfg.loss_weights, args.out)
    except (ScenarioError, ConfigError, TraceParseError, RecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
