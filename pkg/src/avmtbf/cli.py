"""Command-line front end.

Exit codes: 0 success, 2 invalid input or configuration, 3 missing or
malformed data. Speeds are km/h and rates per hour on every input and output.
Payloads carry no timestamps; when writing to a file, run metadata goes to a
``<output>.meta.json`` sidecar.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import kinematics as kin
from .config import RunConfig, apply_overrides, load_config
from .errors import AvMtbfError, DataError, UnsatisfiableRequirement, ValidationError
from .model import (
    FailureModelTree,
    MissionProfile,
    constant_rate_tree,
    failure_rate_extended,
    human_baseline_mtbf,
    kappa,
    load_tree,
    render_tree,
    required_error_rate,
    save_tree,
)
from .montecarlo import LeafTarget, SimulationConfig, simulate
from .perception import ErrorRateTable, error_rate_table, read_perception_log
from .situations import (
    convergence_report,
    extract_situation_table,
    ingest_tracks,
    load_table,
    speed_distribution,
    write_convergence_csv,
)
from .units import SpeedRangePartition, format_inf, kmh_to_ms, ms_to_kmh

EXIT_OK, EXIT_VALIDATION, EXIT_DATA = 0, 2, 3

# flag -> dotted config key
_CONFIG_FLAGS = {
    "speed_ranges": "speed_ranges_kmh",
    "ttc_limit": "ttc_limit",
    "assumed_accel": "assumed_rear_accel",
    "mode_threshold": "mode_threshold",
    "counting": "counting",
    "road_max_speed": "road_max_speed_kmh",
    "velocity_independent": "velocity_independent",
    "reaction_time": "braking.reaction_time",
    "deceleration": "braking.deceleration",
    "lead_deceleration": "lead_braking.deceleration",
    "rss_response_time": "rss.response_time",
    "rss_max_accel": "rss.max_accel",
    "rss_min_brake": "rss.min_brake",
    "rss_max_brake": "rss.max_brake_front",
    "severe_kmh": "severity.s1_max_kmh",
}


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str) -> np.ndarray:
    """``lo:hi:step`` inclusive of both ends, or a comma list."""
    if ":" not in text:
        return np.array(_floats(text))
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="run configuration JSON")
    g.add_argument("--speed-ranges", type=_floats, help="speed range boundaries, km/h, e.g. 80,100,130,180")
    g.add_argument("--ttc-limit", type=float, help="TTC limit for close following, s")
    g.add_argument("--assumed-accel", type=float, help="rear acceleration assumed for TTC, m/s²")
    g.add_argument("--mode-threshold", type=float, help="|a| below which speed counts as constant, m/s²")
    g.add_argument("--counting", choices=["frames", "events"])
    g.add_argument("--road-max-speed", type=float, help="worst-case ego speed for severity, km/h")
    g.add_argument("--velocity-independent", action="store_true", default=None, help="use the pooled error rate for every range")
    g.add_argument("--reaction-time", type=float, help="ego/rear reaction time, s")
    g.add_argument("--deceleration", type=float, help="ego/rear braking, m/s²")
    g.add_argument("--lead-deceleration", type=float, help="false-alarm braking of the lead, m/s²")
    g.add_argument("--rss-response-time", type=float)
    g.add_argument("--rss-max-accel", type=float)
    g.add_argument("--rss-min-brake", type=float)
    g.add_argument("--rss-max-brake", type=float)
    g.add_argument("--severe-kmh", type=float, help="Δv above which a collision is severe, km/h")
    g.add_argument("-o", "--output", help="write here instead of stdout")
    return p


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    return apply_overrides(cfg, {key: getattr(args, flag) for flag, key in _CONFIG_FLAGS.items()})


def _path(args, name: str, cfg: RunConfig, what: str) -> str:
    value = getattr(args, name, None) or getattr(cfg.paths, name)
    if not value:
        raise ValidationError(f"no {what} given (flag or paths.{name} in the config)")
    return value


def _write_meta(output: str, argv) -> None:
    meta = {
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "argv": list(argv),
    }
    Path(output + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _emit_text(text: str, output: str | None, argv) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
        _write_meta(output, argv)
    else:
        sys.stdout.write(text)


def _emit_json(doc: dict, output: str | None, argv) -> None:
    _emit_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n", output, argv)


def _emit_csv(df: pd.DataFrame, output: str | None, argv) -> None:
    _emit_text(df.to_csv(index=False, float_format="%.10g", lineterminator="\n"), output, argv)


# --- commands ----------------------------------------------------------------------

def cmd_extract_situations(args, cfg: RunConfig, argv) -> int:
    recs = ingest_tracks(_path(args, "tracks", cfg, "tracks directory"))
    table = extract_situation_table(
        recs, cfg.partition(), cfg.ttc_limit, cfg.assumed_rear_accel, cfg.mode_threshold
    )
    doc = table.to_dict()
    doc["config"] = cfg.to_dict()
    doc["recordings"] = [r.name for r in recs]
    _emit_json(doc, args.output, argv)
    if args.convergence:
        write_convergence_csv(convergence_report(recs, cfg.partition()), args.convergence)
    if args.text:
        Path(args.text).write_text(table.to_text(), encoding="utf-8")
    return EXIT_OK


def cmd_speed_dist(args, cfg: RunConfig, argv) -> int:
    recs = ingest_tracks(_path(args, "tracks", cfg, "tracks directory"))
    part = cfg.partition()
    probs = speed_distribution(recs, part)
    b = part.boundaries_kmh
    df = pd.DataFrame({"lo_kmh": b[:-1], "hi_kmh": b[1:], "probability": probs})
    _emit_csv(df, args.output, argv)
    return EXIT_OK


def cmd_error_rates(args, cfg: RunConfig, argv) -> int:
    log = read_perception_log(_path(args, "perception_log", cfg, "perception log"), args.meta)
    table = error_rate_table(
        log,
        cfg.partition(),
        rss=cfg.rss_params(),
        counting=cfg.counting_mode(),
        road_max_speed=cfg.road_max_speed(),
        profile=cfg.braking_profile(),
        thresholds=cfg.thresholds(),
        tolerance=cfg.tolerance(),
        velocity_independent=cfg.velocity_independent,
    )
    doc = table.to_dict()
    doc["config"] = cfg.to_dict()
    _emit_json(doc, args.output, argv)
    return EXIT_OK


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None


def _build_tree(args, cfg: RunConfig) -> tuple[FailureModelTree, str]:
    tree_path = args.tree or (cfg.paths.tree if not (args.situations or args.kappa is not None) else None)
    if tree_path:
        return load_tree(tree_path), "tree"
    if args.kappa is not None:
        if args.rate is None:
            raise ValidationError("--kappa needs --rate")
        # a single pseudo-range whose situation probability is kappa
        part = SpeedRangePartition.from_kmh([cfg.speed_ranges_kmh[0], cfg.speed_ranges_kmh[-1]])
        return constant_rate_tree(part, (1.0,), (args.kappa,), args.rate), "kappa"
    situations = load_table(_path(args, "situations", cfg, "situation table"))
    rates_path = args.rates or (cfg.paths.rates if args.rate is None else None)
    if rates_path:
        rates = ErrorRateTable.from_dict(_load_json(rates_path))
        prof = MissionProfile.from_tables("highway", 1.0, situations, rates=rates)
    elif args.rate is not None:
        prof = MissionProfile.from_tables("highway", 1.0, situations, constant_rate=args.rate)
    else:
        raise ValidationError("give --rates <file>, --rate <errors/h> or --tree <file>")
    return FailureModelTree((prof,)), "tables"


def cmd_estimate(args, cfg: RunConfig, argv) -> int:
    tree, source = _build_tree(args, cfg)
    result = failure_rate_extended(tree)
    if args.save_tree:
        save_tree(tree, args.save_tree)
    if args.format == "text":
        _emit_text(render_tree(tree, result), args.output, argv)
    else:
        doc = result.to_dict()
        doc["input"] = source
        doc["config"] = cfg.to_dict()
        _emit_json(doc, args.output, argv)
    return EXIT_OK


def cmd_require(args, cfg: RunConfig, argv) -> int:
    if args.kappa is not None:
        k = args.kappa
    else:
        table = load_table(_path(args, "situations", cfg, "situation table"))
        k = kappa(table.speed_probability, table.total)
    rows = [{"target_mtbf_hours": t, "required_rate_per_hour": required_error_rate(t, k)} for t in args.target_mtbf]
    _emit_json({"units": {"rate": "1/h", "mtbf": "h"}, "kappa": k, "requirements": rows, "config": cfg.to_dict()}, args.output, argv)
    return EXIT_OK


def cmd_baseline(args, cfg: RunConfig, argv) -> int:
    h = human_baseline_mtbf(args.accidents, args.vehicle_km, args.avg_speed)
    doc = {
        "units": {"mtbf": "h", "distance": "km", "speed": "km/h"},
        "accidents": args.accidents,
        "vehicle_km": args.vehicle_km,
        "average_speed_kmh": args.avg_speed,
        "mtbf_hours": format_inf(h),
    }
    _emit_json(doc, args.output, argv)
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig, argv) -> int:
    if args.tree:
        target = load_tree(args.tree)
    elif args.lambda_p is not None and args.p_s is not None:
        target = LeafTarget(args.lambda_p, args.p_s)
    else:
        raise ValidationError("give --lambda-p and --p-s, or --tree")
    sim = SimulationConfig(args.horizon, args.trials, args.seed, target, slices=args.slices, workers=args.workers)
    doc = simulate(sim).to_dict()
    doc["slices"] = args.slices
    _emit_json(doc, args.output, argv)
    return EXIT_OK


def cmd_severity_chart(args, cfg: RunConfig, argv) -> int:
    profile, th = cfg.braking_profile(), cfg.thresholds()
    rows = []
    for v in args.speeds:
        for g in args.gaps:
            dv = kin.impact_delta_v_standing(kmh_to_ms(v), g, profile)
            sev = kin.severity_from_delta_v(dv, th)
            rows.append((v, g, ms_to_kmh(dv), sev.name, int(sev.severe)))
    df = pd.DataFrame(rows, columns=["speed_kmh", "gap_m", "delta_v_kmh", "severity", "severe"])
    _emit_csv(df, args.output, argv)
    return EXIT_OK


def cmd_false_alarm_chart(args, cfg: RunConfig, argv) -> int:
    rear, lead, th = cfg.braking_profile(), cfg.lead_profile(), cfg.thresholds()
    v = kmh_to_ms(args.speed)
    rows = []
    for g in args.gaps:
        for d in args.durations:
            dv = kin.false_alarm_delta_v(v, g, d, lead, rear)
            if dv is None:
                rows.append((args.speed, g, d, 0, None, "none", 0))
            else:
                sev = kin.severity_from_delta_v(dv, th)
                rows.append((args.speed, g, d, 1, ms_to_kmh(dv), sev.name, int(sev.severe)))
    cols = ["speed_kmh", "gap_m", "duration_s", "collision", "delta_v_kmh", "severity", "severe"]
    _emit_csv(pd.DataFrame(rows, columns=cols), args.output, argv)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avmtbf", description="Vehicle-level MTBF from perception errors and driving situations.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _config_parent()

    p = sub.add_parser("extract-situations", parents=[common], help="situation table from track files")
    p.add_argument("tracks", nargs="?", help="track CSV or directory of them")
    p.add_argument("--convergence", help="write the speed-distribution convergence CSV here")
    p.add_argument("--text", help="write an aligned text table here")
    p.set_defaults(func=cmd_extract_situations)

    p = sub.add_parser("speed-dist", parents=[common], help="speed-range probabilities from track files")
    p.add_argument("tracks", nargs="?")
    p.set_defaults(func=cmd_speed_dist)

    p = sub.add_parser("error-rates", parents=[common], help="error-rate table from a perception log")
    p.add_argument("perception_log", nargs="?")
    p.add_argument("--meta", help="log metadata JSON (default: <log>.json)")
    p.set_defaults(func=cmd_error_rates)

    p = sub.add_parser("estimate", parents=[common], help="failure rate and MTBF")
    p.add_argument("--situations", help="situation table JSON")
    p.add_argument("--rates", help="error-rate table JSON")
    p.add_argument("--rate", type=float, help="one error rate for every range, errors/h")
    p.add_argument("--kappa", type=float, help="use a precomputed kappa with --rate")
    p.add_argument("--tree", help="full tree JSON")
    p.add_argument("--save-tree", help="also write the evaluated tree as JSON")
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("require", parents=[common], help="required perception error rate")
    p.add_argument("--target-mtbf", type=float, nargs="+", required=True, help="hours")
    p.add_argument("--situations")
    p.add_argument("--kappa", type=float)
    p.set_defaults(func=cmd_require)

    p = sub.add_parser("baseline", parents=[common], help="human-driver MTBF from accident statistics")
    p.add_argument("--accidents", type=float, required=True)
    p.add_argument("--vehicle-km", type=float, required=True)
    p.add_argument("--avg-speed", type=float, required=True, help="km/h")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo failure rate")
    p.add_argument("--lambda-p", type=float, help="errors/h")
    p.add_argument("--p-s", type=float, help="situation probability")
    p.add_argument("--tree")
    p.add_argument("--horizon", type=float, default=1.0, help="hours per trial")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slices", type=int, default=1000, help="exposure slices per trial (trees)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("severity-chart", parents=[common], help="Δv and severity against a standing obstacle")
    p.add_argument("--speeds", type=_grid, default=_grid("0:200:10"), help="km/h, lo:hi:step or list")
    p.add_argument("--gaps", type=_grid, default=_grid("0:150:5"), help="m, lo:hi:step or list")
    p.set_defaults(func=cmd_severity_chart)

    p = sub.add_parser("false-alarm-chart", parents=[common], help="Δv and severity of false-alarm braking")
    p.add_argument("--speed", type=float, default=130.0, help="common speed, km/h")
    p.add_argument("--gaps", type=_grid, default=_grid("0:60:2"))
    p.add_argument("--durations", type=_grid, default=_grid("0:5:0.25"), help="s")
    p.set_defaults(func=cmd_false_alarm_chart)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return args.func(args, cfg, argv)
    except UnsatisfiableRequirement as exc:
        print(f"error: unsatisfiable requirement: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AvMtbfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
