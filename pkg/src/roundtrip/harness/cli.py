"""Command-line entry point.

Exit codes: 0 success, 1 usage or input problem, 2 invalid configuration,
3 simulation diverged (partial logs are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml
from pydantic import ValidationError

from ..control import Mode
from ..recorder import TrackError, load_track
from ..windfield import sample_plane
from .config import (
    PRESETS,
    RunConfig,
    build_field,
    config_dict,
    derive_seed,
    describe_errors,
    load_config,
    resolve_config,
    schema_json,
    stream_name,
)
from .logs import dump_json, fmt, summarize_comparison, summarize_run, write_comparison, write_summary
from .runner import execute, execute_compare, run_outbound, run_return_with_track, save

log = logging.getLogger("roundtrip")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _parse_set(items) -> dict:
    """``a.b=value`` pairs into a nested dict; values are parsed as YAML."""
    out: dict = {}
    for item in items or ():
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out


def _config(args) -> RunConfig:
    overrides = _parse_set(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    try:
        return load_config(args.config, args.scenario, overrides)
    except ValidationError as exc:
        raise CliError("invalid configuration:\n  " + "\n  ".join(describe_errors(exc)), EXIT_CONFIG)
    except (KeyError, ValueError, yaml.YAMLError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_CONFIG)


def _report_run(out: Path, failed: bool, failure: str = "") -> int:
    summary = json.loads((out / "summary.json").read_text())
    for leg, s in summary["legs"].items():
        print(f"{leg:9s} {s['mode']:12s} rmse {s['rmse_m']:.4f} m  samples {s['samples']}")
    print(f"logs: {out}")
    if failed:
        print(f"error: {failure}; partial logs kept in {out}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    leg = args.leg or ("return" if args.track else "outbound")
    data = config_dict(cfg)
    if args.mode:
        key = "return_mode" if leg == "return" else "outbound_mode"
        data["plan"][key] = args.mode
    if leg == "hold":
        data["plan"]["kind"] = "hover"
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise CliError("invalid configuration:\n  " + "\n  ".join(describe_errors(exc)), EXIT_CONFIG)
    if leg == "outbound":
        result = run_outbound(cfg)
    elif leg == "return":
        if not args.track:
            raise CliError("the return leg needs --track from an earlier outbound run")
        try:
            track = load_track(args.track)
        except (OSError, TrackError) as exc:
            raise CliError(f"cannot read track: {exc}")
        result = run_return_with_track(cfg, track)
    else:
        result = execute(cfg)
    out = save(cfg, result, args.out)
    return _report_run(out, result.failed, result.failure)


def cmd_roundtrip(args) -> int:
    cfg = _config(args)
    result = execute(cfg)
    out = save(cfg, result, args.out)
    return _report_run(out, result.failed, result.failure)


def _print_comparison(summary: dict) -> None:
    print(f"scenario {summary['scenario']}  leg {summary['leg']}  master seed {summary['master_seed']}")
    for mode in summary["modes"]:
        r = summary["rmse_m"][mode]
        print(f"  {mode:12s} rmse {'n/a' if r is None else f'{r:.4f} m'}")
    for name, pct in summary["reduction_percent"].items():
        print(f"  reduction {name}: {pct:.1f}%")


def cmd_compare(args) -> int:
    cfg = _config(args)
    if args.modes:
        data = config_dict(cfg)
        data["compare"]["modes"] = args.modes
        cfg = RunConfig.model_validate(data)
    try:
        summary, failed = execute_compare(cfg, args.out)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    _print_comparison(summary)
    print(f"logs: {args.out}")
    if failed:
        print("error: at least one run diverged; partial logs kept", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _parse_plane(text: str) -> tuple[str, float]:
    axis, _, value = text.partition("=")
    axis = axis.strip().lower()
    if axis not in ("x", "y", "z") or not value:
        raise CliError(f"--plane expects x=, y= or z=<value>, got {text!r}")
    return axis, float(value)


def cmd_fieldmap(args) -> int:
    if args.config:
        cfg = _config(args)
    else:
        if args.field not in PRESETS:
            raise CliError(f"unknown field {args.field!r}; choose from {sorted(PRESETS)}")
        cfg = resolve_config({}, args.field)
    axis, value = _parse_plane(args.plane)
    extent = (tuple(args.extent[0:2]), tuple(args.extent[2:4]))
    wind = build_field(cfg.field, derive_seed(cfg.seed, "wind"))
    grid = sample_plane(wind, axis, value, extent, args.resolution, args.time)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        fh.write(f"# air velocity of field '{cfg.scenario}' on plane {axis}={value} at t={args.time} s\n")
        fh.write("# units: x[m] y[m] z[m] vx[m/s] vy[m/s] vz[m/s] speed[m/s]\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z", "vx", "vy", "vz", "speed"])
        for row in grid.tolist():
            w.writerow([fmt(v) for v in row])
    i = int(grid[:, 6].argmax())
    print(f"{len(grid)} points written to {out}; max speed {grid[i, 6]:.3f} m/s at {grid[i, :3].round(3).tolist()}")
    return EXIT_OK


def _sweep_item(payload):
    data, out = payload
    cfg = RunConfig.model_validate(data)
    summary, failed = execute_compare(cfg, out)
    return summary, failed


def _write_sweep_table(root: Path) -> Path:
    meta = json.loads((root / "sweep.json").read_text())
    modes = None
    rows = []
    for item in meta["items"]:
        s = summarize_comparison(root / item["dir"])
        modes = modes or s["modes"]
        red = list(s["reduction_percent"].values())
        rows.append([item["value"], item["seed"], *(s["rmse_m"][m] for m in modes), red[-1] if red else None])
    path = root / "sweep.csv"
    with path.open("w", newline="") as fh:
        fh.write(f"# sweep of {meta['param']}; per-item seeds come from stream {meta['stream']} of master seed {meta['master_seed']}\n")
        fh.write("# units: rmse[m] reduction[%]\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([meta["param"], "seed", *(f"rmse_{m}" for m in modes), "reduction_percent"])
        for r in rows:
            w.writerow([r[0], r[1], *("" if v is None else fmt(v) for v in r[2:])])
    return path


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [yaml.safe_load(v) for v in args.values.split(",")]
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    jobs, items = [], []
    for i, value in enumerate(values):
        overrides = _parse_set([f"{args.param}={value}"])
        overrides["seed"] = derive_seed(cfg.seed, "sweep", i)
        try:
            item_cfg = resolve_config(_merge_dicts(config_dict(cfg), overrides))
        except ValidationError as exc:
            raise CliError("invalid sweep value:\n  " + "\n  ".join(describe_errors(exc)), EXIT_CONFIG)
        name = f"{i:03d}"
        jobs.append((config_dict(item_cfg), str(root / name)))
        items.append({"dir": name, "value": value, "seed": item_cfg.seed, "stream": stream_name("sweep", i)})
    (root / "sweep.json").write_text(
        json.dumps(
            {"param": args.param, "master_seed": cfg.seed, "stream": "sweep", "items": items},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_item, jobs))
    else:
        results = [_sweep_item(j) for j in jobs]
    path = _write_sweep_table(root)
    print(path.read_text(), end="")
    return EXIT_DIVERGED if any(f for _, f in results) else EXIT_OK


def _merge_dicts(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        out[k] = _merge_dicts(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def cmd_report(args) -> int:
    root = Path(args.directory)
    if not root.is_dir():
        raise CliError(f"{root}: no logs found (not a directory)")
    runs = sorted(p.parent for p in root.rglob("run.json"))
    comparisons = sorted(p.parent for p in root.rglob("compare.json"))
    sweeps = sorted(p.parent for p in root.rglob("sweep.json"))
    if not runs:
        raise CliError(f"{root}: no logs found")
    mismatched = []
    for d in runs:
        text = dump_json(summarize_run(d))
        if args.check:
            old = (d / "summary.json").read_text() if (d / "summary.json").exists() else None
            if old != text:
                mismatched.append(d)
        else:
            write_summary(d)
    for d in comparisons:
        text = dump_json(summarize_comparison(d))
        if args.check:
            old = (d / "summary.json").read_text() if (d / "summary.json").exists() else None
            if old != text:
                mismatched.append(d)
        else:
            write_comparison(d)
            _print_comparison(json.loads(text))
    for d in sweeps:
        if not args.check:
            _write_sweep_table(d)
    print(f"{len(runs)} run(s), {len(comparisons)} comparison(s), {len(sweeps)} sweep(s) under {root}")
    if mismatched:
        for d in mismatched:
            print(f"summary differs from logs: {d}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def cmd_schema(args) -> int:
    text = schema_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=sorted(PRESETS), help="named preset to start from")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value, e.g. estimator.tau_force=0.2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roundtrip", description="Round-trip wind disturbance rejection simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="fly one leg")
    _add_config_flags(p)
    p.add_argument("--leg", choices=["outbound", "return", "hold"])
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--track", help="track CSV from an earlier outbound run (return leg)")
    p.add_argument("--out", default="runs/simulate")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("roundtrip", help="fly the full mission")
    _add_config_flags(p)
    p.add_argument("--out", default="runs/roundtrip")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("compare", help="paired runs across controller modes")
    _add_config_flags(p)
    p.add_argument("--modes", nargs="+", choices=[m.value for m in Mode])
    p.add_argument("--out", default="runs/compare")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fieldmap", help="sample a wind field on a plane")
    p.add_argument("--field", default="jet", help="scenario whose field to sample")
    p.add_argument("--config", help="take the field from a YAML run configuration instead")
    p.add_argument("--scenario", help=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    p.add_argument("--set", action="append", help=argparse.SUPPRESS)
    p.add_argument("--plane", default="z=1", help="x=, y= or z=<value> in m")
    p.add_argument("--extent", nargs=4, type=float, default=[-0.5, 2.5, -1.0, 1.0],
                   metavar=("A0", "A1", "B0", "B1"), help="ranges of the two free axes, m")
    p.add_argument("--resolution", type=float, default=0.02, help="grid spacing, m")
    p.add_argument("--time", type=float, default=0.0, help="s")
    p.add_argument("--out", default="runs/fieldmap.csv")
    p.set_defaults(func=cmd_fieldmap)

    p = sub.add_parser("sweep", help="vary one parameter over paired comparisons")
    _add_config_flags(p)
    p.add_argument("--param", required=True, help="dotted config key, e.g. estimator.tau_force")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="runs/sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="regenerate summaries from logs")
    p.add_argument("directory")
    p.add_argument("--check", action="store_true", help="verify existing summaries instead of rewriting")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("schema", help="print the JSON schema of the run configuration")
    p.add_argument("--out")
    p.set_defaults(func=cmd_schema)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
