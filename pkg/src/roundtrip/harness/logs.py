"""Run-directory file formats: CSV logs per rate group, run metadata, summaries.

Every summary number is computed from the CSV files as written, so
regenerating a summary from disk gives the same bytes as the original run.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..mission import CONTROL_COLUMNS, LEG_CODES, ONBOARD_COLUMNS, TRUTH_COLUMNS, MissionLog
from ..recorder import save_track

SIG = 9
LEG_NAMES = {v: k for k, v in LEG_CODES.items()}
MODE_NAMES = {0: "pd-only", 1: "feedback", 2: "feedforward"}

UNITS = {
    "t": "s", "leg": "code", "mode": "code",
    "px": "m", "py": "m", "pz": "m", "vx": "m/s", "vy": "m/s", "vz": "m/s",
    "qw": "1", "qx": "1", "qy": "1", "qz": "1", "wx": "rad/s", "wy": "rad/s", "wz": "rad/s",
    "ax": "m/s^2", "ay": "m/s^2", "az": "m/s^2", "gx": "rad/s", "gy": "rad/s", "gz": "rad/s",
    "fhx": "N", "fhy": "N", "fhz": "N", "thx": "N m", "thy": "N m", "thz": "N m", "warmup": "flag",
    "thrust_cmd": "N", "tpx": "N m", "tpy": "N m", "tpz": "N m",
    "fdx": "N", "fdy": "N", "fdz": "N", "tdx": "N m", "tdy": "N m", "tdz": "N m",
    "rx": "m", "ry": "m", "rz": "m", "rvx": "m/s", "rvy": "m/s", "rvz": "m/s",
    "mx": "m", "my": "m", "mz": "m", "Fx": "N", "Fy": "N", "Fz": "N",
    "fux": "N", "fuy": "N", "fuz": "N", "tux": "N m", "tuy": "N m", "tuz": "N m",
    "lookup_index": "index", "lookup_distance": "m", "ff_active": "flag", "motor_saturated": "flag",
    "dpx": "m", "dpy": "m", "dpz": "m",
}

GROUPS = {
    "truth": (TRUTH_COLUMNS, "ground-truth state, simulation rate"),
    "onboard": (ONBOARD_COLUMNS, "IMU, observer estimates, applied command and true wrench, IMU rate"),
    "control": (CONTROL_COLUMNS, "references, controller inputs and outputs, command rate"),
}


def fmt(x: float) -> str:
    return format(x, f".{SIG}g")


def write_table(path: Path, columns, rows, description: str, stream: str) -> None:
    lines = [
        f"# {description}",
        f"# random stream: {stream}",
        "# units: " + " ".join(f"{c}[{UNITS[c]}]" for c in columns),
        ",".join(columns),
    ]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def read_table(path) -> tuple[list[str], np.ndarray]:
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            line = line.rstrip("\n")
            if header is None:
                header = line.split(",")
                continue
            if line:
                rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: missing header")
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def write_run(out: Path, log: MissionLog, info: dict, config_text: str) -> None:
    """Persist one mission: config echo, CSV tables, track and run metadata."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config_text)
    stream = f"mission seed={info['streams']['mission']}"
    for group, (columns, description) in GROUPS.items():
        rows = getattr(log, group)
        if group == "truth" and not rows:
            continue
        write_table(out / f"{group}.csv", columns, rows, description, stream)
    if log.track is not None and len(log.track):
        save_track(log.track, out / "track.csv")
    meta = dict(info)
    meta["failed"] = log.failed
    meta["failure"] = log.failure
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x))) if x.size else math.nan


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def summarize_run(run_dir) -> dict:
    """Summary statistics for one run directory, from its files only."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "run.json").read_text())
    ccols, control = read_table(run_dir / "control.csv")
    ocols, onboard = read_table(run_dir / "onboard.csv")
    ci, oi = ccols.index, ocols.index
    legs = {}
    for code in sorted(set(control[:, ci("leg")].astype(int).tolist())):
        rows = control[control[:, ci("leg")] == code]
        err = rows[:, ci("px") : ci("pz") + 1] - rows[:, ci("rx") : ci("rz") + 1]
        norms = np.sqrt(np.sum(err * err, axis=1))
        ob = onboard[(onboard[:, oi("leg")] == code) & (onboard[:, oi("warmup")] == 0)]
        f_err = ob[:, oi("fhx") : oi("fhz") + 1] - ob[:, oi("fdx") : oi("fdz") + 1]
        t_err = ob[:, oi("thx") : oi("thz") + 1] - ob[:, oi("tdx") : oi("tdz") + 1]
        looked_up = rows[:, ci("lookup_index")] >= 0
        legs[LEG_NAMES[code]] = {
            "mode": MODE_NAMES[int(rows[0, ci("mode")])],
            "t_start": float(rows[0, ci("t")]),
            "t_end": float(rows[-1, ci("t")]),
            "samples": int(len(rows)),
            "rmse_m": _rms(norms),
            "rmse_axes_m": {a: _rms(err[:, j]) for j, a in enumerate("xyz")},
            "max_error_m": float(norms.max()),
            "motor_saturated_steps": int(rows[:, ci("motor_saturated")].sum()),
            "feedforward_steps": int(rows[:, ci("ff_active")].sum()),
            "fallback_steps": int(np.sum(looked_up & (rows[:, ci("ff_active")] == 0))),
            "force_estimate_rms_error_n": _clean(_rms(np.sqrt(np.sum(f_err * f_err, axis=1)))),
            "torque_estimate_rms_error_nm": _clean(_rms(np.sqrt(np.sum(t_err * t_err, axis=1)))),
            "force_settling_s": _clean(_settling(ob, oi)),
        }
    track = run_dir / "track.csv"
    return {
        "scenario": meta.get("scenario"),
        "config_hash": meta.get("config_hash"),
        "master_seed": meta.get("master_seed"),
        "streams": meta.get("streams"),
        "failed": meta.get("failed", False),
        "failure": meta.get("failure", ""),
        "legs": legs,
        "track_records": sum(1 for _ in track.open()) - 1 if track.exists() else 0,
    }


def _settling(ob: np.ndarray, oi, band: float = 0.1) -> float:
    """Time from leg start until the force estimate error stays within ``band``
    of the true force magnitude (with a 0.01 N floor)."""
    if not len(ob):
        return math.nan
    fh = ob[:, oi("fhx") : oi("fhz") + 1]
    fd = ob[:, oi("fdx") : oi("fdz") + 1]
    err = np.sqrt(np.sum((fh - fd) ** 2, axis=1))
    tol = np.maximum(band * np.sqrt(np.sum(fd * fd, axis=1)), 0.01)
    outside = np.nonzero(err > tol)[0]
    if not len(outside):
        return 0.0
    last = outside[-1]
    if last + 1 >= len(ob):
        return math.nan
    return float(ob[last + 1, oi("t")] - ob[0, oi("t")])


def summarize_comparison(root) -> dict:
    root = Path(root)
    meta = json.loads((root / "compare.json").read_text())
    leg = meta["leg"]
    modes = meta["modes"]
    rmse = {}
    runs = {}
    for mode in modes:
        s = summarize_run(root / mode)
        runs[mode] = {"config_hash": s["config_hash"], "streams": s["streams"], "failed": s["failed"]}
        rmse[mode] = s["legs"][leg]["rmse_m"] if leg in s["legs"] else None
    reductions = {}
    for i, base in enumerate(modes):
        for new in modes[i + 1 :]:
            if rmse[base] and rmse[new] is not None:
                reductions[f"{new} vs {base}"] = 100.0 * (1.0 - rmse[new] / rmse[base])
    return {
        "scenario": meta["scenario"],
        "config_hash": meta["config_hash"],
        "master_seed": meta["master_seed"],
        "leg": leg,
        "modes": modes,
        "rmse_m": rmse,
        "reduction_percent": reductions,
        "runs": runs,
    }


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_summary(run_dir) -> Path:
    run_dir = Path(run_dir)
    path = run_dir / "summary.json"
    path.write_text(dump_json(summarize_run(run_dir)))
    return path


def write_comparison(root) -> Path:
    root = Path(root)
    path = root / "summary.json"
    path.write_text(dump_json(summarize_comparison(root)))
    return path
