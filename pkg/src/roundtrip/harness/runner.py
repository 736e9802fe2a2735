"""Execute configured missions and write their run directories."""

from __future__ import annotations

import json
from pathlib import Path

import yaml

from ..control import Mode
from ..mission import HoldTrajectory, MissionLog, Simulator, new_track, run_paired, run_roundtrip
from ..recorder import DisturbanceTrack
from .config import (
    RunConfig,
    build_plan,
    build_simulator,
    config_dict,
    config_hash,
    derive_seed,
    stream_name,
)
from .logs import write_comparison, write_run, write_summary


def config_text(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_dict(cfg), sort_keys=True)


def run_info(cfg: RunConfig) -> dict:
    return {
        "scenario": cfg.scenario,
        "config_hash": config_hash(cfg),
        "master_seed": cfg.seed,
        "streams": {
            stream_name("mission"): derive_seed(cfg.seed, "mission"),
            stream_name("wind"): derive_seed(cfg.seed, "wind"),
        },
    }


def track_metadata(cfg: RunConfig) -> dict:
    return {"scenario": cfg.scenario, "master_seed": cfg.seed}


def execute(cfg: RunConfig) -> MissionLog:
    """Run the mission described by ``cfg.plan``."""
    plan = build_plan(cfg)
    sim = build_simulator(cfg)
    kind = cfg.plan.kind
    if kind == "roundtrip":
        return run_roundtrip(plan, sim, track_metadata(cfg))
    if kind == "line":
        return run_outbound(cfg, sim)
    hold = HoldTrajectory(cfg.plan.target, cfg.plan.hover_duration)
    return sim.run_leg("hold", hold, cfg.plan.hover_duration, cfg.plan.outbound_mode)


def run_outbound(cfg: RunConfig, sim: Simulator | None = None) -> MissionLog:
    """A single recorded A -> B leg."""
    sim = sim or build_simulator(cfg)
    track = new_track(sim, track_metadata(cfg))
    leg = build_plan(cfg).outbound()
    sim.run_leg("outbound", leg, leg.duration, cfg.plan.outbound_mode, record=track)
    sim.log.track = track
    return sim.log


def run_return_with_track(cfg: RunConfig, track: DisturbanceTrack) -> MissionLog:
    """A single B -> A leg using a track recorded by an earlier run."""
    sim = build_simulator(cfg, start=cfg.plan.target)
    sim.outbound_done = True
    leg = build_plan(cfg).inbound()
    mode = cfg.plan.return_mode
    sim.run_leg("return", leg, leg.duration, mode, track=track if mode is Mode.FEEDFORWARD else None)
    return sim.log


def save(cfg: RunConfig, log: MissionLog, out) -> Path:
    out = Path(out)
    write_run(out, log, run_info(cfg), config_text(cfg))
    write_summary(out)
    return out


def branch_config(cfg: RunConfig, mode: Mode) -> RunConfig:
    mode = Mode(mode)
    data = config_dict(cfg)
    if cfg.plan.kind == "roundtrip":
        data["plan"]["return_mode"] = mode.value
    else:
        if mode is Mode.FEEDFORWARD:
            raise ValueError(f"feedforward needs a recorded track; not available for {cfg.plan.kind!r} plans")
        data["plan"]["outbound_mode"] = mode.value
    return RunConfig.model_validate(data)


def comparison_leg(cfg: RunConfig) -> str:
    return {"roundtrip": "return", "line": "outbound", "hover": "hold"}[cfg.plan.kind]


def execute_compare(cfg: RunConfig, out) -> tuple[dict, bool]:
    """Paired runs over ``cfg.compare.modes``; returns (summary, any_failed).

    Round trips share the outbound leg and branch at the start of the return
    leg; other plans run once per mode. Each branch directory carries a config
    that reproduces it on its own.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    modes = [Mode(m) for m in cfg.compare.modes]
    branches = {m.value: branch_config(cfg, m) for m in modes}
    if cfg.plan.kind == "roundtrip":
        logs = run_paired(build_plan(cfg), build_simulator(cfg), modes, track_metadata(cfg))
    else:
        logs = {m: execute(c) for m, c in branches.items()}
    failed = False
    for m, log in logs.items():
        save(branches[m], log, out / m)
        failed |= log.failed
    (out / "config.yaml").write_text(config_text(cfg))
    meta = {
        "scenario": cfg.scenario,
        "config_hash": config_hash(cfg),
        "master_seed": cfg.seed,
        "leg": comparison_leg(cfg),
        "modes": [m.value for m in modes],
    }
    (out / "compare.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    path = write_comparison(out)
    return json.loads(path.read_text()), failed

