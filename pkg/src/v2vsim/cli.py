"""Command-line front end.

Every subcommand reads one key-value config file (``--config``); flags given
on the command line override the file. Outputs land in the configured output
directory and depend only on the config and the seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_run_config
from .dynamics import FuelMap, RoadProfile, VehicleParams, total_fuel
from .errors import ConfigError, InputError, V2VSimError
from .metrics import export_csv, export_geojson, summarize
from .routing import route
from .topology import TopologyConfig, evolve, snapshot_forest, write_forests_jsonl
from .trace import (
    SynthConfig,
    Timeline,
    filter_class,
    parse_fcd,
    read_csv_trace,
    synth_trace,
    vehicle_series,
    write_fcd,
)

log = logging.getLogger("v2vsim")


def _open_input(path: Path, mode="r"):
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    return open(path, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": ""}))


def load_timeline(cfg: RunConfig) -> Timeline:
    if cfg.trace_fcd is not None:
        log.info("parsing FCD trace %s", cfg.trace_fcd)
        with _open_input(cfg.trace_fcd, "rb") as fh:
            return parse_fcd(fh)
    if cfg.trace_csv is not None:
        log.info("reading CSV trace %s", cfg.trace_csv)
        with _open_input(cfg.trace_csv) as fh:
            return read_csv_trace(fh)
    if cfg.synth is not None:
        if not cfg.synth.is_file():
            raise ConfigError(f"input file not found: {cfg.synth}")
        log.info("generating synthetic trace from %s, seed %d", cfg.synth, cfg.seed)
        return synth_trace(SynthConfig.from_file(cfg.synth), cfg.seed)
    raise ConfigError("config names no trace source (trace_fcd, trace_csv or synth)")


def topology_config(cfg: RunConfig) -> TopologyConfig:
    return TopologyConfig(cfg.r_p_m, cfg.r_max_m, cfg.degree_cap)


def _network_timeline(cfg: RunConfig) -> Timeline:
    timeline = load_timeline(cfg)
    return filter_class(timeline, cfg.classes)


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(cfg: RunConfig, args) -> int:
    if cfg.synth is None:
        raise ConfigError("the synth command needs a 'synth' key in the config")
    timeline = load_timeline(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "trace.fcd.xml"
    with open(path, "w", encoding="utf-8") as fh:
        write_fcd(timeline, fh)
    print(json.dumps({"trace": str(path), "snapshots": len(timeline), "seed": cfg.seed}))
    return 0


def cmd_topology(cfg: RunConfig, args) -> int:
    tcfg = topology_config(cfg)
    timeline = _network_timeline(cfg)
    forests = evolve(timeline, tcfg)
    metrics = summarize(forests, tcfg, cfg.hist_bins)

    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "forests.jsonl", "w", encoding="utf-8") as fh:
        write_forests_jsonl(forests, fh)
    with open(cfg.out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        export_csv(metrics, fh)
    summary = {"seed": cfg.seed, "config": cfg.describe(), "aggregates": metrics.aggregates}
    _write_json(cfg.out / "summary.json", summary)
    print(json.dumps({"snapshots": len(forests), "aggregates": metrics.aggregates}, sort_keys=True))
    return 0


def _snapshot_at(timeline: Timeline, time: float):
    try:
        return timeline.at(time)
    except KeyError as exc:
        raise InputError(exc.args[0]) from None


def cmd_route(cfg: RunConfig, args) -> int:
    timeline = _network_timeline(cfg)
    snap = _snapshot_at(timeline, args.time)
    forest = snapshot_forest(snap, topology_config(cfg))
    result = route(forest, args.src, args.dst)
    print(json.dumps({"time": snap.time, "src": args.src, "dst": args.dst, **result.as_dict()}))
    return 0


def _uniform_dt(times: np.ndarray, what: str) -> float:
    if len(times) < 2:
        raise InputError(f"{what} has fewer than two samples")
    gaps = np.diff(times)
    if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
        raise InputError(f"{what} is not uniformly sampled (gaps {gaps.min()}..{gaps.max()} s)")
    return float(gaps[0])


def _speed_series(cfg: RunConfig, vehicle: str | None):
    if vehicle is not None:
        times, speeds = vehicle_series(load_timeline(cfg), vehicle)
        what = f"speed series of vehicle {vehicle!r}"
    elif cfg.speed_csv is not None:
        with _open_input(cfg.speed_csv) as fh:
            rows = list(csv.DictReader(fh))
        try:
            times = np.array([float(r["time"]) for r in rows])
            speeds = np.array([float(r["speed"]) for r in rows])
        except (KeyError, ValueError):
            raise InputError(f"{cfg.speed_csv}: expected numeric columns 'time,speed'") from None
        what = str(cfg.speed_csv)
    else:
        raise ConfigError("fuel needs --vehicle or a 'speed_csv' key in the config")
    dt = _uniform_dt(times, what)
    if cfg.dt is not None and not np.isclose(cfg.dt, dt, rtol=1e-12, atol=0.0):
        grid = times[0] + cfg.dt * np.arange(int(np.floor((times[-1] - times[0]) / cfg.dt + 1e-9)) + 1)
        speeds = np.interp(grid, times, speeds)
        log.info("resampled %s from %g s to %g s", what, dt, cfg.dt)
        times, dt = grid, cfg.dt
    return times, speeds, dt


def cmd_fuel(cfg: RunConfig, args) -> int:
    if cfg.vehicle_params is None or cfg.fuel_map is None:
        raise ConfigError("fuel needs 'vehicle_params' and 'fuel_map' in the config")
    if not cfg.vehicle_params.is_file():
        raise ConfigError(f"input file not found: {cfg.vehicle_params}")
    params = VehicleParams.from_file(cfg.vehicle_params)
    with _open_input(cfg.fuel_map) as fh:
        fmap = FuelMap.from_csv(fh)
    profile = RoadProfile.flat()
    if cfg.road_profile is not None:
        with _open_input(cfg.road_profile) as fh:
            profile = RoadProfile.from_csv(fh)

    times, speeds, dt = _speed_series(cfg, args.vehicle)
    result = total_fuel(params, profile, fmap, speeds, dt)
    label = args.vehicle if args.vehicle is not None else "speed_csv"
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / f"fuel_{label}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        export_csv(result, fh)
    if result.n_clamped:
        log.warning("%d of %d samples fell outside the fuel map and were clamped",
                    result.n_clamped, len(result.rate))
    print(json.dumps({
        "vehicle": args.vehicle,
        "total_fuel_g": result.total,
        "duration_s": float(times[-1] - times[0]),
        "dt_s": dt,
        "clamped_samples": result.n_clamped,
        "trace": str(path),
    }))
    return 0


def cmd_export(cfg: RunConfig, args) -> int:
    tcfg = topology_config(cfg)
    timeline = _network_timeline(cfg)
    snaps = [_snapshot_at(timeline, args.time)] if args.time is not None else list(timeline)
    outdir = cfg.out / "geojson"
    outdir.mkdir(parents=True, exist_ok=True)
    width = len(str(len(timeline)))
    index = {s.time: i for i, s in enumerate(timeline)}
    for snap in snaps:
        path = outdir / f"snapshot_{index[snap.time]:0{width}d}.geojson"
        with open(path, "w", encoding="utf-8") as fh:
            export_geojson(snap, snapshot_forest(snap, tcfg), fh, cfg.crs_note)
    print(json.dumps({"geojson_dir": str(outdir), "files": len(snaps)}))
    return 0


COMMANDS = {
    "topology": cmd_topology,
    "fuel": cmd_fuel,
    "route": cmd_route,
    "synth": cmd_synth,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2vsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="key-value run config")
    common.add_argument("--seed", type=int, help="seed for synthetic traces (overrides config)")
    common.add_argument("--out", type=Path, help="output directory (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("topology", parents=[common],
                   help="build per-snapshot forests, write forests.jsonl and metrics.csv")
    p = sub.add_parser("fuel", parents=[common], help="fuel consumption along a speed trace")
    p.add_argument("--vehicle", help="vehicle id in the trace (else speed_csv from config)")
    p = sub.add_parser("route", parents=[common], help="route one message in one snapshot")
    p.add_argument("--time", type=float, required=True,
                   help="snapshot time; the latest snapshot at or before it is used")
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    sub.add_parser("synth", parents=[common], help="write the synthetic trace as FCD XML")
    p = sub.add_parser("export", parents=[common], help="GeoJSON per snapshot")
    p.add_argument("--time", type=float, help="export only the snapshot at this time")
    return parser


def _setup_logging():
    level = os.environ.get("V2VSIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config).with_overrides(seed=args.seed, out=args.out)
        return COMMANDS[args.command](cfg, args)
    except (V2VSimError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
