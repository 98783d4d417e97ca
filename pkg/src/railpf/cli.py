"""Command-line entry point: ``railpf <command> ...``.

Commands
--------
build-map   raw ``x,y,z`` polyline -> map CSV
simulate    preset or spec file -> scenario bundle directory
run         one filter over map + IMU + GNSS -> estimate CSV (plus a
            diagnostics file with mean GNSS-vs-map residuals)
eval        estimate CSVs + truth -> report directory
compare     simulate, run both filters, eval

Every command writes a manifest before its outputs. On failure a single
line ``railpf: error: <Kind>: <message>`` goes to stderr and the exit
status is 1 (2 for usage errors).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import tomli_w

from . import __version__
from . import csvio
from .config import (RunManifest, config_snapshot, derive_seed, load_filter_config, read_toml)
from .ekf import run_ekf
from .evaluation import compute_errors, gnss_outages, report
from .exceptions import ConfigError, RailPFError
from .geometry import arc_length
from .gnss import align_to_steps
from .pf import gnss_map_residuals, run_particle_filter
from .scenario import PRESETS, ScenarioSpec, build_scenario, preset_spec
from .track_map import DEFAULT_RDP_EPSILON, build_map

THREADS_ENV = "RAILPF_THREADS"


def thread_limit() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def resample_polyline(xyz, spacing: float):
    """Points every ``spacing`` metres of chord length, keeping both ends."""
    s = arc_length(xyz)
    n = max(int(np.floor(s[-1] / spacing)), 1)
    q = np.append(np.arange(n + 1) * spacing, s[-1]) if s[-1] - n * spacing > 1e-9 else \
        np.arange(n + 1) * spacing
    return np.column_stack([np.interp(q, s, xyz[:, j]) for j in range(3)])


# ---------------------------------------------------------------- commands

def cmd_build_map(args):
    raw = csvio.read_raw(args.input)
    if args.spacing is not None:
        if not args.spacing > 0:
            raise ConfigError("--spacing must be > 0")
        raw = resample_polyline(raw, args.spacing)
    man = RunManifest("build-map", __version__,
                      config={"rdp_epsilon": args.rdp_epsilon, "spacing": args.spacing or 0.0})
    man.add_input("raw", args.input)
    out = Path(args.output)
    man.write(out.with_name(out.stem + ".manifest.toml"))
    track = build_map(raw, rdp_epsilon=args.rdp_epsilon, map_id=out.stem)
    csvio.write_map(out, track)


def load_spec(args) -> ScenarioSpec:
    if args.spec:
        data = read_toml(args.spec)
        data = data.get("scenario", data)
        return ScenarioSpec.from_dict(data)
    return preset_spec(args.preset)


def simulate(spec: ScenarioSpec, seed: int, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sub = derive_seed(seed, "scenario")
    bundle = {"seed": int(seed), "scenario_seed": sub, "version": __version__,
              "scenario": spec.to_dict()}
    (out / "scenario.toml").write_text(tomli_w.dumps(bundle), encoding="utf-8")
    sc = build_scenario(spec, sub)
    csvio.write_map(out / "map.csv", sc.map)
    csvio.write_imu(out / "imu.csv", sc.imu)
    csvio.write_gnss(out / "gnss.csv", sc.gnss)
    csvio.write_truth(out / "truth.csv", sc.truth)
    return out


def cmd_simulate(args):
    simulate(load_spec(args), args.seed, args.out)


def run_filter(kind, map_path, imu_path, gnss_path, config_path, seed, out_path):
    cfg = load_filter_config(kind, config_path)
    track = csvio.read_map(map_path)
    imu = csvio.read_imu(imu_path)
    fixes = csvio.read_gnss(gnss_path)
    sub = derive_seed(seed, kind)
    man = RunManifest(f"run --filter {kind}", __version__, seed=int(seed),
                      sub_seeds={kind: sub}, config=config_snapshot(cfg),
                      data_t_start=float(imu.t[0]) if len(imu) else None,
                      data_t_end=float(imu.t[-1]) if len(imu) else None)
    man.add_input("map", map_path)
    man.add_input("imu", imu_path)
    man.add_input("gnss", gnss_path)
    if config_path:
        man.add_input("config", config_path)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    man.write(out.with_name(out.stem + ".manifest.toml"))
    if kind == "pf":
        results = run_particle_filter(track, imu, fixes, cfg, seed=sub)
        csvio.write_pf_estimates(out, results)
        d_hat = [r.estimate.d for r in results]
    else:
        results = run_ekf(track, imu, fixes, cfg)
        csvio.write_ekf_estimates(out, results)
        d_hat = [r.d for r in results]
    per_step = align_to_steps(imu.t, fixes)
    used = [k for k, f in enumerate(per_step) if f is not None]
    diag = gnss_map_residuals(track, [per_step[k] for k in used], [d_hat[k] for k in used])
    out.with_name(out.stem + ".diagnostics.toml").write_text(
        tomli_w.dumps({"gnss_map_residuals": diag}), encoding="utf-8")
    return out


def cmd_run(args):
    run_filter(args.filter, args.map, args.imu, args.gnss, args.config, args.seed, args.out)


def parse_runs(items):
    runs = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"--runs entries must look like NAME=PATH, got {item!r}")
        if name in runs:
            raise ConfigError(f"duplicate run name {name!r}")
        runs[name] = path
    return runs


def _scenario_outages(path):
    sc = read_toml(path).get("scenario", {})
    return [tuple(w) for w in sc.get("sensors", {}).get("outages", [])]


def evaluate(runs: dict, truth_path, out_dir, map_path=None, gnss_path=None, scenario_path=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = csvio.read_truth(truth_path)
    man = RunManifest("eval", __version__)
    man.add_input("truth", truth_path)
    for name, path in runs.items():
        man.add_input(f"run.{name}", path)
    track = None
    if map_path:
        man.add_input("map", map_path)
        track = csvio.read_map(map_path)
    outages = None
    if scenario_path:
        man.add_input("scenario", scenario_path)
        outages = _scenario_outages(scenario_path)
    elif gnss_path:
        man.add_input("gnss", gnss_path)
        fixes = csvio.read_gnss(gnss_path)
        outages = gnss_outages([f.t for f in fixes], truth["t"])
    if len(truth["t"]):
        man.data_t_start, man.data_t_end = float(truth["t"][0]), float(truth["t"][-1])
    man.write(out / "manifest.toml")
    series = {name: compute_errors(csvio.read_estimates(path), truth, track, outages=outages)
              for name, path in runs.items()}
    return report(series, out, outages or ())


def cmd_eval(args):
    evaluate(parse_runs(args.runs), args.truth, args.out, args.map, args.gnss, args.scenario)


def cmd_compare(args):
    out = Path(args.out)
    spec = load_spec(args)
    bundle = simulate(spec, args.seed, out / "scenario")
    runs_dir = out / "runs"
    jobs = {kind: runs_dir / f"{kind}.csv" for kind in ("pf", "ekfmm")}
    with ThreadPoolExecutor(max_workers=min(len(jobs), thread_limit())) as pool:
        futures = [pool.submit(run_filter, kind, bundle / "map.csv", bundle / "imu.csv",
                               bundle / "gnss.csv", args.config, args.seed, path)
                   for kind, path in jobs.items()]
        for f in futures:
            f.result()
    evaluate({k: str(p) for k, p in jobs.items()}, bundle / "truth.csv", out / "report",
             map_path=bundle / "map.csv", scenario_path=bundle / "scenario.toml")


# ---------------------------------------------------------------- parser

def _add_scenario_source(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}")
    g.add_argument("--spec", help="scenario TOML file")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="railpf", description="Map-aided train localization tools.")
    ap.add_argument("--version", action="version", version=f"railpf {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-map", help="build a track map from a raw x,y,z polyline")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--rdp-epsilon", type=float, default=DEFAULT_RDP_EPSILON)
    p.add_argument("--spacing", type=float, default=None,
                   help="resample the polyline to this point spacing first [m]")
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("simulate", help="generate a scenario bundle")
    _add_scenario_source(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run one filter")
    p.add_argument("--filter", choices=("pf", "ekfmm"), required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--imu", required=True)
    p.add_argument("--gnss", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="estimate CSV path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="error statistics and plots")
    p.add_argument("--runs", nargs="+", required=True, metavar="NAME=PATH")
    p.add_argument("--truth", required=True)
    p.add_argument("--map", default=None, help="map CSV for along/across-track tangents")
    p.add_argument("--scenario", default=None, help="scenario.toml giving the outage schedule")
    p.add_argument("--gnss", default=None, help="GNSS CSV to infer outages from")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="simulate, run pf and ekfmm, evaluate")
    _add_scenario_source(p)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (RailPFError, OSError) as exc:
        kind = type(exc).__name__
        msg = " ".join(str(exc).split())
        print(f"railpf: error: {kind}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
