"""
Hurry-up experiment runner
Runs the big/little search-server simulator under the Hurry-up mapper or the
static random baseline, sweeps parameter grids, and drives the mapper live
from an instrumented server's stats pipe.

    python hurryup.py run --qps 10 --policy both
    python hurryup.py sweep --qps 5,10,15 --policy hurryup,static --seed 1,2,3 --jobs 4
    python hurryup.py live --pipe /tmp/search.stats
"""

import argparse
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv

from model.domain import MAPPER_PRESETS, ConfigInvalid, Policy, SimConfig, validate_config
from model.metrics import build_report, compare
from model.simengine import Request
from model.simengine import run as simulate
from model.workload import generate_for, read_arrivals, write_arrivals
from utils.affinity import make_backend
from utils.config_loader import load_config
from utils.data_manager import DEFAULT_BIN_MS, ResultStore, trace_digest
from utils.helpers import configure_logging, format_comparison, format_report
from utils.live_session import LiveSession, wall_clock_ms

logger = logging.getLogger("hurryup")

SWEEP_AXES = ["qps", "migration_threshold_ms", "sampling_time_ms", "policy", "seed"]
SWEEP_COLUMNS = SWEEP_AXES + ["request_count", "migration_count", "p50_ms", "p90_ms", "p99_ms",
                              "energy_total_j"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _out_dir(args) -> str:
    return args.out or os.getenv('HURRYUP_OUT') or "results"


def _overrides(args, scalar: bool = True) -> Dict[str, Any]:
    """CLI flags and --set pairs as config overrides; sweep axes are skipped when not scalar."""
    overrides: Dict[str, Any] = {}
    for pair in args.set or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigInvalid([f"--set expects KEY=VALUE, got '{pair}'"])
        overrides[key.strip()] = value.strip()

    if getattr(args, "keyword_dist", None):
        overrides["keyword_dist"] = args.keyword_dist
    if getattr(args, "duration_s", None) is not None:
        overrides["duration_s"] = args.duration_s
    if scalar:
        flags = {"qps": "qps", "seed": "rng_seed", "sampling_ms": "sampling_time_ms",
                 "threshold_ms": "migration_threshold_ms"}
        for flag, key in flags.items():
            value = getattr(args, flag, None)
            if value is not None:
                overrides[key] = value
        if getattr(args, "policy", None) in ("hurryup", "static"):
            overrides["policy"] = args.policy
    return overrides


def run_name(cfg: SimConfig) -> str:
    return f"{cfg.policy.value}_qps{cfg.qps:g}_seed{cfg.rng_seed}"


# run

def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args), preset=args.preset)
    store = ResultStore(_out_dir(args))

    arrivals: Optional[List[Request]] = read_arrivals(args.arrivals) if args.arrivals else None
    if args.policy == "both":
        policies = [Policy.HURRY_UP, Policy.STATIC_RANDOM]
        if arrivals is None:
            arrivals = generate_for(cfg)
        write_arrivals(arrivals, os.path.join(store.out_dir, "arrivals.csv"))
    else:
        policies = [cfg.policy]

    reports = {}
    for policy in policies:
        run_cfg = replace(cfg, policy=policy)
        logger.info(f"Running {run_cfg.policy.value} at {run_cfg.qps} QPS for {run_cfg.duration_s} s "
                    f"(seed {run_cfg.rng_seed}, {run_cfg.topology.label})")
        trace = simulate(run_cfg, arrivals)
        report = build_report(trace)
        run_dir = store.save_run(run_name(run_cfg), trace, report, bin_ms=args.bin_ms)
        reports[policy] = report

        print(format_report(report, title=run_name(run_cfg)))
        print(f"✅ Results written to {run_dir} (digest {trace_digest(trace)})")

    if len(reports) == 2:
        comparison = compare(reports[Policy.HURRY_UP], reports[Policy.STATIC_RANDOM])
        path = store.save_comparison(comparison)
        print(format_comparison(comparison))
        print(f"✅ Comparison written to {path}")
    store.close()
    return EXIT_OK


# sweep

def _axis(text: Optional[str], cast: Callable[[str], Any], default: Any) -> List[Any]:
    if text is None:
        return [default]
    values = [cast(v.strip()) for v in str(text).split(",") if v.strip()]
    if not values:
        raise ConfigInvalid([f"empty sweep axis '{text}'"])
    return values


def sweep_cells(base: SimConfig, args) -> List[SimConfig]:
    """Cartesian product of the sweep axes over a base config, in axis order"""
    try:
        axes = [
            _axis(args.qps, float, base.qps),
            _axis(args.threshold_ms, float, base.mapper.migration_threshold_ms),
            _axis(args.sampling_ms, float, base.mapper.sampling_time_ms),
            _axis(args.policy, Policy.parse, base.policy),
            _axis(args.seed, int, base.rng_seed),
        ]
    except ValueError as e:
        raise ConfigInvalid([f"bad sweep axis: {e}"])

    cells = []
    for qps, threshold, sampling, policy, seed in itertools.product(*axes):
        mapper = replace(base.mapper, migration_threshold_ms=threshold, sampling_time_ms=sampling)
        cells.append(replace(base, qps=qps, mapper=mapper, policy=policy, rng_seed=seed))

    violations = sorted({v for cell in cells for v in validate_config(cell)})
    if violations:
        raise ConfigInvalid(violations)
    return cells


def run_cell(cfg: SimConfig, arrivals: Sequence[Request]) -> Dict[str, Any]:
    """Simulate one sweep cell on a replayed workload; returns its CSV row."""
    report = build_report(simulate(cfg, arrivals))
    return {
        "qps": cfg.qps,
        "migration_threshold_ms": cfg.mapper.migration_threshold_ms,
        "sampling_time_ms": cfg.mapper.sampling_time_ms,
        "policy": cfg.policy.value,
        "seed": cfg.rng_seed,
        "request_count": report.request_count,
        "migration_count": report.migration_count,
        "p50_ms": report.p50_ms,
        "p90_ms": report.p90_ms,
        "p99_ms": report.p99_ms,
        "energy_total_j": report.energy_total_j,
    }


def run_sweep(cells: List[SimConfig], jobs: int = 1) -> pd.DataFrame:
    # cells sharing (seed, qps) replay the same arrival stream
    workloads: Dict[tuple, List[Request]] = {}
    for cell in cells:
        key = (cell.rng_seed, cell.qps)
        if key not in workloads:
            workloads[key] = generate_for(cell)
    arrivals = [workloads[(cell.rng_seed, cell.qps)] for cell in cells]

    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            rows = list(executor.map(run_cell, cells, arrivals))
    else:
        rows = [run_cell(cell, cell_arrivals) for cell, cell_arrivals in zip(cells, arrivals)]
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def cmd_sweep(args) -> int:
    base = load_config(args.config, _overrides(args, scalar=False), preset=args.preset, validate=False)
    cells = sweep_cells(base, args)
    logger.info(f"Sweeping {len(cells)} cell(s) with {args.jobs} job(s)")

    frame = run_sweep(cells, jobs=args.jobs)
    store = ResultStore(_out_dir(args))
    path = store.save_sweep(frame, name=args.name)
    store.close()

    print(frame.to_string(index=False))
    print(f"✅ Sweep of {len(frame)} cell(s) written to {path}")
    return EXIT_OK


# live

def _cpu_list(text: Optional[str]) -> Optional[List[int]]:
    if not text:
        return None
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigInvalid([f"--cpus expects a comma-separated list of CPU numbers, got '{text}'"])


def cmd_live(args) -> int:
    overrides = _overrides(args)
    if args.big_cores is not None:
        overrides["big_cores"] = args.big_cores
    if args.little_cores is not None:
        overrides["little_cores"] = args.little_cores
    cfg = load_config(args.config, overrides, preset=args.preset, validate=False)
    # the live pool is whatever threads show up; one per core at most
    cfg = replace(cfg, thread_pool_size=max(1, cfg.topology.core_count))
    violations = validate_config(cfg)
    if violations:
        raise ConfigInvalid(violations)

    cpus = _cpu_list(args.cpus)
    if cpus is not None and len(cpus) != cfg.topology.core_count:
        raise ConfigInvalid([f"--cpus lists {len(cpus)} CPU(s) for {cfg.topology.core_count} cores"])
    backend = make_backend(args.backend, cpus)

    clock = None if args.clock == "stream" else wall_clock_ms
    logger.info(f"Reading stats from {args.pipe} ({cfg.topology.label}, sampling "
                f"{cfg.mapper.sampling_time_ms:g} ms, threshold {cfg.mapper.migration_threshold_ms:g} ms)")
    with open(args.pipe, "rb") as stream:
        session = LiveSession(stream, cfg.topology, cfg.mapper, backend, clock=clock)
        report = session.run()

    store = ResultStore(_out_dir(args))
    run_dir = store.save_session_report(report, session.latencies, name=args.name, bin_ms=args.bin_ms)
    store.close()

    print(format_report(report, title="Live session"))
    if session.channel.rejected_count:
        print(f"❌ {session.channel.rejected_count} malformed line(s) skipped")
    if session.skipped_threads:
        print(f"❌ Threads beyond the core count were ignored: {sorted(session.skipped_threads)}")
    print(f"✅ Session report written to {run_dir}")
    return EXIT_OK


# argument parsing

def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--preset", choices=sorted(MAPPER_PRESETS), help="named mapper tuning")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    parser.add_argument("--out", help="output directory (default $HURRYUP_OUT or ./results)")
    parser.add_argument("--bin-ms", type=float, default=DEFAULT_BIN_MS, help="latency histogram bin width")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default $HURRYUP_LOG_LEVEL or INFO)")
    parser.add_argument("--log-file", help="also write the log to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hurryup", description="Hurry-up big/little thread mapping experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one configuration")
    _add_common(run)
    run.add_argument("--qps", type=float)
    run.add_argument("--policy", choices=["hurryup", "static", "both"])
    run.add_argument("--seed", type=int)
    run.add_argument("--duration-s", type=float)
    run.add_argument("--sampling-ms", type=float)
    run.add_argument("--threshold-ms", type=float)
    run.add_argument("--keyword-dist", help="uniform(lo,hi), zipf(s,max_k) or fixed(k)")
    run.add_argument("--arrivals", help="replay this arrival CSV instead of drawing one")
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser("sweep", help="run the Cartesian product of comma-separated axes")
    _add_common(sweep)
    sweep.add_argument("--qps", help="e.g. 5,10,20")
    sweep.add_argument("--policy", help="e.g. hurryup,static")
    sweep.add_argument("--seed", help="e.g. 1,2,3")
    sweep.add_argument("--sampling-ms")
    sweep.add_argument("--threshold-ms")
    sweep.add_argument("--duration-s", type=float)
    sweep.add_argument("--keyword-dist")
    sweep.add_argument("--jobs", type=int, default=1, help="cells simulated in parallel")
    sweep.add_argument("--name", default="sweep", help="CSV file name without extension")
    sweep.set_defaults(handler=cmd_sweep)

    live = sub.add_parser("live", help="drive the mapper from a stats pipe until it closes")
    _add_common(live)
    live.add_argument("--pipe", required=True, help="named pipe or file carrying TID;RID;TIMESTAMP lines")
    live.add_argument("--big-cores", type=int)
    live.add_argument("--little-cores", type=int)
    live.add_argument("--sampling-ms", type=float)
    live.add_argument("--threshold-ms", type=float)
    live.add_argument("--backend", choices=["log", "psutil"], default="log")
    live.add_argument("--cpus", help="OS CPU per core id, big cores first (psutil backend)")
    live.add_argument("--clock", choices=["wall", "stream"], default="wall",
                      help="wall clock, or the latest stream timestamp for recorded streams")
    live.add_argument("--name", default="live", help="session directory under --out")
    live.set_defaults(handler=cmd_live)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_file)

    try:
        return args.handler(args)
    except ConfigInvalid as e:
        print("❌ Invalid configuration:")
        for violation in e.violations:
            print(f"  - {violation}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"❌ I/O failure: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
