#!/usr/bin/env python3
"""Command line for the platoon simulator.

    python platoon_cli.py simulate --scenario scenarios/five_vehicle_platoon.scn --out runs/vdt_on --vdt on
    python platoon_cli.py compare  --scenario scenarios/five_vehicle_platoon.scn
    python platoon_cli.py check    --samples 10
    python platoon_cli.py refine   --scenario scenarios/two_vehicle_minimal.scn

Exit codes: 0 success, 1 usage/parse error, 2 collision, 3 property failure.
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

from src import config as settings
from src.metrics import (
    delta_table,
    format_delta_table,
    write_events_csv,
    write_metrics_report,
    write_phase_portraits,
    write_trace_csv,
)
from src.platoon_sim import CollisionDetected, SimConfig, SimResult, convergence_time, run
from src.properties import CORRUPTIONS, corrupted_params, run_all
from src.scenario import ScenarioFile, ScenarioParseError, ScenarioSemanticError, load_scenario
from src.v2v_channel import write_delivery_log

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_COLLISION = 2
EXIT_PROPERTY = 3

# Largest relative change tolerated by `refine`.
REFINE_TOLERANCE = 0.01


def _on_off(value: str) -> bool:
    lowered = value.lower()
    if lowered not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {value!r}")
    return lowered == "on"


def _load(args: argparse.Namespace) -> ScenarioFile:
    defaults = SimConfig(zeno_limit=settings.ZENO_LIMIT, seed=settings.DEFAULT_SEED)
    scenario = load_scenario(args.scenario, defaults)
    return scenario.with_overrides(
        vdt=getattr(args, "vdt", None), dt=args.dt, seed=args.seed
    )


def _run(scenario: ScenarioFile) -> SimResult:
    return run(scenario.config, scenario)


def _exit_for(result: SimResult) -> int:
    if result.error is None:
        return EXIT_OK
    if isinstance(result.error, CollisionDetected):
        return EXIT_COLLISION
    return EXIT_USAGE


def write_outputs(result: SimResult, out_dir: Path) -> List[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        write_trace_csv(out_dir / "trace.csv", result.traces),
        write_events_csv(out_dir / "events.csv", result.events),
        write_metrics_report(out_dir / "metrics.txt", result.metrics),
        write_delivery_log(out_dir / "deliveries.csv", result.deliveries),
    ]
    paths += write_phase_portraits(out_dir, result.traces)
    logger.info(f"Wrote {len(paths)} files to {out_dir}")
    return paths


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _load(args)
    result = _run(scenario)
    write_outputs(result, Path(args.out))
    print(result.metrics.to_text(), end="")
    if result.error is not None:
        print(f"error: {result.error}", file=sys.stderr)
    return _exit_for(result)


def cmd_compare(args: argparse.Namespace) -> int:
    scenario = _load(args)
    variants = {"on": scenario.with_overrides(vdt=True), "off": scenario.with_overrides(vdt=False)}
    with ThreadPoolExecutor(max_workers=2) as pool:
        futures = {name: pool.submit(_run, s) for name, s in variants.items()}
        results = {name: f.result() for name, f in futures.items()}

    if args.out:
        for name, result in results.items():
            write_outputs(result, Path(args.out) / f"vdt_{name}")

    on_lines = results["on"].metrics.to_text().splitlines()
    off_lines = results["off"].metrics.to_text().splitlines()
    width = max((len(line) for line in on_lines), default=0)
    print(f"{'VDT on':<{width}} | VDT off")
    for left, right in zip(on_lines, off_lines):
        print(f"{left:<{width}} | {right}")
    print()
    print(format_delta_table(delta_table(results["on"].metrics, results["off"].metrics)))

    codes = [_exit_for(r) for r in results.values()]
    for name, result in results.items():
        if result.error is not None:
            print(f"error (VDT {name}): {result.error}", file=sys.stderr)
    return max(codes)


def cmd_check(args: argparse.Namespace) -> int:
    params = corrupted_params(args.corrupt) if args.corrupt else None
    geometries = []
    for path in sorted(Path(settings.SCENARIO_DIR).glob("*.scn")):
        try:
            geometries.append([v.init_pos for v in load_scenario(path).vehicles])
        except (ScenarioParseError, ScenarioSemanticError) as e:
            logger.warning(f"Skipping {path.name}: {e}")
    results = run_all(
        samples=args.samples if args.samples is not None else settings.CHECK_SAMPLES,
        partition_samples=_partition_samples(args),
        seed=args.seed if args.seed is not None else settings.DEFAULT_SEED,
        params=params,
        runs=args.runs,
        geometries=geometries,
    )
    for result in results:
        print(result.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY


def _partition_samples(args: argparse.Namespace) -> int:
    if args.partition_samples is not None:
        return args.partition_samples
    if args.samples is not None:
        return args.samples
    return settings.PARTITION_SAMPLES


def _relative_change(a: Optional[float], b: Optional[float]) -> Optional[float]:
    if a is None or b is None:
        return None if a is not b else 0.0
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def cmd_refine(args: argparse.Namespace) -> int:
    scenario = _load(args)
    dt = scenario.config.dt
    coarse = scenario
    fine = scenario.with_overrides(dt=dt / 2)
    # Same sampling instants on both grids.
    fine = ScenarioFile(
        fine.config.model_copy(update={"sample_every": coarse.config.sample_every * 2}),
        fine.vehicles,
        fine.profile,
        fine.source,
    )
    with ThreadPoolExecutor(max_workers=2) as pool:
        runs = list(pool.map(_run, [coarse, fine]))
    for result in runs:
        if result.error is not None:
            print(f"error: {result.error}", file=sys.stderr)
            return _exit_for(result)

    ok = True
    print(f"{'metric':<28} {'dt':>12} {'dt/2':>12} {'change':>8}")
    for spec in scenario.vehicles[1:]:
        params = spec.params
        rows = [
            (f"min_separation_m.{spec.id}", runs[0].metrics.min_separation.get(spec.id),
             runs[1].metrics.min_separation.get(spec.id)),
            (f"decel_onset_s.{spec.id}", runs[0].metrics.decel_onset.get(spec.id),
             runs[1].metrics.decel_onset.get(spec.id)),
            (f"convergence_s.{spec.id}",
             convergence_time(runs[0].traces, spec.id, scenario.config.eq_tol, params),
             convergence_time(runs[1].traces, spec.id, scenario.config.eq_tol, params)),
        ]
        for name, a, b in rows:
            change = _relative_change(a, b)
            if change is None or change >= REFINE_TOLERANCE:
                ok = False
            shown = "n/a" if change is None else f"{100 * change:.3f}%"
            print(f"{name:<28} {_num(a):>12} {_num(b):>12} {shown:>8}")
    return EXIT_OK if ok else EXIT_PROPERTY


def _num(value: Optional[float]) -> str:
    return "none" if value is None else f"{value:.4f}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybrid-platoon", description="Hybrid-automaton platoon simulator with VDT adaptation."
    )
    parser.add_argument("--log-level", default=None, help="Overrides PLATOON_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", required=True, help="Path to a scenario file")
        p.add_argument("--dt", type=float, default=None, help="Integration step in seconds")
        p.add_argument("--seed", type=int, default=None)

    simulate = sub.add_parser("simulate", help="Run one scenario and write CSV output")
    scenario_args(simulate)
    simulate.add_argument("--out", default=settings.OUTPUT_DIR)
    simulate.add_argument("--vdt", type=_on_off, default=None, help="on|off, overrides the file")
    simulate.set_defaults(func=cmd_simulate)

    compare = sub.add_parser("compare", help="Run with VDT on and off and compare metrics")
    scenario_args(compare)
    compare.add_argument("--out", default=None, help="Also write both runs' CSV output here")
    compare.set_defaults(func=cmd_compare)

    check = sub.add_parser("check", help="Run the sampling property suites")
    check.add_argument("--samples", type=int, default=None, help="Samples per suite")
    check.add_argument(
        "--partition-samples", type=int, default=None, help="Partition samples, --samples if that is set"
    )
    check.add_argument("--seed", type=int, default=None)
    check.add_argument("--runs", type=int, default=settings.CHECK_RUNS, help="Two-vehicle convergence runs")
    check.add_argument("--corrupt", choices=sorted(CORRUPTIONS), default=None)
    check.set_defaults(func=cmd_check)

    refine = sub.add_parser("refine", help="Compare a scenario at dt and dt/2")
    scenario_args(refine)
    refine.set_defaults(func=cmd_refine)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    settings.configure_logging(args.log_level)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: scenario file not found: {e.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (ScenarioParseError, ScenarioSemanticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
