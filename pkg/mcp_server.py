from fastmcp import FastMCP
from dotenv import load_dotenv
from typing import Optional
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
import logging
import os
import sys
from datetime import datetime

from src import config as settings
from src.metrics import delta_table
from src.platoon_sim import CollisionDetected, SimConfig, run
from src.properties import run_all
from src.scenario import load_scenario
from src.thresholds import RelativeState, VehicleParams, classify, thresholds

load_dotenv()

logger = logging.getLogger(__name__)

mcp = FastMCP("hybrid-platoon-sim")


def _resolve_scenario(scenario_path: str) -> Path:
    """Accept absolute paths, paths relative to the cwd, or bare names in scenarios/."""
    path = Path(scenario_path)
    if path.exists():
        return path
    candidate = Path(settings.SCENARIO_DIR) / scenario_path
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"Scenario not found: {scenario_path}")


def _load(scenario_path: str, vdt: Optional[bool] = None, dt: Optional[float] = None):
    defaults = SimConfig(zeno_limit=settings.ZENO_LIMIT, seed=settings.DEFAULT_SEED)
    scenario = load_scenario(_resolve_scenario(scenario_path), defaults)
    return scenario.with_overrides(vdt=vdt, dt=dt)


def _summary(result) -> dict:
    return {
        "completed": result.error is None,
        "collision": isinstance(result.error, CollisionDetected),
        "error": None if result.error is None else str(result.error),
        "simulated_s": result.world.t,
        "wall_time_s": round(result.wall_time, 3),
        "mode_switches": len(result.switches),
        "events": [
            {"t": e.t, "kind": e.kind, "id": e.vehicle_id, "detail": e.detail}
            for e in result.events
            if e.kind != "equilibrium_entered"
        ],
        "metrics": result.metrics.as_dict(),
    }


def simulate_scenario(
    scenario_path: str, vdt: Optional[bool] = None, dt: Optional[float] = None, out_dir: Optional[str] = None
) -> dict:
    """Run one scenario file and return its metrics.

    Args:
        scenario_path: Path to a scenario file, or the name of a shipped one
        vdt: Force the VDT adaptation on or off (default: as in the file)
        dt: Integration step override in seconds
        out_dir: If given, also write the trace/events/metrics/phase-portrait files there
    """
    try:
        scenario = _load(scenario_path, vdt, dt)
        result = run(scenario.config, scenario)
        summary = _summary(result)
        if out_dir:
            from platoon_cli import write_outputs

            summary["files"] = [str(p) for p in write_outputs(result, Path(out_dir))]
        return summary
    except Exception as e:
        return {"error": f"Failed to simulate scenario '{scenario_path}': {str(e)}"}


def compare_vdt(scenario_path: str) -> dict:
    """Run a scenario with VDT on and off and report both metric sets plus their differences."""
    try:
        scenario = _load(scenario_path)
        variants = [scenario.with_overrides(vdt=True), scenario.with_overrides(vdt=False)]
        with ThreadPoolExecutor(max_workers=2) as pool:
            on, off = pool.map(lambda s: run(s.config, s), variants)
        return {
            "vdt_on": _summary(on),
            "vdt_off": _summary(off),
            "deltas": delta_table(on.metrics, off.metrics),
        }
    except Exception as e:
        return {"error": f"Failed to compare VDT modes for '{scenario_path}': {str(e)}"}


def check_properties(samples: int = 1000, seed: int = 0, runs: int = 2) -> dict:
    """Run the sampling property suites (partition, ordering, collapse, bounds, convergence)."""
    try:
        results = run_all(samples=samples, seed=seed, runs=runs)
        return {
            "passed": all(r.passed for r in results),
            "properties": [
                {"name": r.name, "passed": r.passed, "checked": r.checked, "failures": r.failures, "detail": r.detail}
                for r in results
            ],
        }
    except Exception as e:
        return {"error": f"Failed to run property checks: {str(e)}"}


def compute_thresholds(x1: float, x2: float, x3: float, alpha_t: float = 1.0) -> dict:
    """Distance thresholds and driving mode for one relative state with default vehicle parameters.

    Args:
        x1: Headway to the vehicle ahead in m
        x2: Speed of the vehicle ahead minus own speed in m/s
        x3: Speed of the vehicle ahead in m/s
        alpha_t: Time-headway scaling factor
    """
    try:
        p = VehicleParams()
        x = RelativeState(x1, x2, x3)
        ts = thresholds(x, p, alpha_t)
        return {
            "state": {"x1": x1, "x2": x2, "x3": x3},
            "alpha_t": alpha_t,
            "delta_e": ts.delta_e,
            "delta_r": ts.delta_r,
            "delta_s": ts.delta_s,
            "delta_d": ts.delta_d,
            "delta_c": ts.delta_c,
            "mode": classify(x, p, alpha_t).value,
        }
    except Exception as e:
        return {"error": f"Failed to compute thresholds: {str(e)}"}


def get_server_status() -> dict:
    """Get server status including the shipped scenarios and output directory.

    Returns:
        Dictionary with server status, scenario availability and server info
    """
    try:
        status_info = {
            "status": "healthy",
            "timestamp": datetime.now().isoformat(),
            "scenarios": {},
            "output": {},
            "server_info": {},
        }

        scenario_dir = settings.SCENARIO_DIR
        if os.path.isdir(scenario_dir):
            files = {}
            for path in sorted(Path(scenario_dir).glob("*.scn")):
                try:
                    scenario = load_scenario(path)
                    files[path.name] = {"vehicles": len(scenario.vehicles), "status": "valid"}
                except Exception as e:
                    files[path.name] = {"vehicles": 0, "status": f"error: {str(e)}"}
                    status_info["status"] = "degraded"
            status_info["scenarios"] = {"directory_exists": True, "path": scenario_dir, "files": files}
        else:
            status_info["scenarios"] = {
                "directory_exists": False,
                "path": scenario_dir,
                "error": "Scenario directory not found",
            }
            status_info["status"] = "degraded"

        status_info["output"] = {
            "directory": os.path.abspath(settings.OUTPUT_DIR),
            "exists": os.path.isdir(settings.OUTPUT_DIR),
        }
        status_info["server_info"] = {
            "server_name": "Hybrid_Platoon_Sim",
            "framework": "FastMCP",
            "python_version": f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}",
            "working_directory": os.getcwd(),
        }
        return status_info

    except Exception as e:
        return {
            "status": "error",
            "timestamp": datetime.now().isoformat(),
            "error": f"Failed to get server status: {str(e)}",
            "scenarios": {"directory_exists": False, "error": "Unable to check"},
        }


# Registered separately so the plain functions stay callable from tests.
for _tool in (simulate_scenario, compare_vdt, check_properties, compute_thresholds, get_server_status):
    mcp.tool(_tool)


if __name__ == "__main__":
    settings.configure_logging()
    PORT = int(os.environ.get("PORT", 3000))
    mcp.run(transport="streamable-http", host="0.0.0.0", port=PORT)
