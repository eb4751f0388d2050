"""Sampling-based property suites run by `platoon_cli.py check`.

Each suite draws states (or parameters, or sample streams) from a seeded
numpy generator and returns a PropertyResult; nothing here raises on a
violated property.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.control_laws import control, g4
from src.platoon_sim import LeaderProfile, SimConfig, VehicleSpec, convergence_time, run
from src.thresholds import (
    DELTA_MAX,
    ModeLabel,
    RelativeState,
    VehicleParams,
    boundary_distance,
    classify,
    delta_c,
    delta_d,
    delta_e,
    delta_r,
    delta_s,
    domain_predicates,
    in_omega,
)
from src.v2v_channel import ChannelParams, end_to_end_bound, hop_count
from src.vdt import VdtParams, VdtState, step_alpha

logger = logging.getLogger(__name__)

TOL = 1e-9

# Leader speeds below this collapse the equilibrium band onto x1 = s_n.
MIN_LEADER_SPEED = 1.0
MAX_HORIZON = 3600.0

# Parameter sets that bypass validation on purpose.
CORRUPTIONS: Dict[str, Dict[str, float]] = {
    "c_r_gt_c_s": {"c_r": 4.0, "c_s": 1.5},
    "lambda_lt_1": {"lambda_": 0.5},
}


@dataclass
class PropertyResult:
    name: str
    passed: bool
    checked: int
    failures: int = 0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name} ({self.checked} checked, {self.failures} failed)"
        return f"{text}: {self.detail}" if self.detail else text


def corrupted_params(name: str, base: Optional[VehicleParams] = None) -> VehicleParams:
    """Copy of `base` with an invalid setting; model_copy skips validation."""
    if name not in CORRUPTIONS:
        raise KeyError(f"unknown corruption {name!r}, choose from {sorted(CORRUPTIONS)}")
    return (base or VehicleParams()).model_copy(update=CORRUPTIONS[name])


def sample_states(rng: np.random.Generator, n: int, p: VehicleParams) -> List[RelativeState]:
    """Uniform draws from the admissible box (headway, leader and follower speed)."""
    x1 = rng.uniform(p.s_n, DELTA_MAX, n)
    x3 = rng.uniform(0.0, p.v_max, n)
    follower = rng.uniform(0.0, p.v_max, n)
    x2 = x3 - follower
    return [RelativeState(float(a), float(b), float(c)) for a, b, c in zip(x1, x2, x3)]


def _result(name: str, checked: int, failures: List[str]) -> PropertyResult:
    detail = failures[0] if failures else ""
    return PropertyResult(name, not failures, checked, len(failures), detail)


def check_partition(
    p: VehicleParams, samples: int, rng: np.random.Generator, alpha_t: float = 1.0
) -> PropertyResult:
    """Interior points satisfy exactly one domain predicate, the classified one."""
    failures: List[str] = []
    checked = 0
    for x in sample_states(rng, samples, p):
        if abs(x.x2) < TOL or boundary_distance(x, p, alpha_t) < 1e-6:
            continue
        checked += 1
        members = [label for label, hit in domain_predicates(x, p, alpha_t).items() if hit]
        if len(members) != 1:
            failures.append(f"{x} belongs to {[m.value for m in members]}")
        elif classify(x, p, alpha_t) is not members[0]:
            failures.append(f"{x} classified differently from its domain {members[0].value}")
    return _result("partition", checked, failures)


def check_ordering(p: VehicleParams, samples: int, rng: np.random.Generator) -> PropertyResult:
    """dE <= dR <= dS at alpha_t = 1; dD = dS = dC when the leader is faster."""
    failures: List[str] = []
    if p.c_r > p.c_s:
        failures.append(f"c_r={p.c_r:g} exceeds c_s={p.c_s:g}")
    for x in sample_states(rng, samples, p):
        e, r, s = delta_e(x, p), delta_r(x, p), delta_s(x, p)
        if not (e <= r + TOL and r <= s + TOL):
            failures.append(f"{x}: dE={e:.6g} dR={r:.6g} dS={s:.6g}")
        if x.x2 > 0:
            d, c = delta_d(x, p), delta_c(x, p)
            if abs(d - s) > TOL or abs(c - s) > TOL:
                failures.append(f"{x}: dD={d:.6g} dC={c:.6g} differ from dS={s:.6g}")
    return _result("ordering", samples, failures)


def check_collapse(p: VehicleParams, samples: int, rng: np.random.Generator) -> PropertyResult:
    """With alpha_t = 0 the risky and safe distances equal the emergency one."""
    failures: List[str] = []
    worst = 0.0
    for x in sample_states(rng, samples, p):
        e = delta_e(x, p)
        gap = max(abs(delta_r(x, p, 0.0) - e), abs(delta_s(x, p, 0.0) - e))
        worst = max(worst, gap)
        if gap >= TOL:
            failures.append(f"{x}: collapse gap {gap:.3g} m")
    result = _result("collapse", samples, failures)
    result.detail = result.detail or f"max gap {worst:.3g} m"
    return result


def check_monotonicity(
    p: VehicleParams, vp: VdtParams, samples: int, rng: np.random.Generator
) -> PropertyResult:
    """Every scaled threshold is non-decreasing in alpha_t."""
    failures: List[str] = []
    alphas = rng.uniform(0.0, vp.alpha_t_max, (samples, 2))
    for x, (a, b) in zip(sample_states(rng, samples, p), alphas):
        lo, hi = float(min(a, b)), float(max(a, b))
        for fn in (delta_r, delta_s, delta_d, delta_c):
            if fn(x, p, lo) > fn(x, p, hi) + TOL:
                failures.append(f"{fn.__name__} decreases between alpha {lo:.3f} and {hi:.3f} at {x}")
    return _result("monotonicity", samples, failures)


def check_adaptation_safety(
    p: VehicleParams, vp: VdtParams, samples: int, rng: np.random.Generator
) -> PropertyResult:
    """The full-braking band never thins below the unscaled emergency distance."""
    failures: List[str] = []
    alphas = rng.uniform(vp.alpha_t_0, vp.alpha_t_max, samples)
    for x, alpha in zip(sample_states(rng, samples, p), alphas):
        if delta_r(x, p, float(alpha)) < delta_e(x, p) - TOL:
            failures.append(f"dR < dE at alpha {alpha:.3f}, {x}")
    return _result("adaptation_safety", samples, failures)


def check_control_bound(p: VehicleParams, samples: int, rng: np.random.Generator) -> PropertyResult:
    failures: List[str] = []
    for x in sample_states(rng, samples, p):
        mode = classify(x, p)
        out = control(x, p, mode)
        if abs(out.u) > p.a_max + TOL:
            failures.append(f"|u|={abs(out.u):.3g} above a_max at {x}")
        if mode is ModeLabel.DANGER and out.u != -p.a_max:
            failures.append(f"danger mode commanded {out.u} at {x}")
        at_rest = RelativeState(x.x1, 0.0, x.x3)
        if g4(at_rest, p) != 0.0:
            failures.append(f"g4 non-zero at x2 = 0: {at_rest}")
    return _result("control_bound", samples, failures)


def check_delay_budget(
    params: ChannelParams, geometries: Sequence[Sequence[float]] = ()
) -> PropertyResult:
    """Five vehicles 500 m apart need four hops; every geometry fits the budget."""
    failures: List[str] = []
    line = [2000.0, 1500.0, 1000.0, 500.0, 0.0]
    hops = hop_count(line, 0, len(line) - 1, params.radio_range)
    if hops != 4:
        failures.append(f"500 m spacing took {hops} hops")
    elif hops * params.hop_delay > params.max_end_to_end + TOL:
        failures.append(f"500 m spacing delay {hops * params.hop_delay:.3f}s over budget")
    for positions in [line, *geometries]:
        bound = end_to_end_bound(positions, params)
        if bound > params.max_end_to_end + TOL:
            failures.append(f"end-to-end bound {bound:.3f}s over budget for {list(positions)}")
    return _result("delay_budget", 1 + len(geometries), failures)


def check_vdt_bounds(vp: VdtParams, samples: int, rng: np.random.Generator) -> PropertyResult:
    """alpha_t stays within its bounds for arbitrary sample streams."""
    failures: List[str] = []
    state = VdtState()
    for _ in range(samples):
        n = int(rng.integers(0, 6))
        speeds = rng.uniform(0.0, 40.0, n)
        ages = rng.uniform(0.0, 2.0 * vp.staleness_limit, n)
        own = float(rng.uniform(0.0, 40.0))
        state = step_alpha(state, zip(speeds.tolist(), ages.tolist()), own, vp, vp.update_period)
        if not vp.alpha_t_0 <= state.alpha_t <= vp.alpha_t_max:
            failures.append(f"alpha_t {state.alpha_t} out of bounds")
            break
    return _result("vdt_bounds", samples, failures)


@dataclass
class _Setup:
    vehicles: Sequence[VehicleSpec]
    profile: LeaderProfile = field(default_factory=LeaderProfile)


def pair_setup(x: RelativeState, p: VehicleParams, leader_pos: float = 1000.0) -> _Setup:
    """Leader holding speed x3 and one follower at relative state x."""
    return _Setup(
        vehicles=[
            VehicleSpec(1, p, leader_pos, x.x3),
            VehicleSpec(2, p, leader_pos - x.x1, x.follower_speed),
        ]
    )


def settling_horizon(
    x: RelativeState, p: VehicleParams, base: float = 150.0, tol: float = 1e-3, alpha_t: float = 1.0
) -> float:
    """Run length a pair started at x needs to settle to |x2| <= tol.

    On top of the `base` transient, a follower in the following band with a
    faster leader keeps its speed until the headway drifts out to dS, and
    sliding along dS then shrinks x2 with time constant c_s*alpha*lambda*x3/a_max.
    """
    horizon = base
    low, high = delta_r(x, p, alpha_t), delta_s(x, p, alpha_t)
    if x.x2 > 0 and x.x1 < high:
        horizon += (high - max(x.x1, low)) / x.x2
    tau = p.c_s * alpha_t * p.lambda_ * x.x3 / p.a_max
    horizon += tau * math.log(max(abs(x.x2), tol) / tol)
    return horizon


def check_convergence(
    p: VehicleParams,
    runs: int,
    rng: np.random.Generator,
    base_horizon: float = 150.0,
    dt: float = 0.02,
    max_horizon: float = MAX_HORIZON,
) -> PropertyResult:
    """Two-vehicle runs from random Init states reach and keep equilibrium.

    Each run lasts its state's settling horizon. States whose horizon exceeds
    max_horizon are skipped and counted in the detail.
    """
    failures: List[str] = []
    done = 0
    skipped = 0
    attempts = 0
    while done < runs and attempts < 1000 * runs:
        attempts += 1
        x3 = float(rng.uniform(MIN_LEADER_SPEED, p.v_max))
        follower = float(rng.uniform(0.0, p.v_max))
        x = RelativeState(float(rng.uniform(p.s_n, DELTA_MAX)), x3 - follower, x3)
        if not in_omega(x, p):
            continue
        horizon = settling_horizon(x, p, base_horizon)
        if horizon > max_horizon:
            skipped += 1
            continue
        done += 1
        config = SimConfig(dt=dt, duration=horizon, sample_every=5)
        result = run(config, pair_setup(x, p))
        if result.error is not None:
            failures.append(f"{x}: {result.error}")
            continue
        if convergence_time(result.traces, 2, config.eq_tol, p) is None:
            failures.append(f"{x}: no equilibrium by t={horizon:.1f}s")
    result = _result("convergence", done, failures)
    if skipped:
        note = f"skipped {skipped} states with horizon over {max_horizon:g}s"
        result.detail = f"{result.detail}; {note}" if result.detail else note
    return result


def check_platoon_convergence(p: VehicleParams, dt: float = 0.01) -> PropertyResult:
    """Follower n settles no later than n times the slowest single-pair time."""
    speeds = [20.0, 22.0, 22.0, 22.0, 22.0]
    gap = 150.0
    specs = [VehicleSpec(i + 1, p, 1000.0 - i * gap, v) for i, v in enumerate(speeds)]
    config = SimConfig(dt=dt, duration=30.0)

    single: List[float] = []
    for ahead, behind in zip(specs, specs[1:]):
        x = RelativeState(gap, ahead.init_v - behind.init_v, ahead.init_v)
        t_pair = convergence_time(run(config, pair_setup(x, p)).traces, 2, config.eq_tol, p)
        if t_pair is None:
            return PropertyResult("platoon_convergence", False, 1, 1, f"pair {x} never settles")
        single.append(t_pair)
    t_hat = max(single)

    result = run(config, _Setup(specs))
    failures: List[str] = []
    if result.error is not None:
        failures.append(str(result.error))
    for n, spec in enumerate(specs[1:], start=1):
        t_n = convergence_time(result.traces, spec.id, config.eq_tol, p)
        if t_n is None or t_n > n * t_hat + dt:
            failures.append(f"vehicle {spec.id} settled at {t_n} > {n} * {t_hat:.2f}s")
    return _result("platoon_convergence", len(specs) - 1, failures)


def run_all(
    samples: int,
    partition_samples: Optional[int] = None,
    seed: int = 0,
    params: Optional[VehicleParams] = None,
    vdt: Optional[VdtParams] = None,
    channel: Optional[ChannelParams] = None,
    runs: int = 10,
    geometries: Sequence[Sequence[float]] = (),
) -> List[PropertyResult]:
    """Every suite, each with its own generator derived from `seed`."""
    p = params or VehicleParams()
    vp = vdt or VdtParams()
    cp = channel or ChannelParams()
    seeds = np.random.SeedSequence(seed).spawn(9)
    rngs = [np.random.default_rng(s) for s in seeds]

    suites: List[Tuple[str, Callable[[], PropertyResult]]] = [
        ("partition", lambda: check_partition(p, partition_samples or samples, rngs[0])),
        ("ordering", lambda: check_ordering(p, samples, rngs[1])),
        ("collapse", lambda: check_collapse(p, samples, rngs[2])),
        ("monotonicity", lambda: check_monotonicity(p, vp, samples, rngs[3])),
        ("adaptation_safety", lambda: check_adaptation_safety(p, vp, samples, rngs[4])),
        ("control_bound", lambda: check_control_bound(p, samples, rngs[5])),
        ("delay_budget", lambda: check_delay_budget(cp, geometries)),
        ("vdt_bounds", lambda: check_vdt_bounds(vp, samples, rngs[6])),
    ]
    if runs > 0:
        suites.append(("convergence", lambda: check_convergence(p, runs, rngs[7])))
        suites.append(("platoon_convergence", lambda: check_platoon_convergence(p)))

    results = []
    for name, suite in suites:
        try:
            result = suite()
        except Exception as e:
            # Corrupted parameters can break a suite outright.
            result = PropertyResult(name, False, 0, 1, f"{type(e).__name__}: {e}")
        logger.info(result.line())
        results.append(result)
    return results
