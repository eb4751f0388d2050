"""Fixed-step simulation of a platoon of interconnected automata.

Vehicle 1 leads and follows a speed profile; every other vehicle runs the
hybrid controller against the vehicle directly ahead. Within a step vehicles
are classified from the back to the front so every follower reads the
pre-step state of its predecessor. Commands are then settled from the front
to the back: a follower whose command would push it across an attracting
mode boundary slides along that boundary instead. Integration is
semi-implicit Euler.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Deque, Dict, List, Optional, Protocol, Sequence, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.control_laws import DomainViolation, apply_speed_limits, control
from src.thresholds import (
    ModeLabel,
    RelativeState,
    VehicleParams,
    classify,
    classify_with,
    in_equilibrium,
    thresholds,
)
from src.v2v_channel import ChannelParams, DeliveryRecord, StateMessage, V2VChannel
from src.vdt import VdtParams, VdtState, samples_from_table, step_alpha

if TYPE_CHECKING:
    from src.metrics import MetricsReport

logger = logging.getLogger(__name__)

_TIME_EPS = 1e-9

EVENT_KINDS = (
    "leader_event",
    "unsafe_entered",
    "equilibrium_entered",
    "collision",
    "zeno_suspect",
    "vdt_stale",
    "run_complete",
)

# Order of the modes from equilibrium outward. A follower slides along a
# boundary only when its command would carry it to a mode ranked after its own.
_SLIDE_RANK = {
    ModeLabel.CLOSING_IN: 0,
    ModeLabel.FOLLOWING_II: 1,
    ModeLabel.FOLLOWING_I: 2,
    ModeLabel.FREE_DRIVING: 3,
    ModeLabel.DANGER: 4,
}
SLIDE_ITERATIONS = 16


class CollisionDetected(RuntimeError):
    """A follower's headway dropped below its collision distance s_n."""

    def __init__(self, t: float, vehicle_id: int, x1: float, s_n: float):
        super().__init__(
            f"Collision at t={t:.2f}s: vehicle {vehicle_id} headway {x1:.3f} m below s_n={s_n:g} m"
        )
        self.t = t
        self.vehicle_id = vehicle_id
        self.x1 = x1
        self.s_n = s_n


class ZenoSuspect(RuntimeError):
    """A vehicle switched modes more often than allowed within the window."""

    def __init__(self, t: float, vehicle_id: int, count: int, window: float):
        super().__init__(
            f"Zeno suspect at t={t:.2f}s: vehicle {vehicle_id} switched {count} times in {window:g}s"
        )
        self.t = t
        self.vehicle_id = vehicle_id
        self.count = count
        self.window = window


class LeaderProfile(BaseModel):
    """Piecewise-constant target speed of the lead vehicle."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    events: Tuple[Tuple[float, float], ...] = ()
    k_lead: float = Field(1.0, gt=0, description="Speed-tracking gain, 1/s")
    initial_speed: Optional[float] = Field(None, ge=0)

    @model_validator(mode="after")
    def _check_events(self) -> "LeaderProfile":
        times = [t for t, _ in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"profile times must be strictly increasing, got {times}")
        if any(t < 0 for t in times):
            raise ValueError("profile times must be non-negative")
        if any(v < 0 for _, v in self.events):
            raise ValueError("profile targets must be non-negative")
        return self

    def target(self, t: float, fallback: float) -> float:
        """Last event target at or before t, else the initial speed."""
        current = self.initial_speed if self.initial_speed is not None else fallback
        for event_t, speed in self.events:
            if event_t <= t + _TIME_EPS:
                current = speed
            else:
                break
        return current

    def first_change(self, direction: int) -> Optional[float]:
        """Time of the first event lowering (direction < 0) or raising the target."""
        previous = self.initial_speed
        for event_t, speed in self.events:
            if previous is not None and (speed - previous) * direction > 0:
                return event_t
            previous = speed
        return None


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    dt: float = Field(0.01, gt=0)
    duration: float = Field(150.0, gt=0)
    vdt_enabled: bool = False
    vdt: VdtParams = VdtParams()
    channel: ChannelParams = ChannelParams()
    sample_every: int = Field(1, ge=1)
    zeno_window: float = Field(1.0, gt=0)
    zeno_limit: int = Field(100, ge=1)
    leader_from_channel: bool = False
    seed: int = 0
    eq_tol: float = Field(1e-3, gt=0, description="|x2| tolerance of the equilibrium test")
    settle_tol: float = Field(0.1, gt=0, description="|x2| tolerance of the oscillation metrics")
    sliding: bool = True


@dataclass(frozen=True, slots=True)
class VehicleSpec:
    id: int
    params: VehicleParams
    init_pos: float
    init_v: float


@dataclass(slots=True)
class VehicleSim:
    id: int
    position: float
    speed: float
    params: VehicleParams
    mode: Optional[ModeLabel] = None
    vdt: VdtState = field(default_factory=VdtState)
    acceleration: float = 0.0


@dataclass(slots=True)
class _Plan:
    x: RelativeState
    mode: ModeLabel
    alpha: float
    u: float


@dataclass(frozen=True, slots=True)
class TraceRecord:
    t: float
    id: int
    position: float
    speed: float
    acceleration: float
    mode: ModeLabel
    x1: float
    x2: float
    x3: float
    alpha_t: float
    v_bar: float
    theta: float

    @property
    def state(self) -> RelativeState:
        return RelativeState(self.x1, self.x2, self.x3)


@dataclass(frozen=True, slots=True)
class SimEvent:
    t: float
    kind: str
    vehicle_id: Optional[int]
    detail: str = ""


@dataclass(frozen=True, slots=True)
class ModeSwitch:
    t: float
    vehicle_id: int
    from_mode: ModeLabel
    to_mode: ModeLabel


class PlatoonSetup(Protocol):
    vehicles: Sequence[VehicleSpec]
    profile: LeaderProfile


@dataclass
class World:
    config: SimConfig
    vehicles: List[VehicleSim]
    profile: LeaderProfile
    channel: V2VChannel
    t: float = 0.0
    step_index: int = 0
    traces: List[TraceRecord] = field(default_factory=list)
    events: List[SimEvent] = field(default_factory=list)
    switches: List[ModeSwitch] = field(default_factory=list)
    _switch_times: Dict[int, Deque[float]] = field(default_factory=dict)
    _unsafe: Set[int] = field(default_factory=set)
    _equilibrium: Set[int] = field(default_factory=set)
    _stale: Set[int] = field(default_factory=set)
    _profile_cursor: int = 0

    @classmethod
    def from_specs(
        cls, config: SimConfig, specs: Sequence[VehicleSpec], profile: LeaderProfile
    ) -> "World":
        if not specs:
            raise ValueError("a platoon needs at least one vehicle")
        ordered = sorted(specs, key=lambda s: s.id)
        for ahead, behind in zip(ordered, ordered[1:]):
            if not behind.init_pos < ahead.init_pos:
                raise ValueError(
                    f"vehicle {behind.id} at {behind.init_pos} m is not behind vehicle "
                    f"{ahead.id} at {ahead.init_pos} m"
                )
        for spec in ordered:
            if not 0.0 <= spec.init_v <= spec.params.v_max:
                raise ValueError(f"vehicle {spec.id}: initial speed {spec.init_v} outside [0, v_max]")
        leader_p = ordered[0].params
        for event_t, speed in profile.events:
            if speed > leader_p.v_max:
                raise ValueError(f"profile target {speed} at t={event_t} exceeds v_max={leader_p.v_max}")
        if profile.initial_speed is None:
            profile = profile.model_copy(update={"initial_speed": ordered[0].init_v})

        vehicles = [VehicleSim(s.id, s.init_pos, s.init_v, s.params) for s in ordered]
        channel = V2VChannel(config.channel, [v.id for v in vehicles], seed=config.seed)
        return cls(config=config, vehicles=vehicles, profile=profile, channel=channel)

    @property
    def broadcast_every(self) -> int:
        return max(1, round(self.config.channel.broadcast_period / self.config.dt))

    @property
    def vdt_every(self) -> int:
        return max(1, round(self.config.vdt.update_period / self.config.dt))

    def record_event(self, t: float, kind: str, vehicle_id: Optional[int], detail: str = "") -> None:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        self.events.append(SimEvent(t, kind, vehicle_id, detail))


@dataclass
class SimResult:
    traces: List[TraceRecord]
    events: List[SimEvent]
    switches: List[ModeSwitch]
    deliveries: List[DeliveryRecord]
    world: World
    error: Optional[Exception]
    wall_time: float
    metrics: "MetricsReport"

    @property
    def collided(self) -> bool:
        return isinstance(self.error, CollisionDetected)


def relative_state(leader: VehicleSim, follower: VehicleSim) -> RelativeState:
    return RelativeState(
        leader.position - follower.position,
        leader.speed - follower.speed,
        leader.speed,
    )


def relative_state_from_message(message: StateMessage, follower: VehicleSim) -> RelativeState:
    """Relative state built from the last delivered state of the vehicle ahead."""
    return RelativeState(
        message.position - follower.position,
        message.speed - follower.speed,
        message.speed,
    )


def virtual_leader_state(vehicle: VehicleSim) -> RelativeState:
    """Vehicle 1 follows an imaginary vehicle infinitely far ahead at v_max."""
    p = vehicle.params
    return RelativeState(math.inf, p.v_max - vehicle.speed, p.v_max)


def leader_accel(t: float, profile: LeaderProfile, v: float, p: VehicleParams) -> float:
    target = profile.target(t, v)
    u = profile.k_lead * (target - v)
    return min(max(u, -p.a_max), p.a_max)


def _announce_profile_events(world: World, t: float) -> None:
    events = world.profile.events
    while world._profile_cursor < len(events) and events[world._profile_cursor][0] <= t + _TIME_EPS:
        event_t, speed = events[world._profile_cursor]
        world.record_event(t, "leader_event", world.vehicles[0].id, f"target={speed!r}")
        logger.info(f"Leader target -> {speed:g} m/s at t={event_t:g}s")
        world._profile_cursor += 1


def _update_vdt(world: World, veh: VehicleSim, t: float) -> None:
    cfg = world.config
    table = world.channel.tables.get(veh.id, {})
    samples = samples_from_table(table, veh.position, t, cfg.vdt)
    was_fresh = veh.vdt.sample_count > 0
    veh.vdt = step_alpha(veh.vdt, samples, veh.speed, cfg.vdt, world.vdt_every * cfg.dt)
    if was_fresh and veh.vdt.stale and veh.id not in world._stale:
        world._stale.add(veh.id)
        world.record_event(t, "vdt_stale", veh.id, f"newest_age={veh.vdt.newest_age!r}")
        logger.warning(f"Vehicle {veh.id}: no fresh speed samples at t={t:.2f}s, alpha_t relaxing to 1")


def _track_mode(world: World, veh: VehicleSim, mode: ModeLabel, t: float) -> None:
    if mode is ModeLabel.UNSAFE and veh.id not in world._unsafe:
        world._unsafe.add(veh.id)
        world.record_event(t, "unsafe_entered", veh.id)
        logger.info(f"Vehicle {veh.id} entered the unsafe mode at t={t:.2f}s")

    previous = veh.mode
    veh.mode = mode
    if previous is None or previous is mode:
        return
    world.switches.append(ModeSwitch(t, veh.id, previous, mode))
    logger.debug(f"t={t:.2f}s vehicle {veh.id}: {previous.value} -> {mode.value}")

    cfg = world.config
    window = world._switch_times.setdefault(veh.id, deque())
    window.append(t)
    while window and window[0] <= t - cfg.zeno_window + _TIME_EPS:
        window.popleft()
    if len(window) > cfg.zeno_limit:
        raise ZenoSuspect(t, veh.id, len(window), cfg.zeno_window)


def _integrate(veh: VehicleSim, plan: _Plan, u: float, dt: float, follower: bool) -> Tuple[float, float]:
    """Semi-implicit Euler position and speed after one step under command u."""
    p = veh.params
    v_new = min(max(veh.speed + u * dt, 0.0), p.v_max)
    # Landing: the closing-in deceleration stops at the predecessor speed.
    if follower and plan.mode is ModeLabel.CLOSING_IN and plan.x.x2 < 0 and v_new < plan.x.x3:
        v_new = plan.x.x3
    return veh.position + v_new * dt, v_new


def _slide(veh: VehicleSim, plan: _Plan, ahead_next: Tuple[float, float], dt: float) -> float:
    """Command that keeps the follower on its side of a boundary it would cross.

    When the mode's own command carries the next state into a mode ranked
    further from equilibrium, and that mode's command would carry it back, the
    boundary is attracting from both sides. The blend of the two commands that
    ends the step on the boundary is found by bisection, which is the
    equivalent control of the sliding motion.
    """
    p = veh.params
    lead_pos, lead_v = ahead_next

    def predicted(u: float) -> ModeLabel:
        pos, v = _integrate(veh, plan, u, dt, True)
        return classify(RelativeState(lead_pos - pos, lead_v - v, lead_v), p, plan.alpha)

    crossed = predicted(plan.u)
    if crossed is plan.mode or crossed is ModeLabel.UNSAFE:
        return plan.u
    if _SLIDE_RANK[plan.mode] >= _SLIDE_RANK[crossed]:
        return plan.u
    try:
        other = apply_speed_limits(veh.speed, control(plan.x, p, crossed).u, p)
    except DomainViolation:
        return plan.u
    if predicted(other) is not plan.mode:
        return plan.u

    stay = 1.0
    cross = 0.0
    for _ in range(SLIDE_ITERATIONS):
        mid = 0.5 * (cross + stay)
        if predicted(plan.u + mid * (other - plan.u)) is plan.mode:
            stay = mid
        else:
            cross = mid
    return plan.u + stay * (other - plan.u)


def step(world: World, t: float, dt: float) -> World:
    """Advance the world by one step of length dt starting at time t."""
    cfg = world.config
    k = world.step_index
    vehicles = world.vehicles

    _announce_profile_events(world, t)
    if k % world.broadcast_every == 0:
        positions = {v.id: v.position for v in vehicles}
        for veh in vehicles:
            world.channel.broadcast(t, veh.id, veh.position, veh.speed, positions)
    world.channel.deliver(t)

    vdt_due = cfg.vdt_enabled and k % world.vdt_every == 0
    rows: List[TraceRecord] = []
    plans: List[Optional[_Plan]] = [None] * len(vehicles)
    try:
        for idx in range(len(vehicles) - 1, -1, -1):
            veh = vehicles[idx]
            p = veh.params
            if idx == 0:
                x = virtual_leader_state(veh)
            else:
                ahead = vehicles[idx - 1]
                sensed = relative_state(ahead, veh)
                if sensed.x1 < p.s_n:
                    rows.append(_trace_row(t, veh, 0.0, classify(sensed, p), sensed, 1.0))
                    raise CollisionDetected(t, veh.id, sensed.x1, p.s_n)
                x = sensed
                if cfg.leader_from_channel:
                    rec = world.channel.latest(veh.id, ahead.id)
                    if rec is not None:
                        x = relative_state_from_message(rec.message, veh)
                if vdt_due:
                    _update_vdt(world, veh, t)

            alpha = veh.vdt.alpha_t if cfg.vdt_enabled else 1.0
            mode = classify_with(x, thresholds(x, p, alpha))
            _track_mode(world, veh, mode, t)

            if idx == 0:
                u = leader_accel(t, world.profile, veh.speed, p)
            else:
                u = control(x, p, mode).u
                if veh.id not in world._equilibrium and in_equilibrium(x, p, alpha, cfg.eq_tol):
                    world._equilibrium.add(veh.id)
                    world.record_event(t, "equilibrium_entered", veh.id)
            plans[idx] = _Plan(x, mode, alpha, apply_speed_limits(veh.speed, u, p))
    except (CollisionDetected, ZenoSuspect):
        world.traces.extend(rows)
        raise

    # Front to back, so each follower sees where its predecessor ends the step.
    ahead_next: Tuple[float, float] = (0.0, 0.0)
    nexts: List[Tuple[float, float]] = []
    for idx, veh in enumerate(vehicles):
        plan = plans[idx]
        if idx > 0 and cfg.sliding and plan.mode is not ModeLabel.UNSAFE:
            plan.u = _slide(veh, plan, ahead_next, dt)
        ahead_next = _integrate(veh, plan, plan.u, dt, idx > 0)
        nexts.append(ahead_next)

    sampled = k % cfg.sample_every == 0
    for veh, plan, (pos_new, v_new) in zip(vehicles, plans, nexts):
        applied = plan.u if v_new == veh.speed + plan.u * dt else (v_new - veh.speed) / dt
        if sampled:
            rows.append(_trace_row(t, veh, applied, plan.mode, plan.x, plan.alpha))
        veh.position = pos_new
        veh.speed = v_new
        veh.acceleration = applied
    world.traces.extend(rows)

    world.step_index += 1
    world.t = world.step_index * dt
    return world


def _trace_row(
    t: float, veh: VehicleSim, u: float, mode: ModeLabel, x: RelativeState, alpha: float
) -> TraceRecord:
    return TraceRecord(
        t=t,
        id=veh.id,
        position=veh.position,
        speed=veh.speed,
        acceleration=u,
        mode=mode,
        x1=x.x1,
        x2=x.x2,
        x3=x.x3,
        alpha_t=alpha,
        v_bar=veh.vdt.v_bar,
        theta=veh.vdt.theta,
    )


def run(config: SimConfig, scenario: PlatoonSetup, raise_on_error: bool = False) -> SimResult:
    """Integrate the platoon from t = 0 to config.duration.

    Collision and Zeno aborts are recorded as events and returned in
    `SimResult.error` with the partial traces; pass raise_on_error=True to
    get the exception instead.
    """
    from src.metrics import compute_metrics

    world = World.from_specs(config, scenario.vehicles, scenario.profile)
    n_steps = int(round(config.duration / config.dt))
    logger.info(
        f"Starting run: {len(world.vehicles)} vehicles, {config.duration:g}s at dt={config.dt:g}s, "
        f"VDT {'on' if config.vdt_enabled else 'off'}"
    )

    started = time.perf_counter()
    error: Optional[Exception] = None
    try:
        while world.step_index < n_steps:
            step(world, world.t, config.dt)
    except CollisionDetected as exc:
        error = exc
        world.record_event(exc.t, "collision", exc.vehicle_id, f"x1={exc.x1!r}")
        logger.warning(str(exc))
        if raise_on_error:
            raise
    except ZenoSuspect as exc:
        error = exc
        world.record_event(exc.t, "zeno_suspect", exc.vehicle_id, f"count={exc.count}")
        logger.warning(str(exc))
        if raise_on_error:
            raise
    wall_time = time.perf_counter() - started

    world.record_event(world.t, "run_complete", None, f"steps={world.step_index}")
    logger.info(
        f"Run finished at t={world.t:g}s after {world.step_index} steps in {wall_time:.2f}s "
        f"({len(world.switches)} mode switches)"
    )

    metrics = compute_metrics(
        world.traces,
        {v.id: v.params for v in world.vehicles},
        world.profile,
        sample_dt=config.dt * config.sample_every,
        settle_tol=config.settle_tol,
    )
    return SimResult(
        traces=world.traces,
        events=world.events,
        switches=world.switches,
        deliveries=world.channel.log,
        world=world,
        error=error,
        wall_time=wall_time,
        metrics=metrics,
    )


def convergence_time(
    traces: Sequence[TraceRecord],
    pair: int,
    tol: float,
    params: VehicleParams,
    band_tol: float = 0.0,
) -> Optional[float]:
    """First time after which the follower `pair` stays in equilibrium to the end."""
    rows = sorted((r for r in traces if r.id == pair), key=lambda r: r.t)
    if not rows:
        return None
    start: Optional[float] = None
    for row in reversed(rows):
        if not in_equilibrium(row.state, params, row.alpha_t, tol, band_tol):
            break
        start = row.t
    return start
