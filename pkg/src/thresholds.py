"""Continuous state, distance thresholds and mode classification.

The follower automaton reads a three-component relative state and splits the
state space into six driving modes using five distance thresholds. Every
function in this module is pure and safe to call from any thread.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

# Upper headway bound of the admissible box; beyond it there is no interaction.
DELTA_MAX = 500.0


@dataclass(frozen=True, slots=True)
class RelativeState:
    """Relative state of a follower with respect to the vehicle ahead.

    x1 is the headway in m, x2 the speed difference (leader minus follower)
    in m/s and x3 the leader speed in m/s.
    """

    x1: float
    x2: float
    x3: float

    @property
    def follower_speed(self) -> float:
        return self.x3 - self.x2


class ModeLabel(str, Enum):
    """The six discrete states of the automaton."""

    FREE_DRIVING = "q1"
    FOLLOWING_I = "q2"
    FOLLOWING_II = "q3"
    CLOSING_IN = "q4"
    DANGER = "q5"
    UNSAFE = "q6"

    @classmethod
    def from_code(cls, code: str) -> "ModeLabel":
        return cls(code.strip())


class VehicleParams(BaseModel):
    """Per-vehicle constants of the longitudinal controller.

    Defaults are implementation choices; every value can be overridden from a
    scenario file. `lambda` is a Python keyword, so the field is `lambda_`
    with the alias `lambda`.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    L: float = Field(5.0, gt=0, description="Vehicle length, m")
    L0: float = Field(1.0, ge=0, description="Minimum clearance, m")
    a_max: float = Field(6.0, gt=0, description="Maximum |acceleration|, m/s^2")
    v_max: float = Field(33.0, gt=0, description="Maximum speed, m/s")
    v_des: float = Field(33.0, gt=0, description="Desired speed, m/s")
    lambda_: float = Field(2.0, alias="lambda", description="Deceleration-ratio factor")
    c_r: float = Field(1.0, description="Risky headway coefficient")
    c_s: float = Field(1.5, description="Safe headway coefficient")
    c_c: float = Field(2.0, gt=0, description="Approach coefficient")
    T_D: float = Field(3.0, gt=0, description="Leader-independence time headway, s")
    G: float = Field(550.0, description="Reference distance of the following law, m")
    alpha1: float = Field(0.5, gt=0)
    alpha2: float = Field(1.0, gt=0)
    alpha4: float = Field(1.0, gt=0)
    epsilon: float = Field(0.5, description="Finite-time convergence gain, m/s^2")

    @model_validator(mode="before")
    @classmethod
    def _default_desired_speed(cls, data):
        if isinstance(data, dict) and "v_des" not in data and "v_max" in data:
            data = dict(data)
            data["v_des"] = data["v_max"]
        return data

    @model_validator(mode="after")
    def _check_invariants(self) -> "VehicleParams":
        if not self.lambda_ > 1.0:
            raise ValueError(f"lambda must be > 1, got {self.lambda_}")
        if not self.c_r > 0.0:
            raise ValueError(f"c_r must be > 0, got {self.c_r}")
        if not self.c_s >= self.c_r:
            raise ValueError(f"c_s ({self.c_s}) must be >= c_r ({self.c_r})")
        if not 0.0 < self.epsilon < self.a_max / self.lambda_:
            raise ValueError(
                f"epsilon must lie in (0, a_max/lambda) = (0, {self.a_max / self.lambda_:g}), "
                f"got {self.epsilon}"
            )
        if not self.G > DELTA_MAX:
            raise ValueError(f"G must exceed {DELTA_MAX:g} m, got {self.G}")
        return self

    @property
    def s_n(self) -> float:
        """Collision distance: vehicle length plus minimum clearance."""
        return self.L + self.L0


@dataclass(frozen=True, slots=True)
class ThresholdSet:
    """The five distances evaluated at one state and one alpha_t."""

    delta_e: float
    delta_r: float
    delta_s: float
    delta_d: float
    delta_c: float

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.delta_e, self.delta_r, self.delta_s, self.delta_d, self.delta_c)


def time_headways(x: RelativeState, p: VehicleParams) -> Tuple[float, float, float]:
    """Stopping times T_E, T_R and T_S in seconds."""
    t_e = abs(x.x2) / p.a_max
    t_r = abs(x.x3 - x.x2) / p.a_max
    return t_e, t_r, p.lambda_ * t_r


def _braking_margin(x: RelativeState, p: VehicleParams) -> float:
    t_e = abs(x.x2) / p.a_max
    return 0.5 * p.a_max * t_e * t_e


def delta_e(x: RelativeState, p: VehicleParams) -> float:
    """Emergency distance; not affected by alpha_t."""
    if x.x2 > 0:
        return p.s_n
    return p.s_n + _braking_margin(x, p)


def delta_r(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> float:
    """Risky distance with the human response term scaled by alpha_t."""
    _, t_r, _ = time_headways(x, p)
    base = p.s_n + p.c_r * (alpha_t * t_r) * x.x3
    if x.x2 > 0:
        return base
    return base + _braking_margin(x, p)


def _safe_core(x: RelativeState, p: VehicleParams, alpha_t: float) -> float:
    _, _, t_s = time_headways(x, p)
    return p.s_n + p.c_s * (alpha_t * t_s) * x.x3


def delta_s(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> float:
    """Safe distance."""
    base = _safe_core(x, p, alpha_t)
    if x.x2 > 0:
        return base
    return base + _braking_margin(x, p)


def delta_d(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> float:
    """Interaction distance. The two branches are not continuous at x2 = 0."""
    if x.x2 > 0:
        return delta_s(x, p, alpha_t)
    return p.s_n + (alpha_t * p.T_D) * (x.x3 - x.x2)


def delta_c(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> float:
    """Approaching distance."""
    base = _safe_core(x, p, alpha_t)
    if x.x2 > 0:
        return base
    return base + p.c_c * math.sqrt(-x.x2)


def thresholds(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> ThresholdSet:
    return ThresholdSet(
        delta_e=delta_e(x, p),
        delta_r=delta_r(x, p, alpha_t),
        delta_s=delta_s(x, p, alpha_t),
        delta_d=delta_d(x, p, alpha_t),
        delta_c=delta_c(x, p, alpha_t),
    )


def _predicates(x: RelativeState, ts: ThresholdSet) -> Dict[ModeLabel, bool]:
    x1, x2 = x.x1, x.x2
    d_e, d_r, d_s, d_d, d_c = ts.as_tuple()
    m = max(d_d, d_s)
    n = max(d_s, d_c)
    pp = min(d_d, d_c)
    corner = x2 == 0 and x1 == d_r
    return {
        ModeLabel.FREE_DRIVING: (x1 > d_s and x2 >= 0) or (x1 > m and x2 < 0),
        ModeLabel.FOLLOWING_I: x2 < 0 and n < x1 <= d_d,
        ModeLabel.FOLLOWING_II: (x2 <= 0 and d_s < x1 < pp) or (x2 > 0 and d_r < x1 <= d_s),
        ModeLabel.CLOSING_IN: (x2 <= 0 and d_r < x1 <= d_s) or corner,
        ModeLabel.DANGER: d_e <= x1 <= d_r and not corner,
        ModeLabel.UNSAFE: x1 < d_e,
    }


def domain_predicates(
    x: RelativeState, p: VehicleParams, alpha_t: float = 1.0
) -> Dict[ModeLabel, bool]:
    """Raw membership of x in each domain, without any precedence."""
    return _predicates(x, thresholds(x, p, alpha_t))


_PRECEDENCE = (
    ModeLabel.UNSAFE,
    ModeLabel.DANGER,
    ModeLabel.CLOSING_IN,
    ModeLabel.FOLLOWING_I,
    ModeLabel.FOLLOWING_II,
    ModeLabel.FREE_DRIVING,
)


def classify_with(x: RelativeState, ts: ThresholdSet) -> ModeLabel:
    """Classify against thresholds that were already evaluated at x."""
    if x.x1 > DELTA_MAX:
        return ModeLabel.FREE_DRIVING
    membership = _predicates(x, ts)
    for label in _PRECEDENCE:
        if membership[label]:
            return label
    # Only the measure-zero seams x1 = dC or x1 = dD above dS with x2 < 0 land here.
    assert x.x2 < 0 and x.x1 > ts.delta_s, f"unclassified state {x} with {ts}"
    logger.debug(f"State {x} lies on a domain seam, treated as {ModeLabel.FOLLOWING_II.value}")
    return ModeLabel.FOLLOWING_II


def classify(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> ModeLabel:
    """Memoryless mode assignment I(x).

    Domains are tested in the order q6, q5, q4, q2, q3, q1 and the first match
    wins, which settles floating-point ties on shared boundaries. Headways
    beyond DELTA_MAX always read as free driving.
    """
    return classify_with(x, thresholds(x, p, alpha_t))


def in_equilibrium(
    x: RelativeState,
    p: VehicleParams,
    alpha_t: float = 1.0,
    tol: float = 1e-3,
    band_tol: float = 0.0,
) -> bool:
    """True when x2 is within tol of zero and x1 lies in [dR, dS]."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if abs(x.x2) > tol:
        return False
    return delta_r(x, p, alpha_t) - band_tol <= x.x1 <= delta_s(x, p, alpha_t) + band_tol


def in_sigma(x: RelativeState, p: VehicleParams) -> bool:
    """Membership in the admissible box of initial states."""
    follower = x.x3 - x.x2
    return (
        p.s_n <= x.x1 <= DELTA_MAX
        and -p.v_max <= x.x2 <= p.v_max
        and 0.0 <= x.x3 <= p.v_max
        and 0.0 <= follower <= p.v_max
    )


def in_init(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> bool:
    """Init set: any mode but unsafe, inside the admissible box."""
    return in_sigma(x, p) and classify(x, p, alpha_t) is not ModeLabel.UNSAFE


def in_omega(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> bool:
    """The invariant set; it coincides with the Init set as a set of states."""
    return in_init(x, p, alpha_t)


def boundary_distance(x: RelativeState, p: VehicleParams, alpha_t: float = 1.0) -> float:
    """Smallest |x1 - threshold| over the five thresholds."""
    return min(abs(x.x1 - d) for d in thresholds(x, p, alpha_t).as_tuple())
