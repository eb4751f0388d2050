"""Per-mode acceleration laws g1..g5 and the saturation that wraps them."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from src.thresholds import ModeLabel, RelativeState, VehicleParams

logger = logging.getLogger(__name__)


class DomainViolation(ValueError):
    """A control law was evaluated outside the domain where it is defined."""


@dataclass(frozen=True, slots=True)
class ControlOutput:
    u: float
    mode: ModeLabel
    saturated: bool
    collision_course: bool = False


def saturate(u: float, p: VehicleParams) -> Tuple[float, bool]:
    clipped = min(max(u, -p.a_max), p.a_max)
    return clipped, clipped != u


def g1(x: RelativeState, p: VehicleParams) -> float:
    """Free driving: proportional tracking of the desired speed."""
    return p.alpha1 * (p.v_des - x.follower_speed)


def g2(x: RelativeState, p: VehicleParams) -> float:
    """Following I: gap-weighted adaptation toward the leader."""
    gap = p.G - x.x1
    if gap <= 0:
        raise DomainViolation(f"g2 needs x1 < G ({p.G}), got x1={x.x1}")
    return p.alpha2 * (p.v_des + x.x2) / gap * x.follower_speed


def g3(x: RelativeState, p: VehicleParams) -> float:
    return 0.0


def g4(x: RelativeState, p: VehicleParams) -> float:
    """Closing in: the smaller of the convergence law and eps*sign(x2)."""
    follower = x.follower_speed
    num = x.x3 * x.x3 - follower * follower
    den = 2.0 * (x.x1 + p.s_n + (p.c_s * p.lambda_ / p.a_max) * x.x3 * x.x3)
    return min(-p.alpha4 * num / den, p.epsilon * float(np.sign(x.x2)))


def g5(x: RelativeState, p: VehicleParams) -> float:
    """Danger: full braking."""
    return -p.a_max


_LAWS: Dict[ModeLabel, Callable[[RelativeState, VehicleParams], float]] = {
    ModeLabel.FREE_DRIVING: g1,
    ModeLabel.FOLLOWING_I: g2,
    ModeLabel.FOLLOWING_II: g3,
    ModeLabel.CLOSING_IN: g4,
    ModeLabel.DANGER: g5,
}


def control(x: RelativeState, p: VehicleParams, mode: ModeLabel) -> ControlOutput:
    """Saturated command for the given mode.

    The unsafe mode has no law of its own; it commands full braking and
    flags the collision course.
    """
    if mode is ModeLabel.UNSAFE:
        return ControlOutput(u=-p.a_max, mode=mode, saturated=False, collision_course=True)
    u, clipped = saturate(_LAWS[mode](x, p), p)
    return ControlOutput(u=u, mode=mode, saturated=clipped)


def apply_speed_limits(v: float, u: float, p: VehicleParams) -> float:
    """Zero any command that would push speed outside [0, v_max]."""
    if v <= 0.0 and u < 0.0:
        return 0.0
    if v >= p.v_max and u > 0.0:
        return 0.0
    return u
