"""Variance-driven time headway (VDT) factor.

Each follower keeps a first-order filter state z fed by the variation
coefficient of the speeds it hears about over the channel. The saturated
filter output, shifted by one, is the factor alpha_t that scales the risky,
safe and interaction headways.

    dz/dt = -z + gamma * V_n * sign(v_follower - v_bar)
    alpha_t = 1 + clamp(z, alpha_t_0 - 1, alpha_t_max - 1)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, List, Literal, Mapping, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.thresholds import DELTA_MAX

if TYPE_CHECKING:
    from src.v2v_channel import DeliveryRecord

logger = logging.getLogger(__name__)


class NoSpeedData(ValueError):
    """Speed statistics were requested over an empty sample list."""


class VdtParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float = Field(4.0, gt=0, description="Sensitivity to the variation coefficient")
    alpha_t_max: float = Field(2.0, gt=1.0)
    alpha_t_0: float = Field(0.2, gt=0.0, lt=1.0)
    staleness_limit: float = Field(0.5, gt=0, description="Oldest usable sample, s")
    update_period: float = Field(0.1, gt=0, description="Filter step, s")
    neighborhood: Literal["in_range", "all_ahead"] = "in_range"
    sample_range: float = Field(DELTA_MAX, gt=0, description="Reach of in_range sampling, m")

    @model_validator(mode="after")
    def _check_bounds(self) -> "VdtParams":
        if not self.z_max > 0 > self.z_min > -1:
            raise ValueError(f"invalid z bounds ({self.z_min}, {self.z_max})")
        return self

    @property
    def z_max(self) -> float:
        return self.alpha_t_max - 1.0

    @property
    def z_min(self) -> float:
        return self.alpha_t_0 - 1.0


@dataclass(frozen=True, slots=True)
class VdtState:
    z: float = 0.0
    alpha_t: float = 1.0
    v_bar: float = 0.0
    theta: float = 0.0
    sample_count: int = 0
    newest_age: float = math.inf

    @property
    def stale(self) -> bool:
        return self.sample_count == 0


def speed_stats(speeds: Sequence[float]) -> Tuple[float, float]:
    """Mean and population variance (divisor n) of the given speeds."""
    if len(speeds) == 0:
        raise NoSpeedData("no speed samples")
    arr = np.asarray(speeds, dtype=float)
    return float(arr.mean()), float(arr.var())


def variation_coefficient(v_bar: float, theta: float) -> float:
    # Undefined for stopped traffic; reads as homogeneous.
    if v_bar <= 0.0:
        return 0.0
    return math.sqrt(max(theta, 0.0)) / v_bar


def step_z(
    z: float, v_n: float, follower_speed: float, v_bar: float, gamma: float, dt: float
) -> float:
    """One explicit Euler step of the z filter."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    drive = gamma * v_n * float(np.sign(follower_speed - v_bar))
    return z + dt * (-z + drive)


def alpha_from_z(z: float, vp: VdtParams) -> float:
    alpha = 1.0 + min(max(z, vp.z_min), vp.z_max)
    # 1 + (alpha_t_0 - 1) can round one ulp below alpha_t_0.
    return min(max(alpha, vp.alpha_t_0), vp.alpha_t_max)


def step_alpha(
    state: VdtState,
    samples: Iterable[Tuple[float, float]],
    self_speed: float,
    vp: VdtParams,
    dt: float,
) -> VdtState:
    """Advance the filter by dt using (speed, age) samples.

    Samples older than the staleness limit are ignored. Without any fresh
    sample z relaxes toward zero, so alpha_t returns to 1.
    """
    samples = list(samples)
    newest_age = min((age for _, age in samples), default=math.inf)
    fresh = [speed for speed, age in samples if age <= vp.staleness_limit]
    if not fresh:
        z = state.z + dt * (-state.z)
        return replace(
            state,
            z=z,
            alpha_t=alpha_from_z(z, vp),
            sample_count=0,
            newest_age=newest_age,
        )

    v_bar, theta = speed_stats(fresh)
    v_n = variation_coefficient(v_bar, theta)
    z = step_z(state.z, v_n, self_speed, v_bar, vp.gamma, dt)
    return VdtState(
        z=z,
        alpha_t=alpha_from_z(z, vp),
        v_bar=v_bar,
        theta=theta,
        sample_count=len(fresh),
        newest_age=newest_age,
    )


def samples_from_table(
    table: Mapping[int, DeliveryRecord],
    own_position: float,
    t: float,
    vp: VdtParams,
) -> List[Tuple[float, float]]:
    """(speed, age) pairs of vehicles ahead, taken from a delivery table.

    With the in_range neighborhood only vehicles whose reported position is
    within sample_range of the follower are used.
    """
    samples = []
    for origin in sorted(table):
        msg = table[origin].message
        ahead = msg.position - own_position
        if ahead <= 0:
            continue
        if vp.neighborhood == "in_range" and ahead > vp.sample_range:
            continue
        samples.append((msg.speed, t - msg.emitted_at))
    return samples
