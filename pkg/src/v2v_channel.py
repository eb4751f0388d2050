"""Range-limited multi-hop V2V channel.

Vehicles broadcast their state periodically. A message travels along the
line of vehicles by flooding: every vehicle that holds it relays it once, so
a receiver can hear several copies. Copies are identified by origin and
serial number and only the newest serial per origin is kept.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

# Slack when comparing a scheduled delivery time with the simulation clock.
_TIME_EPS = 1e-9

DELIVERY_LOG_HEADER = ["t_emit", "origin", "serial", "receiver", "t_deliver", "hops"]


class ChannelParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    radio_range: float = Field(750.0, gt=0, description="Radio range, m")
    hop_delay: float = Field(0.020, gt=0, description="Per-hop delay, s")
    max_end_to_end: float = Field(0.100, gt=0, description="End-to-end delay budget, s")
    broadcast_period: float = Field(0.1, gt=0, description="Beacon period, s")
    relay_processing: float = Field(0.0, ge=0, description="Extra time spent in each relay, s")
    jitter: float = Field(0.0, ge=0, description="Uniform per-copy delay jitter, s")
    enabled: bool = True

    @model_validator(mode="after")
    def _check_budget(self) -> "ChannelParams":
        if not self.hop_delay < self.max_end_to_end:
            raise ValueError(
                f"hop_delay ({self.hop_delay}) must be below max_end_to_end ({self.max_end_to_end})"
            )
        return self


@dataclass(frozen=True, slots=True)
class StateMessage:
    origin_id: int
    serial: int
    emitted_at: float
    position: float
    speed: float


@dataclass(frozen=True, slots=True)
class DeliveryRecord:
    message: StateMessage
    delivered_at: float
    hops: int
    receiver: int

    def sort_key(self) -> Tuple[float, int, int, int, int]:
        return (
            self.delivered_at,
            self.hops,
            self.receiver,
            self.message.origin_id,
            self.message.serial,
        )


def hop_count(
    positions: Sequence[float], src: int, dst: int, radio_range: float
) -> Optional[int]:
    """Fewest hops from positions[src] to positions[dst], or None.

    Greedy: each hop goes to the farthest vehicle within range that does not
    overshoot the destination, which is optimal on a line.
    """
    if src == dst:
        return 0
    cur = positions[src]
    goal = positions[dst]
    direction = 1.0 if goal > cur else -1.0
    hops = 0
    while abs(goal - cur) > radio_range:
        reachable = [
            q
            for q in positions
            if 0.0 < (q - cur) * direction <= radio_range and (goal - q) * direction >= 0.0
        ]
        if not reachable:
            return None
        cur = max(reachable, key=lambda q: (q - cur) * direction)
        hops += 1
    return hops + 1


def end_to_end_bound(positions: Sequence[float], params: ChannelParams) -> float:
    """Worst first-copy delay between the two ends of the line.

    Relays sit at vehicle positions, so the hop count over the full span can
    exceed ceil(span / range). Returns inf when the line is partitioned.
    """
    if len(positions) < 2:
        return 0.0
    line = sorted(positions)
    hops = hop_count(line, 0, len(line) - 1, params.radio_range)
    if hops is None:
        return math.inf
    return hops * params.hop_delay + (hops - 1) * params.relay_processing


def deliver(
    t: float,
    pending: Iterable[DeliveryRecord],
    tables: Dict[int, Dict[int, DeliveryRecord]],
) -> Dict[int, List[DeliveryRecord]]:
    """Apply the due copies to the receivers' tables.

    Copies are processed in a canonical order, so the resulting tables do not
    depend on the order in which `pending` is given. A copy is accepted only
    if its serial is newer than what the receiver already holds for that
    origin; this covers both duplicates and late arrivals.
    """
    accepted: Dict[int, List[DeliveryRecord]] = defaultdict(list)
    for rec in sorted(pending, key=DeliveryRecord.sort_key):
        if rec.delivered_at > t + _TIME_EPS:
            continue
        table = tables.setdefault(rec.receiver, {})
        held = table.get(rec.message.origin_id)
        if held is not None and held.message.serial >= rec.message.serial:
            continue
        table[rec.message.origin_id] = rec
        accepted[rec.receiver].append(rec)
    return dict(accepted)


class V2VChannel:
    """Event queue of in-flight copies plus one delivery table per vehicle.

    Owned by a single simulation loop; not thread-safe.
    """

    def __init__(self, params: ChannelParams, vehicle_ids: Iterable[int], seed: int = 0):
        self.params = params
        self.vehicle_ids = list(vehicle_ids)
        self.tables: Dict[int, Dict[int, DeliveryRecord]] = {i: {} for i in self.vehicle_ids}
        self.log: List[DeliveryRecord] = []
        self.duplicates = 0
        self._serials: Dict[int, int] = defaultdict(int)
        self._queue: List[Tuple[float, int, DeliveryRecord]] = []
        self._seq = itertools.count()
        self._rng = np.random.default_rng(seed)
        self._unreachable_reported: Set[Tuple[int, int]] = set()

    def broadcast(
        self,
        t: float,
        origin_id: int,
        position: float,
        speed: float,
        positions: Optional[Mapping[int, float]] = None,
    ) -> StateMessage:
        """Stamp the sender state with the next serial and schedule its copies."""
        self._serials[origin_id] += 1
        message = StateMessage(
            origin_id=origin_id,
            serial=self._serials[origin_id],
            emitted_at=t,
            position=position,
            speed=speed,
        )
        if self.params.enabled and positions:
            self._flood(message, positions)
        return message

    def _flood(self, message: StateMessage, positions: Mapping[int, float]) -> None:
        ids = sorted(positions)
        line = [positions[i] for i in ids]
        src = ids.index(message.origin_id)
        levels: Dict[int, int] = {}
        for k, vid in enumerate(ids):
            hops = hop_count(line, src, k, self.params.radio_range)
            if hops is None:
                pair = (message.origin_id, vid)
                if pair not in self._unreachable_reported:
                    self._unreachable_reported.add(pair)
                    logger.warning(
                        f"Vehicle {vid} unreachable from vehicle {message.origin_id} "
                        f"at t={message.emitted_at:.2f}s"
                    )
                continue
            levels[vid] = hops

        p = self.params
        for relay, level in levels.items():
            # Each holder transmits once, right after it first receives the message.
            arrival_base = message.emitted_at + (level + 1) * p.hop_delay + level * p.relay_processing
            for receiver in ids:
                if receiver in (relay, message.origin_id):
                    continue
                if abs(positions[receiver] - positions[relay]) > p.radio_range:
                    continue
                arrival = arrival_base
                if p.jitter > 0:
                    arrival += float(self._rng.uniform(0.0, p.jitter))
                record = DeliveryRecord(
                    message=message, delivered_at=arrival, hops=level + 1, receiver=receiver
                )
                heapq.heappush(self._queue, (arrival, next(self._seq), record))

    def deliver(self, t: float) -> Dict[int, List[DeliveryRecord]]:
        """Hand every copy due by time t to its receiver."""
        due = []
        while self._queue and self._queue[0][0] <= t + _TIME_EPS:
            due.append(heapq.heappop(self._queue)[2])
        if not due:
            return {}
        accepted = deliver(t, due, self.tables)
        n_accepted = sum(len(v) for v in accepted.values())
        self.duplicates += len(due) - n_accepted
        for receiver in sorted(accepted):
            self.log.extend(accepted[receiver])
        return accepted

    def latest(self, receiver: int, origin: int) -> Optional[DeliveryRecord]:
        return self.tables.get(receiver, {}).get(origin)

    @property
    def in_flight(self) -> int:
        return len(self._queue)


def write_delivery_log(path: Path | str, records: Iterable[DeliveryRecord]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(DELIVERY_LOG_HEADER)
        for rec in records:
            writer.writerow(
                [
                    repr(rec.message.emitted_at),
                    rec.message.origin_id,
                    rec.message.serial,
                    rec.receiver,
                    repr(rec.delivered_at),
                    rec.hops,
                ]
            )
    return path
