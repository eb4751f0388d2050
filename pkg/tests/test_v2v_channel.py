#!/usr/bin/env python3
"""
Tests for the multi-hop V2V channel in src/v2v_channel.py

Covers hop counting, the end-to-end delay budget, serial stamping,
duplicate discovery, late-copy rejection, order independence of delivery
and a VDT run over a switched-off channel.
"""

import sys
import os
import csv
import random
import tempfile
import unittest
from types import SimpleNamespace

from pydantic import ValidationError

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.platoon_sim import LeaderProfile, SimConfig, VehicleSpec, run
from src.thresholds import VehicleParams
from src.v2v_channel import (
    DELIVERY_LOG_HEADER,
    ChannelParams,
    DeliveryRecord,
    StateMessage,
    V2VChannel,
    deliver,
    end_to_end_bound,
    hop_count,
    write_delivery_log,
)

# Five vehicles 500 m apart, vehicle 1 at the head.
LINE = {1: 2000.0, 2: 1500.0, 3: 1000.0, 4: 500.0, 5: 0.0}


def record(origin, serial, receiver, delivered_at, hops=1):
    msg = StateMessage(origin_id=origin, serial=serial, emitted_at=delivered_at - 0.02 * hops,
                       position=100.0 * serial, speed=20.0)
    return DeliveryRecord(message=msg, delivered_at=delivered_at, hops=hops, receiver=receiver)


class TestHopCount(unittest.TestCase):

    def test_two_kilometre_line_needs_four_hops(self):
        positions = [0.0, 500.0, 1000.0, 1500.0, 2000.0]
        self.assertEqual(hop_count(positions, 0, 4, 750.0), 4)
        self.assertEqual(hop_count(positions, 4, 0, 750.0), 4)

    def test_direct_reach(self):
        self.assertEqual(hop_count([0.0, 100.0], 0, 1, 750.0), 1)
        self.assertEqual(hop_count([0.0, 100.0], 1, 1, 750.0), 0)

    def test_gap_beyond_range(self):
        self.assertIsNone(hop_count([0.0, 800.0], 0, 1, 750.0))

    def test_end_to_end_bound(self):
        bound = end_to_end_bound(list(LINE.values()), ChannelParams())
        self.assertAlmostEqual(bound, 0.08)
        self.assertLess(bound, ChannelParams().max_end_to_end)
        self.assertEqual(end_to_end_bound([0.0, 800.0], ChannelParams()), float("inf"))


class TestChannelParams(unittest.TestCase):

    def test_hop_delay_must_fit_budget(self):
        with self.assertRaises(ValidationError):
            ChannelParams(hop_delay=0.2, max_end_to_end=0.1)


class TestBroadcastAndDeliver(unittest.TestCase):
    """Flooding along the five-vehicle line"""

    def setUp(self):
        self.channel = V2VChannel(ChannelParams(), LINE.keys())

    def test_serials_increase(self):
        messages = [self.channel.broadcast(t, 1, 10.0 * k, 20.0) for k, t in enumerate((0.0, 0.1, 0.2))]
        self.assertEqual([m.serial for m in messages], [1, 2, 3])
        self.assertEqual([m.emitted_at for m in messages], [0.0, 0.1, 0.2])
        self.assertEqual([m.position for m in messages], [0.0, 10.0, 20.0])

    def test_head_reaches_tail_within_80_ms(self):
        self.channel.broadcast(0.0, 1, LINE[1], 33.0, LINE)
        self.channel.deliver(0.07)
        self.assertIsNone(self.channel.latest(5, 1))
        self.channel.deliver(0.08)
        rec = self.channel.latest(5, 1)
        self.assertIsNotNone(rec)
        self.assertAlmostEqual(rec.delivered_at, 0.08)
        self.assertEqual(rec.hops, 4)
        print(f"tail delivery at {rec.delivered_at:.3f}s after {rec.hops} hops")

    def test_neighbours_hear_first_hop(self):
        self.channel.broadcast(0.0, 3, LINE[3], 25.0, LINE)
        self.channel.deliver(0.02)
        self.assertEqual(self.channel.latest(2, 3).hops, 1)
        self.assertEqual(self.channel.latest(4, 3).hops, 1)
        self.assertIsNone(self.channel.latest(1, 3))

    def test_duplicate_copies_are_discarded(self):
        self.channel.broadcast(0.0, 1, LINE[1], 33.0, LINE)
        self.channel.deliver(1.0)
        self.assertEqual(self.channel.in_flight, 0)
        per_receiver = [r.receiver for r in self.channel.log if r.message.origin_id == 1]
        self.assertEqual(sorted(per_receiver), [2, 3, 4, 5])
        self.assertGreater(self.channel.duplicates, 0)

    def test_newest_serial_wins(self):
        self.channel.broadcast(0.0, 1, LINE[1], 33.0, LINE)
        self.channel.broadcast(0.1, 1, LINE[1] + 3.3, 32.0, LINE)
        self.channel.deliver(1.0)
        for receiver in (2, 3, 4, 5):
            self.assertEqual(self.channel.latest(receiver, 1).message.serial, 2)

    def test_disabled_channel_schedules_nothing(self):
        channel = V2VChannel(ChannelParams(enabled=False), LINE.keys())
        msg = channel.broadcast(0.0, 1, LINE[1], 33.0, LINE)
        self.assertEqual(msg.serial, 1)
        self.assertEqual(channel.in_flight, 0)
        self.assertEqual(channel.deliver(10.0), {})

    def test_unreachable_vehicle_is_logged_once(self):
        positions = {1: 1000.0, 2: 0.0}
        channel = V2VChannel(ChannelParams(), positions.keys())
        with self.assertLogs("src.v2v_channel", level="WARNING") as logs:
            channel.broadcast(0.0, 1, 1000.0, 20.0, positions)
            channel.broadcast(0.1, 1, 1002.0, 20.0, positions)
        self.assertEqual(len([m for m in logs.output if "unreachable" in m]), 1)
        self.assertEqual(channel.in_flight, 0)

    def test_jitter_is_seeded(self):
        params = ChannelParams(jitter=0.005)
        logs = []
        for _ in range(2):
            channel = V2VChannel(params, LINE.keys(), seed=42)
            for k in range(5):
                channel.broadcast(0.1 * k, 1, LINE[1], 33.0, LINE)
            channel.deliver(5.0)
            logs.append([(r.receiver, r.message.serial, r.delivered_at) for r in channel.log])
        self.assertEqual(logs[0], logs[1])


class TestDeliverFunction(unittest.TestCase):
    """The table update rule on its own"""

    def test_late_older_serial_is_discarded(self):
        tables = {9: {1: record(1, 7, 9, 0.5)}}
        accepted = deliver(1.0, [record(1, 5, 9, 0.9)], tables)
        self.assertEqual(accepted, {})
        self.assertEqual(tables[9][1].message.serial, 7)

    def test_future_copies_wait(self):
        tables = {}
        accepted = deliver(0.5, [record(1, 1, 9, 0.6)], tables)
        self.assertEqual(accepted, {})

    def test_order_independence(self):
        pending = [
            record(1, 5, 9, 0.3, hops=2),
            record(1, 7, 9, 0.3, hops=1),
            record(1, 7, 9, 0.3, hops=3),
            record(2, 2, 9, 0.2),
            record(2, 3, 8, 0.25),
            record(1, 6, 8, 0.1),
            record(1, 6, 8, 0.1, hops=2),
        ]
        reference = {}
        deliver(1.0, pending, reference)
        rng = random.Random(7)
        for _ in range(20):
            shuffled = pending[:]
            rng.shuffle(shuffled)
            tables = {}
            deliver(1.0, shuffled, tables)
            self.assertEqual(tables, reference)
        self.assertEqual(reference[9][1].message.serial, 7)
        self.assertEqual(reference[9][1].hops, 1)


class TestDisabledChannelRun(unittest.TestCase):

    def test_vdt_without_channel_keeps_alpha_at_one(self):
        p = VehicleParams()
        specs = [VehicleSpec(id=k, params=p, init_pos=pos, init_v=32.0)
                 for k, pos in enumerate((1100.0, 900.0, 700.0), start=1)]
        setup = SimpleNamespace(vehicles=specs, profile=LeaderProfile(events=((5.0, 18.0),)))
        config = SimConfig(duration=30.0, vdt_enabled=True, channel=ChannelParams(enabled=False), sample_every=5)
        result = run(config, setup)
        self.assertIsNone(result.error)
        self.assertEqual(result.deliveries, [])
        self.assertTrue(result.traces)
        self.assertTrue(all(r.alpha_t == 1.0 for r in result.traces))
        self.assertNotIn("vdt_stale", [e.kind for e in result.events])


class TestDeliveryLog(unittest.TestCase):

    def test_csv_columns(self):
        channel = V2VChannel(ChannelParams(), LINE.keys())
        channel.broadcast(0.0, 1, LINE[1], 33.0, LINE)
        channel.deliver(1.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_delivery_log(os.path.join(tmp, "deliveries.csv"), channel.log)
            with open(path, newline="", encoding="utf-8") as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], DELIVERY_LOG_HEADER)
        self.assertEqual(len(rows), 5)
        self.assertEqual(float(rows[-1][4]), channel.log[-1].delivered_at)


if __name__ == '__main__':
    unittest.main(verbosity=2)
