#!/usr/bin/env python3
"""
End-to-end checks on the shipped five-vehicle scenario.

The leader drops to 18 m/s at t = 30 s and returns to 33 m/s at t = 90 s.
Both VDT settings must finish without a collision or an unsafe entry. The
last vehicle must start braking earlier with VDT on, inside the windows
around the 45 s and 55 s read-offs, and settle with no more oscillation.
"""

import sys
import os
import unittest
from concurrent.futures import ThreadPoolExecutor

# Add parent directory to path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(project_root)

from src.platoon_sim import run
from src.scenario import load_scenario

FIVE_VEHICLE = os.path.join(project_root, "scenarios", "five_vehicle_platoon.scn")


class TestFiveVehicleScenario(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        scenario = load_scenario(FIVE_VEHICLE)
        cls.scenario = scenario
        variants = [scenario.with_overrides(vdt=True), scenario.with_overrides(vdt=False)]
        with ThreadPoolExecutor(max_workers=2) as pool:
            cls.on, cls.off = pool.map(lambda s: run(s.config, s), variants)
        for name, result in (("on", cls.on), ("off", cls.off)):
            print(f"VDT {name}: {result.world.t:g}s simulated in {result.wall_time:.2f}s, "
                  f"onset.5={result.metrics.decel_onset.get(5)}, "
                  f"oscillations.5={result.metrics.oscillations.get(5)}, "
                  f"peak_x2.5={result.metrics.peak_x2_post_eq.get(5)}, switches={len(result.switches)}")

    def test_no_collision(self):
        for result in (self.on, self.off):
            self.assertIsNone(result.error)
            self.assertEqual(result.metrics.collision_count, 0)
            self.assertAlmostEqual(result.world.t, self.scenario.config.duration)

    def test_no_unsafe_entry(self):
        for result in (self.on, self.off):
            kinds = {e.kind for e in result.events}
            self.assertNotIn("unsafe_entered", kinds)
            self.assertNotIn("zeno_suspect", kinds)

    def test_separation_above_collision_distance(self):
        for result in (self.on, self.off):
            for spec in self.scenario.vehicles[1:]:
                self.assertGreaterEqual(result.metrics.min_separation[spec.id], spec.params.s_n)

    def test_vdt_brakes_earlier(self):
        onset_on = self.on.metrics.decel_onset[5]
        onset_off = self.off.metrics.decel_onset[5]
        self.assertIsNotNone(onset_on)
        self.assertIsNotNone(onset_off)
        self.assertLess(onset_on, onset_off)
        self.assertTrue(35.0 <= onset_on <= 55.0, f"VDT-on onset {onset_on}")
        self.assertTrue(45.0 <= onset_off <= 65.0, f"VDT-off onset {onset_off}")

    def test_vdt_damps_oscillation(self):
        peak_on = self.on.metrics.peak_x2_post_eq[5]
        peak_off = self.off.metrics.peak_x2_post_eq[5]
        # Both runs settle before the peak is measured.
        self.assertIsNotNone(peak_on)
        self.assertIsNotNone(peak_off)
        self.assertLessEqual(peak_on, peak_off)
        self.assertLessEqual(self.on.metrics.oscillations[5], self.off.metrics.oscillations[5])

    def test_switching_stays_sparse(self):
        limit = self.scenario.config.zeno_limit
        for result in (self.on, self.off):
            per_second = {}
            for s in result.switches:
                key = (s.vehicle_id, int(s.t))
                per_second[key] = per_second.get(key, 0) + 1
            self.assertLess(max(per_second.values(), default=0), limit)

    def test_alpha_only_moves_with_vdt(self):
        self.assertTrue(all(r.alpha_t == 1.0 for r in self.off.traces))
        self.assertGreater(self.on.metrics.alpha_max[5], 1.0)


if __name__ == '__main__':
    unittest.main(verbosity=2)
