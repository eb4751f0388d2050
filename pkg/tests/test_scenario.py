#!/usr/bin/env python3
"""
Tests for scenario file parsing in src/scenario.py
"""

import sys
import os
import unittest

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.platoon_sim import SimConfig
from src.scenario import (
    ScenarioParseError,
    ScenarioSemanticError,
    build_world,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(PROJECT_ROOT, "scenarios")

MINIMAL = """
[vehicle.1]
init_pos_m = 100
init_v_mps = 20

[vehicle.2]
init_pos_m = 0
init_v_mps = 20
"""


class TestParseScenario(unittest.TestCase):

    def test_minimal_file_uses_defaults(self):
        scenario = parse_scenario(MINIMAL)
        self.assertEqual(len(scenario.vehicles), 2)
        self.assertEqual(scenario.config, SimConfig())
        self.assertEqual(scenario.vehicles[1].params.lambda_, 2.0)
        self.assertEqual(scenario.profile.events, ())
        self.assertEqual(scenario.profile.initial_speed, 20.0)

    def test_defaults_argument_fills_sim_section(self):
        scenario = parse_scenario(MINIMAL, SimConfig(zeno_limit=7, seed=3))
        self.assertEqual(scenario.config.zeno_limit, 7)
        self.assertEqual(scenario.config.seed, 3)

    def test_five_vehicle_file(self):
        scenario = load_scenario(os.path.join(SCENARIO_DIR, "five_vehicle_platoon.scn"))
        positions = [v.init_pos for v in scenario.vehicles]
        self.assertEqual(len(positions), 5)
        self.assertEqual(positions[3] - positions[4], 500.0)
        self.assertEqual(scenario.profile.events, ((30.0, 18.0), (90.0, 33.0)))
        self.assertTrue(scenario.config.vdt_enabled)
        self.assertEqual(scenario.config.vdt.neighborhood, "all_ahead")
        self.assertEqual([v.init_v for v in scenario.vehicles], [32.0, 32.0, 32.0, 32.0, 33.0])
        self.assertTrue(all(v.params.c_s == 1.1 and v.params.T_D == 2.0 for v in scenario.vehicles))
        self.assertEqual(scenario.config.vdt.alpha_t_max, 1.15)
        self.assertTrue(scenario.source.endswith("five_vehicle_platoon.scn"))

    def test_all_shipped_scenarios_build(self):
        for name in sorted(os.listdir(SCENARIO_DIR)):
            if name.endswith(".scn"):
                world = build_world(load_scenario(os.path.join(SCENARIO_DIR, name)))
                self.assertGreaterEqual(len(world.vehicles), 2, name)

    def test_parameter_overrides_and_alias(self):
        text = MINIMAL.replace("[vehicle.2]", "[vehicle.2]\nlambda = 3\nc_s = 2")
        params = parse_scenario(text).vehicles[1].params
        self.assertEqual(params.lambda_, 3.0)
        self.assertEqual(params.c_s, 2.0)

    def test_rejects_lambda_below_one(self):
        text = MINIMAL.replace("[vehicle.2]", "[vehicle.2]\nlambda = 0.5")
        with self.assertRaises(ScenarioSemanticError) as ctx:
            parse_scenario(text)
        self.assertEqual(ctx.exception.section, "vehicle.2")
        print(f"Rejected: {ctx.exception}")

    def test_parse_error_carries_line_number(self):
        text = "[sim]\nduration_s = 10\nthis line is wrong\n"
        with self.assertRaises(ScenarioParseError) as ctx:
            parse_scenario(text)
        self.assertEqual(ctx.exception.line_no, 3)

    def test_bad_number_reports_line(self):
        text = MINIMAL + "\n[sim]\ndt_s = 0,01\n"
        with self.assertRaises(ScenarioParseError) as ctx:
            parse_scenario(text)
        self.assertEqual(ctx.exception.line_no, text.splitlines().index("dt_s = 0,01") + 1)

    def test_unknown_key_and_section(self):
        with self.assertRaises(ScenarioSemanticError):
            parse_scenario(MINIMAL + "\n[sim]\nwarp_factor = 9\n")
        with self.assertRaises(ScenarioSemanticError):
            parse_scenario(MINIMAL + "\n[weather]\nrain = on\n")

    def test_non_monotone_profile(self):
        text = MINIMAL + "\n[leader.profile]\nevent = 30 18\nevent = 20 25\n"
        with self.assertRaises(ScenarioSemanticError) as ctx:
            parse_scenario(text)
        self.assertEqual(ctx.exception.section, "leader.profile")

    def test_vehicles_must_be_ordered(self):
        text = MINIMAL.replace("init_pos_m = 0", "init_pos_m = 200")
        with self.assertRaises(ScenarioSemanticError):
            parse_scenario(text)

    def test_vehicle_numbering(self):
        text = MINIMAL.replace("[vehicle.2]", "[vehicle.3]")
        with self.assertRaises(ScenarioSemanticError):
            parse_scenario(text)

    def test_non_finite_duration(self):
        with self.assertRaises(ScenarioSemanticError) as ctx:
            parse_scenario(MINIMAL + "\n[sim]\nduration_s = inf\n")
        self.assertEqual(ctx.exception.section, "sim")
        with self.assertRaises(ScenarioSemanticError):
            parse_scenario(MINIMAL + "\n[sim]\ndt_s = nan\n")

    def test_sliding_and_settle_keys(self):
        scenario = parse_scenario(MINIMAL + "\n[sim]\nsliding = off\nsettle_tol_mps = 0.05\n")
        self.assertFalse(scenario.config.sliding)
        self.assertEqual(scenario.config.settle_tol, 0.05)
        self.assertEqual(parse_scenario(serialize_scenario(scenario)).config, scenario.config)

    def test_duplicate_key(self):
        with self.assertRaises(ScenarioParseError):
            parse_scenario(MINIMAL + "\n[sim]\nseed = 1\nseed = 2\n")


class TestSerialize(unittest.TestCase):

    def test_round_trip(self):
        scenario = load_scenario(os.path.join(SCENARIO_DIR, "five_vehicle_platoon.scn"))
        again = parse_scenario(serialize_scenario(scenario))
        self.assertEqual(again, scenario)

    def test_overrides(self):
        scenario = parse_scenario(MINIMAL)
        changed = scenario.with_overrides(vdt=True, dt=0.005, seed=9)
        self.assertTrue(changed.config.vdt_enabled)
        self.assertEqual(changed.config.dt, 0.005)
        self.assertEqual(changed.config.seed, 9)
        self.assertIs(scenario.with_overrides(), scenario)


if __name__ == '__main__':
    unittest.main(verbosity=2)
