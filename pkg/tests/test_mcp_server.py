#!/usr/bin/env python3
"""
Test script for the MCP tool functions in mcp_server.py
"""

import sys
import os
import tempfile
import unittest

# Add parent directory to path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(project_root)

try:
    from mcp_server import (
        check_properties,
        compare_vdt,
        compute_thresholds,
        get_server_status,
        simulate_scenario,
    )
except ImportError as e:
    print(f"Error importing mcp_server: {e}")
    print("Make sure you're running this from the project root directory")
    sys.exit(1)


class TestServerStatus(unittest.TestCase):
    """get_server_status reports the shipped scenarios"""

    def test_status_healthy(self):
        status = get_server_status()
        print(f"Status: {status['status']}")
        self.assertEqual(status["status"], "healthy")
        self.assertTrue(status["scenarios"]["directory_exists"])
        files = status["scenarios"]["files"]
        self.assertEqual(files["five_vehicle_platoon.scn"]["vehicles"], 5)
        self.assertTrue(all(info["status"] == "valid" for info in files.values()))
        self.assertEqual(status["server_info"]["framework"], "FastMCP")

    def test_status_from_different_directory(self):
        original = os.getcwd()
        with tempfile.TemporaryDirectory() as tmp:
            try:
                os.chdir(tmp)
                self.assertEqual(get_server_status()["status"], "healthy")
            finally:
                os.chdir(original)


class TestThresholdTool(unittest.TestCase):

    def test_equilibrium_candidate(self):
        result = compute_thresholds(100.0, 0.0, 20.0)
        self.assertEqual(result["mode"], "q4")
        self.assertAlmostEqual(result["delta_s"], 206.0)
        self.assertAlmostEqual(result["delta_e"], 6.0)

    def test_unsafe(self):
        self.assertEqual(compute_thresholds(5.0, 0.0, 20.0)["mode"], "q6")


class TestSimulationTools(unittest.TestCase):

    def test_simulate_by_name(self):
        result = simulate_scenario("two_vehicle_minimal.scn")
        self.assertIsNone(result["error"])
        self.assertTrue(result["completed"])
        self.assertFalse(result["collision"])
        self.assertIn("collision_count", result["metrics"])

    def test_simulate_missing(self):
        result = simulate_scenario("no_such_scenario.scn")
        self.assertIn("error", result)
        print(f"Error message: {result['error']}")

    def test_compare_homogeneous(self):
        result = compare_vdt("homogeneous_platoon.scn")
        self.assertNotIn("error", result)
        self.assertTrue(all(row["peak_abs_a_delta"] == 0.0 for row in result["deltas"]))

    def test_check_properties_smoke(self):
        result = check_properties(samples=20, runs=0)
        self.assertTrue(result["passed"], result)
        self.assertEqual(len(result["properties"]), 8)


if __name__ == '__main__':
    unittest.main(verbosity=2)
