#!/usr/bin/env python3
"""
Test script for environment configuration in src/config.py
"""

import sys
import os
import importlib
import logging
import unittest

# Add parent directory to path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.append(project_root)

from src import config as settings

OVERRIDES = {
    "PLATOON_LOG_LEVEL": "DEBUG",
    "PLATOON_OUTPUT_DIR": "/tmp/platoon-runs",
    "PLATOON_SEED": "7",
    "PLATOON_CHECK_SAMPLES": "250",
    "PLATOON_ZENO_LIMIT": "40",
    "PLATOON_PARTITION_SAMPLES": "5000",
    "PLATOON_CHECK_RUNS": "12",
}


class TestSettings(unittest.TestCase):
    """Settings come from the environment, with fallbacks"""

    def setUp(self):
        self.saved = {key: os.environ.get(key) for key in OVERRIDES}

    def tearDown(self):
        for key, value in self.saved.items():
            if value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = value
        importlib.reload(settings)

    def test_environment_overrides(self):
        os.environ.update(OVERRIDES)
        importlib.reload(settings)
        print(f"Seed: {settings.DEFAULT_SEED}, output: {settings.OUTPUT_DIR}")
        self.assertEqual(settings.LOG_LEVEL, "DEBUG")
        self.assertEqual(settings.OUTPUT_DIR, "/tmp/platoon-runs")
        self.assertEqual(settings.DEFAULT_SEED, 7)
        self.assertEqual(settings.CHECK_SAMPLES, 250)
        self.assertEqual(settings.ZENO_LIMIT, 40)
        self.assertEqual(settings.PARTITION_SAMPLES, 5000)
        self.assertEqual(settings.CHECK_RUNS, 12)

    def test_defaults_without_environment(self):
        for key in OVERRIDES:
            os.environ.pop(key, None)
        importlib.reload(settings)
        self.assertEqual(settings.PARTITION_SAMPLES, 1_000_000)
        self.assertEqual(settings.CHECK_RUNS, 100)

    def test_paths(self):
        self.assertEqual(settings.PROJECT_ROOT, project_root)
        self.assertTrue(os.path.isdir(settings.SCENARIO_DIR))
        self.assertTrue(os.path.exists(os.path.join(project_root, ".env.template")))

    def test_configure_logging_accepts_names(self):
        root = logging.getLogger()
        saved_handlers, saved_level = root.handlers[:], root.level
        root.handlers = []
        try:
            settings.configure_logging("warning")
            self.assertEqual(root.level, logging.WARNING)
        finally:
            root.handlers = saved_handlers
            root.setLevel(saved_level)


if __name__ == '__main__':
    unittest.main(verbosity=2)
