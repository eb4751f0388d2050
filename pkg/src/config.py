"""Process-level settings read from the environment (and an optional .env file).

These only provide defaults for the command line and the MCP server; the
physics of a run is configured by its scenario file.
"""

import logging
import os

from dotenv import load_dotenv

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(PROJECT_ROOT, "scenarios")

load_dotenv(os.path.join(PROJECT_ROOT, ".env"))
load_dotenv()

LOG_LEVEL = os.getenv("PLATOON_LOG_LEVEL", "INFO")
OUTPUT_DIR = os.getenv("PLATOON_OUTPUT_DIR", "./runs")
DEFAULT_SEED = int(os.getenv("PLATOON_SEED", "0"))
CHECK_SAMPLES = int(os.getenv("PLATOON_CHECK_SAMPLES", "100000"))
PARTITION_SAMPLES = int(os.getenv("PLATOON_PARTITION_SAMPLES", "1000000"))
CHECK_RUNS = int(os.getenv("PLATOON_CHECK_RUNS", "100"))
ZENO_LIMIT = int(os.getenv("PLATOON_ZENO_LIMIT", "100"))

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str | None = None) -> None:
    """Configure the root logger once for an entry point."""
    name = (level or LOG_LEVEL).upper()
    logging.basicConfig(level=getattr(logging, name, logging.INFO), format=LOG_FORMAT)
