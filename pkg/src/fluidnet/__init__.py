"""Multi-cell fluid-antenna network simulator with per-cell Q-learning control."""

from .config import ScenarioConfig, derive_stream, dump_config, load_config, load_config_file
from .engine import run, run_many
from .metrics import KpiReport

__all__ = ["ScenarioConfig", "derive_stream", "dump_config", "load_config", "load_config_file",
           "run", "run_many", "KpiReport"]
__version__ = "0.1.0"
