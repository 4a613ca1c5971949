"""In-process substrate: topic bus, scenario/map files, the fixed-step
simulation loop, the headless driver, the wire server, and the CLI."""

from .bus import Subscription, Topic, TopicBus
from .maps import FormatError, IoError, MapMeta, load_map, rasterize_world, save_map
from .scenario import (
    Mode,
    NavConfig,
    Scenario,
    ValidationError,
    load_scenario,
    scenario_from_dict,
)
from .sim import SimClock, SimSnapshot, Simulation, step_sim
from .headless import MetricsReport, ScriptTimeout, load_script, run_headless

__all__ = [
    "FormatError",
    "IoError",
    "MapMeta",
    "MetricsReport",
    "Mode",
    "NavConfig",
    "Scenario",
    "ScriptTimeout",
    "SimClock",
    "SimSnapshot",
    "Simulation",
    "Subscription",
    "Topic",
    "TopicBus",
    "ValidationError",
    "load_map",
    "load_scenario",
    "load_script",
    "rasterize_world",
    "run_headless",
    "save_map",
    "scenario_from_dict",
    "step_sim",
]
