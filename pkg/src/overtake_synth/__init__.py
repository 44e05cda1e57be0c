"""Seeded synthetic dataset generator for highway overtaking manoeuvres."""

__version__ = "0.1.0"

from .domain import ClassLabel, WeatherPreset, lane_center, lane_of  # noqa: E402
from .sampler import ScenarioSpec, sample_scenario, sim_seed, validate_scenario  # noqa: E402
from .simengine import SimulationLog, run  # noqa: E402

__all__ = [
    "ClassLabel",
    "ScenarioSpec",
    "SimulationLog",
    "WeatherPreset",
    "lane_center",
    "lane_of",
    "run",
    "sample_scenario",
    "sim_seed",
    "validate_scenario",
]
