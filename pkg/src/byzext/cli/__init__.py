"""Command-line interface and scenario files."""

from .main import build_parser, run_cli
from .scenario import BUNDLED, Scenario, ScenarioError, load_scenario, scenario_from_text

__all__ = ["BUNDLED", "Scenario", "ScenarioError", "build_parser", "load_scenario", "run_cli", "scenario_from_text"]
