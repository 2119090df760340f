"""Synthetic multifile data with known coreference structure, and scoring against it."""

from .distort import DistortionModel, distort
from .generate import SIM_SCHEMA, SimulatedData, generate_truth
from .metrics import Metrics, aggregate, score
from .scenarios import OverlapScenario, scenario_presets

__all__ = [
    "DistortionModel", "distort", "SIM_SCHEMA", "SimulatedData", "generate_truth",
    "Metrics", "aggregate", "score", "OverlapScenario", "scenario_presets",
]
