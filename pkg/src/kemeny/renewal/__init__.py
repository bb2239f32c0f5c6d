"""Seeded Monte-Carlo estimators of visit deficits and Kemeny's constant."""

from .rng import TAG_DEFICIT, TAG_PATH, TAG_STEPCOUNT, Stream, philox_block
from .sim import (
    SimConfig,
    SimulationEstimate,
    simulate_path,
    step_count_identity,
    visit_deficit,
)

__all__ = [
    "Stream", "philox_block", "TAG_DEFICIT", "TAG_PATH", "TAG_STEPCOUNT",
    "SimConfig", "SimulationEstimate", "simulate_path", "step_count_identity", "visit_deficit",
]
