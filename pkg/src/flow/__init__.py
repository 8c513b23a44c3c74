from src.flow.codec import export_trajectories, read_path, verify_path, write_path
from src.flow.coupled import (
    FlowSampler,
    affected_range,
    candidate_rate,
    sample_candidate,
    simulate_flow,
    staircase_rate,
)
from src.flow.rescale import RescaledView, rescale
from src.flow.single import simulate_single
from src.flow.state import FlowEvent, FlowPath, FlowState, LevelGrid, SeedSpec


__all__ = [
    "FlowEvent",
    "FlowPath",
    "FlowSampler",
    "FlowState",
    "LevelGrid",
    "RescaledView",
    "SeedSpec",
    "affected_range",
    "candidate_rate",
    "export_trajectories",
    "read_path",
    "rescale",
    "sample_candidate",
    "simulate_flow",
    "simulate_single",
    "staircase_rate",
    "verify_path",
    "write_path",
]
