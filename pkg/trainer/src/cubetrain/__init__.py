"""Trainer for the unfolded spectral-cube reconstructor.

Builds the K-stage reconstruction graph with trainable denoisers, trains it
end to end on procedural scenes, and exports weights in the engine's
portable container.
"""

from .containers import read_cube, read_masks, read_weights, write_weights
from .data import SceneSampler, synthesize_measurements
from .model import StageDenoiser, UnfoldedSolver, manifest
from .train import TrainConfig, build_model, export_weights, load_flags, train

__all__ = [
    "read_cube", "read_masks", "read_weights", "write_weights",
    "SceneSampler", "synthesize_measurements",
    "StageDenoiser", "UnfoldedSolver", "manifest",
    "TrainConfig", "build_model", "export_weights", "load_flags", "train",
]
