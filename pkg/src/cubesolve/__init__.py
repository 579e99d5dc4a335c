"""Snapshot compressive spectral imaging toolkit.

Simulates filter-array measurements of spectral data cubes and reconstructs
them either with a K-stage unfolded alternating-direction solver (pluggable
per-stage denoisers) or with the slow point-by-point iterative baseline.
"""

from .admm import AdmmConfig, StageTrace, reconstruct
from .core import (MaskStack, Measurement, NoiseSpec, SpectralCube,
                   WavelengthGrid, read_cube, read_masks, read_measurement,
                   write_cube, write_masks, write_measurement)
from .forward_model import add_noise, adjoint, forward, phi_phit_diag
from .masks import UnitLibrary, layout_masks, load_calibration, synthesize_library
from .metrics import fidelity, mean_fidelity_map, mosaic_probe, psnr
from .perpixel import PerPixelConfig, reconstruct_perpixel, solve_pixel
from .scenes import (CropOp, Illuminant, IlluminantOp, RotateOp, SceneSpec,
                     augment, generate_scene, make_illuminant, render_rgb,
                     step_scene)
from .unet import WeightBundle, denoise, load_weights, save_weights

__all__ = [
    "AdmmConfig", "StageTrace", "reconstruct",
    "MaskStack", "Measurement", "NoiseSpec", "SpectralCube", "WavelengthGrid",
    "read_cube", "read_masks", "read_measurement",
    "write_cube", "write_masks", "write_measurement",
    "add_noise", "adjoint", "forward", "phi_phit_diag",
    "UnitLibrary", "layout_masks", "load_calibration", "synthesize_library",
    "fidelity", "mean_fidelity_map", "mosaic_probe", "psnr",
    "PerPixelConfig", "reconstruct_perpixel", "solve_pixel",
    "CropOp", "Illuminant", "IlluminantOp", "RotateOp", "SceneSpec",
    "augment", "generate_scene", "make_illuminant", "render_rgb", "step_scene",
    "WeightBundle", "denoise", "load_weights", "save_weights",
]
