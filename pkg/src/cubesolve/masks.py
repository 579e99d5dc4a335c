"""Filter-unit library synthesis and sensor layout.

The fabricated chip exposes a few hundred distinct filter units, each with a
resonance-rich transmission spectrum, tiled pseudo-randomly over the sensor.
Measured calibration data is not shipped, so this module synthesizes a
surrogate library: each unit spectrum is a sum of randomized Lorentzian
resonance terms over a dense 1-nm grid, box-averaged onto the target band
grid, and affinely rescaled into [0.05, 0.95] so no unit is flat or dead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MaskStack, WavelengthGrid, read_masks

DEFAULT_UNIT_COUNT = 400
DEFAULT_LIBRARY_SEED = 137
DEFAULT_SENSOR_SHAPE = (256, 256)  # (width, height)

_RESONANCES_MIN = 3
_RESONANCES_MAX = 8
_VALUE_LO = 0.05
_VALUE_HI = 0.95


@dataclass(frozen=True, eq=False)
class UnitLibrary:
    """Transmission spectra of every unit type plus the default sensor layout."""

    spectra: np.ndarray  # (unit_count, bands) in [0.05, 0.95]
    layout: np.ndarray   # (height, width) unit-type indices for the default sensor
    grid: WavelengthGrid
    seed: int

    @property
    def unit_count(self) -> int:
        return self.spectra.shape[0]


def _dense_wavelengths(grid: WavelengthGrid) -> tuple[np.ndarray, int]:
    # 1-nm sampling across each band's box [center - step/2, center + step/2)
    per_band = max(1, int(round(grid.step_nm)))
    offsets = (np.arange(per_band) + 0.5) / per_band - 0.5
    centers = grid.wavelengths()
    dense = (centers[:, None] + offsets[None, :] * grid.step_nm).ravel()
    return dense, per_band


def _lorentzian_spectrum(rng: np.random.Generator, wavelengths: np.ndarray) -> np.ndarray:
    n_res = int(rng.integers(_RESONANCES_MIN, _RESONANCES_MAX + 1))
    lo, hi = wavelengths[0], wavelengths[-1]
    t = np.full(wavelengths.shape, rng.uniform(0.2, 0.8))
    for _ in range(n_res):
        center = rng.uniform(lo - 20.0, hi + 20.0)
        hwhm = rng.uniform(8.0, 60.0)
        amp = rng.uniform(0.3, 1.0) * (1.0 if rng.uniform() < 0.5 else -1.0)
        t += amp * hwhm**2 / ((wavelengths - center) ** 2 + hwhm**2)
    span = t.max() - t.min()
    if span < 1e-12:
        return np.full(wavelengths.shape, 0.5 * (_VALUE_LO + _VALUE_HI))
    return _VALUE_LO + (_VALUE_HI - _VALUE_LO) * (t - t.min()) / span


def _draw_layout(seed: int, unit_count: int, width: int, height: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, unit_count, width, height]))
    layout = rng.integers(0, unit_count, size=(height, width), dtype=np.int64)
    layout.flags.writeable = False
    return layout


def synthesize_library(unit_count: int = DEFAULT_UNIT_COUNT,
                       grid: WavelengthGrid = WavelengthGrid(),
                       seed: int = DEFAULT_LIBRARY_SEED) -> UnitLibrary:
    """Generate a deterministic surrogate unit library for the given band grid."""
    if unit_count < 1:
        raise ValueError(f"unit_count must be at least 1, got {unit_count}")
    dense, per_band = _dense_wavelengths(grid)
    rng = np.random.default_rng(np.random.SeedSequence([seed, unit_count]))
    spectra = np.empty((unit_count, grid.count))
    for u in range(unit_count):
        fine = _lorentzian_spectrum(rng, dense)
        spectra[u] = fine.reshape(grid.count, per_band).mean(axis=1)
    spectra = np.clip(spectra, _VALUE_LO, _VALUE_HI)
    if unit_count > 1 and len(np.unique(spectra, axis=0)) != unit_count:
        raise ValueError(f"unit library seed {seed} produced duplicate spectra")
    spectra.flags.writeable = False
    w, h = DEFAULT_SENSOR_SHAPE
    return UnitLibrary(spectra=spectra,
                       layout=_draw_layout(seed, unit_count, w, h),
                       grid=grid, seed=seed)


def layout_masks(lib: UnitLibrary, width: int, height: int) -> MaskStack:
    """Tile unit types over a width x height sensor crop and expand to a mask stack."""
    if width < 1 or height < 1:
        raise ValueError(f"mask dimensions must be positive, got {width}x{height}")
    if (height, width) == lib.layout.shape:
        layout = lib.layout
    else:
        layout = _draw_layout(lib.seed, lib.unit_count, width, height)
    values = lib.spectra[layout].astype(np.float32)
    return MaskStack(values=values, grid=lib.grid)


def load_calibration(path) -> MaskStack:
    """Load a measured (or previously synthesized) mask stack, fully validated."""
    return read_masks(path)


def mean_pairwise_correlation(spectra: np.ndarray) -> float:
    """Mean normalized inner product over all distinct spectrum pairs."""
    unit = spectra / np.linalg.norm(spectra, axis=1, keepdims=True)
    gram = unit @ unit.T
    n = len(spectra)
    off_diag_sum = gram.sum() - np.trace(gram)
    return float(off_diag_sum / (n * (n - 1)))
