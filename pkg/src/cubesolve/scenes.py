"""Procedural spectral scenes, the augmentation pipeline and RGB rendering.

Scenes are Voronoi tilings of piecewise-constant regions, each region carrying
a random Gaussian-mixture spectrum.  They stand in for real captured cubes;
anything loadable through the cube container can be substituted.

Augmentation mirrors the usual training recipe: random cropping, quarter-turn
rotation, and elementwise multiplication with a light-source spectrum.

RGB rendering integrates each pixel spectrum against the CIE 1931 2-degree
observer color-matching functions (embedded at 10-nm resolution over
450-700 nm), converts through linear sRGB with the conversion white-balanced
so a spectrally flat cube maps to neutral gray, then gamma-encodes to 8 bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core import SpectralCube, WavelengthGrid

DEFAULT_SCENE_SEED = 7

# CIE 1931 2-degree observer, 450-700 nm at 10 nm: (wavelength, xbar, ybar, zbar)
_CMF_TABLE = np.array([
    [450.0, 0.3362, 0.0380, 1.7721],
    [460.0, 0.2908, 0.0600, 1.6692],
    [470.0, 0.1954, 0.0910, 1.2876],
    [480.0, 0.0956, 0.1390, 0.8130],
    [490.0, 0.0320, 0.2080, 0.4652],
    [500.0, 0.0049, 0.3230, 0.2720],
    [510.0, 0.0093, 0.5030, 0.1582],
    [520.0, 0.0633, 0.7100, 0.0782],
    [530.0, 0.1655, 0.8620, 0.0422],
    [540.0, 0.2904, 0.9540, 0.0203],
    [550.0, 0.4334, 0.9950, 0.0087],
    [560.0, 0.5945, 0.9950, 0.0039],
    [570.0, 0.7621, 0.9520, 0.0021],
    [580.0, 0.9163, 0.8700, 0.0017],
    [590.0, 1.0263, 0.7570, 0.0011],
    [600.0, 1.0622, 0.6310, 0.0008],
    [610.0, 1.0026, 0.5030, 0.0003],
    [620.0, 0.8544, 0.3810, 0.0002],
    [630.0, 0.6424, 0.2650, 0.0000],
    [640.0, 0.4479, 0.1750, 0.0000],
    [650.0, 0.2835, 0.1070, 0.0000],
    [660.0, 0.1649, 0.0610, 0.0000],
    [670.0, 0.0874, 0.0320, 0.0000],
    [680.0, 0.0468, 0.0170, 0.0000],
    [690.0, 0.0227, 0.0082, 0.0000],
    [700.0, 0.0114, 0.0041, 0.0000],
])

_XYZ_TO_LINEAR_SRGB = np.array([
    [3.2406, -1.5372, -0.4986],
    [-0.9689, 1.8758, 0.0415],
    [0.0557, -0.2040, 1.0570],
])


@dataclass(frozen=True)
class SceneSpec:
    width: int = 64
    height: int = 64
    regions: int = 6
    seed: int = DEFAULT_SCENE_SEED
    grid: WavelengthGrid = WavelengthGrid()
    min_components: int = 3
    max_components: int = 5
    center_range_nm: tuple[float, float] = (450.0, 700.0)
    width_range_nm: tuple[float, float] = (10.0, 80.0)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"scene dimensions must be positive, got {self.width}x{self.height}")
        if self.regions < 1:
            raise ValueError(f"regions must be at least 1, got {self.regions}")


@dataclass(frozen=True, eq=False)
class Illuminant:
    name: str
    spectrum: np.ndarray  # (bands,) strictly positive, peak normalized to 1

    def __post_init__(self):
        s = np.asarray(self.spectrum, dtype=np.float64)
        if s.ndim != 1 or (s <= 0).any():
            raise ValueError("illuminant spectrum must be 1-d and strictly positive")
        object.__setattr__(self, "spectrum", s / s.max())


def make_illuminant(name: str, grid: WavelengthGrid) -> Illuminant:
    lam = grid.wavelengths()
    if name == "flat":
        spectrum = np.ones_like(lam)
    elif name == "led-like":
        # narrow blue pump plus broad phosphor hump
        spectrum = (np.exp(-0.5 * ((lam - 455.0) / 10.0) ** 2)
                    + 0.7 * np.exp(-0.5 * ((lam - 550.0) / 70.0) ** 2)
                    + 0.02)
    elif name == "daylight-like":
        # smooth quadratic fit to a 6500 K curve over 450-700 nm, peak at the blue end
        rel = (lam - 450.0) / 250.0
        spectrum = 1.0 - 0.52 * rel + 0.13 * rel**2
    else:
        raise ValueError(f"unknown illuminant {name!r}; expected flat, led-like or daylight-like")
    return Illuminant(name=name, spectrum=spectrum)


def _mixture_spectrum(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    lam = spec.grid.wavelengths()
    n_comp = int(rng.integers(spec.min_components, spec.max_components + 1))
    s = np.zeros_like(lam, dtype=np.float64)
    for _ in range(n_comp):
        center = rng.uniform(*spec.center_range_nm)
        sigma = rng.uniform(*spec.width_range_nm)
        amp = rng.uniform(0.2, 1.0)
        s += amp * np.exp(-0.5 * ((lam - center) / sigma) ** 2)
    peak = rng.uniform(0.35, 1.0)
    s *= peak / s.max()
    return np.clip(s, 0.0, 1.0)


def generate_scene(spec: SceneSpec) -> SpectralCube:
    """Voronoi-partitioned piecewise-constant scene, deterministic per seed."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, spec.width, spec.height]))
    sites = np.column_stack([rng.uniform(0, spec.width, spec.regions),
                             rng.uniform(0, spec.height, spec.regions)])
    spectra = np.stack([_mixture_spectrum(rng, spec) for _ in range(spec.regions)])

    ii, jj = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    d2 = (ii[:, :, None] - sites[None, None, :, 0]) ** 2 \
        + (jj[:, :, None] - sites[None, None, :, 1]) ** 2
    labels = np.argmin(d2, axis=2)
    return SpectralCube(values=spectra[labels], grid=spec.grid)


def step_scene(width: int = 64, height: int = 64, grid: WavelengthGrid = WavelengthGrid(),
               seed: int = DEFAULT_SCENE_SEED) -> SpectralCube:
    """Two-region scene split by a vertical edge.

    The halves carry broad Gaussian spectra peaked at opposite ends of the
    band range over a common base level: clearly distinct (normalized inner
    product well below the edge-detection threshold) yet smooth enough that
    the cube-level solver is not edge-limited.
    """
    lam = grid.wavelengths()
    span = max(lam[-1] - lam[0], 1.0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    amp = rng.uniform(0.55, 0.65)
    left = amp * np.exp(-0.5 * ((lam - (lam[0] + 0.15 * span)) / (0.35 * span)) ** 2) + 0.3
    right = amp * np.exp(-0.5 * ((lam - (lam[0] + 0.85 * span)) / (0.35 * span)) ** 2) + 0.3
    values = np.empty((height, width, grid.count))
    values[:, : width // 2] = np.clip(left, 0, 1)
    values[:, width // 2:] = np.clip(right, 0, 1)
    return SpectralCube(values=values, grid=grid)


# ----------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class CropOp:
    width: int
    height: int


@dataclass(frozen=True)
class RotateOp:
    degrees: int  # one of 0, 90, 180, 270


@dataclass(frozen=True)
class IlluminantOp:
    illuminant: Illuminant


def augment(cube: SpectralCube, ops, seed: int = 0) -> SpectralCube:
    """Apply an ordered list of CropOp / RotateOp / IlluminantOp."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    values = cube.values
    for op in ops:
        if isinstance(op, CropOp):
            h, w = values.shape[:2]
            if op.width > w or op.height > h:
                raise ValueError(
                    f"crop {op.width}x{op.height} exceeds source {w}x{h}"
                )
            i0 = int(rng.integers(0, w - op.width + 1))
            j0 = int(rng.integers(0, h - op.height + 1))
            values = values[j0:j0 + op.height, i0:i0 + op.width]
        elif isinstance(op, RotateOp):
            if op.degrees % 90 != 0:
                raise ValueError(f"rotation must be a multiple of 90 degrees, got {op.degrees}")
            values = np.rot90(values, k=(op.degrees // 90) % 4, axes=(0, 1))
        elif isinstance(op, IlluminantOp):
            spectrum = op.illuminant.spectrum
            if spectrum.shape[0] != values.shape[2]:
                raise ValueError("illuminant band count does not match cube")
            values = np.clip(values * spectrum, 0.0, 1.0)
        else:
            raise TypeError(f"unsupported augmentation op {op!r}")
    return SpectralCube(values=np.ascontiguousarray(values), grid=cube.grid)


# ----------------------------------------------------------------------------
# rendering


def _cmf_at(grid: WavelengthGrid) -> np.ndarray:
    lam = grid.wavelengths()
    lo, hi = _CMF_TABLE[0, 0], _CMF_TABLE[-1, 0]
    if lam[0] < lo - 1e-9 or lam[-1] > hi + 1e-9:
        raise ValueError(
            f"grid spans {lam[0]:g}-{lam[-1]:g} nm, outside the embedded "
            f"color-matching support {lo:g}-{hi:g} nm"
        )
    cmf = np.empty((grid.count, 3))
    for c in range(3):
        cmf[:, c] = np.interp(lam, _CMF_TABLE[:, 0], _CMF_TABLE[:, c + 1])
    return cmf


def render_rgb(cube: SpectralCube) -> np.ndarray:
    """Render to an (height, width, 3) uint8 image."""
    cmf = _cmf_at(cube.grid)
    xyz = cube.values.astype(np.float64) @ cmf          # per-pixel tristimulus
    linear = xyz @ _XYZ_TO_LINEAR_SRGB.T
    white = (np.ones(cube.grid.count) @ cmf) @ _XYZ_TO_LINEAR_SRGB.T
    linear /= white                                      # flat spectrum -> neutral
    linear = np.clip(linear, 0.0, 1.0)
    srgb = np.where(linear <= 0.0031308,
                    12.92 * linear,
                    1.055 * np.power(linear, 1.0 / 2.4) - 0.055)
    return np.round(srgb * 255.0).astype(np.uint8)


def save_png(image: np.ndarray, path) -> None:
    Image.fromarray(image).save(path)


def save_channel_pngs(cube: SpectralCube, directory, prefix: str = "band") -> list[str]:
    """Write each band as a grayscale PNG scaled by the cube's global peak."""
    peak = float(cube.values.max())
    scale = 255.0 / peak if peak > 0 else 0.0
    paths = []
    for k in range(cube.bands):
        frame = np.clip(cube.values[:, :, k] * scale, 0, 255).astype(np.uint8)
        path = f"{directory}/{prefix}_{k:02d}.png"
        Image.fromarray(frame, mode="L").save(path)
        paths.append(path)
    return paths
