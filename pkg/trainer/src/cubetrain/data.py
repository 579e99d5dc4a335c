"""Training data: procedural spectral scenes or cubes read from disk.

Scenes are piecewise-constant Voronoi tilings with random Gaussian-mixture
spectra, augmented by random cropping, quarter-turn rotation and
multiplication with a random smooth light-source curve.  Measurements are
synthesized on the fly with the same noise convention the engine uses: one
Gaussian level per sample, drawn uniformly from [0, sigma_max], relative to
the measurement's peak.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .containers import read_cube


def _mixture_spectrum(rng: np.random.Generator, bands: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, bands)
    s = np.zeros(bands)
    for _ in range(int(rng.integers(3, 6))):
        center = rng.uniform(0.0, 1.0)
        width = rng.uniform(0.05, 0.35)
        s += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((axis - center) / width) ** 2)
    s *= rng.uniform(0.35, 1.0) / s.max()
    return np.clip(s, 0.0, 1.0)


def _voronoi_scene(rng: np.random.Generator, width: int, height: int,
                   bands: int) -> np.ndarray:
    regions = int(rng.integers(3, 9))
    sites = np.column_stack([rng.uniform(0, width, regions),
                             rng.uniform(0, height, regions)])
    spectra = np.stack([_mixture_spectrum(rng, bands) for _ in range(regions)])
    ii, jj = np.meshgrid(np.arange(width), np.arange(height))
    d2 = (ii[:, :, None] - sites[None, None, :, 0]) ** 2 \
        + (jj[:, :, None] - sites[None, None, :, 1]) ** 2
    return spectra[np.argmin(d2, axis=2)]


def _augment(rng: np.random.Generator, cube: np.ndarray, width: int,
             height: int) -> np.ndarray:
    h, w = cube.shape[:2]
    if h < height or w < width:
        raise ValueError(f"source cube {w}x{h} smaller than crop {width}x{height}")
    j0 = int(rng.integers(0, h - height + 1))
    i0 = int(rng.integers(0, w - width + 1))
    out = cube[j0:j0 + height, i0:i0 + width]
    out = np.rot90(out, k=int(rng.integers(0, 4)), axes=(0, 1))
    if out.shape[:2] != (height, width):  # odd quarter turns swap the axes
        out = out.transpose(1, 0, 2)
    # random smooth light-source curve, peak-normalized
    axis = np.linspace(0.0, 1.0, cube.shape[2])
    light = 0.4 + rng.uniform(0.0, 0.6) * np.exp(
        -0.5 * ((axis - rng.uniform(0.0, 1.0)) / rng.uniform(0.2, 0.6)) ** 2)
    light /= light.max()
    return np.clip(out * light, 0.0, 1.0)


class SceneSampler:
    """Yields (height, width, bands) training cubes, deterministically."""

    def __init__(self, width: int, height: int, bands: int, seed: int,
                 scene_dir: str | None = None):
        self.width = width
        self.height = height
        self.bands = bands
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, bands]))
        self.sources: list[np.ndarray] = []
        if scene_dir is not None:
            for path in sorted(Path(scene_dir).glob("*.scub")):
                cube = read_cube(path)
                if cube.shape[2] != bands:
                    raise ValueError(f"{path}: has {cube.shape[2]} bands, expected {bands}")
                self.sources.append(cube)
            if not self.sources:
                raise ValueError(f"no .scub files found in {scene_dir}")

    def sample(self) -> np.ndarray:
        if self.sources:
            base = self.sources[int(self.rng.integers(0, len(self.sources)))]
        else:
            # oversample then crop so region boundaries move around
            base = _voronoi_scene(self.rng, 2 * self.width, 2 * self.height, self.bands)
        return _augment(self.rng, base, self.width, self.height)

    def batch(self, size: int) -> np.ndarray:
        return np.stack([self.sample() for _ in range(size)])


def synthesize_measurements(cubes: np.ndarray, masks: np.ndarray,
                            rng: np.random.Generator, sigma_max: float = 0.05
                            ) -> np.ndarray:
    """Project cubes to snapshots and add one-sigma-per-sample Gaussian noise."""
    y = np.einsum("bjik,jik->bji", cubes.astype(np.float64), masks.astype(np.float64))
    if sigma_max > 0:
        for b in range(y.shape[0]):
            sigma = rng.uniform(0.0, sigma_max)
            peak = y[b].max()
            scale = peak if peak > 0 else 1.0
            y[b] += scale * sigma * rng.standard_normal(y[b].shape)
    return y
