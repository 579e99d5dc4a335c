"""Shared data model and binary containers.

The flat storage layout of a cube is pixel-contiguous spectra: the value at
column i, row j, band k sits at flat index ((j*Nx)+i)*Nl+k.  A C-contiguous
numpy array of shape (height, width, bands) has exactly this layout, so all
volume data in this package is held that way and indexed as values[j, i, k].

Files use magic-tagged little-endian containers ("SCUB" cubes, "SMSK" mask
stacks, "SMES" measurements) with a 34-byte header followed by float32
payload.  No compression; byte-exact round trips are part of the contract.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

HEADER_STRUCT = struct.Struct("<4sHIIIdd")

CUBE_MAGIC = b"SCUB"
MASK_MAGIC = b"SMSK"
MEASUREMENT_MAGIC = b"SMES"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class WavelengthGrid:
    """Uniform spectral sampling grid; band i sits at start_nm + i*step_nm."""

    start_nm: float = 450.0
    step_nm: float = 10.0
    count: int = 26

    def __post_init__(self):
        if self.step_nm <= 0:
            raise ValueError(f"step_nm must be positive, got {self.step_nm}")
        if self.count < 1:
            raise ValueError(f"count must be at least 1, got {self.count}")

    def wavelengths(self) -> np.ndarray:
        return self.start_nm + self.step_nm * np.arange(self.count)


def _freeze(values: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(values)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """Nonnegative-intensity spectral volume, shape (height, width, bands)."""

    values: np.ndarray
    grid: WavelengthGrid

    def __post_init__(self):
        v = self.values
        if v.ndim != 3:
            raise ValueError(f"cube values must be 3-d (height, width, bands), got shape {v.shape}")
        if v.shape[2] != self.grid.count:
            raise ValueError(
                f"cube has {v.shape[2]} bands but grid declares {self.grid.count}"
            )
        if not np.isfinite(v).all():
            raise ValueError("invalid data: cube contains non-finite values")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def bands(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class MaskStack:
    """Per-band transmittance images of the filter array, shape (height, width, bands).

    Every entry lies in [0, 1] and no pixel may have an all-zero spectral
    response (the closed-form data step divides by the per-pixel sum of
    squared transmittances).
    """

    values: np.ndarray
    grid: WavelengthGrid

    def __post_init__(self):
        v = self.values
        if v.ndim != 3:
            raise ValueError(f"mask values must be 3-d (height, width, bands), got shape {v.shape}")
        if v.shape[2] != self.grid.count:
            raise ValueError(
                f"mask stack has {v.shape[2]} bands but grid declares {self.grid.count}"
            )
        if not np.isfinite(v).all():
            raise ValueError("invalid data: mask stack contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("transmittance out of range [0, 1]")
        energy = np.einsum("jik,jik->ji", v.astype(np.float64), v.astype(np.float64))
        dead = np.argwhere(energy == 0.0)
        if dead.size:
            j, i = dead[0]
            raise ValueError(f"degenerate mask at ({i}, {j}): all-zero spectral response")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def bands(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class Measurement:
    """Single snapshot image, shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError(f"measurement values must be 2-d, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("invalid data: measurement contains non-finite values")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise model: one sigma drawn uniformly from [0, sigma_max]."""

    sigma_max: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.sigma_max < 0:
            raise ValueError(f"sigma_max must be nonnegative, got {self.sigma_max}")


# ----------------------------------------------------------------------------
# container I/O


def _write_container(path, magic: bytes, shape, start_nm: float, step_nm: float,
                     values: np.ndarray) -> None:
    nx, ny, nl = shape
    header = HEADER_STRUCT.pack(magic, FORMAT_VERSION, nx, ny, nl, start_nm, step_nm)
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _read_container(path, magic: bytes, kind: str):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_STRUCT.size or raw[:4] != magic:
        raise ValueError(f"{path}: not a {kind} file")
    _, version, nx, ny, nl, start_nm, step_nm = HEADER_STRUCT.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported {kind} version {version}")
    expected = nx * ny * nl * 4
    payload = raw[HEADER_STRUCT.size:]
    if len(payload) != expected:
        raise ValueError(f"corrupt {kind}: expected {expected} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").reshape(ny, nx, nl)
    if not np.isfinite(values).all():
        raise ValueError(f"{path}: invalid data in {kind} payload")
    return values, start_nm, step_nm


def write_cube(cube: SpectralCube, path) -> None:
    _write_container(path, CUBE_MAGIC, (cube.width, cube.height, cube.bands),
                     cube.grid.start_nm, cube.grid.step_nm, cube.values)


def read_cube(path) -> SpectralCube:
    values, start_nm, step_nm = _read_container(path, CUBE_MAGIC, "cube")
    grid = WavelengthGrid(start_nm=start_nm, step_nm=step_nm, count=values.shape[2])
    return SpectralCube(values=values, grid=grid)


def write_masks(masks: MaskStack, path) -> None:
    _write_container(path, MASK_MAGIC, (masks.width, masks.height, masks.bands),
                     masks.grid.start_nm, masks.grid.step_nm, masks.values)


def read_masks(path) -> MaskStack:
    values, start_nm, step_nm = _read_container(path, MASK_MAGIC, "mask stack")
    grid = WavelengthGrid(start_nm=start_nm, step_nm=step_nm, count=values.shape[2])
    return MaskStack(values=values, grid=grid)


def write_measurement(meas: Measurement, path) -> None:
    _write_container(path, MEASUREMENT_MAGIC, (meas.width, meas.height, 1),
                     0.0, 1.0, meas.values[:, :, np.newaxis])


def read_measurement(path) -> Measurement:
    values, _, _ = _read_container(path, MEASUREMENT_MAGIC, "measurement")
    if values.shape[2] != 1:
        raise ValueError(f"{path}: measurement file must store a single band")
    return Measurement(values=values[:, :, 0])


def flat_index(i: int, j: int, k: int, width: int, bands: int) -> int:
    """Flat offset of (column i, row j, band k) in the storage layout."""
    return ((j * width) + i) * bands + k
