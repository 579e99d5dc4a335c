"""Sensing operator of the filter-array imager.

Each sensor pixel integrates its own per-band transmittances against the
scene spectrum: y[i,j] = sum_k m[i,j,k] * x[i,j,k].  Stacked over pixels this
is a wide matrix of concatenated diagonals, so the operator, its adjoint and
the diagonal of (op . op^T) all reduce to cheap elementwise forms.  All
reductions run in float64 regardless of input dtype.
"""

from __future__ import annotations

import numpy as np

from .core import MaskStack, Measurement, NoiseSpec, SpectralCube


def _check_dims(values: np.ndarray, masks: MaskStack, what: str) -> None:
    if values.shape != masks.values.shape:
        raise ValueError(
            f"{what} shape {values.shape} does not match mask stack shape {masks.values.shape}"
        )


def forward(cube: SpectralCube, masks: MaskStack) -> Measurement:
    """Project a cube to its snapshot: per-pixel mask-weighted band sum."""
    _check_dims(cube.values, masks, "cube")
    x = cube.values.astype(np.float64, copy=False)
    m = masks.values.astype(np.float64, copy=False)
    return Measurement(values=np.einsum("jik,jik->ji", m, x))


def adjoint(y: Measurement, masks: MaskStack) -> SpectralCube:
    """Transpose of forward: spread the snapshot back along each band via the masks."""
    if y.values.shape != masks.values.shape[:2]:
        raise ValueError(
            f"measurement shape {y.values.shape} does not match mask stack "
            f"spatial shape {masks.values.shape[:2]}"
        )
    m = masks.values.astype(np.float64, copy=False)
    out = m * y.values.astype(np.float64, copy=False)[:, :, None]
    return SpectralCube(values=out, grid=masks.grid)


def phi_phit_diag(masks: MaskStack) -> np.ndarray:
    """Per-pixel sum of squared transmittances; strictly positive by mask invariant."""
    m = masks.values.astype(np.float64, copy=False)
    return np.einsum("jik,jik->ji", m, m)


def add_noise(y: Measurement, spec: NoiseSpec, sigma: float | None = None
              ) -> tuple[Measurement, float]:
    """Add white Gaussian noise at a level drawn once from [0, sigma_max].

    The level is interpreted relative to the measurement normalized by its
    maximum, so "5% noise" means the same thing at any exposure scale.  Pass
    ``sigma`` to bypass the draw (noise curricula, calibration tests).
    Returns the noisy measurement and the sigma actually applied.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed]))
    if sigma is None:
        sigma = float(rng.uniform(0.0, spec.sigma_max))
    elif sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0.0:
        return y, 0.0
    peak = float(np.max(y.values))
    scale = peak if peak > 0 else 1.0
    noise = rng.standard_normal(y.values.shape)
    noisy = y.values.astype(np.float64, copy=False) + scale * sigma * noise
    return Measurement(values=noisy), sigma
