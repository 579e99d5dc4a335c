"""Evaluation metrics: spectral fidelity, peak signal-to-noise, mosaic probe.

Fidelity is the inner product of two l2-normalized spectra; 1 means identical
shape.  Nonnegative spectra give values in [0, 1], but the metric is defined
down to -1 because diagnostic volumes may carry negative pre-clamp values.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .core import SpectralCube

# a pair of neighboring spectra counts as an edge when 1 - fidelity exceeds this
EDGE_GRADIENT_THRESHOLD = 0.05


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"spectra must be 1-d with equal length, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("fidelity undefined for zero-norm spectrum")
    return float((a @ b) / (na * nb))


class FidelityResult(NamedTuple):
    map: np.ndarray     # (height, width), NaN where excluded
    mean: float
    excluded: int       # pixels with a zero-norm spectrum in either cube


def mean_fidelity_map(truth: SpectralCube, recon: SpectralCube,
                      region: np.ndarray | None = None) -> FidelityResult:
    """Per-pixel spectral fidelity and its mean over the (optional) region."""
    if truth.values.shape != recon.values.shape:
        raise ValueError(
            f"cube shapes differ: {truth.values.shape} vs {recon.values.shape}"
        )
    t = truth.values.astype(np.float64)
    r = recon.values.astype(np.float64)
    nt = np.linalg.norm(t, axis=2)
    nr = np.linalg.norm(r, axis=2)
    valid = (nt > 0) & (nr > 0)
    if region is not None:
        if region.shape != valid.shape:
            raise ValueError(f"region shape {region.shape} does not match cubes")
        valid &= region.astype(bool)
        excluded = int(region.sum() - valid.sum())
    else:
        excluded = int(valid.size - valid.sum())
    if not valid.any():
        raise ValueError("no pixel with nonzero spectra in both cubes")
    fmap = np.full(nt.shape, np.nan)
    inner = np.einsum("jik,jik->ji", t, r)
    fmap[valid] = inner[valid] / (nt[valid] * nr[valid])
    return FidelityResult(map=fmap, mean=float(fmap[valid].mean()), excluded=excluded)


def psnr(truth: SpectralCube, recon: SpectralCube, peak: float = 1.0) -> float:
    if truth.values.shape != recon.values.shape:
        raise ValueError(
            f"cube shapes differ: {truth.values.shape} vs {recon.values.shape}"
        )
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    diff = truth.values.astype(np.float64) - recon.values.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def spectral_edge_map(truth: SpectralCube,
                      threshold: float = EDGE_GRADIENT_THRESHOLD) -> np.ndarray:
    """Pixels whose spectrum differs from a 4-neighbor by more than threshold.

    The difference measure is 1 - fidelity between neighboring spectra;
    zero-norm pixels never participate.
    """
    t = truth.values.astype(np.float64)
    norms = np.linalg.norm(t, axis=2)
    safe = np.where(norms > 0, norms, 1.0)
    unit = t / safe[:, :, None]
    valid = norms > 0

    edges = np.zeros(norms.shape, dtype=bool)
    for axis in (0, 1):
        lead = np.take(unit, range(1, unit.shape[axis]), axis=axis)
        lag = np.take(unit, range(0, unit.shape[axis] - 1), axis=axis)
        sim = np.einsum("jik,jik->ji", lead, lag)
        lead_valid = np.take(valid, range(1, valid.shape[axis]), axis=axis)
        lag_valid = np.take(valid, range(0, valid.shape[axis] - 1), axis=axis)
        is_edge = (1.0 - sim > threshold) & lead_valid & lag_valid
        if axis == 0:
            edges[1:, :] |= is_edge
            edges[:-1, :] |= is_edge
        else:
            edges[:, 1:] |= is_edge
            edges[:, :-1] |= is_edge
    return edges


def _dilate(mask: np.ndarray, dist: int) -> np.ndarray:
    out = mask.copy()
    for dj in range(-dist, dist + 1):
        for di in range(-dist, dist + 1):
            if dj == 0 and di == 0:
                continue
            shifted = np.zeros_like(mask)
            src_j = slice(max(0, -dj), mask.shape[0] - max(0, dj))
            dst_j = slice(max(0, dj), mask.shape[0] - max(0, -dj))
            src_i = slice(max(0, -di), mask.shape[1] - max(0, di))
            dst_i = slice(max(0, di), mask.shape[1] - max(0, -di))
            shifted[dst_j, dst_i] = mask[src_j, src_i]
            out |= shifted
    return out


class MosaicProbe(NamedTuple):
    edge_mean: float
    flat_mean: float


def mosaic_probe(truth: SpectralCube, recon: SpectralCube, edge_dist: int = 2,
                 threshold: float = EDGE_GRADIENT_THRESHOLD) -> MosaicProbe:
    """Mean fidelity near spectral edges of the truth versus in flat regions."""
    edges = spectral_edge_map(truth, threshold)
    if not edges.any():
        raise ValueError("no edges detected in truth cube")
    near_edge = _dilate(edges, edge_dist)
    result = mean_fidelity_map(truth, recon)
    valid = ~np.isnan(result.map)
    edge_sel = near_edge & valid
    flat_sel = ~near_edge & valid
    if not edge_sel.any() or not flat_sel.any():
        raise ValueError("edge/flat partition is empty after exclusions")
    return MosaicProbe(edge_mean=float(result.map[edge_sel].mean()),
                       flat_mean=float(result.map[flat_sel].mean()))


def write_metrics_csv(rows: list[tuple[str, str, float]], path) -> None:
    """Rows of (metric, region, value)."""
    with open(path, "w") as fh:
        fh.write("metric,region,value\n")
        for metric, region, value in rows:
            fh.write(f"{metric},{region},{value:.9g}\n")
