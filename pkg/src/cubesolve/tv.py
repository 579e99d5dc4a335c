"""Anisotropic 2-d total-variation denoising, batched over spectral channels.

Solves min_u 0.5*||u - f||^2 + w * (|Dx u| + |Dy u|) per channel with a
Chambolle-style projected ascent on the dual variables: each dual component
is clipped to [-1, 1] independently (anisotropic), and the denoised image is
recovered as f - w * div(p).  Forward differences with replicated last
row/column; div is the exact negative adjoint of grad.  The loop reuses
preallocated buffers; this denoiser dominates the reconstructor's runtime.
"""

from __future__ import annotations

import numpy as np

# step size <= 1/L with L = ||div||^2 = 8 for the 2-d difference operator
_DUAL_STEP = 0.125


def _grad_into(z: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> None:
    if z.shape[1] > 1:
        np.subtract(z[:, 1:], z[:, :-1], out=gx[:, :-1])
        gx[:, -1] = 0.0
    else:
        gx[:] = 0.0
    if z.shape[0] > 1:
        np.subtract(z[1:, :], z[:-1, :], out=gy[:-1, :])
        gy[-1, :] = 0.0
    else:
        gy[:] = 0.0


def _div_into(px: np.ndarray, py: np.ndarray, out: np.ndarray) -> None:
    if px.shape[1] > 1:
        out[:, 0] = px[:, 0]
        np.subtract(px[:, 1:-1], px[:, :-2], out=out[:, 1:-1])
        out[:, -1] = -px[:, -2]
    else:
        out[:] = 0.0
    if py.shape[0] > 1:
        out[0, :] += py[0, :]
        out[1:-1, :] += py[1:-1, :]
        out[1:-1, :] -= py[:-2, :]
        out[-1, :] -= py[-2, :]


def _grad(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.empty_like(z)
    gy = np.empty_like(z)
    _grad_into(z, gx, gy)
    return gx, gy


def _div(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    out = np.empty_like(px)
    _div_into(px, py, out)
    return out


def tv_denoise(volume: np.ndarray, weight: float, iters: int = 20) -> np.ndarray:
    """Denoise a (height, width) image or (height, width, channels) volume.

    Channels are independent; the loop is vectorized across them.  A
    nonpositive weight returns the input unchanged.  The dual iteration runs
    in float32: its error is far below the truncation error of the fixed
    iteration count, and the halved memory traffic matters in the
    reconstruction loop.
    """
    f = np.array(volume, dtype=np.float64, copy=True)
    if weight <= 0:
        return f
    target = (f / weight).astype(np.float32)
    px = np.zeros_like(target)
    py = np.zeros_like(target)
    gx = np.empty_like(target)
    gy = np.empty_like(target)
    work = np.empty_like(target)
    for _ in range(iters):
        _div_into(px, py, work)
        work -= target
        _grad_into(work, gx, gy)
        gx *= _DUAL_STEP
        px += gx
        np.minimum(px, 1.0, out=px)
        np.maximum(px, -1.0, out=px)
        gy *= _DUAL_STEP
        py += gy
        np.minimum(py, 1.0, out=py)
        np.maximum(py, -1.0, out=py)
    _div_into(px, py, work)
    f -= weight * work.astype(np.float64)
    return f


def tv_objective(u: np.ndarray, f: np.ndarray, weight: float) -> float:
    """Primal objective value; used by the solver tests."""
    gx, gy = _grad(np.asarray(u, dtype=np.float64))
    fit = 0.5 * float(np.sum((np.asarray(u, float) - np.asarray(f, float)) ** 2))
    return fit + weight * float(np.sum(np.abs(gx)) + np.sum(np.abs(gy)))
