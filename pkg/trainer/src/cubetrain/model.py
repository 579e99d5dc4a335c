"""Unfolded reconstruction graph with trainable per-stage denoisers.

The graph mirrors the inference engine stage for stage: a closed-form data
step exploiting the diagonal structure of the measurement operator, a
denoising step through a 15-convolution encoder/decoder network, and a
multiplier update.  Architecture, tensor naming and the input normalization
(divide by the peak of the mask diagonal) must match the engine's weights
container exactly or the export is refused.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

ENCODER_WIDTHS = (32, 64, 128)
BOTTLENECK_WIDTH = 256

# (block, out_channels_fn, kernel) in container order; in-channels derived
_BLOCK_ORDER = ("enc1", "enc2", "enc3", "mid", "dec3", "dec2", "dec1", "final")


def manifest(bands: int) -> list[tuple[str, tuple[int, ...]]]:
    """Tensor (name, shape) pairs for one stage, matching the engine."""
    entries: list[tuple[str, tuple[int, ...]]] = []

    def conv(name, c_out, c_in, k):
        entries.append((f"{name}/weight", (c_out, c_in, k, k)))
        entries.append((f"{name}/bias", (c_out,)))

    c_in = bands
    for level, width in enumerate(ENCODER_WIDTHS, start=1):
        conv(f"enc{level}/conv1", width, c_in, 3)
        conv(f"enc{level}/conv2", width, width, 3)
        c_in = width
    conv("mid/conv1", BOTTLENECK_WIDTH, ENCODER_WIDTHS[-1], 3)
    conv("mid/conv2", BOTTLENECK_WIDTH, BOTTLENECK_WIDTH, 3)
    c_in = BOTTLENECK_WIDTH
    for level, width in zip((3, 2, 1), reversed(ENCODER_WIDTHS)):
        conv(f"dec{level}/conv1", width, c_in + width, 3)
        conv(f"dec{level}/conv2", width, width, 3)
        c_in = width
    conv("final/conv", bands, ENCODER_WIDTHS[0], 1)
    return entries


class _Block(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)

    def forward(self, x):
        return F.relu(self.conv2(F.relu(self.conv1(x))))


class StageDenoiser(nn.Module):
    """Encoder/decoder denoiser; spatial dims must be divisible by 8."""

    def __init__(self, bands: int):
        super().__init__()
        self.bands = bands
        w1, w2, w3 = ENCODER_WIDTHS
        self.enc1 = _Block(bands, w1)
        self.enc2 = _Block(w1, w2)
        self.enc3 = _Block(w2, w3)
        self.mid = _Block(w3, BOTTLENECK_WIDTH)
        self.dec3 = _Block(BOTTLENECK_WIDTH + w3, w3)
        self.dec2 = _Block(w3 + w2, w2)
        self.dec1 = _Block(w2 + w1, w1)
        self.final = nn.Conv2d(w1, bands, 1)
        self._init_weights()

    def _init_weights(self):
        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, nonlinearity="relu")
                nn.init.zeros_(module.bias)

    def forward(self, x):
        if x.shape[-1] % 8 or x.shape[-2] % 8:
            raise ValueError(f"spatial dims must be divisible by 8, got {tuple(x.shape[-2:])}")
        e1 = self.enc1(x)
        e2 = self.enc2(F.max_pool2d(e1, 2))
        e3 = self.enc3(F.max_pool2d(e2, 2))
        z = self.mid(F.max_pool2d(e3, 2))
        z = self.dec3(torch.cat([F.interpolate(z, scale_factor=2, mode="nearest"), e3], dim=1))
        z = self.dec2(torch.cat([F.interpolate(z, scale_factor=2, mode="nearest"), e2], dim=1))
        z = self.dec1(torch.cat([F.interpolate(z, scale_factor=2, mode="nearest"), e1], dim=1))
        return self.final(z)

    def named_tensors(self) -> list[tuple[str, torch.Tensor]]:
        """Tensors in container order, names without the stage prefix."""
        out = []
        for block in ("enc1", "enc2", "enc3", "mid", "dec3", "dec2", "dec1"):
            mod = getattr(self, block)
            out.append((f"{block}/conv1/weight", mod.conv1.weight))
            out.append((f"{block}/conv1/bias", mod.conv1.bias))
            out.append((f"{block}/conv2/weight", mod.conv2.weight))
            out.append((f"{block}/conv2/bias", mod.conv2.bias))
        out.append(("final/conv/weight", self.final.weight))
        out.append(("final/conv/bias", self.final.bias))
        return out


def _softplus_inverse(value: float) -> float:
    return math.log(math.expm1(value))


class UnfoldedSolver(nn.Module):
    """K reconstruction stages with per-stage denoisers and couplings.

    The per-stage coupling (gamma) is learnable, kept positive through a
    softplus parameterization, initialized at 0.01.  ``literal_data_step``
    selects whether the prior term enters the data step unscaled (default)
    or multiplied by gamma.
    """

    def __init__(self, stages: int, bands: int, gamma_init: float = 0.01,
                 literal_data_step: bool = True):
        super().__init__()
        if stages < 1:
            raise ValueError(f"stages must be at least 1, got {stages}")
        self.stages = stages
        self.bands = bands
        self.literal_data_step = literal_data_step
        self.denoisers = nn.ModuleList(StageDenoiser(bands) for _ in range(stages))
        self.gamma_raw = nn.Parameter(
            torch.full((stages,), _softplus_inverse(gamma_init), dtype=torch.float32))

    def gammas(self) -> torch.Tensor:
        return F.softplus(self.gamma_raw)

    def forward(self, y: torch.Tensor, masks: torch.Tensor,
                clamp: bool = True) -> torch.Tensor:
        """Reconstruct a batch: y (B, H, W), masks (C, H, W) -> (B, C, H, W)."""
        m = masks.unsqueeze(0)                      # (1, C, H, W)
        d = (m * m).sum(dim=1)                      # (1, H, W)
        scale = d.max()
        phity = m * y.unsqueeze(1)                  # (B, C, H, W)
        gammas = self.gammas()

        v = phity / d.unsqueeze(1)
        u = torch.zeros_like(v)
        for k in range(self.stages):
            gamma = gammas[k]
            prior = v + u
            b = phity + (prior if self.literal_data_step else gamma * prior)
            correction = (m * b).sum(dim=1) / (gamma * (gamma + d))
            x = b / gamma - m * correction.unsqueeze(1)
            v = self.denoisers[k]((x - u) / scale) * scale
            u = u - (x - v)
        return torch.clamp(v, min=0.0) if clamp else v

    def export_tensors(self) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Gammas and tensors in container order; refuses manifest drift."""
        expected = manifest(self.bands)
        tensors: dict[str, np.ndarray] = {}
        for k, denoiser in enumerate(self.denoisers):
            named = denoiser.named_tensors()
            if [n for n, _ in named] != [n for n, _ in expected]:
                raise ValueError("denoiser tensor order drifted from the manifest")
            for name, tensor in named:
                shape = dict(expected)[name]
                if tuple(tensor.shape) != shape:
                    raise ValueError(
                        f"shape drift for stage{k}/{name}: {tuple(tensor.shape)} vs {shape}")
                tensors[f"stage{k}/{name}"] = tensor.detach().cpu().numpy().astype(np.float32)
        gammas = self.gammas().detach().cpu().numpy().astype(np.float32)
        return gammas, tensors

    def load_tensors(self, gammas: np.ndarray, tensors: dict[str, np.ndarray]) -> None:
        """Inverse of export: install container tensors into the graph."""
        if len(gammas) != self.stages:
            raise ValueError(f"expected {self.stages} gammas, got {len(gammas)}")
        with torch.no_grad():
            self.gamma_raw.copy_(torch.log(torch.expm1(
                torch.as_tensor(gammas, dtype=torch.float32).clamp(min=1e-8))))
            for k, denoiser in enumerate(self.denoisers):
                for name, param in denoiser.named_tensors():
                    key = f"stage{k}/{name}"
                    if key not in tensors:
                        raise ValueError(f"missing tensor {key}")
                    param.copy_(torch.as_tensor(tensors[key], dtype=torch.float32))
