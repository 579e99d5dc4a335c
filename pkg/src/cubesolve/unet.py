"""Inference engine for the per-stage convolutional denoiser.

The denoiser is a 15-convolution encoder/decoder ("U" shaped) network fixed
by a manifest: three encoder levels of two 3x3 convolutions (32, 64, 128
channels) each followed by 2x max pooling, a two-convolution 256-channel
bottleneck, three decoder levels (nearest-neighbor 2x upsampling, skip
concatenation as [upsampled, skip], two 3x3 convolutions at 128/64/32
channels), and a final 1x1 convolution back to the band count.  Rectified
linear activation everywhere except the final layer.  Spatial dims must be
divisible by 8.

Weights travel in the "WUNB" container: magic, u16 version, u32 stage count,
per-stage float32 coupling weights (gammas), u32 tensor count, then per
tensor a length-prefixed name, u8 rank, u32 dims and float32 data.  Little
endian throughout.  Tensor names look like "stage0/enc1/conv1/weight".
The version field pins every convention the trainer must mirror, including
the denoiser input normalization used by the reconstruction loop.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

WEIGHTS_MAGIC = b"WUNB"
WEIGHTS_VERSION = 1

_ENCODER_WIDTHS = (32, 64, 128)
_BOTTLENECK_WIDTH = 256
_KERNEL = 3


def arch_manifest(bands: int) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs for one stage's tensors, excluding the stage prefix."""
    entries: list[tuple[str, tuple[int, ...]]] = []

    def conv(name: str, c_out: int, c_in: int, k: int) -> None:
        entries.append((f"{name}/weight", (c_out, c_in, k, k)))
        entries.append((f"{name}/bias", (c_out,)))

    c_in = bands
    for level, width in enumerate(_ENCODER_WIDTHS, start=1):
        conv(f"enc{level}/conv1", width, c_in, _KERNEL)
        conv(f"enc{level}/conv2", width, width, _KERNEL)
        c_in = width
    conv("mid/conv1", _BOTTLENECK_WIDTH, _ENCODER_WIDTHS[-1], _KERNEL)
    conv("mid/conv2", _BOTTLENECK_WIDTH, _BOTTLENECK_WIDTH, _KERNEL)
    c_in = _BOTTLENECK_WIDTH
    for level, width in zip((3, 2, 1), reversed(_ENCODER_WIDTHS)):
        conv(f"dec{level}/conv1", width, c_in + width, _KERNEL)
        conv(f"dec{level}/conv2", width, width, _KERNEL)
        c_in = width
    conv("final/conv", bands, _ENCODER_WIDTHS[0], 1)
    return entries


@dataclass(frozen=True, eq=False)
class WeightBundle:
    """Validated per-stage denoiser weights plus the coupling schedule."""

    format_version: int
    stage_count: int
    gammas: np.ndarray            # (stage_count,) float32
    tensors: dict[str, np.ndarray]  # float32, manifest order, stage-major

    @property
    def bands(self) -> int:
        return self.tensors["stage0/final/conv/weight"].shape[0]


def validate_bundle(bundle: WeightBundle) -> None:
    if bundle.stage_count < 1:
        raise ValueError(f"stage_count must be at least 1, got {bundle.stage_count}")
    if len(bundle.gammas) != bundle.stage_count:
        raise ValueError(
            f"expected {bundle.stage_count} gammas, found {len(bundle.gammas)}"
        )
    first = "stage0/enc1/conv1/weight"
    if first not in bundle.tensors:
        raise ValueError(f"missing tensor {first}")
    bands = bundle.tensors[first].shape[1]
    expected: dict[str, tuple[int, ...]] = {}
    for stage in range(bundle.stage_count):
        for name, shape in arch_manifest(bands):
            expected[f"stage{stage}/{name}"] = shape
    for name in bundle.tensors:
        if name not in expected:
            raise ValueError(f"unknown tensor {name}")
    for name, shape in expected.items():
        if name not in bundle.tensors:
            raise ValueError(f"missing tensor {name}")
        got = tuple(bundle.tensors[name].shape)
        if got != shape:
            raise ValueError(f"shape mismatch for {name}: expected {shape}, got {got}")


def save_weights(bundle: WeightBundle, path) -> None:
    validate_bundle(bundle)
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<HI", bundle.format_version, bundle.stage_count))
        fh.write(np.asarray(bundle.gammas, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(bundle.tensors)))
        for name, tensor in bundle.tensors.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_weights(path) -> WeightBundle:
    with open(path, "rb") as fh:
        raw = fh.read()
    view = memoryview(raw)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise ValueError(f"{path}: truncated file")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not a weights file")
    version, stage_count = struct.unpack("<HI", take(6))
    if version != WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weights version {version}")
    gammas = np.frombuffer(take(4 * stage_count), dtype="<f4").copy()
    (tensor_count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(tensor_count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).copy()
        tensors[name] = data
    if pos != len(view):
        raise ValueError(f"{path}: trailing bytes after last tensor")
    bundle = WeightBundle(format_version=version, stage_count=stage_count,
                          gammas=gammas, tensors=tensors)
    validate_bundle(bundle)
    return bundle


# ----------------------------------------------------------------------------
# forward pass


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation: (c_in, h, w) -> (c_out, h, w)."""
    c_out, c_in, kh, kw = weight.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel spatial size must be odd, got {kh}x{kw}")
    if x.shape[0] != c_in:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {c_in}")
    if bias.shape != (c_out,):
        raise ValueError(f"bias shape {bias.shape} does not match {c_out} output channels")
    h, w = x.shape[1:]
    xp = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(h * w, c_in * kh * kw)
    flat = cols @ weight.reshape(c_out, c_in * kh * kw).T
    return (flat.T.reshape(c_out, h, w) + bias[:, None, None]).astype(x.dtype, copy=False)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _pool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def _upsample2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def denoise(volume: np.ndarray, bundle: WeightBundle, stage: int) -> np.ndarray:
    """Run one stage's denoiser over a (height, width, bands) volume."""
    if not 0 <= stage < bundle.stage_count:
        raise ValueError(f"stage {stage} out of range [0, {bundle.stage_count})")
    h, w, bands = volume.shape
    if h % 8 or w % 8:
        raise ValueError(f"spatial dims must be divisible by 8, got {h}x{w}")
    if bands != bundle.bands:
        raise ValueError(f"volume has {bands} bands, bundle expects {bundle.bands}")

    t = {name: bundle.tensors[f"stage{stage}/{name}"] for name, _ in arch_manifest(bands)}

    def block(z, name):
        z = _relu(conv2d(z, t[f"{name}/conv1/weight"], t[f"{name}/conv1/bias"]))
        return _relu(conv2d(z, t[f"{name}/conv2/weight"], t[f"{name}/conv2/bias"]))

    x = np.ascontiguousarray(volume.transpose(2, 0, 1), dtype=np.float32)
    e1 = block(x, "enc1")
    e2 = block(_pool2(e1), "enc2")
    e3 = block(_pool2(e2), "enc3")
    z = block(_pool2(e3), "mid")
    z = block(np.concatenate([_upsample2(z), e3], axis=0), "dec3")
    z = block(np.concatenate([_upsample2(z), e2], axis=0), "dec2")
    z = block(np.concatenate([_upsample2(z), e1], axis=0), "dec1")
    out = conv2d(z, t["final/conv/weight"], t["final/conv/bias"])
    return out.transpose(1, 2, 0)


# ----------------------------------------------------------------------------
# bundle constructors (experimentation and tests; trained bundles come from
# the companion trainer through the same container)


def zero_bundle(bands: int, stages: int, gammas=None) -> WeightBundle:
    if gammas is None:
        gammas = np.full(stages, 0.01, dtype=np.float32)
    tensors = {}
    for stage in range(stages):
        for name, shape in arch_manifest(bands):
            tensors[f"stage{stage}/{name}"] = np.zeros(shape, dtype=np.float32)
    return WeightBundle(format_version=WEIGHTS_VERSION, stage_count=stages,
                        gammas=np.asarray(gammas, dtype=np.float32), tensors=tensors)


def random_bundle(bands: int, stages: int, seed: int, gammas=None) -> WeightBundle:
    """He-scaled random weights; useful for parity checks and smoke tests."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, bands, stages]))
    if gammas is None:
        gammas = np.full(stages, 0.01, dtype=np.float32)
    tensors = {}
    for stage in range(stages):
        for name, shape in arch_manifest(bands):
            if name.endswith("/weight"):
                fan_in = int(np.prod(shape[1:]))
                data = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
            else:
                data = np.zeros(shape)
            tensors[f"stage{stage}/{name}"] = data.astype(np.float32)
    return WeightBundle(format_version=WEIGHTS_VERSION, stage_count=stages,
                        gammas=np.asarray(gammas, dtype=np.float32), tensors=tensors)
