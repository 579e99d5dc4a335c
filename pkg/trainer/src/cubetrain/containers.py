"""Binary containers shared with the reconstruction engine.

Independent implementation of the interchange formats: "SCUB" spectral
cubes and "SMSK" mask stacks are read (34-byte little-endian header, float32
payload in pixel-contiguous-spectra order), "WUNB" weight bundles are read
and written.  Byte-for-byte compatibility with the engine is covered by the
round-trip tests.
"""

from __future__ import annotations

import struct

import numpy as np

HEADER_STRUCT = struct.Struct("<4sHIIIdd")
CUBE_MAGIC = b"SCUB"
MASK_MAGIC = b"SMSK"
WEIGHTS_MAGIC = b"WUNB"
FORMAT_VERSION = 1
WEIGHTS_VERSION = 1


def _read_volume(path, magic: bytes, kind: str) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_STRUCT.size or raw[:4] != magic:
        raise ValueError(f"{path}: not a {kind} file")
    _, version, nx, ny, nl, _, _ = HEADER_STRUCT.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported {kind} version {version}")
    payload = raw[HEADER_STRUCT.size:]
    if len(payload) != nx * ny * nl * 4:
        raise ValueError(f"corrupt {kind}: bad payload length")
    values = np.frombuffer(payload, dtype="<f4").reshape(ny, nx, nl)
    if not np.isfinite(values).all():
        raise ValueError(f"{path}: invalid data in {kind} payload")
    return values.copy()


def read_cube(path) -> np.ndarray:
    """Load a spectral cube as (height, width, bands) float32."""
    return _read_volume(path, CUBE_MAGIC, "cube")


def read_masks(path) -> np.ndarray:
    """Load a mask stack as (height, width, bands) float32 in [0, 1]."""
    values = _read_volume(path, MASK_MAGIC, "mask stack")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ValueError(f"{path}: transmittance out of range")
    return values


def write_weights(path, stage_count: int, gammas: np.ndarray,
                  tensors: dict[str, np.ndarray]) -> None:
    """Serialize an ordered tensor dict in the weights container."""
    if len(gammas) != stage_count:
        raise ValueError(f"expected {stage_count} gammas, got {len(gammas)}")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<HI", WEIGHTS_VERSION, stage_count))
        fh.write(np.asarray(gammas, dtype="<f4").tobytes())
        fh.write(struct.pack("<I", len(tensors)))
        for name, tensor in tensors.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def read_weights(path) -> tuple[int, np.ndarray, dict[str, np.ndarray]]:
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
        tensors[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).copy()
    return stage_count, gammas, tensors
