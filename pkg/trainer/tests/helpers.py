"""Test harness utilities: invoke the reconstruction engine's CLI and speak
its measurement container (the engine's documented interchange format)."""

from __future__ import annotations

import struct
import subprocess
import sys

import numpy as np

MEASUREMENT_MAGIC = b"SMES"
HEADER = struct.Struct("<4sHIIIdd")


def run_engine(args: list[str]) -> subprocess.CompletedProcess:
    cmd = [sys.executable, "-m", "cubesolve.cli", *args]
    return subprocess.run(cmd, capture_output=True, text=True)


def write_measurement(values: np.ndarray, path) -> None:
    height, width = values.shape
    header = HEADER.pack(MEASUREMENT_MAGIC, 1, width, height, 1, 0.0, 1.0)
    payload = np.ascontiguousarray(values[:, :, None], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_measurement(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, _, width, height, bands, _, _ = HEADER.unpack_from(raw)
    assert magic == MEASUREMENT_MAGIC and bands == 1
    values = np.frombuffer(raw[HEADER.size:], dtype="<f4").reshape(height, width, 1)
    return values[:, :, 0].copy()


def spectral_fidelity_mean(truth: np.ndarray, recon: np.ndarray) -> float:
    """Mean per-pixel normalized inner product, zero-norm pixels excluded."""
    t = truth.astype(np.float64).reshape(-1, truth.shape[2])
    r = recon.astype(np.float64).reshape(-1, recon.shape[2])
    nt = np.linalg.norm(t, axis=1)
    nr = np.linalg.norm(r, axis=1)
    valid = (nt > 0) & (nr > 0)
    return float(((t[valid] * r[valid]).sum(axis=1) / (nt[valid] * nr[valid])).mean())
