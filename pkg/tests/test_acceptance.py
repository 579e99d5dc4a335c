"""Acceptance gate: one test per release criterion, at pinned tolerances.

Run with `pytest tests/test_acceptance.py -s` to see one pass/fail line per
criterion.  Every tolerance here is fixed; none is calibrated at runtime.
"""

import math
import time

import numpy as np
import pytest

from cubesolve.admm import AdmmConfig, reconstruct, x_update
from cubesolve.core import (Measurement, NoiseSpec, SpectralCube,
                            WavelengthGrid, read_cube, read_masks,
                            read_measurement, write_cube, write_masks,
                            write_measurement)
from cubesolve.forward_model import add_noise, adjoint, forward, phi_phit_diag
from cubesolve.masks import layout_masks, synthesize_library
from cubesolve.metrics import fidelity, mean_fidelity_map, mosaic_probe
from cubesolve.perpixel import PerPixelConfig, reconstruct_perpixel
from cubesolve.scenes import SceneSpec, generate_scene, step_scene
from cubesolve.unet import load_weights, random_bundle, save_weights

from conftest import random_cube, random_masks, random_measurement
from oracles import dense_sensing_matrix, unvectorize_cube, vectorize_cube

PINNED_DESK_FIDELITY = 0.999014  # first verified run, default scene, TV, K=30


class Criterion:
    def __init__(self, name, budget_s):
        self.name = name
        self.budget_s = budget_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None and elapsed <= self.budget_s else "FAIL"
        print(f"[{status}] {self.name} ({elapsed:.2f}s / budget {self.budget_s:g}s)")
        if exc_type is None and elapsed > self.budget_s:
            raise AssertionError(
                f"{self.name}: runtime {elapsed:.2f}s exceeds budget {self.budget_s:g}s"
            )
        return False


def test_forward_model_oracle(rng):
    with Criterion("forward-model dense-matrix oracle", budget_s=1.0):
        for _ in range(20):
            w, h, b = rng.integers(1, 7), rng.integers(1, 7), rng.integers(1, 5)
            cube = random_cube(rng, w, h, b)
            masks = random_masks(rng, w, h, b)
            y = random_measurement(rng, w, h)
            phi = dense_sensing_matrix(masks.values)

            got_y = forward(cube, masks).values.ravel()
            ref_y = phi @ vectorize_cube(cube.values)
            assert np.allclose(got_y, ref_y, rtol=1e-12, atol=1e-13)

            got_adj = adjoint(y, masks).values
            ref_adj = unvectorize_cube(phi.T @ y.values.ravel(), masks.values.shape)
            assert np.allclose(got_adj, ref_adj, rtol=1e-12, atol=1e-13)

            got_d = phi_phit_diag(masks)
            ref_d = np.diag(phi @ phi.T).reshape(h, w)
            assert np.allclose(got_d, ref_d, rtol=1e-12, atol=1e-13)


def test_adjoint_identity(rng):
    with Criterion("adjoint identity at 64x64x8", budget_s=5.0):
        for _ in range(100):
            cube = random_cube(rng, 64, 64, 8)
            masks = random_masks(rng, 64, 64, 8)
            y = random_measurement(rng, 64, 64)
            lhs = float(forward(cube, masks).values.ravel() @ y.values.ravel())
            rhs = float(cube.values.ravel() @ adjoint(y, masks).values.ravel())
            bound = 1e-10 * np.linalg.norm(cube.values) * np.linalg.norm(y.values)
            assert abs(lhs - rhs) <= bound


def test_one_shot_data_step(rng):
    with Criterion("closed-form data step residual", budget_s=5.0):
        for gamma in (1e-3, 1.0, 1e3):
            for _ in range(5):
                masks = random_masks(rng, 8, 8, 4)
                y = random_measurement(rng, 8, 8)
                v = rng.standard_normal((8, 8, 4))
                u = rng.standard_normal((8, 8, 4))
                x = x_update(y, masks, v, u, gamma=gamma)

                phi = dense_sensing_matrix(masks.values)
                rhs = phi.T @ y.values.ravel() + vectorize_cube(v + u)
                xv = vectorize_cube(x)
                residual = np.linalg.norm(phi.T @ (phi @ xv) + gamma * xv - rhs)
                assert residual <= 1e-8 * np.linalg.norm(rhs)
                # the dense linear solve agrees
                dense = np.linalg.solve(
                    phi.T @ phi + gamma * np.eye(phi.shape[1]), rhs)
                assert np.allclose(xv, dense, rtol=1e-8, atol=1e-10)


def test_no_compression_oracle(rng):
    with Criterion("no-compression reconstruction", budget_s=5.0):
        grid = WavelengthGrid(count=1)
        masks = random_masks(rng, 16, 16, 1, lo=0.05, hi=0.95)
        truth = SpectralCube(values=rng.uniform(0.1, 1.0, size=(16, 16, 1)), grid=grid)
        y = forward(truth, masks)
        for denoiser in ("tv", "identity"):
            rec = reconstruct(y, masks, AdmmConfig(stages=12, denoiser=denoiser))
            assert mean_fidelity_map(truth, rec).mean >= 0.999


def test_desk_scale_reconstruction_quality():
    with Criterion("desk-scale quality, default scene, TV, K=30", budget_s=30.0):
        grid = WavelengthGrid(450.0, 10.0, 8)
        lib = synthesize_library(unit_count=400, grid=grid, seed=137)
        stack = layout_masks(lib, 64, 64)
        truth = generate_scene(SceneSpec(width=64, height=64, regions=6, seed=7,
                                         grid=grid))
        y = forward(truth, stack)
        rec = reconstruct(y, stack, AdmmConfig(stages=30, denoiser="tv"))
        mean = mean_fidelity_map(truth, rec).mean
        assert mean >= 0.95
        assert mean >= PINNED_DESK_FIDELITY - 0.005


def test_mosaic_effect():
    with Criterion("mosaic effect on the step-edge scene", budget_s=600.0):
        grid = WavelengthGrid(450.0, 10.0, 26)
        lib = synthesize_library(unit_count=400, grid=grid, seed=137)
        stack = layout_masks(lib, 32, 32)
        scene = step_scene(32, 32, grid, seed=7)
        y = forward(scene, stack)

        baseline = reconstruct_perpixel(y, stack, PerPixelConfig())
        probe_pp = mosaic_probe(scene, baseline, edge_dist=2)
        assert probe_pp.edge_mean < probe_pp.flat_mean

        cube = reconstruct(y, stack, AdmmConfig(stages=30, denoiser="tv"))
        probe_admm = mosaic_probe(scene, cube, edge_dist=2)
        assert abs(probe_admm.flat_mean - probe_admm.edge_mean) <= 0.02


def test_speed_gap():
    with Criterion("speed gap, cube-level vs per-pixel", budget_s=900.0):
        grid = WavelengthGrid(450.0, 10.0, 8)
        lib = synthesize_library(unit_count=400, grid=grid, seed=137)
        stack = layout_masks(lib, 64, 64)
        truth = generate_scene(SceneSpec(width=64, height=64, regions=6, seed=7,
                                         grid=grid))
        y = forward(truth, stack)
        bands = 8

        cfg = AdmmConfig(stages=12, denoiser="tv")
        reconstruct(y, stack, cfg)  # warm path
        samples = []
        for _ in range(3):
            t0 = time.perf_counter()
            reconstruct(y, stack, cfg)
            samples.append(time.perf_counter() - t0)
        admm_per_channel = sorted(samples)[1] / bands

        t0 = time.perf_counter()
        reconstruct_perpixel(y, stack, PerPixelConfig(), workers=1)
        perpixel_per_channel = (time.perf_counter() - t0) / bands

        ratio = perpixel_per_channel / admm_per_channel
        print(f"  per-channel: admm {admm_per_channel*1e3:.2f} ms, "
              f"per-pixel {perpixel_per_channel:.3f} s, ratio {ratio:.0f}x")
        assert admm_per_channel <= perpixel_per_channel / 100.0


def test_noise_model():
    with Criterion("noise model calibration", budget_s=1.0):
        y = Measurement(values=np.zeros((256, 256)))
        noisy, sigma = add_noise(y, NoiseSpec(sigma_max=0.05, seed=42), sigma=0.05)
        assert sigma == 0.05
        assert 0.049 <= float(noisy.values.std()) <= 0.051
        rng = np.random.default_rng(0)
        y2 = Measurement(values=rng.uniform(size=(64, 64)))
        same, s0 = add_noise(y2, NoiseSpec(sigma_max=0.0, seed=1))
        assert s0 == 0.0
        assert np.array_equal(same.values, y2.values)


def test_metric_correctness(rng):
    with Criterion("spectral fidelity metric", budget_s=1.0):
        a = rng.uniform(0.1, 1.0, size=16)
        b = rng.uniform(0.1, 1.0, size=16)
        assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-12)
        assert fidelity(2.5 * a, b) == pytest.approx(fidelity(a, b), abs=1e-12)
        assert abs(fidelity(a, b)) <= 1.0 + 1e-12
        assert fidelity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.7071, abs=1e-4)
        assert abs(fidelity([1.0, 0.0], [1.0, 1.0]) - 1.0 / math.sqrt(2.0)) <= 1e-6


def test_format_round_trips(tmp_path, rng):
    with Criterion("container byte-exact round trips", budget_s=1.0):
        cube = SpectralCube(values=rng.uniform(size=(4, 5, 3)).astype(np.float32),
                            grid=WavelengthGrid(count=3))
        p1, p2 = tmp_path / "a.scub", tmp_path / "b.scub"
        write_cube(cube, p1)
        write_cube(read_cube(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

        masks = random_masks(rng, 4, 4, 3)
        m1, m2 = tmp_path / "a.smsk", tmp_path / "b.smsk"
        write_masks(masks, m1)
        write_masks(read_masks(m1), m2)
        assert m1.read_bytes() == m2.read_bytes()

        meas = Measurement(values=rng.uniform(size=(4, 4)).astype(np.float32))
        y1, y2 = tmp_path / "a.smes", tmp_path / "b.smes"
        write_measurement(meas, y1)
        write_measurement(read_measurement(y1), y2)
        assert y1.read_bytes() == y2.read_bytes()

        bundle = random_bundle(bands=3, stages=2, seed=8)
        w1, w2 = tmp_path / "a.wunb", tmp_path / "b.wunb"
        save_weights(bundle, w1)
        save_weights(load_weights(w1), w2)
        assert w1.read_bytes() == w2.read_bytes()

        # corrupted files produce the contracted errors
        bad = tmp_path / "bad.scub"
        bad.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(ValueError, match="not a cube file"):
            read_cube(bad)
        trunc = tmp_path / "t.scub"
        trunc.write_bytes(p1.read_bytes()[:-2])
        with pytest.raises(ValueError, match="corrupt cube"):
            read_cube(trunc)
        wtrunc = tmp_path / "t.wunb"
        wtrunc.write_bytes(w1.read_bytes()[:-3])
        with pytest.raises(ValueError, match="truncated file"):
            load_weights(wtrunc)
