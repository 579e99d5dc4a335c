import numpy as np
import pytest

from cubesolve.core import WavelengthGrid
from cubesolve.forward_model import forward
from cubesolve.masks import layout_masks, synthesize_library
from cubesolve.metrics import fidelity, mean_fidelity_map, mosaic_probe
from cubesolve.perpixel import (PerPixelConfig, reconstruct_perpixel,
                                second_difference_matrix, solve_pixel)
from cubesolve.scenes import SceneSpec, generate_scene, step_scene

from oracles import projected_gradient_longrun


def three_gaussian_spectrum(bands: int) -> np.ndarray:
    lam = np.linspace(0.0, 1.0, bands)
    s = (0.9 * np.exp(-0.5 * ((lam - 0.2) / 0.12) ** 2)
         + 0.6 * np.exp(-0.5 * ((lam - 0.55) / 0.18) ** 2)
         + 0.4 * np.exp(-0.5 * ((lam - 0.85) / 0.1) ** 2))
    return s / s.max()


def test_config_defaults_and_validation():
    cfg = PerPixelConfig()
    assert cfg.n == 2 and cfg.neighborhood_size == 25
    with pytest.raises(ValueError):
        PerPixelConfig(n=0)
    with pytest.raises(ValueError):
        PerPixelConfig(reg_lambda=-1.0)


def test_second_difference_matrix():
    d2 = second_difference_matrix(5)
    assert d2.shape == (3, 5)
    assert np.array_equal(d2[0], [1.0, -2.0, 1.0, 0.0, 0.0])
    assert second_difference_matrix(2).shape == (0, 2)


def test_identity_system_recovered(rng):
    y = rng.uniform(0.1, 1.0, size=12)
    m = np.eye(12)
    x = solve_pixel(y, m, PerPixelConfig(reg_lambda=0.0, max_iters=2000, tol=1e-14))
    assert np.allclose(x, y, atol=1e-5)


def test_zero_measurements_give_zero():
    m = np.abs(np.random.default_rng(0).standard_normal((25, 8))) + 0.05
    x = solve_pixel(np.zeros(25), m, PerPixelConfig())
    assert np.array_equal(x, np.zeros(8))


def test_nonnegativity(rng):
    for _ in range(5):
        y = rng.standard_normal(25)  # sign-indefinite data still yields x >= 0
        m = rng.uniform(0.05, 0.95, size=(25, 8))
        x = solve_pixel(y, m, PerPixelConfig())
        assert x.min() >= 0.0


def test_rejects_non_finite():
    y = np.zeros(4)
    y[0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        solve_pixel(y, np.ones((4, 2)), PerPixelConfig())


def test_matches_longrun_oracle(rng):
    # solver run to tight tolerance versus the brute-force reference
    cfg = PerPixelConfig(max_iters=20_000, tol=1e-12)
    d2 = second_difference_matrix(26)
    for trial in range(5):
        m = rng.uniform(0.05, 0.95, size=(25, 26))
        y = rng.uniform(0.0, 2.0, size=25)
        x = solve_pixel(y, m, cfg)

        def objective(s):
            r = m @ s - y
            return float(r @ r) + cfg.reg_lambda * float((d2 @ s) @ (d2 @ s))

        _, f_ref = projected_gradient_longrun(m, y, cfg.reg_lambda, d2)
        f_got = objective(x)
        assert abs(f_got - f_ref) <= 1e-4 * max(abs(f_ref), 1e-12)


def test_matches_bounded_least_squares_oracle(rng):
    # independent solver: scipy's bounded linear least squares on the
    # stacked system [M; sqrt(reg) D2]
    from scipy.optimize import lsq_linear

    cfg = PerPixelConfig(reg_lambda=1e-2, max_iters=4000, tol=1e-12)
    for _ in range(3):
        m = rng.uniform(0.05, 0.95, size=(25, 26))
        truth = three_gaussian_spectrum(26) * 0.8
        y = m @ truth
        a = np.vstack([m, np.sqrt(cfg.reg_lambda) * second_difference_matrix(26)])
        b = np.concatenate([y, np.zeros(24)])
        ref = lsq_linear(a, b, bounds=(0.0, np.inf), tol=1e-12).x
        x = solve_pixel(y, m, cfg)
        f = lambda s: float(np.sum((m @ s - y) ** 2)
                            + cfg.reg_lambda * np.sum((second_difference_matrix(26) @ s) ** 2))
        assert f(x) <= f(ref) * (1.0 + 1e-6) + 1e-12


def test_constant_patch_recovery(rng):
    # noiseless neighborhood measurements of one shared smooth spectrum; tiny
    # smoothness weight means a stiff system, so give the solver headroom
    truth = three_gaussian_spectrum(26)
    for _ in range(3):
        m = rng.uniform(0.05, 0.95, size=(25, 26))
        y = m @ truth
        x = solve_pixel(y, m, PerPixelConfig(reg_lambda=1e-6, max_iters=40_000, tol=1e-15))
        assert fidelity(x, truth) >= 0.99


def test_objective_monotone_at_accepted_iterates(rng):
    # instrumented re-run of the solver's accepted objective sequence
    m = rng.uniform(0.05, 0.95, size=(25, 8))
    y = rng.uniform(0.0, 2.0, size=25)
    cfg = PerPixelConfig()
    d2 = second_difference_matrix(8)
    q = m.T @ m + cfg.reg_lambda * (d2.T @ d2)
    c = m.T @ y
    lip = 2.0 * float(np.linalg.eigvalsh(q)[-1])
    step = 1.0 / lip

    def objective(s):
        r = m @ s - y
        return float(r @ r) + cfg.reg_lambda * float((d2 @ s) @ (d2 @ s))

    x = np.zeros(8)
    z = x
    t = 1.0
    f_x = objective(x)
    history = [f_x]
    for _ in range(cfg.max_iters):
        x_next = np.maximum(z - step * 2.0 * (q @ z - c), 0.0)
        f_next = objective(x_next)
        if f_next > f_x:
            z = x
            t = 1.0
            x_next = np.maximum(z - step * 2.0 * (q @ z - c), 0.0)
            f_next = objective(x_next)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_next + ((t - 1.0) / t_next) * (x_next - x)
        x, f_x, t = x_next, f_next, t_next
        history.append(f_x)
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


# ---------------------------------------------------------------------------
# cube-level reconstruction


@pytest.fixture(scope="module")
def grid8():
    return WavelengthGrid(450.0, 10.0, 8)


def test_constant_scene_high_fidelity(grid8):
    lib = synthesize_library(unit_count=400, grid=grid8, seed=137)
    stack = layout_masks(lib, 16, 16)
    flat = generate_scene(SceneSpec(width=16, height=16, regions=1, seed=7, grid=grid8))
    y = forward(flat, stack)
    rec = reconstruct_perpixel(y, stack, PerPixelConfig())
    result = mean_fidelity_map(flat, rec)
    assert np.nanmin(result.map) >= 0.99
    assert rec.values.min() >= 0.0


def test_step_edge_shows_mosaic(grid8):
    lib = synthesize_library(unit_count=400, grid=grid8, seed=137)
    stack = layout_masks(lib, 24, 24)
    scene = step_scene(24, 24, grid8, seed=7)
    y = forward(scene, stack)
    rec = reconstruct_perpixel(y, stack, PerPixelConfig())
    probe = mosaic_probe(scene, rec, edge_dist=2)
    assert probe.edge_mean < probe.flat_mean


def test_dim_mismatch(grid8, rng):
    lib = synthesize_library(unit_count=40, grid=grid8, seed=137)
    stack = layout_masks(lib, 4, 4)
    from cubesolve.core import Measurement
    with pytest.raises(ValueError, match="does not match"):
        reconstruct_perpixel(Measurement(values=np.zeros((5, 5))), stack, PerPixelConfig())


def test_parallel_matches_serial(grid8, monkeypatch):
    lib = synthesize_library(unit_count=100, grid=grid8, seed=137)
    stack = layout_masks(lib, 10, 10)
    scene = generate_scene(SceneSpec(width=10, height=10, regions=3, seed=5, grid=grid8))
    y = forward(scene, stack)
    serial = reconstruct_perpixel(y, stack, PerPixelConfig(), workers=1)
    parallel = reconstruct_perpixel(y, stack, PerPixelConfig(), workers=2)
    assert np.allclose(serial.values, parallel.values, atol=1e-12)


def test_worker_count_env_cap(monkeypatch):
    from cubesolve.perpixel import worker_count
    monkeypatch.setenv("CUBESOLVE_THREADS", "2")
    assert worker_count(8) == 2
    assert worker_count(1) == 1
    monkeypatch.delenv("CUBESOLVE_THREADS")
    assert worker_count(1) == 1
