"""Command-line front end: simulate, reconstruct, bench.

All commands are deterministic given their flags (timing aside).  Timing in
`bench` covers reconstruction work only, excluding file I/O, and runs
single-worker unless --parallel is given; the CUBESOLVE_THREADS environment
variable caps the worker count.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import admm, forward_model, masks as masklib, metrics, perpixel, scenes, unet
from .core import (Measurement, NoiseSpec, WavelengthGrid, read_cube,
                   read_masks, read_measurement, write_cube, write_masks,
                   write_measurement)


def _parse_size(text: str) -> tuple[int, int, int]:
    try:
        w, h, b = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 64x64x8, got {text!r}")
    if w < 1 or h < 1 or b < 1:
        raise argparse.ArgumentTypeError(f"size components must be positive, got {text!r}")
    return w, h, b


def _grid_for(bands: int) -> WavelengthGrid:
    return WavelengthGrid(start_nm=450.0, step_nm=10.0, count=bands)


def _build_setup(args):
    grid = _grid_for(args.size[2])
    spec = scenes.SceneSpec(width=args.size[0], height=args.size[1],
                            regions=args.regions, seed=args.seed, grid=grid)
    truth = scenes.generate_scene(spec)
    lib = masklib.synthesize_library(unit_count=args.units, grid=grid, seed=args.mask_seed)
    stack = masklib.layout_masks(lib, args.size[0], args.size[1])
    return truth, stack


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth, stack = _build_setup(args)
    clean = forward_model.forward(truth, stack)
    noisy, sigma = forward_model.add_noise(clean, NoiseSpec(sigma_max=args.noise, seed=args.seed))

    write_cube(truth, out / "truth.scub")
    write_masks(stack, out / "masks.smsk")
    write_measurement(noisy, out / "measurement.smes")
    scenes.save_png(scenes.render_rgb(truth), out / "truth_rgb.png")
    print(f"sigma={sigma:.6g}")
    print(f"wrote truth.scub masks.smsk measurement.smes truth_rgb.png to {out}")
    return 0


def _admm_config(args, bands: int) -> admm.AdmmConfig:
    bundle = None
    if args.denoiser == "learned":
        if not args.weights or args.weights == "none":
            raise ValueError("learned denoiser selected but no weights loaded (--weights)")
        bundle = unet.load_weights(args.weights)
        if bundle.bands != bands:
            raise ValueError(
                f"weights expect {bundle.bands} bands but the measurement setup has {bands}"
            )
    gamma = tuple([args.gamma] * args.stages) if args.gamma is not None else None
    return admm.AdmmConfig(stages=args.stages, gamma=gamma, denoiser=args.denoiser,
                           literal_data_step=args.literal_data_step == "on",
                           bundle=bundle)


def cmd_reconstruct(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stack = read_masks(args.masks)
    y = read_measurement(args.measurement)

    if args.method == "admm":
        cfg = _admm_config(args, stack.bands)
        trace: list[admm.StageTrace] = []
        recon = admm.reconstruct(y, stack, cfg, trace=trace)
        admm.write_trace_csv(trace, out / "trace.csv")
    else:
        cfg = perpixel.PerPixelConfig(n=args.n, reg_lambda=args.reg_lambda)
        workers = perpixel.worker_count(None) if args.parallel else 1
        recon = perpixel.reconstruct_perpixel(y, stack, cfg, workers=workers)

    write_cube(recon, out / "recon.scub")
    scenes.save_png(scenes.render_rgb(recon), out / "recon_rgb.png")
    scenes.save_channel_pngs(recon, out)

    if args.truth:
        truth = read_cube(args.truth)
        result = metrics.mean_fidelity_map(truth, recon)
        rows = [("mean_fidelity", "all", result.mean),
                ("psnr_db", "all", metrics.psnr(truth, recon))]
        try:
            probe = metrics.mosaic_probe(truth, recon)
            rows += [("fidelity", "edge", probe.edge_mean),
                     ("fidelity", "flat", probe.flat_mean)]
        except ValueError:
            pass  # constant truth has no edges to probe
        metrics.write_metrics_csv(rows, out / "metrics.csv")
        print(f"mean_fidelity={result.mean:.6f}")
    print(f"wrote reconstruction outputs to {out}")
    return 0


def _time_method(fn, repeats: int) -> float:
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def cmd_bench(args) -> int:
    rows = []
    for size in args.sizes:
        w, h, bands = size
        sim_args = argparse.Namespace(size=size, seed=args.seed, regions=args.regions,
                                      units=args.units, mask_seed=args.mask_seed)
        truth, stack = _build_setup(sim_args)
        y = forward_model.forward(truth, stack)

        timings = {}
        for method in args.methods:
            if method == "admm":
                cfg = admm.AdmmConfig(stages=args.stages, denoiser="tv")
                fn = lambda: admm.reconstruct(y, stack, cfg)
            else:
                pcfg = perpixel.PerPixelConfig(n=args.n, reg_lambda=args.reg_lambda)
                workers = perpixel.worker_count(None) if args.parallel else 1
                fn = lambda: perpixel.reconstruct_perpixel(y, stack, pcfg, workers=workers)
            seconds = _time_method(fn, args.repeats)
            timings[method] = seconds
            rows.append((f"{w}x{h}x{bands}", method, seconds, seconds / bands))
            print(f"{w}x{h}x{bands} {method:9s} {seconds:10.3f} s/cube "
                  f"{seconds / bands:10.4f} s/channel")
        if "admm" in timings and "perpixel" in timings:
            ratio = timings["perpixel"] / timings["admm"]
            print(f"{w}x{h}x{bands} speedup perpixel/admm = {ratio:.1f}x")

    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write("size,method,seconds_per_cube,seconds_per_channel\n")
            for size, method, per_cube, per_channel in rows:
                fh.write(f"{size},{method},{per_cube:.6f},{per_channel:.6f}\n")
        print(f"wrote timing table to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cubesolve",
                                     description="filter-array spectral imaging toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate scene, masks and measurement files")
    sim.add_argument("--size", type=_parse_size, default=(64, 64, 8), metavar="WxHxB")
    sim.add_argument("--seed", type=int, default=scenes.DEFAULT_SCENE_SEED)
    sim.add_argument("--noise", type=float, default=0.0, help="sigma_max for the noise draw")
    sim.add_argument("--regions", type=int, default=6)
    sim.add_argument("--units", type=int, default=masklib.DEFAULT_UNIT_COUNT)
    sim.add_argument("--mask-seed", type=int, default=masklib.DEFAULT_LIBRARY_SEED)
    sim.add_argument("--out", required=True)
    sim.set_defaults(fn=cmd_simulate)

    rec = sub.add_parser("reconstruct", help="reconstruct a cube from measurement + masks")
    rec.add_argument("--method", choices=("admm", "perpixel"), default="admm")
    rec.add_argument("--measurement", required=True)
    rec.add_argument("--masks", required=True)
    rec.add_argument("--truth", default=None, help="optional truth cube for metrics")
    rec.add_argument("--stages", type=int, default=12)
    rec.add_argument("--denoiser", choices=admm.DENOISER_CHOICES, default="tv")
    rec.add_argument("--weights", default=None, help="weights file for the learned denoiser")
    rec.add_argument("--gamma", type=float, default=None)
    rec.add_argument("--literal-data-step", choices=("on", "off"), default="on",
                     dest="literal_data_step")
    rec.add_argument("--reg-lambda", type=float, default=1e-2)
    rec.add_argument("--n", type=int, default=2)
    rec.add_argument("--parallel", action="store_true")
    rec.add_argument("--out", required=True)
    rec.set_defaults(fn=cmd_reconstruct)

    bench = sub.add_parser("bench", help="time reconstruction methods")
    bench.add_argument("--sizes", type=lambda s: [_parse_size(p) for p in s.split(",")],
                       default=[(64, 64, 8)], metavar="WxHxB[,WxHxB...]")
    bench.add_argument("--methods", type=lambda s: s.split(","), default=["admm", "perpixel"])
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--seed", type=int, default=scenes.DEFAULT_SCENE_SEED)
    bench.add_argument("--regions", type=int, default=6)
    bench.add_argument("--units", type=int, default=masklib.DEFAULT_UNIT_COUNT)
    bench.add_argument("--mask-seed", type=int, default=masklib.DEFAULT_LIBRARY_SEED)
    bench.add_argument("--stages", type=int, default=12)
    bench.add_argument("--n", type=int, default=2)
    bench.add_argument("--reg-lambda", type=float, default=1e-2)
    bench.add_argument("--parallel", action="store_true")
    bench.add_argument("--out", default=None, help="optional CSV path")
    bench.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
