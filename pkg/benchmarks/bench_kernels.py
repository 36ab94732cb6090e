"""Wall-clock comparison of the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row times one kernel through the public entry points with the backend
forced, after one untimed warm-up call so JIT compilation is excluded.
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np

from guided_bands import kernels
from guided_bands.floquet import full_fibers, truncated_band, window_for
from guided_bands.graph import GuidedPotential, build_cylinder, load_and_validate
from guided_bands.numerics import TorusGrid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _load(name):
    spec = load_and_validate((CONFIGS / name).read_text())
    return build_cylinder(spec), GuidedPotential.from_spec(spec)


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _with_backend(flag, fn):
    def call():
        saved = kernels.USE_NUMBA
        kernels.USE_NUMBA = flag
        try:
            return fn()
        finally:
            kernels.USE_NUMBA = saved
    return call


def cases():
    cyl, Q = _load("pendant_flatband.json")
    win = window_for(cyl, 512)
    yield "assemble_band pendant R=512", lambda: truncated_band(cyl, Q, [0.7], win)
    cub, cq = _load("cubic_weak.json")
    cwin = window_for(cub, 6)
    yield "assemble_band cubic_weak R=6", lambda: truncated_band(cub, cq, [0.7], cwin)
    pts = TorusGrid(cub.dim_total, 12).points
    yield f"fiber_batch cubic_weak M={len(pts)}", lambda: full_fibers(cub, pts)
    rng = np.random.default_rng(0)
    X = rng.normal(size=(120, 120)) + 1j * rng.normal(size=(120, 120))
    A = (X + X.conj().T) / 2
    yield "householder_ql_eigh n=120", lambda: kernels.householder_ql_eigh(A)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not kernels.HAS_NUMBA:
        print("numba is not installed; only the numpy path can be timed")
    print(f"{'kernel':36s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speed-up':>9s}")
    for label, fn in cases():
        t_np = _best(_with_backend(False, fn), args.repeat)
        if kernels.HAS_NUMBA:
            t_nb = _best(_with_backend(True, fn), args.repeat)
            print(f"{label:36s} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.1f}x")
        else:
            print(f"{label:36s} {1e3 * t_np:12.3f} {'-':>12s} {'-':>9s}")


if __name__ == "__main__":
    main()
