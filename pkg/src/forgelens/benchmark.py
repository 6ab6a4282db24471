"""Timing comparison of the compiled conv kernels against the numpy fallback."""

from __future__ import annotations

import time

import numpy as np

from .autodiff.kernels import compiled, reference


def _time(fn, *args, repeats: int) -> float:
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def run_benchmark(repeats: int = 200):
    rng = np.random.default_rng(0)
    cases = [
        ("deconv 4x4x64 k2s2", "deconv2d", rng.standard_normal((4, 4, 64), dtype=np.float32),
         rng.standard_normal((2, 2, 64, 64), dtype=np.float32), 2),
        ("deconv 8x8x64 k2s2", "deconv2d", rng.standard_normal((8, 8, 64), dtype=np.float32),
         rng.standard_normal((2, 2, 64, 64), dtype=np.float32), 2),
        ("conv 16x16x2 k2s2", "conv2d", rng.standard_normal((16, 16, 2), dtype=np.float32),
         rng.standard_normal((2, 2, 2, 8), dtype=np.float32), 2),
        ("conv 8x8x8 k2s2", "conv2d", rng.standard_normal((8, 8, 8), dtype=np.float32),
         rng.standard_normal((2, 2, 8, 16), dtype=np.float32), 2),
    ]
    backends = [("reference", reference)]
    if compiled is not None:
        backends.append(("compiled", compiled))

    print(f"{'case':24s} {'direction':9s} " + " ".join(f"{name:>12s}" for name, _ in backends))
    for label, kind, x, w, stride in cases:
        fwd_name = f"{kind}_forward"
        bwd_name = f"{kind}_backward"
        g = getattr(reference, fwd_name)(x, w, stride)
        fwd = [
            _time(getattr(mod, fwd_name), x, w, stride, repeats=repeats) for _, mod in backends
        ]
        bwd = [
            _time(getattr(mod, bwd_name), x, w, g, stride, repeats=repeats) for _, mod in backends
        ]
        print(f"{label:24s} {'forward':9s} " + " ".join(f"{t * 1e6:10.1f}us" for t in fwd))
        print(f"{label:24s} {'backward':9s} " + " ".join(f"{t * 1e6:10.1f}us" for t in bwd))
    if len(backends) == 1:
        print("compiled extension unavailable; only the reference backend was timed")
