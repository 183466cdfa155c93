"""Compare the compiled kernel extension against the pure-numpy fallback.

Runs each hot kernel (im2col/col2im, bilinear grid sampling, decoupled
dynamic filtering) on identical inputs for both backends, checks that the
outputs agree, and prints a timing table.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from frfsr.kernels import _numpy

try:
    from frfsr.kernels import _ext
except ImportError:
    _ext = None


def _time(fn, args, repeat):
    fn(*args)  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = fn(*args)
    return (time.perf_counter() - t0) / repeat, out


def bench(repeat: int):
    rng = np.random.default_rng(0)
    n, c, h, w = 2, 32, 64, 64
    x = rng.standard_normal((n, c, h, w)).astype(np.float32)
    cols = _numpy.im2col(x, 3, 3, 1, 1, 1)
    grid = rng.uniform(-1.1, 1.1, size=(n, 2, h, w)).astype(np.float32)
    gout = rng.standard_normal((n, c, h, w)).astype(np.float32)
    sf = rng.standard_normal((n, 9, h, w)).astype(np.float32)
    cf = rng.standard_normal((n, c, 9)).astype(np.float32)

    cases = [
        ("im2col 3x3", "im2col", (x, 3, 3, 1, 1, 1)),
        ("col2im 3x3", "col2im", (cols, x.shape, 3, 3, 1, 1, 1)),
        ("grid_sample fwd", "grid_sample_fwd", (x, grid)),
        ("grid_sample bwd input", "grid_sample_bwd_input", (gout, grid, x.shape)),
        ("grid_sample bwd grid", "grid_sample_bwd_grid", (x, grid, gout)),
        ("ddf fwd", "ddf_fwd", (x, sf, cf)),
        ("ddf bwd", "ddf_bwd", (x, sf, cf, gout)),
    ]

    backends = [("numpy", _numpy)] + ([("ext", _ext)] if _ext else [])
    header = f"{'kernel':24s}" + "".join(f"{name:>12s}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for label, attr, args in cases:
        times, outs = [], []
        for _, mod in backends:
            dt, out = _time(getattr(mod, attr), args, repeat)
            times.append(dt)
            outs.append(out)
        if len(outs) == 2:
            ref, alt = outs
            if not isinstance(ref, tuple):
                ref, alt = (ref,), (alt,)
            worst = max(
                float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-8))
                for a, b in zip(ref, alt))
            if worst > 1e-4:
                raise AssertionError(
                    f"{label}: backends disagree, relative error {worst}")
        row = f"{label:24s}" + "".join(f"{dt * 1000:10.3f}ms" for dt in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:9.1f}x"
        print(row)
    if _ext is None:
        print("\n(extension not built; numpy backend only)")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=20)
    bench(ap.parse_args().repeat)
