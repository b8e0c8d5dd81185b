"""Compare the compiled and numpy kernel backends on training-sized layers.

    python3 benchmarks/bench_kernels.py [--repeats 20]
"""

import argparse
import time

import numpy as np

from nln.kernels import get_backend

SHAPES = {
    "and, private inputs (64 x 128 x 9)": ("and", (64, 128, 9), (128, 9)),
    "and, wide private inputs (64 x 128 x 40)": ("and", (64, 128, 40), (128, 40)),
    "or, shared inputs (64 x 128)": ("or", (64, 128), (2, 128)),
    "or, interval collections (64 x 128 x 31)": ("or", (64, 128, 31), (128, 31)),
}


def _time(fn, repeats):
    fn()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(repeats):
    rng = np.random.default_rng(0)
    backends = [get_backend("numpy")]
    try:
        backends.append(get_backend("cython"))
    except ImportError:
        print("compiled extension not built; timing the numpy backend only")
    rows = []
    for label, (kind, zs, ws) in SHAPES.items():
        z = rng.random(zs)
        w = rng.uniform(-1, 1, ws)
        b = rng.random(ws[0])
        g = rng.random((zs[0], ws[0]))
        times = {}
        for be in backends:
            fwd = be.and_forward if kind == "and" else be.or_forward
            bwd = be.and_backward if kind == "and" else be.or_backward
            times[be.name] = (_time(lambda: fwd(z, w, b), repeats), _time(lambda: bwd(z, w, b, g), repeats))
        rows.append((label, times))
    print(f"{'layer':44s} {'backend':8s} {'forward ms':>11s} {'backward ms':>12s}")
    for label, times in rows:
        for name, (f, bk) in times.items():
            print(f"{label:44s} {name:8s} {1e3 * f:11.3f} {1e3 * bk:12.3f}")
        if "cython" in times:
            nf, nb = times["numpy"]
            cf, cb = times["cython"]
            print(f"{'':44s} {'speedup':8s} {nf / cf:10.1f}x {nb / cb:11.1f}x")
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    run(ap.parse_args().repeats)
