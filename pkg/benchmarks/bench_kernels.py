"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Kernel timings call both backends in-process. ``--end-to-end`` also trains
the digits model once per backend in a subprocess (backend choice happens at
import time via SSLHOP_BACKEND).
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from sslhop import kernels

ROOT = Path(__file__).resolve().parents[1]
CASES = [
    ("patches 1000x28x28x1 m=4", "extract_patches_batch", (1000, 28, 28, 1), dict(window=4, stride=1)),
    ("patches 200x32x32x3 m=5", "extract_patches_batch", (200, 32, 32, 3), dict(window=5, stride=1)),
    ("pool 1000x25x25x8 p=2", "max_pool_batch", (1000, 25, 25, 8), dict(pool=2)),
    ("pool 500x28x28x16 p=2", "max_pool_batch", (500, 28, 28, 16), dict(pool=2)),
    ("lex_order 625000x16", "lex_order", (625000, 16), {}),
    ("lex_order 60000x75", "lex_order", (60000, 75), {}),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernels(repeat):
    backends = ["python"] + (["compiled"] if kernels.BACKEND == "compiled" else [])
    rng = np.random.default_rng(0)
    print(f"{'case':32s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, func, shape, kw in CASES:
        data = rng.random(shape)
        if func == "lex_order":
            data = np.round(data * 4) / 4  # image-like ties in the leading columns
        fn = getattr(kernels, func)
        ref = fn(data, backend="python", **kw)
        row = []
        for b in backends:
            assert np.array_equal(fn(data, backend=b, **kw), ref)
            row.append(best_of(lambda: fn(data, backend=b, **kw), repeat))
        line = f"{name:32s}" + "".join(f"{t * 1e3:10.1f}ms" for t in row)
        if len(row) == 2:
            line += f"{row[0] / row[1]:11.2f}x"
        print(line)


def bench_end_to_end():
    data = ROOT / "tests" / "data"
    with tempfile.TemporaryDirectory() as tmp:
        for backend in ("python", "compiled"):
            env = dict(os.environ, SSLHOP_BACKEND=backend, SSLHOP_THREADS="1")
            t = time.perf_counter()
            subprocess.run([sys.executable, "-m", "sslhop", "train", "--config", str(ROOT / "configs" / "digits.cfg"),
                            "--images", str(data / "digits-train-images-idx3-ubyte.gz"),
                            "--labels", str(data / "digits-train-labels-idx1-ubyte.gz"),
                            "--out", str(Path(tmp) / backend)], env=env, check=True, capture_output=True)
            print(f"train digits ({backend:8s}) {time.perf_counter() - t:8.2f}s")
        same = (Path(tmp) / "python").read_bytes() == (Path(tmp) / "compiled").read_bytes()
        print(f"model files identical across backends: {same}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--end-to-end", action="store_true")
    args = parser.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    bench_kernels(args.repeat)
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
