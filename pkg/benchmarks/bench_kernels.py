"""Time the compiled and pure-numpy kernels on training-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 50]

Also times one full training run with each path; pass --skip-train to
leave that out. The training comparison runs in subprocesses because the
kernel choice is fixed at import time by YONO_DISABLE_JIT.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from yono import kernels
from yono._jit import HAVE_NUMBA

TRAIN_SNIPPET = """
import time
from yono.config import RunConfig
from yono.trainer import run_stream
cfg = RunConfig.load(overrides=["trainer.epochs={epochs}"])
t0 = time.perf_counter()
rec = run_stream(cfg.stream(), cfg.trainer_config("yono+", 0))
print(time.perf_counter() - t0, rec.metrics["avg_accuracy"])
"""


def best_of(fn, repeat):
    fn()  # warm-up (compiles the jit path)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def bench_arcface(repeat, rng):
    rows = []
    for n, k in [(64, 10), (128, 10), (256, 100)]:
        cos = np.clip(rng.uniform(-1, 1, (n, k)), -1, 1)
        target = rng.integers(0, k, n)
        for name, fn in [("numpy", kernels.arcface_rows_numpy), ("jit", kernels.arcface_rows_jit)]:
            best, med = best_of(lambda: fn(cos, target, 0.25, 1 / 16), repeat)
            rows.append(("arcface_rows", f"{n}x{k}", name, best, med))
    return rows


def bench_mean_shift(repeat, rng):
    rows = []
    for n, m in [(400, 16), (1024, 16), (5000, 64)]:
        z = rng.standard_normal((n, m))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        p = z.mean(0)
        p /= np.linalg.norm(p)
        for name, fn in [("numpy", kernels.mean_shift_iterate_numpy), ("jit", kernels.mean_shift_iterate_jit)]:
            best, med = best_of(lambda: fn(z, p, 0.6, 5), repeat)
            rows.append(("mean_shift_iterate", f"{n}x{m}", name, best, med))
    return rows


def bench_training(epochs):
    out = []
    for name, flag in [("jit", "0"), ("numpy", "1")]:
        env = dict(os.environ, YONO_DISABLE_JIT=flag)
        res = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(epochs=epochs)], env=env,
                             capture_output=True, text=True, check=True)
        secs, acc = res.stdout.split()
        out.append((name, float(secs), float(acc)))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=50)
    parser.add_argument("--epochs", type=int, default=10, help="epochs for the training comparison")
    parser.add_argument("--skip-train", action="store_true")
    args = parser.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; both columns run the numpy path")

    rng = np.random.default_rng(0)
    rows = bench_arcface(args.repeat, rng) + bench_mean_shift(args.repeat, rng)
    print(f"{'kernel':<20}{'shape':<10}{'path':<7}{'best us':>10}{'median us':>11}")
    for kernel, shape, name, best, med in rows:
        print(f"{kernel:<20}{shape:<10}{name:<7}{best * 1e6:>10.1f}{med * 1e6:>11.1f}")

    if not args.skip_train:
        print(f"\nyono+ run on the desk stream, {args.epochs} epochs per task")
        for name, secs, acc in bench_training(args.epochs):
            print(f"  {name:<6}{secs:7.2f} s  avg accuracy {acc:.4f}")


if __name__ == "__main__":
    main()
