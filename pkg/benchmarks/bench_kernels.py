"""Time the hot kernels under both backends.

Each backend runs in its own interpreter because HALLMILD_KERNELS is read at
import time.  Usage:

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 32]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from hallmild import _kernels
from hallmild.besov import build_dyadic_profile
from hallmild.heat import get_plan
from hallmild.spectral import Grid

n, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
grid = Grid(n)
prof = build_dyadic_profile()
rho = rng.uniform(0, n, (n_t := 32, n, n, n // 2 + 1))
vals = rng.standard_normal((4096, 3 * n))
w = rng.uniform(0, 1, 4096)
times = np.linspace(0, 0.1, n_t)
plan = get_plan(grid, times, 16)
forcing = (rng.standard_normal((n_t, 3) + grid.shape) + 0j)

cases = {
    "shell_weights": lambda: prof.block(2, rho),
    "weighted_power_sum": lambda: _kernels.weighted_power_sum(vals, w, 3.0),
    "duhamel_integrate": lambda: plan.integrate(forcing),
}
out = {"backend": _kernels.BACKEND}
for name, fn in cases.items():
    fn()  # warm-up (includes JIT compile on the numba path)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run_backend(backend, n, repeat):
    env = dict(os.environ, HALLMILD_KERNELS=backend)
    res = subprocess.run(
        [sys.executable, "-c", WORKER, str(n), str(repeat)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rows = {b: run_backend(b, args.n, args.repeat) for b in ("numpy", "numba")}
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name in ("shell_weights", "weighted_power_sum", "duhamel_integrate"):
        a, b = rows["numpy"][name], rows["numba"][name]
        print(f"{name:<22}{a:>12.4f}{b:>12.4f}{a / b:>10.2f}")


if __name__ == "__main__":
    main()
