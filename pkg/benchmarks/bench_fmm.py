"""Time the compiled and pure-Python marching kernels on point-source grids.

    python3 benchmarks/bench_fmm.py --sizes 65 129 257 --repeat 3
"""
import argparse
import time

import numpy as np

from eikonal import fmm
from eikonal.grid import GridField


def problem(n):
    h = 2.0 / (n - 1)
    geom = GridField([-1.0, -1.0], [h, h], np.zeros((n, n)))
    return fmm.FmmProblem.point_sources(geom, [[0.0, 0.0]])


def best_time(p, backend, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fmm.solve_fmm(p, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[65, 129, 257])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = fmm.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'nodes':>8s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup  identical")
    for n in args.sizes:
        p = problem(n)
        times, fields = {}, {}
        for b in backends:
            times[b], fields[b] = best_time(p, b, args.repeat)
        row = f"{n * n:8d} " + " ".join(f"{times[b]:9.4f}s" for b in backends)
        if len(backends) == 2:
            same = np.array_equal(fields["cython"].values, fields["python"].values)
            row += f"   {times['python'] / times['cython']:7.1f}x  {same}"
        print(row)


if __name__ == "__main__":
    main()
