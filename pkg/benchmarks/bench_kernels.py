"""Time the compiled and NumPy Crank-Nicolson kernels on identical problems.

    python benchmarks/bench_kernels.py [--points 20001] [--steps 200] [--repeat 3]
"""

import argparse
import time

import numpy as np

from catwell import _fallback, kernels
from catwell.params import DimensionlessSystem
from catwell.spectrum import GridSpec, build_hamiltonian


def setup(points, steps):
    grid = GridSpec(25.0, points)
    op = build_hamiltonian(DimensionlessSystem(r=1e-2, delta=0.1, lam=1.0), grid)
    psi = np.exp(-grid.q ** 2 / 2).astype(np.complex128)
    lams = np.linspace(0.98, 1.002, steps)
    return psi, op.base, op.drive, op.off, lams, 0.01


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        psi = args[0].copy()
        t0 = time.perf_counter()
        fn(psi, *args[1:])
        times.append(time.perf_counter() - t0)
    return min(times), psi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20001)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    prob = setup(args.points, args.steps)
    cells = args.points * args.steps
    t_py, psi_py = best_time(_fallback.cn_steps, prob, args.repeat)
    print(f"python    {t_py:9.4f} s  {cells / t_py / 1e6:8.2f} Mcell/s")
    if not kernels.has_compiled():
        print("compiled  not built (pip install -e . to build)")
        return
    t_c, psi_c = best_time(kernels.get_backend("compiled").cn_steps, prob, args.repeat)
    print(f"compiled  {t_c:9.4f} s  {cells / t_c / 1e6:8.2f} Mcell/s")
    print(f"speedup   {t_py / t_c:9.2f}x   max |diff| = {np.max(np.abs(psi_c - psi_py)):.2e}")


if __name__ == "__main__":
    main()
