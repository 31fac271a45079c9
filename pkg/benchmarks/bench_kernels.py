#!/usr/bin/env python3
"""Benchmark the sparse-product kernel: numba loop vs pure-numpy fallback.

The convolution of two sparse coefficient lists is the one hot inner loop
that is neither BLAS nor FFT bound; both backends are timed on coefficient
lists of increasing density and checked for bitwise-equal output.

Usage:
    python benchmarks/bench_kernels.py [--sizes 200 800 2400] [--repeat 5]
"""

import argparse
import time

import numpy as np

from airykam import _accel
from airykam.lattice import LatticeParams, get_enumeration


def random_operands(enum, jmax, n, seed):
    rng = np.random.default_rng(seed)
    ia = rng.integers(0, enum.size, n).astype(np.int64)
    ja = rng.integers(-jmax, jmax + 1, n).astype(np.int64)
    va = rng.normal(size=n) + 1j * rng.normal(size=n)
    return ia, ja, va


def time_kernel(kernel, args, shape, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        out = np.zeros(shape, dtype=complex)
        t0 = time.perf_counter()
        kernel(*args, out)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[200, 800, 2400])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--jmax", type=int, default=16)
    args = parser.parse_args()

    lat = LatticeParams(1.0, 2, 8.0)
    enum = get_enumeration(lat)
    conv = enum.conv_table()
    jmax = args.jmax
    shape = (enum.size, 2 * jmax + 1)

    kernels = [("numpy", _accel._convolve_numpy)]
    try:
        from numba import njit

        kernels.append(("numba", njit(cache=True)(_accel._convolve_loops)))
    except ImportError:
        print("numba not installed; timing the numpy fallback only")

    print(f"lattice M=2 K=8 ({enum.size} indices), jmax={jmax}, "
          f"best of {args.repeat}")
    header = f"{'pairs':>12} " + " ".join(f"{name:>12}" for name, _ in kernels)
    print(header)
    for n in args.sizes:
        A = random_operands(enum, jmax, n, 1)
        B = random_operands(enum, jmax, n, 2)
        call_args = (*A, *B, conv, jmax)
        row = [f"{n * n:>12d}"]
        outputs = []
        for _name, kernel in kernels:
            if _name == "numba":  # trigger compilation outside the timer
                warm = np.zeros(shape, dtype=complex)
                kernel(*call_args, warm)
            dt, out = time_kernel(kernel, call_args, shape, args.repeat)
            outputs.append(out)
            row.append(f"{dt * 1e3:>10.2f}ms")
        print(" ".join(row))
        scale = np.max(np.abs(outputs[0]))
        for out in outputs[1:]:
            if np.max(np.abs(out - outputs[0])) > 1e-13 * scale:
                raise AssertionError("backends disagree beyond final rounding")
    print("all backends agree to final rounding")


if __name__ == "__main__":
    main()
