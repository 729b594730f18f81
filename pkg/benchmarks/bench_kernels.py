"""Compare the compiled Allen-Cahn kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Reports the median time
per call and the speedup of the compiled backend for several grid sizes.
"""

import argparse
import timeit

import numpy as np

from transfold import _kernels_py

try:
    from transfold import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def _cases(m, rng):
    h = 1.0 / (m + 1)
    u = rng.uniform(-1, 1, m)
    v = rng.uniform(-1, 1, m)
    load, y, z = rng.uniform(-1, 1, m), rng.uniform(-0.1, 0.1, m), rng.uniform(-0.1, 0.1, m)
    return {
        "ac_residual": (u, 0.05, h, load, y, z),
        "ac_energy": (u, 0.05, h, load, y, z),
        "ac_hessian_diag": (u, 0.05, h, z),
        "ac_d2_dir": (u, v),
        "ac_d3": (u, v, h),
    }


def bench(fn, args, repeat):
    number = max(1, int(2e-3 / max(min(timeit.repeat(lambda: fn(*args), number=1, repeat=3)), 1e-9)))
    times = timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)
    return float(np.median(times)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="32,64,1024,16384")
    parser.add_argument("--repeat", type=int, default=7)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled kernels not built; only the numpy backend is available")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'m':>7}{'numpy [us]':>13}{'cython [us]':>13}{'speedup':>9}{'max |diff|':>12}")
    for m in (int(s) for s in args.sizes.split(",")):
        for name, call_args in _cases(m, rng).items():
            py, cy = getattr(_kernels_py, name), getattr(_kernels, name)
            diff = float(np.max(np.abs(np.asarray(py(*call_args)) - np.asarray(cy(*call_args)))))
            t_py, t_cy = bench(py, call_args, args.repeat), bench(cy, call_args, args.repeat)
            print(f"{name:<16}{m:>7}{t_py * 1e6:>13.2f}{t_cy * 1e6:>13.2f}{t_py / t_cy:>9.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
