"""Time each hot kernel on its numba and pure-numpy paths.

Usage: python benchmarks/bench_kernels.py [--repeat N]

The numba variants are warmed up once first so compilation is not timed.
"""

import argparse
import time

import numpy as np

from penabc import kernels


def workloads(rng):
    return {
        # one reference-table chunk of AR(2) series
        "ar2_filter": (rng.standard_normal((1000, 100)), rng.uniform(-0.5, 0.5, (1000, 2)),
                       rng.standard_normal((1000, 2))),
        # a g-and-k data set
        "gandk_invert": (rng.normal(3, 2, 1000), 3.0, 1.0, 2.0, 0.5, 0.8),
        # PEN-2 latents for a batch of 256 AR(2) series
        "kahan_pool": (rng.standard_normal((256, 98, 10)),),
        "ecdf_rows": (rng.standard_normal((500, 1000)), np.linspace(-10, 50, 100)),
        # a coarse MA(2) grid
        "ma2_loglik_batch": (rng.standard_normal(100), rng.uniform(-0.5, 0.5, (5000, 2)), 0.09),
    }


def best_time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    data = workloads(np.random.default_rng(0))
    print(f"{'kernel':<18} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, (nb_fn, np_fn) in kernels.KERNELS.items():
        t_np = best_time(np_fn, data[name], args.repeat)
        if nb_fn is None:
            print(f"{name:<18} {1e3 * t_np:>10.2f} {'n/a':>10} {'':>8}")
            continue
        nb_fn(*data[name])
        t_nb = best_time(nb_fn, data[name], args.repeat)
        print(f"{name:<18} {1e3 * t_np:>10.2f} {1e3 * t_nb:>10.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
