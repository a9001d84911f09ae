"""Compare the compiled and NumPy attack kernels.

    python benchmarks/bench_kernels.py [--n 27] [--k 3] [--crps 6400] [--epochs 200]

Times one loss/gradient pass and a fixed-length RProp run on random data
for each available backend and checks that both give the same answer.
"""
import argparse
import time

import numpy as np

from ferropuf import _core_py

try:
    from ferropuf import _core
except ImportError:
    _core = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=27)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--crps", type=int, default=6400)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    phi = np.hstack([1.0 - 2.0 * rng.integers(0, 2, (args.crps, args.n)),
                     np.ones((args.crps, 1))])
    signs = 1.0 - 2.0 * rng.integers(0, 2, args.crps)
    w0 = rng.normal(size=(args.k, args.n + 1))
    # patience = epochs so every backend runs the full length
    fit_args = (1.2, 0.5, 0.1, 1e-6, 50.0, args.epochs, args.epochs)

    backends = {"numpy": _core_py}
    if _core is not None:
        backends["cython"] = _core
    else:
        print("compiled extension not built; timing the NumPy backend only")

    print(f"n={args.n} k={args.k} crps={args.crps} epochs={args.epochs}")
    print(f"{'backend':8s} {'loss+grad [ms]':>15s} {'rprop [s]':>10s}")
    results = {}
    for name, impl in backends.items():
        t_grad, lg = best_of(lambda: impl.xor_loss_grad(phi, signs, w0), args.repeat)
        t_fit, fit = best_of(lambda: impl.rprop_fit(phi, signs, w0, *fit_args), 1)
        results[name] = (t_grad, t_fit, lg, fit)
        print(f"{name:8s} {1e3 * t_grad:15.3f} {t_fit:10.3f}")

    if len(results) == 2:
        (g_py, f_py, lg_py, fit_py), (g_cy, f_cy, lg_cy, fit_cy) = results.values()
        same = (np.isclose(lg_py[0], lg_cy[0], rtol=1e-12)
                and np.allclose(lg_py[1], lg_cy[1], rtol=1e-10, atol=1e-14)
                and fit_py[1:3] == fit_cy[1:3])
        print(f"speedup: loss+grad x{g_py / g_cy:.1f}, rprop x{f_py / f_cy:.1f}; "
              f"results agree: {same}")


if __name__ == "__main__":
    main()
