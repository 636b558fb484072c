"""Time the numba kernels against their numpy twins and check they agree.

    python benchmarks/bench_kernels.py [--hours 8760] [--repeat 5]
"""
import argparse
import time

import numpy as np

from proxycal import kernels


def _best(fn, args, repeat):
    fn(*args)  # warm-up (includes JIT compile on the numba side)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def _same(a, b):
    a, b = (a if isinstance(a, tuple) else (a,)), (b if isinstance(b, tuple) else (b,))
    return all(np.allclose(x, y, rtol=1e-12, atol=1e-12, equal_nan=True) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hours", type=int, default=8760, help="series length in hours")
    ap.add_argument("--window", type=int, default=72, help="trailing window length")
    ap.add_argument("--repeat", type=int, default=5, help="timed repetitions (best is reported)")
    ap.add_argument("--seed", type=int, default=0, help="RNG seed")
    args = ap.parse_args(argv)

    if kernels.numba is None:
        print("numba not importable; nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)
    y = rng.gamma(3.0, 6.0, args.hours)
    z = 1.2 * y + rng.normal(0, 2, args.hours)
    y[rng.random(args.hours) < 0.05] = np.nan
    pooled = np.sort(np.round(rng.normal(0, 1, 20), 1))

    cases = [
        ("window_moments", (y, z, args.window, 1)),
        ("window_ks", (y, z, args.window, 1)),
        ("ks_exact_sf", (pooled, 9, 60)),
    ]
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  agree")
    ok = True
    for name, fargs in cases:
        t_np, r_np = _best(getattr(kernels, f"{name}_numpy"), fargs, args.repeat)
        t_nb, r_nb = _best(getattr(kernels, f"{name}_numba"), fargs, args.repeat)
        agree = _same(r_np, r_nb)
        ok &= agree
        print(f"{name:<16}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x  {agree}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
