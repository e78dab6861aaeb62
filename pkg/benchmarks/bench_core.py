"""Time the compiled core against the numpy fallback on simulation-sized inputs.

    python3 benchmarks/bench_core.py [--n 200] [--repeat 5]

Prints one row per routine with the best-of-``repeat`` time of each backend
and the speed-up. Both backends are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from resdens import _backend


def cases(n: int):
    rs = np.random.default_rng(0)
    x = np.sort(rs.uniform(-1, 1, n))
    y = 3 * x**2 + 2 * x + 1 + rs.normal(size=n)
    p = 100
    nodes = -1 + 2 * np.arange(1, p + 1) / p
    w = np.full(p, 2.0 / p)
    m = 3 * nodes**2 + 2 * nodes + 1
    pts = np.array([-1.0, 0.0, 1.0])
    return {
        "nw_loo": (x, y, 0.2, 0),
        "nw_at": (x, y, 0.2, 0, nodes),
        "kde_grid": (y - 3 * x**2 - 2 * x - 1, 0.6, 0, -5.0, 0.05, 201),
        "kde_points": (y - 3 * x**2 - 2 * x - 1, 0.6, 0, pts),
        "integral_grid": (x, y, nodes, w, m, 0.5, 0.5, 0, 1, -5.0, 0.05, 201),
        "integral_points": (x, y, nodes, w, m, 0.5, 0.5, 0, 1, pts),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _backend.BACKEND != "compiled":
        raise SystemExit("compiled extension not available; build with "
                         "`pip install -e . --no-build-isolation`")
    core, fb = _backend.core, _backend.fallback
    print(f"{'routine':<16}{'compiled (ms)':>15}{'fallback (ms)':>15}{'speed-up':>10}")
    for name, call_args in cases(args.n).items():
        a = getattr(core, name)(*call_args)
        b = getattr(fb, name)(*call_args)
        a0, b0 = (a[0], b[0]) if isinstance(a, tuple) else (a, b)
        np.testing.assert_allclose(np.asarray(a0), np.asarray(b0), rtol=1e-9, atol=1e-10)
        times = []
        for impl in (core, fb):
            fn = getattr(impl, name)
            timer = timeit.Timer(lambda: fn(*call_args))
            number, _ = timer.autorange()
            best = min(timer.repeat(args.repeat, number)) / number
            times.append(best * 1e3)
        print(f"{name:<16}{times[0]:>15.4f}{times[1]:>15.4f}{times[1] / times[0]:>9.1f}x")


if __name__ == "__main__":
    main()
