"""Timing comparison of the hot kernels' numba and numpy backends.

Run:  python3 benchmarks/bench_kernels.py

Both backends compute bitwise-identical arrays (the kernels are pure
elementwise/lookup code), so this benchmark is only about speed.  The
numbers are per-call wall times on this machine; end-to-end effects are
visible through any CLI experiment run under EDP_NUMBA=0 vs EDP_NUMBA=1.
"""

import time

import numpy as np

from edp_gibbs._kernels import (
    _build_numba,
    _exceed_log_weights_np,
    _inside_window_np,
    _quantile_lookup_np,
)

REPEATS = 9


def best_ms(fn, *args):
    times = []
    for _ in range(REPEATS):
        start = time.perf_counter()
        fn(*args)
        times.append((time.perf_counter() - start) * 1e3)
    return min(times)


def main():
    rng = np.random.default_rng(0)
    u = rng.random(1 << 20)
    table = np.sort(rng.random(1 << 14))
    sums = rng.normal(32.0, 4.0, 1 << 20)
    samples = rng.normal(2.0, 0.5, (1 << 18, 8))

    cases = [
        ("quantile_lookup  (2^20 draws, 2^14 table)",
         _quantile_lookup_np, (u, table)),
        ("exceed_log_weights (2^20 sums)",
         _exceed_log_weights_np, (sums, 3.0, 32.0)),
        ("inside_window    (2^18 x 8 samples)",
         _inside_window_np, (samples, 1.0, 3.0)),
    ]

    try:
        numba_fns = _build_numba()
    except Exception as exc:  # pragma: no cover - machine-dependent
        print(f"numba backend unavailable ({exc}); nothing to compare")
        return

    for fn, (_, _, args) in zip(numba_fns, cases):
        fn(*args)  # JIT warm-up outside the timed region

    print(f"{'kernel':<45}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for (label, np_fn, args), nb_fn in zip(cases, numba_fns):
        t_np = best_ms(np_fn, *args)
        t_nb = best_ms(nb_fn, *args)
        print(f"{label:<45}{t_np:>10.3f}{t_nb:>10.3f}"
              f"{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
