"""Benchmark the compiled Jacobi kernel against the pure-NumPy fallback,
plus the Chebyshev estimator against plain power iteration.

Run:  python benchmarks/bench_eig.py
"""

import time

import numpy as np

from specmix import oracle
from specmix.mixing import expected_mixing
from specmix.spectral_opt import estimate_dominant_nontrivial, power_iteration_rho

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "tests"))
from conftest import random_link_stats, random_weights  # noqa: E402


def time_backend(backend: str, matrices, repeats: int) -> float:
    start = time.perf_counter()
    for _ in range(repeats):
        for s in matrices:
            oracle.eig_sym(s, backend=backend)
    return (time.perf_counter() - start) / (repeats * len(matrices))


def main() -> None:
    rng = np.random.default_rng(7)
    print(f"active backend: {oracle.JACOBI_BACKEND}")
    print(f"{'N':>4} {'compiled (ms)':>14} {'pure (ms)':>10} {'speedup':>8}")
    for n in (8, 22, 48):
        mats = []
        for _ in range(4):
            x = rng.standard_normal((n, n))
            mats.append(0.5 * (x + x.T))
        reps = 40 if n <= 22 else 10
        try:
            t_c = time_backend("compiled", mats, reps)
        except ImportError:
            print(f"{n:>4} {'unavailable':>14}")
            continue
        t_p = time_backend("pure", mats, max(2, reps // 10))
        print(f"{n:>4} {t_c * 1e3:>14.3f} {t_p * 1e3:>10.3f} {t_p / t_c:>8.1f}x")

    print("\nestimator vs power iteration (matrix-vector products to 1e-6):")
    rng = np.random.default_rng(11)
    rows = []
    trials = 0
    while len(rows) < 5 and trials < 200:
        trials += 1
        a = random_weights(22, rng)
        stats = random_link_stats(22, rng)
        p_bar = expected_mixing(a, stats)
        rho = oracle.rho_nontrivial(p_bar)
        est, diag = estimate_dominant_nontrivial(p_bar, seed=trials, full_output=True)
        if abs(est.eigenvalue - rho) > 1e-6:
            continue
        _, p_used, p_trace = power_iteration_rho(p_bar, seed=trials, max_matvecs=20000, tol=1e-14)
        p_hit = next((mv for mv, r in p_trace if abs(r - rho) <= 1e-6), p_used)
        rows.append((rho, est.iterations_used, p_hit))
    for rho, cheb, power in rows:
        print(f"  rho={rho:.4f}: chebyshev {cheb:>5}  power {power:>5}")


if __name__ == "__main__":
    main()
