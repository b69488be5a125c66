"""Pure-NumPy cyclic-Jacobi kernel, fallback for the compiled extension.

Same rotation schedule and stopping rule as specmix._jacobi_c so the two
backends agree to rounding. Row/column updates are vectorized per rotation;
per-eigensolve cost is higher than the compiled kernel by roughly two orders
of magnitude at N ~ 22 (see benchmarks/bench_eig.py).
"""

from __future__ import annotations

import math

import numpy as np


def jacobi_sweeps(a: np.ndarray, q: np.ndarray, tol: float, max_sweeps: int) -> int:
    """Diagonalize symmetric ``a`` in place, accumulating rotations into ``q``.

    Contract identical to the compiled kernel: returns sweeps used, or -1 on
    failure to converge.
    """
    n = a.shape[0]
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        return 0
    thresh = tol * fro
    skip = thresh / (n * n)

    for sweep in range(max_sweeps):
        off = math.sqrt(2.0) * float(np.linalg.norm(a[np.triu_indices(n, k=1)]))
        if off <= thresh:
            return sweep
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if abs(apr) <= skip:
                    continue
                theta = (a[r, r] - a[p, p]) / (2.0 * apr)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * cs

                col_p = a[:, p].copy()
                col_r = a[:, r].copy()
                a[:, p] = cs * col_p - sn * col_r
                a[:, r] = sn * col_p + cs * col_r
                row_p = a[p, :].copy()
                row_r = a[r, :].copy()
                a[p, :] = cs * row_p - sn * row_r
                a[r, :] = sn * row_p + cs * row_r
                qcol_p = q[:, p].copy()
                qcol_r = q[:, r].copy()
                q[:, p] = cs * qcol_p - sn * qcol_r
                q[:, r] = sn * qcol_p + cs * qcol_r

    off = math.sqrt(2.0) * float(np.linalg.norm(a[np.triu_indices(n, k=1)]))
    if off <= thresh:
        return max_sweeps
    return -1
