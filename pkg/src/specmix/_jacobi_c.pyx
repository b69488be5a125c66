# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled cyclic-Jacobi kernel for dense symmetric eigendecomposition.

Mirrors specmix._jacobi_py.jacobi_sweeps; the Python wrapper in
specmix.oracle picks whichever backend imported.
"""

from libc.math cimport fabs, sqrt


def jacobi_sweeps(double[:, ::1] a, double[:, ::1] q, double tol, int max_sweeps):
    """Diagonalize symmetric ``a`` in place, accumulating rotations into ``q``.

    ``a`` must be symmetric and ``q`` the identity on entry. On exit the
    diagonal of ``a`` holds eigenvalues and the columns of ``q`` the matching
    eigenvectors. Returns the number of sweeps used, or -1 if the
    off-diagonal mass did not drop below ``tol`` times the Frobenius norm
    within ``max_sweeps`` sweeps.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, r, c, i, sweep
    cdef double off, fro, apr, arr_, app, theta, t, cs, sn, akp, akr, qkp, qkr
    cdef double thresh

    fro = 0.0
    for r in range(n):
        for c in range(n):
            fro += a[r, c] * a[r, c]
    fro = sqrt(fro)
    if fro == 0.0:
        return 0
    thresh = tol * fro

    for sweep in range(max_sweeps):
        off = 0.0
        for r in range(n - 1):
            for c in range(r + 1, n):
                off += 2.0 * a[r, c] * a[r, c]
        off = sqrt(off)
        if off <= thresh:
            return sweep

        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if fabs(apr) <= thresh / (n * n):
                    continue
                app = a[p, p]
                arr_ = a[r, r]
                theta = (arr_ - app) / (2.0 * apr)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                cs = 1.0 / sqrt(1.0 + t * t)
                sn = t * cs

                for i in range(n):
                    akp = a[i, p]
                    akr = a[i, r]
                    a[i, p] = cs * akp - sn * akr
                    a[i, r] = sn * akp + cs * akr
                for i in range(n):
                    akp = a[p, i]
                    akr = a[r, i]
                    a[p, i] = cs * akp - sn * akr
                    a[r, i] = sn * akp + cs * akr
                for i in range(n):
                    qkp = q[i, p]
                    qkr = q[i, r]
                    q[i, p] = cs * qkp - sn * qkr
                    q[i, r] = sn * qkp + cs * qkr

    off = 0.0
    for r in range(n - 1):
        for c in range(r + 1, n):
            off += 2.0 * a[r, c] * a[r, c]
    if sqrt(off) <= thresh:
        return max_sweeps
    return -1
