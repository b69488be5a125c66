"""Slow-but-sure reference computations used by tests and trace columns.

Everything here is deliberately independent of the production code paths it
checks: the eigensolver is an in-repo cyclic Jacobi (compiled kernel when the
extension built, pure NumPy otherwise), the second moment is exhaustive mask
enumeration, and derivatives come from central finite differences. Intended
for N up to a few dozen; performance is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    from specmix._jacobi_c import jacobi_sweeps as _jacobi_sweeps

    JACOBI_BACKEND = "compiled"
except ImportError:  # extension not built on this install
    from specmix._jacobi_py import jacobi_sweeps as _jacobi_sweeps

    JACOBI_BACKEND = "pure"

_SYM_TOL = 1e-12
_JACOBI_TOL = 1e-15
_MAX_SWEEPS = 40


class OracleError(ValueError):
    """Input outside the reference implementation's contract."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Full symmetric eigendecomposition, eigenvalues descending by value.

    Columns of ``eigenvectors`` match ``eigenvalues`` index-for-index and are
    orthonormal; ``matrix = Q diag(w) Q^T`` to roughly machine precision.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def eig_sym(s: np.ndarray, backend: str | None = None) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    ``backend`` forces "compiled" or "pure" (used by the benchmark and the
    backend-agreement tests); default is whatever imported.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise OracleError("expected a square matrix")
    if not np.all(np.isfinite(s)):
        raise OracleError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(s).max()))
    if np.abs(s - s.T).max() > _SYM_TOL * scale:
        raise OracleError("matrix is not symmetric to 1e-12")

    n = s.shape[0]
    if n == 1:
        return EigenDecomposition(s[0].copy(), np.ones((1, 1)))

    work = np.ascontiguousarray(0.5 * (s + s.T))
    q = np.eye(n)
    if backend is None:
        sweeps = _jacobi_sweeps(work, q, _JACOBI_TOL, _MAX_SWEEPS)
    elif backend == "compiled":
        from specmix._jacobi_c import jacobi_sweeps

        sweeps = jacobi_sweeps(work, q, _JACOBI_TOL, _MAX_SWEEPS)
    elif backend == "pure":
        from specmix._jacobi_py import jacobi_sweeps

        sweeps = jacobi_sweeps(work, q, _JACOBI_TOL, _MAX_SWEEPS)
    else:
        raise OracleError(f"unknown backend {backend!r}")
    if sweeps < 0:
        raise OracleError("Jacobi iteration did not converge")

    w = np.diag(work).copy()
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(w[order], q[:, order])


def rho_nontrivial(s: np.ndarray) -> float:
    """Largest |eigenvalue| of ``s`` excluding the consensus eigenpair.

    The consensus eigenpair is identified by eigenvector alignment with
    1/sqrt(N) rather than by its eigenvalue, so the result stays correct when
    a second eigenvalue sits numerically at 1.
    """
    dec = eig_sym(s)
    n = s.shape[0]
    if n == 1:
        return 0.0
    ones = np.full(n, 1.0 / np.sqrt(n))
    align = np.abs(dec.eigenvectors.T @ ones)
    consensus = int(np.argmax(align))
    rest = np.delete(dec.eigenvalues, consensus)
    return float(np.abs(rest).max())


def enumerate_second_moment(a: np.ndarray, q: np.ndarray, max_links: int = 20) -> np.ndarray:
    """Exact E[P^2] by summing over every realizable link mask.

    Pairs with q strictly between 0 and 1 are enumerated (2^m terms); pairs
    at 0 or 1 are deterministic. Rejects instances with more than
    ``max_links`` stochastic pairs.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    n = a.shape[0]
    stochastic = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if 0.0 < q[i, j] < 1.0
    ]
    if len(stochastic) > max_links:
        raise OracleError(
            f"{len(stochastic)} stochastic links exceed the enumeration budget of {max_links}"
        )

    base = (q >= 1.0).astype(float)
    np.fill_diagonal(base, 0.0)
    total = np.zeros((n, n))
    for combo in range(1 << len(stochastic)):
        mask = base.copy()
        prob = 1.0
        for bit, (i, j) in enumerate(stochastic):
            if combo >> bit & 1:
                mask[i, j] = mask[j, i] = 1.0
                prob *= q[i, j]
            else:
                prob *= 1.0 - q[i, j]
        p = _mixing_from_mask(a, mask)
        total += prob * (p @ p)
    return total


def _mixing_from_mask(a: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # Plain-loop rendition of P = I + A .* M - Diag(A M), kept independent of
    # the vectorized production assembly.
    n = a.shape[0]
    p = np.zeros((n, n))
    for i in range(n):
        row_drain = 0.0
        for k in range(n):
            if k != i:
                row_drain += a[i, k] * mask[k, i]
        for j in range(n):
            if i == j:
                p[i, j] = 1.0 - row_drain
            else:
                p[i, j] = a[i, j] * mask[i, j]
    return p


def _expected_mixing_loops(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    p = np.zeros((n, n))
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j != i:
                p[i, j] = a[i, j] * q[i, j]
                acc += a[i, j] * q[i, j]
        p[i, i] = 1.0 - acc
    return p


def finite_diff_rho(a: np.ndarray, q: np.ndarray, epsilon: float = 1e-6) -> np.ndarray:
    """Central differences of the nontrivial spectral radius of the expected
    mixing matrix under symmetric pair perturbations of the weights.

    Entry (i, j) is half the directional derivative along
    dA = e_i e_j^T + e_j e_i^T, i.e. the per-entry convention of a gradient
    matrix G with d rho = <G, dA>. Diagonal entries are zero.
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    n = a.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            plus = a.copy()
            plus[i, j] += epsilon
            plus[j, i] += epsilon
            minus = a.copy()
            minus[i, j] -= epsilon
            minus[j, i] -= epsilon
            rho_plus = rho_nontrivial(_expected_mixing_loops(plus, q))
            rho_minus = rho_nontrivial(_expected_mixing_loops(minus, q))
            d = 0.5 * (rho_plus - rho_minus) / (2.0 * epsilon)
            out[i, j] = d
            out[j, i] = d
    return out
