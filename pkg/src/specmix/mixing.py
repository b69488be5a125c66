"""Realized and expected mixing matrices induced by aggregation weights and
link statistics, plus the second moment E[P^2] that drives the convergence
bound.

Dense float64 storage throughout; desk scale tops out at a few hundred nodes
and clarity wins over sparsity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from specmix import oracle
from specmix.linkmodel import LinkMask, LinkStats, _mask_from_uniforms, _pair_uniforms

ROW_SUM_TOL = 1e-9


class MixingError(ValueError):
    """Invalid aggregation weights or dimension mismatch."""


@dataclass(frozen=True)
class AggregationMatrix:
    """Symmetric doubly stochastic weight matrix A.

    Row sums must be 1 within 1e-9 and entries nonnegative; symmetry is
    required exactly (callers assemble symmetrically).
    """

    a: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise MixingError("weights must be square")
        if not np.all(np.isfinite(a)):
            raise MixingError("weights have non-finite entries")
        if np.abs(a - a.T).max() > 0.0:
            raise MixingError("weights must be symmetric")
        if a.min() < -0.0:
            raise MixingError("weights must be nonnegative")
        residual = np.abs(a.sum(axis=1) - 1.0).max()
        if residual > ROW_SUM_TOL:
            raise MixingError(f"row sums deviate from 1 by {residual:.3e}")
        object.__setattr__(self, "a", a)

    @property
    def node_count(self) -> int:
        return self.a.shape[0]


def uniform_weights(node_count: int) -> AggregationMatrix:
    """The link-agnostic uniform weights A = (1/N) 11^T."""
    return AggregationMatrix(np.full((node_count, node_count), 1.0 / node_count))


@dataclass(frozen=True)
class MixingRealization:
    """Mixing matrix for one sampled topology."""

    p: np.ndarray
    mask: LinkMask


@dataclass(frozen=True)
class ExpectedMixing:
    """First and second moments of the mixing matrix with their provenance.

    Analytic moments must be doubly stochastic to 1e-9; Monte Carlo ones get
    a sampling-noise allowance of 3/sqrt(samples).
    """

    p_bar: np.ndarray
    p2_bar: np.ndarray
    provenance: str  # "analytic" or "monte_carlo(<samples>)"

    def __post_init__(self) -> None:
        if self.provenance == "analytic":
            tol = ROW_SUM_TOL
        elif self.provenance.startswith("monte_carlo(") and self.provenance.endswith(")"):
            samples = int(self.provenance[len("monte_carlo(") : -1])
            tol = 3.0 / np.sqrt(samples)
        else:
            raise MixingError(f"unknown provenance {self.provenance!r}")
        for name, mat in (("p_bar", self.p_bar), ("p2_bar", self.p2_bar)):
            if np.abs(mat - mat.T).max() > tol:
                raise MixingError(f"{name} must be symmetric within {tol}")
            if np.abs(mat.sum(axis=1) - 1.0).max() > tol:
                raise MixingError(f"{name} rows must sum to 1 within {tol}")


def realize_mixing(a: AggregationMatrix, mask: LinkMask) -> MixingRealization:
    """P = I + A .* M - Diag(A M): fuse along live links, keep the rest.

    Diag keeps the diagonal of the product A M, so each row gives away
    exactly the mass it receives and row sums stay at 1. Assembly mirrors
    the upper triangle, making P bitwise symmetric.
    """
    m = mask.m
    if m.shape != a.a.shape:
        raise MixingError("mask and weights dimension mismatch")
    mf = m.astype(float)
    off = np.triu(a.a * mf, k=1)
    off = off + off.T
    p = off.copy()
    np.fill_diagonal(p, 1.0 - off.sum(axis=1))
    return MixingRealization(p=p, mask=mask)


def expected_mixing(a: AggregationMatrix, stats: LinkStats) -> np.ndarray:
    """Entrywise expectation of P: a_ij q_ij off the diagonal, rows top up to 1."""
    if stats.q.shape != a.a.shape:
        raise MixingError("stats and weights dimension mismatch")
    off = a.a * stats.q
    np.fill_diagonal(off, 0.0)
    off = np.triu(off, k=1)
    off = off + off.T
    p_bar = off.copy()
    np.fill_diagonal(p_bar, 1.0 - off.sum(axis=1))
    return p_bar


def _fluctuation_laplacian(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Sum over unordered pairs of 2 a_ij^2 q_ij (1-q_ij) (e_i-e_j)(e_i-e_j)^T,
    # written as the graph Laplacian of the per-link variance weights.
    w = 2.0 * (a * a) * q * (1.0 - q)
    np.fill_diagonal(w, 0.0)
    return np.diag(w.sum(axis=1)) - w


def second_moment_analytic(a: AggregationMatrix, stats: LinkStats) -> np.ndarray:
    """Exact E[P^2] under independent links.

    Expanding (I + S)^2 with S the random off-diagonal exchange term and
    using E[m_ij^2] = E[m_ij] = q_ij gives
    E[P^2] = P_bar^2 + sum over pairs of 2 a_ij^2 q_ij (1 - q_ij) times the
    pair Laplacian. The correction term is exactly the covariance each link
    indicator contributes to itself; cross terms factor by independence.
    """
    p_bar = expected_mixing(a, stats)
    return p_bar @ p_bar + _fluctuation_laplacian(a.a, stats.q)


def second_moment_monte_carlo(
    a: AggregationMatrix,
    stats: LinkStats,
    sample_count: int,
    seed: int,
    chunk: int = 4096,
) -> np.ndarray:
    """Mean of P^2 over sampled masks, deterministic per seed.

    Masks come from the same (seed, draw-index) stream partitioning as
    sample_mask, chunked to bound memory.
    """
    if sample_count < 1:
        raise MixingError("sample_count must be at least 1")
    n = a.node_count
    total = np.zeros((n, n))
    done = 0
    block = 0
    while done < sample_count:
        take = min(chunk, sample_count - done)
        u = _pair_uniforms(n, seed, block, draws=take)
        for row in u:
            mask = LinkMask(m=_mask_from_uniforms(stats.q, row), round_index=done)
            p = realize_mixing(a, mask).p
            total += p @ p
            done += 1
        block += 1
    return total / sample_count


def expected_moments(
    a: AggregationMatrix,
    stats: LinkStats,
    monte_carlo_samples: int | None = None,
    seed: int = 0,
) -> ExpectedMixing:
    """Bundle P_bar with E[P^2], analytic by default."""
    p_bar = expected_mixing(a, stats)
    if monte_carlo_samples is None:
        return ExpectedMixing(p_bar=p_bar, p2_bar=second_moment_analytic(a, stats), provenance="analytic")
    p2 = second_moment_monte_carlo(a, stats, monte_carlo_samples, seed)
    return ExpectedMixing(p_bar=p_bar, p2_bar=p2, provenance=f"monte_carlo({monte_carlo_samples})")


def deviation_norm(a: AggregationMatrix, stats: LinkStats) -> float:
    """Spectral norm of Delta = E[P^2] - P_bar^2.

    Delta is the positive semidefinite fluctuation Laplacian, so its spectral
    norm is its largest eigenvalue, computed by the reference eigensolver.
    """
    delta = _fluctuation_laplacian(a.a, stats.q)
    return float(oracle.eig_sym(delta).eigenvalues[0])
