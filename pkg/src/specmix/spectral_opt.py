"""Spectral minimization of the expected mixing matrix's nontrivial radius.

The objective rho(P_bar) = max(lambda_2, -lambda_N) is driven down by
subgradient steps on the aggregation weights. Each iteration estimates the
dominant nontrivial eigenvector with a Chebyshev-filtered three-term
recurrence on the deflated matrix, forms the closed-form subgradient from
eigenvector differences and link reliabilities, steps, and restores the
symmetric doubly stochastic structure by alternating symmetrization with row
normalization.

The filter runs the recurrence v_k = 2 T v_{k-1} - v_{k-2} on
T = (2 P_tilde - (mu + nu) I) / (mu - nu), renormalizing each step. For the
recurrence to amplify the target, the interval [nu, mu] must bracket the
unwanted spectrum while the target eigenvalue sits outside it; when no
bounds are supplied the interval is re-estimated at every restart from a
small Rayleigh-Ritz projection (current iterate, residual, previous
iterate), with the Gershgorin bound of the deflated matrix as the fixed
lower edge and a cluster rule that keeps near-degenerate dominant
eigenvalues jointly outside the interval. Fixed user bounds are honored
verbatim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from specmix import oracle
from specmix.linkmodel import LinkStats
from specmix.mixing import AggregationMatrix, expected_mixing


class SpectralOptError(ValueError):
    """Invalid configuration or input for the spectral optimizer."""


class EstimateNonConvergence(RuntimeError):
    """Successive Rayleigh quotients still moving after the iteration budget."""


class OptimizationDiverged(RuntimeError):
    """Traced spectral radius exceeded 1 beyond tolerance."""


class DegenerateRowError(RuntimeError):
    """A weight row summed to zero before normalization (isolated node)."""


@dataclass(frozen=True)
class ChebyshevConfig:
    """Settings for the eigenvector estimator.

    ``mu``/``nu`` fix the filter interval when given (both or neither);
    ``iterations`` is the per-branch matrix-vector product budget.
    ``normalization`` is "exact" (global norm) or "gossip" (each node
    rescales by a consensus-averaged estimate of the norm, run for
    ``gossip_rounds`` averaging rounds; quantifies the fidelity gap of
    distributed normalization).

    A run stops early once successive Rayleigh quotients move less than
    ``tol`` or the eigen-residual certifies accuracy ``resid_tol``; it
    signals non-convergence only when the Rayleigh quotient still moves by
    more than ``fail_tol`` at the end of the budget. Nearly coalesced top
    eigenvalues (routine near the optimizer's minimizers) make the last
    Rayleigh digits crawl, so the failure threshold is deliberately looser
    than the early-stop one.
    """

    mu: float | None = None
    nu: float | None = None
    iterations: int = 400
    normalization: str = "exact"
    gossip_rounds: int = 16
    block: int = 10
    tol: float = 1e-10
    resid_tol: float = 1e-8
    fail_tol: float = 1e-3

    def __post_init__(self) -> None:
        if (self.mu is None) != (self.nu is None):
            raise SpectralOptError("mu and nu must be supplied together")
        if self.mu is not None and not (self.mu > self.nu):
            raise SpectralOptError("requires mu > nu")
        if self.iterations < 2:
            raise SpectralOptError("iterations must be at least 2")
        if self.normalization not in ("exact", "gossip"):
            raise SpectralOptError("normalization must be 'exact' or 'gossip'")
        if self.gossip_rounds < 0:
            raise SpectralOptError("gossip_rounds must be nonnegative")
        if self.block < 2:
            raise SpectralOptError("block must be at least 2")
        if self.tol <= 0.0 or self.resid_tol <= 0.0 or self.fail_tol <= 0.0:
            raise SpectralOptError("tolerances must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for the subgradient driver."""

    step_size: float = 0.1
    max_iterations: int = 300
    restoration_sweeps: int = 50
    convergence_tol: float = 0.0

    def __post_init__(self) -> None:
        if self.step_size <= 0.0:
            raise SpectralOptError("step_size must be positive")
        if self.max_iterations < 0:
            raise SpectralOptError("max_iterations must be nonnegative")
        if self.restoration_sweeps < 1:
            raise SpectralOptError("restoration_sweeps must be at least 1")
        if self.convergence_tol < 0.0:
            raise SpectralOptError("convergence_tol must be nonnegative")


@dataclass(frozen=True)
class SpectralEstimate:
    """Estimated dominant nontrivial eigenpair of an expected mixing matrix.

    ``eigenvalue`` is the nontrivial spectral radius estimate
    max(lambda_2, -lambda_N); the signed eigenvalue is +eigenvalue on the
    lambda2 branch and -eigenvalue on the lambdaN branch.
    ``iterations_used`` counts matrix-vector products across the branch runs
    (the second branch is skipped when a spectral bound already rules it
    out).
    """

    eigenvector: np.ndarray
    eigenvalue: float
    active_branch: str
    iterations_used: int

    def __post_init__(self) -> None:
        v = np.asarray(self.eigenvector, dtype=float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise SpectralOptError("eigenvector must be unit norm within 1e-9")
        if abs(float(v.sum())) / math.sqrt(v.size) > 1e-6:
            raise SpectralOptError("eigenvector must be orthogonal to the consensus direction")
        if self.active_branch not in ("lambda2", "lambdaN"):
            raise SpectralOptError("active_branch must be 'lambda2' or 'lambdaN'")
        object.__setattr__(self, "eigenvector", v)


@dataclass
class _BranchRun:
    rayleigh: float
    vector: np.ndarray
    matvecs: int
    trace: list[tuple[int, float]]
    converged: bool
    last_diff: float = 0.0


def _seed_list(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def _start_vector(n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(_seed_list(seed) + [0xE16])
    v = rng.standard_normal(n)
    v -= v.mean()
    nv = np.linalg.norm(v)
    if nv == 0.0:  # vanishing after deflation; deterministic fallback
        v = np.zeros(n)
        v[0], v[-1] = 1.0, -1.0
        nv = np.linalg.norm(v)
    return v / nv


def _deflate(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def _gossip_norm_estimate(v: np.ndarray, averaging: np.ndarray, rounds: int) -> np.ndarray:
    # Each node gossips its squared entry; after enough rounds every node
    # holds ~ ||v||^2 / N. Per-node square roots then approximate the norm.
    x = v * v
    for _ in range(rounds):
        x = averaging @ x
    x = np.maximum(x * v.size, 1e-300)
    return np.sqrt(x)


def _chebyshev_branch(
    m: np.ndarray,
    v0: np.ndarray,
    cfg: ChebyshevConfig,
    averaging: np.ndarray,
) -> _BranchRun:
    n = m.shape[0]
    budget = cfg.iterations

    def renorm(cur: np.ndarray, prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # Both recurrence states share the scaling so the iterate keeps
        # tracking the Chebyshev polynomial direction.
        if cfg.normalization == "gossip":
            scale = _gossip_norm_estimate(cur, averaging, cfg.gossip_rounds)
        else:
            scale = np.linalg.norm(cur)
            if scale == 0.0:
                scale = 1.0
        return cur / scale, prev / scale

    diag = np.diag(m)
    radii = np.abs(m).sum(axis=1) - np.abs(diag)
    gersh_low = float((diag - radii).min())
    gersh_up = float((diag + radii).max())
    span0 = gersh_up - gersh_low

    v = _deflate(v0.copy())
    v /= np.linalg.norm(v)
    mv = m @ v
    matvecs = 1
    r = float(v @ mv)
    trace = [(matvecs, r)]

    if span0 <= 1e-13:  # spectrum numerically a point (e.g. fully uniform mixing)
        return _BranchRun(r, v, matvecs, trace, True)

    if cfg.mu is not None:
        return _fixed_interval_branch(m, v, mv, r, cfg, renorm, trace, matvecs)

    converged = False
    last_diff = math.inf
    v_old: np.ndarray | None = None
    mv_old: np.ndarray | None = None
    # Chebyshev amplification is cosh(degree * arccosh(t)), so short blocks
    # forfeit the superlinear regime on small gaps; double the filter degree
    # each restart, capped so one block cannot eat the whole budget.
    block = cfg.block
    while matvecs + 3 <= budget:
        resid = mv - r * v
        resid_norm = float(np.linalg.norm(resid))
        if resid_norm <= cfg.resid_tol * max(1.0, abs(r)):
            # |rayleigh - nearest eigenvalue| <= residual norm for unit v
            converged = True
            last_diff = 0.0
            break
        u = resid / resid_norm
        mu_vec = m @ u
        matvecs += 1
        # Rayleigh-Ritz on span{v, residual, previous iterate}; the previous
        # iterate's product is cached, so the third direction is free. The
        # filter interval's top edge is the largest Ritz value clearly below
        # the dominant one: Ritz values inside the cluster width belong to a
        # (near-)degenerate dominant eigenspace the iteration converges into
        # jointly, and aiming the interval at them would stall the filter.
        basis = [v, u]
        products = [mv, mu_vec]
        if v_old is not None:
            w = v_old - float(v_old @ v) * v - float(v_old @ u) * u
            wn = float(np.linalg.norm(w))
            if wn > 1e-8:
                mw = (mv_old - float(v_old @ v) * mv - float(v_old @ u) * mu_vec) / wn
                basis.append(w / wn)
                products.append(mw)
        dim = len(basis)
        h = np.empty((dim, dim))
        for row in range(dim):
            for col in range(row, dim):
                h[row, col] = h[col, row] = float(basis[row] @ products[col])
        ritz = np.sort(np.linalg.eigvalsh(0.5 * (h + h.T)))[::-1]
        cluster_width = 5e-3 * span0
        below = ritz[1:][ritz[0] - ritz[1:] > cluster_width]
        guard = 1e-12 * span0
        runner_up = float(below[0]) if below.size else r - guard
        v_old, mv_old = v, mv
        mu_f = min(max(runner_up, gersh_low + guard), r - guard)
        nu_f = gersh_low
        if mu_f - nu_f <= 1e-13:
            converged = True
            last_diff = 0.0
            break
        center = 0.5 * (mu_f + nu_f)
        half = 0.5 * (mu_f - nu_f)

        prev = v
        cur = _deflate((mv - center * v) / half)
        cur, prev = renorm(cur, prev)
        steps = max(0, min(block - 1, budget - matvecs - 1))
        for _ in range(steps):
            # re-deflation keeps rounding noise along the consensus direction
            # from being amplified when the filter interval sits far from 0
            nxt = _deflate(2.0 * ((m @ cur) - center * cur) / half - prev)
            matvecs += 1
            cur, prev = renorm(nxt, cur)
        block = min(2 * block, 96)

        v = _deflate(cur)
        v /= np.linalg.norm(v)
        mv = m @ v
        matvecs += 1
        r_new = float(v @ mv)
        trace.append((matvecs, r_new))
        last_diff = abs(r_new - r)
        r = r_new
        if last_diff < cfg.tol:
            converged = True
            break

    if not converged and last_diff <= cfg.fail_tol:
        converged = True
    return _BranchRun(r, v, matvecs, trace, converged, last_diff)


def _fixed_interval_branch(m, v, mv, r, cfg, renorm, trace, matvecs) -> _BranchRun:
    center = 0.5 * (cfg.mu + cfg.nu)
    half = 0.5 * (cfg.mu - cfg.nu)
    prev = v
    cur = _deflate((mv - center * v) / half)
    cur, prev = renorm(cur, prev)
    converged = False
    last_diff = math.inf
    while matvecs + cfg.block + 1 <= cfg.iterations:
        for _ in range(cfg.block):
            nxt = _deflate(2.0 * ((m @ cur) - center * cur) / half - prev)
            matvecs += 1
            cur, prev = renorm(nxt, cur)
        probe = _deflate(cur)
        norm = np.linalg.norm(probe)
        if norm == 0.0:
            break
        probe = probe / norm
        r_new = float(probe @ (m @ probe))
        matvecs += 1
        trace.append((matvecs, r_new))
        last_diff = abs(r_new - r)
        r = r_new
        if last_diff < cfg.tol:
            converged = True
            break
    if not converged and last_diff <= cfg.fail_tol:
        converged = True
    final = _deflate(cur)
    norm = np.linalg.norm(final)
    if norm > 0.0:
        final = final / norm
    else:
        final = v
    return _BranchRun(r, final, matvecs, trace, converged, last_diff)


def _validate_expected_mixing(p_bar: np.ndarray) -> np.ndarray:
    p_bar = np.asarray(p_bar, dtype=float)
    if p_bar.ndim != 2 or p_bar.shape[0] != p_bar.shape[1]:
        raise SpectralOptError("expected mixing matrix must be square")
    if not np.all(np.isfinite(p_bar)):
        raise SpectralOptError("expected mixing matrix has non-finite entries")
    if np.abs(p_bar - p_bar.T).max() > 1e-9:
        raise SpectralOptError("expected mixing matrix must be symmetric")
    if np.abs(p_bar.sum(axis=1) - 1.0).max() > 1e-6:
        raise SpectralOptError("expected mixing matrix rows must sum to 1")
    return p_bar


def estimate_dominant_nontrivial(
    p_bar: np.ndarray,
    cfg: ChebyshevConfig | None = None,
    seed=0,
    full_output: bool = False,
):
    """Estimate the dominant nontrivial eigenpair of a symmetric doubly
    stochastic matrix.

    Runs the filtered recurrence on the deflated matrix and on its negation,
    then keeps the branch with the larger Rayleigh magnitude (ties go to the
    lambda2 branch). With ``full_output`` also returns the per-branch
    (matvec count, Rayleigh) traces for benchmarking.
    """
    cfg = cfg if cfg is not None else ChebyshevConfig()
    p_bar = _validate_expected_mixing(p_bar)
    n = p_bar.shape[0]
    ptilde = p_bar - 1.0 / n

    v0 = _start_vector(n, seed)
    plus = _chebyshev_branch(ptilde, v0, cfg, p_bar)
    # Gershgorin certificate: the lambdaN branch value -lambda_N is at most
    # -(lower Gershgorin bound); when that cannot beat the lambda2 branch's
    # (under)estimate, the second recurrence is provably redundant.
    diag = np.diag(ptilde)
    gersh_low = float((diag - (np.abs(ptilde).sum(axis=1) - np.abs(diag))).min())
    if -gersh_low <= plus.rayleigh:
        minus = None
    else:
        minus = _chebyshev_branch(-ptilde, v0, cfg, p_bar)

    if minus is not None and abs(minus.rayleigh) > abs(plus.rayleigh):
        winner, branch = minus, "lambdaN"
    else:
        winner, branch = plus, "lambda2"
    if not winner.converged:
        raise EstimateNonConvergence(
            f"Rayleigh quotient still moving by {winner.last_diff:.3e} after "
            f"{winner.matvecs} matrix-vector products"
        )

    v = _deflate(winner.vector)
    v /= np.linalg.norm(v)
    est = SpectralEstimate(
        eigenvector=v,
        eigenvalue=abs(winner.rayleigh),
        active_branch=branch,
        iterations_used=plus.matvecs + (0 if minus is None else minus.matvecs),
    )
    if full_output:
        return est, {"lambda2": plus, "lambdaN": minus}
    return est


def power_iteration_rho(
    p_bar: np.ndarray,
    seed=0,
    max_matvecs: int = 20000,
    tol: float = 1e-12,
) -> tuple[float, int, list[tuple[int, float]]]:
    """Plain power iteration on the deflated matrix; comparison baseline.

    Returns (radius estimate, matvecs used, trace of (matvecs, |Rayleigh|)).
    """
    p_bar = _validate_expected_mixing(p_bar)
    n = p_bar.shape[0]
    ptilde = p_bar - 1.0 / n
    v = _start_vector(n, seed)
    trace: list[tuple[int, float]] = []
    r_prev = math.inf
    r = 0.0
    for k in range(1, max_matvecs + 1):
        w = ptilde @ v
        r = float(v @ w)
        trace.append((k, abs(r)))
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0, k, trace
        v = _deflate(w / norm)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return abs(r), k, trace
        v /= nv
        if abs(r - r_prev) < tol:
            break
        r_prev = r
    return abs(r), len(trace), trace


def surrogate_operator(a: AggregationMatrix, stats: LinkStats) -> np.ndarray:
    """Linear operator R(A) = I + (1/2) sum_ij a_ij E_ij.

    E_ij carries +q_ij at (i,j) and (j,i) and -q_ij at both diagonal slots,
    so every ordered pair contributes half and the symmetric pair sums to
    full weight. Coincides entrywise with expected_mixing for feasible A;
    assembled differently on purpose so the identity is a real check.
    """
    g = a.a * stats.q  # zero diagonal since q_ii = 0
    r = 0.5 * (g + g.T)
    np.fill_diagonal(r, 0.0)
    diag = 1.0 - 0.5 * (g.sum(axis=1) + g.sum(axis=0))
    r[np.diag_indices_from(r)] = diag
    return r


def subgradient(a: AggregationMatrix, stats: LinkStats, est: SpectralEstimate) -> np.ndarray:
    """Closed-form subgradient of the nontrivial radius at the estimate.

    Entry (i, j) is -(1/2) q_ij (v_i - v_j)^2 when the lambda2 branch is
    active and +(1/2) q_ij (v_i - v_j)^2 when the lambdaN branch is active;
    symmetric with zero diagonal.
    """
    v = est.eigenvector
    diff2 = np.subtract.outer(v, v) ** 2
    sign = -1.0 if est.active_branch == "lambda2" else 1.0
    g = sign * 0.5 * stats.q * diff2
    np.fill_diagonal(g, 0.0)
    return g


def feasibility_residual(a: np.ndarray) -> float:
    """Worst violation of symmetry, row sums, or nonnegativity."""
    a = np.asarray(a, dtype=float)
    sym = float(np.abs(a - a.T).max())
    rows = float(np.abs(a.sum(axis=1) - 1.0).max())
    neg = float(max(0.0, -a.min()))
    return max(sym, rows, neg)


def restore_feasibility(a_raw: np.ndarray, sweeps: int = 50, tol: float = 1e-9) -> AggregationMatrix:
    """Project a raw weight matrix back to the symmetric doubly stochastic set.

    Clips negatives once, then alternates symmetrization with row
    normalization (both purely local operations) until the joint residual
    drops below tolerance or the sweep budget runs out, and finishes with one
    exact symmetrization. Off-diagonal symmetric zero patterns survive:
    absent links stay absent.
    """
    a = np.array(a_raw, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SpectralOptError("weights must be square")
    if not np.all(np.isfinite(a)):
        raise SpectralOptError("weights have non-finite entries")
    if sweeps < 1:
        raise SpectralOptError("sweeps must be at least 1")
    np.clip(a, 0.0, None, out=a)

    # Each pass ends on a symmetrization so the exit test sees exactly the
    # matrix that would be returned: symmetric by construction, rows checked
    # against the target tolerance (with margin for the final validation).
    residual = math.inf
    for _ in range(sweeps):
        a = 0.5 * (a + a.T)
        row_sums = a.sum(axis=1)
        residual = float(np.abs(row_sums - 1.0).max())
        if residual < 0.5 * tol:
            break
        if np.any(row_sums <= 0.0):
            dead = int(np.flatnonzero(row_sums <= 0.0)[0])
            raise DegenerateRowError(f"row {dead} has zero weight mass before normalization")
        a = a / row_sums[:, None]
    else:
        a = 0.5 * (a + a.T)
        residual = float(np.abs(a.sum(axis=1) - 1.0).max())
        if residual >= tol:
            raise SpectralOptError(
                f"restoration did not reach row-sum tolerance {tol} in {sweeps} sweeps"
                f" (residual {residual:.3e})"
            )
    return AggregationMatrix(a)


@dataclass(frozen=True)
class TraceRow:
    """One optimizer iteration as it lands in the trace CSV."""

    iteration: int
    rho_surrogate: float
    rho_oracle: float
    active_branch: str
    feasibility_residual: float


@dataclass(frozen=True)
class OptimizeResult:
    """Outcome of a subgradient run.

    ``weights`` is the best iterate (smallest traced oracle radius;
    subgradient methods are non-monotone), ``final_weights`` the last
    iterate.
    """

    weights: AggregationMatrix
    rho: float
    best_iteration: int
    final_weights: AggregationMatrix
    trace: list[TraceRow] = field(repr=False)

    @property
    def rho_trace(self) -> list[float]:
        return [row.rho_oracle for row in self.trace]


def _oracle_estimate(p_bar: np.ndarray) -> SpectralEstimate:
    # Exact dominant nontrivial eigenpair from the dense reference solver;
    # used by the centralized full-knowledge variant.
    dec = oracle.eig_sym(p_bar)
    n = p_bar.shape[0]
    ones = np.full(n, 1.0 / math.sqrt(n))
    align = np.abs(dec.eigenvectors.T @ ones)
    consensus = int(np.argmax(align))
    idx = [k for k in range(n) if k != consensus]
    best = max(idx, key=lambda k: abs(dec.eigenvalues[k]))
    value = dec.eigenvalues[best]
    v = _deflate(dec.eigenvectors[:, best])
    v /= np.linalg.norm(v)
    return SpectralEstimate(
        eigenvector=v,
        eigenvalue=abs(float(value)),
        active_branch="lambda2" if value >= 0.0 else "lambdaN",
        iterations_used=0,
    )


def _run_subgradient(
    a0: AggregationMatrix,
    stats: LinkStats,
    opt: OptimizerConfig,
    estimator,
) -> OptimizeResult:
    a = AggregationMatrix(a0.a)
    trace: list[TraceRow] = []
    best_rho = math.inf
    best_a = a
    best_it = 0

    for it in range(opt.max_iterations + 1):
        p_bar = expected_mixing(a, stats)
        est = estimator(p_bar, it)
        rho_o = oracle.rho_nontrivial(p_bar)
        trace.append(
            TraceRow(
                iteration=it,
                rho_surrogate=est.eigenvalue,
                rho_oracle=rho_o,
                active_branch=est.active_branch,
                feasibility_residual=feasibility_residual(a.a),
            )
        )
        if rho_o < best_rho:
            best_rho, best_a, best_it = rho_o, a, it
        if rho_o > 1.0 + 1e-6:
            raise OptimizationDiverged(f"traced radius {rho_o} exceeds 1 at iteration {it}")
        if it == opt.max_iterations:
            break
        if (
            opt.convergence_tol > 0.0
            and len(trace) >= 2
            and abs(trace[-1].rho_oracle - trace[-2].rho_oracle) < opt.convergence_tol
        ):
            break

        g = subgradient(a, stats, est)
        a = restore_feasibility(a.a - opt.step_size * g, sweeps=opt.restoration_sweeps)

    return OptimizeResult(
        weights=best_a,
        rho=best_rho,
        best_iteration=best_it,
        final_weights=a,
        trace=trace,
    )


def optimize(
    a0: AggregationMatrix,
    stats: LinkStats,
    opt: OptimizerConfig | None = None,
    cheb: ChebyshevConfig | None = None,
    seed=0,
) -> OptimizeResult:
    """Decentralized subgradient descent on the nontrivial spectral radius.

    Every node-level quantity (eigenvector entries, weight rows) is
    simulated in-process; the estimator restarts from a fresh seeded vector
    each iteration.
    """
    opt = opt if opt is not None else OptimizerConfig()
    cheb = cheb if cheb is not None else ChebyshevConfig()
    base = _seed_list(seed)

    def estimator(p_bar: np.ndarray, iteration: int) -> SpectralEstimate:
        return estimate_dominant_nontrivial(p_bar, cheb, seed=base + [iteration])

    return _run_subgradient(a0, stats, opt, estimator)


def optimize_centralized(
    a0: AggregationMatrix,
    stats: LinkStats,
    opt: OptimizerConfig | None = None,
) -> OptimizeResult:
    """Full-knowledge variant: identical loop, exact dense eigensolver.

    Serves as the centralized coordinator proxy the decentralized run is
    compared against.
    """
    opt = opt if opt is not None else OptimizerConfig()

    def estimator(p_bar: np.ndarray, iteration: int) -> SpectralEstimate:
        return _oracle_estimate(p_bar)

    return _run_subgradient(a0, stats, opt, estimator)
