"""Convergence-bound arithmetic and prescribed-radius mixing matrices.

The ergodic bound for decentralized SGD under stochastic links reads

    (1/T) sum_t E||grad L(w_bar_t)||^2
        <= (loss_gap/(eta T) + eta L sigma^2 / (2N) + sigma^2 G + 9 delta^2 G)
           / (1/2 - 9 G),

with G = N eta^2 L^2 / ((1 - sqrt(rho))^2 - 18 N eta^2 L^2) and rho the
nontrivial spectral radius of E[P^2], valid for learning rates below
(1 - sqrt(rho)) / (6 L sqrt(N)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class TheoryError(ValueError):
    """Inputs outside the bound's validity regime."""


@dataclass(frozen=True)
class TheoremInputs:
    """Everything the convergence bound consumes.

    ``rho_p2`` is the nontrivial spectral radius of the second-moment mixing
    matrix E[P^2]; ``loss_gap`` is the initial global loss minus its optimal
    value.
    """

    lipschitz: float
    sigma2: float
    delta2: float
    eta: float
    rounds: int
    node_count: int
    rho_p2: float
    loss_gap: float

    def __post_init__(self) -> None:
        for name in ("lipschitz", "sigma2", "delta2", "eta", "loss_gap"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise TheoryError(f"{name} must be nonnegative and finite")
        if self.rounds < 1 or self.node_count < 1:
            raise TheoryError("rounds and node_count must be at least 1")
        if not (0.0 <= self.rho_p2 < 1.0):
            raise TheoryError("rho_p2 must lie in [0, 1)")


def eta_max(lipschitz: float, node_count: int, rho_p2: float) -> float:
    """Largest admissible learning rate, (1 - sqrt(rho)) / (6 L sqrt(N))."""
    if lipschitz <= 0.0:
        raise TheoryError("lipschitz must be positive")
    return (1.0 - math.sqrt(rho_p2)) / (6.0 * lipschitz * math.sqrt(node_count))


def gamma(inputs: TheoremInputs) -> float:
    """The contraction factor N eta^2 L^2 / ((1-sqrt(rho))^2 - 18 N eta^2 L^2)."""
    top = inputs.node_count * inputs.eta**2 * inputs.lipschitz**2
    denom = (1.0 - math.sqrt(inputs.rho_p2)) ** 2 - 18.0 * top
    if denom <= 0.0:
        raise TheoryError(
            "learning-rate regime violated: (1 - sqrt(rho))^2 <= 18 N eta^2 L^2"
        )
    return top / denom


def convergence_bound(inputs: TheoremInputs) -> float:
    """Right-hand side of the ergodic gradient-norm bound."""
    if inputs.eta >= eta_max(max(inputs.lipschitz, 1e-300), inputs.node_count, inputs.rho_p2):
        raise TheoryError(
            "learning rate violates eta < (1 - sqrt(rho)) / (6 L sqrt(N))"
        )
    g = gamma(inputs)
    prefactor_denom = 0.5 - 9.0 * g
    if prefactor_denom <= 0.0:
        raise TheoryError("invalid regime: 1/2 - 9 Gamma must be positive")
    terms = (
        inputs.loss_gap / (inputs.eta * inputs.rounds)
        + inputs.eta * inputs.lipschitz * inputs.sigma2 / (2.0 * inputs.node_count)
        + inputs.sigma2 * g
        + 9.0 * inputs.delta2 * g
    )
    return terms / prefactor_denom


def prescribed_rho_matrix(node_count: int, beta: float) -> np.ndarray:
    """Symmetric doubly stochastic matrix with nontrivial radius exactly beta.

    (1-beta)/N 11^T + beta I has the consensus eigenvalue 1 and every other
    eigenvalue equal to beta, which isolates mixing quality from topology in
    controlled runs.
    """
    if not (0.0 <= beta < 1.0):
        raise TheoryError("beta must lie in [0, 1)")
    if node_count < 2:
        raise TheoryError("node_count must be at least 2")
    p = np.full((node_count, node_count), (1.0 - beta) / node_count)
    p[np.diag_indices(node_count)] += beta
    return p
