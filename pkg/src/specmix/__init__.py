"""Decentralized learning over unreliable links.

Models probabilistic point-to-point topologies, builds the stochastic mixing
matrices they induce, optimizes aggregation weights by decentralized
subgradient descent on the nontrivial spectral radius of the expected mixing
matrix, and simulates decentralized SGD at desk scale to validate the
convergence theory.
"""

__version__ = "0.1.0"

from specmix.linkmodel import (
    ConstellationConfig,
    LinkMask,
    LinkStats,
    PARAMETER_SETS,
    compute_link_stats,
    empirical_cdf,
    sample_mask,
)
from specmix.mixing import (
    AggregationMatrix,
    ExpectedMixing,
    MixingRealization,
    deviation_norm,
    expected_mixing,
    realize_mixing,
    second_moment_analytic,
    second_moment_monte_carlo,
    uniform_weights,
)
from specmix.spectral_opt import (
    ChebyshevConfig,
    OptimizerConfig,
    SpectralEstimate,
    estimate_dominant_nontrivial,
    optimize,
    optimize_centralized,
    restore_feasibility,
    subgradient,
    surrogate_operator,
)
from specmix.theory import TheoremInputs, convergence_bound, gamma, prescribed_rho_matrix

__all__ = [
    "ConstellationConfig",
    "LinkMask",
    "LinkStats",
    "PARAMETER_SETS",
    "compute_link_stats",
    "empirical_cdf",
    "sample_mask",
    "AggregationMatrix",
    "ExpectedMixing",
    "MixingRealization",
    "deviation_norm",
    "expected_mixing",
    "realize_mixing",
    "second_moment_analytic",
    "second_moment_monte_carlo",
    "uniform_weights",
    "ChebyshevConfig",
    "OptimizerConfig",
    "SpectralEstimate",
    "estimate_dominant_nontrivial",
    "optimize",
    "optimize_centralized",
    "restore_feasibility",
    "subgradient",
    "surrogate_operator",
    "TheoremInputs",
    "convergence_bound",
    "gamma",
    "prescribed_rho_matrix",
    "__version__",
]
