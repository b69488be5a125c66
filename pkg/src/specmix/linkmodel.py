"""Per-link success probabilities from ring-constellation geometry, and the
Bernoulli link masks that drive the stochastic topology.

Nodes sit on a circular orbit. A link's success probability is one minus the
worst of three normalized impairments: great-circle distance, beam pointing
deviation (the angle between the two nodes' orbital tangent vectors, which on
a circular orbit equals their central-angle separation), and an interference
coefficient. Anything pushing the worst term past 1 clamps the probability
to 0, i.e. the link is dead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Named (alpha_d, alpha_theta, interference) presets used throughout the
# experiment grid. "default" is the general-purpose setting; A/B/C span
# favorable, geometry-sensitive, and interference-heavy environments.
PARAMETER_SETS: dict[str, dict[str, float]] = {
    "default": {"alpha_d": 0.7, "alpha_theta": 0.8, "interference": 0.05},
    "A": {"alpha_d": 0.5, "alpha_theta": 0.7, "interference": 0.05},
    "B": {"alpha_d": 0.7, "alpha_theta": 0.9, "interference": 0.05},
    "C": {"alpha_d": 0.9, "alpha_theta": 0.5, "interference": 0.10},
}

# Model-scale orbit radius (km). Small enough that the default 22-node ring
# keeps its nearest-neighbor links in the high-reliability band under every
# parameter set; the link model needs only the circle, not orbital mechanics.
DEFAULT_ORBIT_RADIUS_KM = 2000.0
DEFAULT_D_MAX_KM = 3000.0
DEFAULT_THETA_MAX_DEG = 60.0


class LinkModelError(ValueError):
    """Invalid constellation geometry or link statistics."""


def uniform_angles(node_count: int) -> np.ndarray:
    """Evenly spaced angular positions on the orbit circle (radians)."""
    return 2.0 * math.pi * np.arange(node_count) / node_count


def random_angles(node_count: int, seed: int) -> np.ndarray:
    """Uniform-random angular positions, fixed per seed."""
    rng = np.random.default_rng([int(seed), 0x5EED])
    return rng.uniform(0.0, 2.0 * math.pi, size=node_count)


@dataclass(frozen=True)
class ConstellationConfig:
    """Static geometry and environment of one ring constellation.

    ``interference`` may be a scalar (broadcast to every pair) or a full
    symmetric zero-diagonal matrix of per-pair coefficients in [0, 1].
    """

    node_count: int
    node_angles: np.ndarray
    orbit_radius_km: float = DEFAULT_ORBIT_RADIUS_KM
    d_max_km: float = DEFAULT_D_MAX_KM
    theta_max_deg: float = DEFAULT_THETA_MAX_DEG
    alpha_d: float = PARAMETER_SETS["default"]["alpha_d"]
    alpha_theta: float = PARAMETER_SETS["default"]["alpha_theta"]
    interference: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise LinkModelError("node_count must be at least 2")
        angles = np.asarray(self.node_angles, dtype=float)
        if angles.shape != (self.node_count,) or not np.all(np.isfinite(angles)):
            raise LinkModelError("node_angles must be node_count finite radians")
        object.__setattr__(self, "node_angles", angles)
        for name in ("orbit_radius_km", "d_max_km", "theta_max_deg"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise LinkModelError(f"{name} must be positive and finite")
        for name in ("alpha_d", "alpha_theta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise LinkModelError(f"{name} must be nonnegative and finite")
        w = self.interference
        if w is None:
            w = 0.0
        if np.isscalar(w):
            scalar = float(w)
            if not (0.0 <= scalar <= 1.0):
                raise LinkModelError("interference must lie in [0, 1]")
            w = np.full((self.node_count, self.node_count), scalar)
            np.fill_diagonal(w, 0.0)
        else:
            w = np.asarray(w, dtype=float)
            if w.shape != (self.node_count, self.node_count):
                raise LinkModelError("interference matrix shape mismatch")
            if not np.all(np.isfinite(w)):
                raise LinkModelError("interference has non-finite entries")
            if np.abs(w - w.T).max() > 0.0:
                raise LinkModelError("interference matrix must be symmetric")
            if np.abs(np.diag(w)).max() > 0.0:
                raise LinkModelError("interference diagonal must be zero")
            if w.min() < 0.0 or w.max() > 1.0:
                raise LinkModelError("interference entries must lie in [0, 1]")
        object.__setattr__(self, "interference", w)

    @classmethod
    def ring(
        cls,
        node_count: int,
        parameter_set: str = "default",
        placement: str = "uniform",
        placement_seed: int = 0,
        orbit_radius_km: float = DEFAULT_ORBIT_RADIUS_KM,
        d_max_km: float = DEFAULT_D_MAX_KM,
        theta_max_deg: float = DEFAULT_THETA_MAX_DEG,
    ) -> "ConstellationConfig":
        """Convenience constructor from a named parameter set."""
        if parameter_set not in PARAMETER_SETS:
            raise LinkModelError(
                f"unknown parameter set {parameter_set!r}; pick from {sorted(PARAMETER_SETS)}"
            )
        params = PARAMETER_SETS[parameter_set]
        if placement == "uniform":
            angles = uniform_angles(node_count)
        elif placement == "random":
            angles = random_angles(node_count, placement_seed)
        else:
            raise LinkModelError(f"unknown placement {placement!r}")
        return cls(
            node_count=node_count,
            node_angles=angles,
            orbit_radius_km=orbit_radius_km,
            d_max_km=d_max_km,
            theta_max_deg=theta_max_deg,
            alpha_d=params["alpha_d"],
            alpha_theta=params["alpha_theta"],
            interference=params["interference"],
        )


@dataclass(frozen=True)
class LinkStats:
    """Symmetric zero-diagonal matrix of per-link success probabilities."""

    q: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise LinkModelError("q must be square")
        if not np.all(np.isfinite(q)):
            raise LinkModelError("q has non-finite entries")
        if q.min() < 0.0 or q.max() > 1.0:
            raise LinkModelError("q entries must lie in [0, 1]")
        if np.abs(q - q.T).max() > 0.0:
            raise LinkModelError("q must be symmetric")
        if q.shape[0] and np.abs(np.diag(q)).max() > 0.0:
            raise LinkModelError("q diagonal must be zero")
        object.__setattr__(self, "q", q)

    @property
    def node_count(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class LinkMask:
    """One sampled binary topology realization for a given round."""

    m: np.ndarray
    round_index: int

    def __post_init__(self) -> None:
        m = np.asarray(self.m)
        if not np.isin(m, (0, 1)).all():
            raise LinkModelError("mask entries must be 0 or 1")
        if (m != m.T).any():
            raise LinkModelError("mask must be symmetric")
        if np.diag(m).any():
            raise LinkModelError("mask diagonal must be zero")
        object.__setattr__(self, "m", m.astype(np.uint8))


def central_angles(angles: np.ndarray) -> np.ndarray:
    """Pairwise central-angle separation in [0, pi] from angular positions."""
    diff = np.abs(angles[:, None] - angles[None, :]) % (2.0 * math.pi)
    return np.minimum(diff, 2.0 * math.pi - diff)


def compute_link_stats(cfg: ConstellationConfig) -> LinkStats:
    """Success probabilities q_ij = 1 - max of the three impairment terms.

    Distance is the great-circle arc between the two nodes; pointing
    deviation is the central-angle separation in degrees, clamped to
    [0, 180]. Results are clamped to [0, 1] (a term past 1 means the link is
    dead), symmetric, zero on the diagonal.
    """
    sep = central_angles(cfg.node_angles)
    arc_km = cfg.orbit_radius_km * sep
    theta_deg = np.degrees(sep)

    distance_term = cfg.alpha_d * arc_km / cfg.d_max_km
    pointing_term = cfg.alpha_theta * theta_deg / cfg.theta_max_deg
    worst = np.maximum(np.maximum(distance_term, pointing_term), cfg.interference)
    q = np.clip(1.0 - worst, 0.0, 1.0)
    np.fill_diagonal(q, 0.0)
    # exact symmetry regardless of floating quirks in the pairwise terms
    q = np.triu(q, k=1)
    q = q + q.T
    return LinkStats(q=q)


def _pair_uniforms(node_count: int, seed: int, t: int, draws: int = 1) -> np.ndarray:
    """Uniform variates for every unordered pair, deterministic per (seed, t)."""
    rng = np.random.default_rng([int(seed), int(t)])
    n_pairs = node_count * (node_count - 1) // 2
    u = rng.random((draws, n_pairs))
    return u


def _mask_from_uniforms(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    n = q.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    m = np.zeros((n, n), dtype=np.uint8)
    hits = u < q[iu, ju]
    m[iu[hits], ju[hits]] = 1
    m[ju[hits], iu[hits]] = 1
    return m


def sample_mask(stats: LinkStats, rng_seed: int, t: int) -> LinkMask:
    """Sample one symmetric Bernoulli mask for round ``t``.

    Each unordered pair is drawn once and mirrored; pairs are independent.
    The stream is keyed on (seed, round), so rounds can be sampled in any
    order or in parallel and still replay bit-exactly.
    """
    u = _pair_uniforms(stats.node_count, rng_seed, t, draws=1)[0]
    return LinkMask(m=_mask_from_uniforms(stats.q, u), round_index=t)


def empirical_cdf(stats: LinkStats, grid: list[float] | np.ndarray) -> list[tuple[float, float]]:
    """Fraction of (unordered, off-diagonal) links with q_ij <= each grid value.

    ``grid`` must be sorted ascending within [0, 1]. The result is
    nondecreasing and reaches 1 at grid value 1.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise LinkModelError("grid must be nonempty")
    if grid.min() < 0.0 or grid.max() > 1.0:
        raise LinkModelError("grid values must lie in [0, 1]")
    if np.any(np.diff(grid) < 0.0):
        raise LinkModelError("grid must be sorted ascending")
    iu, ju = np.triu_indices(stats.node_count, k=1)
    values = stats.q[iu, ju]
    fractions = np.searchsorted(np.sort(values), grid, side="right") / values.size
    return [(float(x), float(f)) for x, f in zip(grid, fractions)]
