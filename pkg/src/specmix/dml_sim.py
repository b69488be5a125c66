"""Decentralized SGD over sampled topologies, on desk-scale synthetic tasks.

One round is fuse-then-step: every node averages with the neighbors whose
links came up (through the realized mixing matrix) and then takes a local
minibatch SGD step, with gradients evaluated at the pre-fusion models.
Stacked as columns, W <- W P - eta * G.

Two task families make the convergence theory measurable:

* ``quadratic``: each node holds L_i(w) = 0.5 (w - w_i*)^T H (w - w_i*) plus
  a linear data-noise term from its sample pool. The Hessian H is shared, so
  the gradient-dissimilarity bound is exact and controlled by the
  ``heterogeneity`` knob (local optima w_i* = w* + heterogeneity * u_i),
  while minibatch size and ``noise_scale`` control the gradient noise.
* ``softmax_synthetic``: multinomial logistic regression on Gaussian class
  clusters (10 classes by default). Statistical heterogeneity is per-node
  label-distribution skew: class mixes drawn from a Dirichlet whose
  concentration shrinks as the ``heterogeneity`` knob grows (0 means IID
  uniform), so local optima are biased toward locally frequent classes
  while the class-balanced test set rewards the global optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from specmix.linkmodel import LinkMask, LinkStats, sample_mask
from specmix.mixing import AggregationMatrix, realize_mixing, uniform_weights
from specmix.spectral_opt import ChebyshevConfig, OptimizerConfig, optimize, optimize_centralized

_CLUSTER_SPREAD = 2.0  # class-center scale for the softmax task

WEIGHT_SCHEMES = ("optimized", "uniform", "ideal", "metropolis", "centralized")


class TaskError(ValueError):
    """Task misconfiguration, including non-finite gradients at runtime."""


class InfeasibleBaselineError(RuntimeError):
    """A baseline scheme cannot be built on this topology."""


@dataclass(frozen=True)
class TaskSpec:
    """Knobs for the synthetic tasks; see module docstring."""

    kind: str = "quadratic"
    dimension: int = 6
    classes: int = 10
    samples_min: int = 100
    samples_max: int = 125
    heterogeneity: float = 0.5
    noise_scale: float = 1.0
    minibatch: int = 8
    test_size: int = 1000

    def __post_init__(self) -> None:
        if self.kind not in ("quadratic", "softmax_synthetic"):
            raise TaskError(f"unknown task kind {self.kind!r}")
        if self.dimension < 1:
            raise TaskError("dimension must be at least 1")
        if self.kind == "softmax_synthetic" and self.classes < 2:
            raise TaskError("softmax task needs at least 2 classes")
        if self.samples_min < 1 or self.samples_max < self.samples_min:
            raise TaskError("sample count range must satisfy 1 <= min <= max")
        if self.heterogeneity < 0.0 or self.noise_scale < 0.0:
            raise TaskError("heterogeneity and noise_scale must be nonnegative")
        if self.minibatch < 1:
            raise TaskError("minibatch must be at least 1")
        if self.kind == "softmax_synthetic" and self.test_size < 1:
            raise TaskError("test_size must be at least 1")


@dataclass(frozen=True)
class ProtocolConfig:
    """Learning-rate/round settings plus the weighting scheme in force."""

    learning_rate: float
    rounds: int
    weights_source: str = "uniform"
    metropolis_threshold: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0:
            raise TaskError("learning_rate must be positive")
        if self.rounds < 0:
            raise TaskError("rounds must be nonnegative")
        if self.weights_source not in WEIGHT_SCHEMES:
            raise TaskError(f"weights_source must be one of {WEIGHT_SCHEMES}")
        if self.weights_source == "metropolis" and not (0.0 < self.metropolis_threshold < 1.0):
            raise TaskError("metropolis_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class FleetState:
    """Stacked local models; column i belongs to node i."""

    w: np.ndarray
    round: int

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2:
            raise TaskError("fleet state must be a dimension x node matrix")
        if not np.all(np.isfinite(w)):
            raise TaskError("fleet state has non-finite entries")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class MetricsRow:
    """Per-round record; accuracies are NaN for tasks without a test set."""

    round: int
    avg_loss: float
    avg_acc: float
    min_acc: float
    consensus_error: float
    grad_norm_at_mean: float


class QuadraticTask:
    """Shared-Hessian least squares with exact heterogeneity control."""

    def __init__(self, spec: TaskSpec, node_count: int, seed: int):
        self.spec = spec
        self.node_count = node_count
        self.model_dim = spec.dimension
        rng = np.random.default_rng([int(seed), 101])
        d = spec.dimension
        self.hessian_diag = np.linspace(0.5, 1.5, d)
        self.w_star = rng.standard_normal(d)
        shifts = rng.standard_normal((node_count, d))
        shifts -= shifts.mean(axis=0)
        self.local_optima = self.w_star + spec.heterogeneity * shifts
        counts = rng.integers(spec.samples_min, spec.samples_max + 1, size=node_count)
        self.pools = [
            spec.noise_scale * rng.standard_normal((int(counts[i]), d)) for i in range(node_count)
        ]
        self.pool_means = np.stack([pool.mean(axis=0) for pool in self.pools])

    def initial_state(self) -> FleetState:
        return FleetState(w=np.zeros((self.model_dim, self.node_count)), round=0)

    def local_gradient(self, w: np.ndarray, node: int) -> np.ndarray:
        return self.hessian_diag * (w - self.local_optima[node]) + self.pool_means[node]

    def minibatch_gradients(self, w_stack: np.ndarray, seed: int, t: int) -> np.ndarray:
        grads = np.empty_like(w_stack)
        for node in range(self.node_count):
            rng = np.random.default_rng([int(seed), 202, int(t), node])
            pool = self.pools[node]
            idx = rng.integers(0, pool.shape[0], size=self.spec.minibatch)
            noise = pool[idx].mean(axis=0)
            grads[:, node] = (
                self.hessian_diag * (w_stack[:, node] - self.local_optima[node]) + noise
            )
        if not np.all(np.isfinite(grads)):
            raise TaskError("non-finite gradient; check task configuration")
        return grads

    def global_gradient(self, w: np.ndarray) -> np.ndarray:
        devs = self.hessian_diag * (w[None, :] - self.local_optima) + self.pool_means
        return devs.mean(axis=0)

    def global_loss(self, w: np.ndarray) -> float:
        diffs = w[None, :] - self.local_optima
        quad = 0.5 * (diffs * diffs * self.hessian_diag).sum(axis=1)
        lin = (self.pool_means * diffs).sum(axis=1)
        return float((quad + lin).mean())

    def optimum(self) -> np.ndarray:
        # grad = H (w - mean optimum) + mean pool noise = 0
        return self.local_optima.mean(axis=0) - self.pool_means.mean(axis=0) / self.hessian_diag

    def metrics(self, state: FleetState) -> MetricsRow:
        w = state.w
        w_mean = w.mean(axis=1)
        avg_loss = float(np.mean([self.global_loss(w[:, i]) for i in range(self.node_count)]))
        return MetricsRow(
            round=state.round,
            avg_loss=avg_loss,
            avg_acc=math.nan,
            min_acc=math.nan,
            consensus_error=consensus_error(state),
            grad_norm_at_mean=float(np.linalg.norm(self.global_gradient(w_mean))),
        )

    def measure_constants(self, sigma_draws: int = 1000, seed: int = 0) -> dict[str, float]:
        """Constants for the convergence bound, from the task construction.

        Smoothness is the shared Hessian's top eigenvalue (closed form); the
        gradient-dissimilarity bound is exact because the deviation of each
        node's gradient from the global one is independent of the model; the
        noise bound is the worst per-node mean squared minibatch deviation
        over ``sigma_draws`` draws.
        """
        lips = float(self.hessian_diag.max())
        mean_opt = self.local_optima.mean(axis=0)
        mean_noise = self.pool_means.mean(axis=0)
        devs = self.hessian_diag * (mean_opt - self.local_optima) + (self.pool_means - mean_noise)
        delta2 = float((devs * devs).sum(axis=1).max())
        sigma2 = 0.0
        for node in range(self.node_count):
            rng = np.random.default_rng([int(seed), 303, node])
            pool = self.pools[node]
            idx = rng.integers(0, pool.shape[0], size=(sigma_draws, self.spec.minibatch))
            noise = pool[idx].mean(axis=1) - self.pool_means[node]
            sigma2 = max(sigma2, float((noise * noise).sum(axis=1).mean()))
        return {"lipschitz": lips, "sigma2": sigma2, "delta2": delta2}


class SoftmaxTask:
    """Synthetic multinomial logistic regression with label-skew heterogeneity."""

    def __init__(self, spec: TaskSpec, node_count: int, seed: int):
        self.spec = spec
        self.node_count = node_count
        self.feature_dim = spec.dimension
        self.classes = spec.classes
        self.model_dim = spec.dimension * spec.classes
        rng = np.random.default_rng([int(seed), 404])
        d, c = spec.dimension, spec.classes
        self.centers = _CLUSTER_SPREAD * rng.standard_normal((c, d))
        if spec.heterogeneity > 0.0:
            # Dirichlet class mixes; smaller concentration = stronger skew
            alpha = 1.0 / spec.heterogeneity
            self.class_mixes = rng.dirichlet(np.full(c, alpha), size=node_count)
        else:
            self.class_mixes = np.full((node_count, c), 1.0 / c)
        counts = rng.integers(spec.samples_min, spec.samples_max + 1, size=node_count)
        self.labels = []
        self.features = []
        for i in range(node_count):
            n_i = int(counts[i])
            y = rng.choice(c, size=n_i, p=self.class_mixes[i])
            x = self.centers[y] + spec.noise_scale * rng.standard_normal((n_i, d))
            self.labels.append(y)
            self.features.append(x)
        y_test = rng.integers(0, c, size=spec.test_size)
        self.test_features = self.centers[y_test] + spec.noise_scale * rng.standard_normal(
            (spec.test_size, d)
        )
        self.test_labels = y_test

    def initial_state(self) -> FleetState:
        return FleetState(w=np.zeros((self.model_dim, self.node_count)), round=0)

    def _unflatten(self, w: np.ndarray) -> np.ndarray:
        return w.reshape(self.feature_dim, self.classes)

    @staticmethod
    def _log_softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=-1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def _ce_gradient(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        mat = self._unflatten(w)
        logits = x @ mat
        probs = np.exp(self._log_softmax(logits))
        probs[np.arange(y.size), y] -= 1.0
        return (x.T @ probs).ravel() / y.size

    def _ce_loss(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        logp = self._log_softmax(x @ self._unflatten(w))
        return float(-logp[np.arange(y.size), y].mean())

    def local_gradient(self, w: np.ndarray, node: int) -> np.ndarray:
        return self._ce_gradient(w, self.features[node], self.labels[node])

    def minibatch_gradients(self, w_stack: np.ndarray, seed: int, t: int) -> np.ndarray:
        grads = np.empty_like(w_stack)
        for node in range(self.node_count):
            rng = np.random.default_rng([int(seed), 202, int(t), node])
            n_i = self.labels[node].size
            idx = rng.integers(0, n_i, size=self.spec.minibatch)
            grads[:, node] = self._ce_gradient(
                w_stack[:, node], self.features[node][idx], self.labels[node][idx]
            )
        if not np.all(np.isfinite(grads)):
            raise TaskError("non-finite gradient; check task configuration")
        return grads

    def global_gradient(self, w: np.ndarray) -> np.ndarray:
        total = np.zeros(self.model_dim)
        for node in range(self.node_count):
            total += self.local_gradient(w, node)
        return total / self.node_count

    def global_loss(self, w: np.ndarray) -> float:
        return float(
            np.mean([self._ce_loss(w, self.features[i], self.labels[i]) for i in range(self.node_count)])
        )

    def accuracy(self, w: np.ndarray) -> float:
        logits = self.test_features @ self._unflatten(w)
        return float((logits.argmax(axis=1) == self.test_labels).mean())

    def metrics(self, state: FleetState) -> MetricsRow:
        w = state.w
        accs = [self.accuracy(w[:, i]) for i in range(self.node_count)]
        avg_loss = float(np.mean([self.global_loss(w[:, i]) for i in range(self.node_count)]))
        return MetricsRow(
            round=state.round,
            avg_loss=avg_loss,
            avg_acc=float(np.mean(accs)),
            min_acc=float(np.min(accs)),
            consensus_error=consensus_error(state),
            grad_norm_at_mean=float(np.linalg.norm(self.global_gradient(w.mean(axis=1)))),
        )


def build_task(spec: TaskSpec, node_count: int, seed: int):
    if spec.kind == "quadratic":
        return QuadraticTask(spec, node_count, seed)
    return SoftmaxTask(spec, node_count, seed)


def consensus_error(state: FleetState) -> float:
    """Mean squared deviation of the local models from their average."""
    centered = state.w - state.w.mean(axis=1, keepdims=True)
    return float((centered * centered).sum() / state.w.shape[1])


def protocol_round(
    state: FleetState,
    a: AggregationMatrix,
    mask: LinkMask,
    task,
    learning_rate: float,
    seed: int,
) -> FleetState:
    """One fuse-then-step round: W <- W P - eta * G(W).

    Gradients are evaluated at the pre-fusion models; minibatch draws are
    deterministic per (seed, round, node).
    """
    if state.w.shape[1] != a.node_count:
        raise TaskError("state and weights disagree on node count")
    grads = task.minibatch_gradients(state.w, seed, state.round)
    p = realize_mixing(a, mask).p
    return FleetState(w=state.w @ p - learning_rate * grads, round=state.round + 1)


def metropolis_weights(stats: LinkStats, q_delta: float) -> AggregationMatrix:
    """Metropolis weights on the graph of links with q_ij >= q_delta.

    Retained edges get 1 / (1 + max degree of the endpoints); the diagonal
    absorbs the remainder. Raises if thresholding isolates any node.
    """
    adj = stats.q >= q_delta
    np.fill_diagonal(adj, False)
    degrees = adj.sum(axis=1)
    isolated = np.flatnonzero(degrees == 0)
    if isolated.size:
        raise InfeasibleBaselineError(
            f"threshold {q_delta} isolates node(s) {isolated.tolist()}"
        )
    n = stats.node_count
    a = np.zeros((n, n))
    pair_max = np.maximum.outer(degrees, degrees)
    a[adj] = 1.0 / (1.0 + pair_max[adj])
    np.fill_diagonal(a, 1.0 - a.sum(axis=1))
    return AggregationMatrix(a)


def scheme_weights(
    scheme: str,
    stats: LinkStats,
    metropolis_threshold: float = 0.8,
    opt: OptimizerConfig | None = None,
    cheb: ChebyshevConfig | None = None,
    seed: int = 0,
) -> AggregationMatrix:
    """Aggregation weights for a named baseline scheme."""
    n = stats.node_count
    if scheme in ("uniform", "ideal"):
        return uniform_weights(n)
    if scheme == "metropolis":
        return metropolis_weights(stats, metropolis_threshold)
    if scheme == "optimized":
        return optimize(uniform_weights(n), stats, opt, cheb, seed=seed).weights
    if scheme == "centralized":
        return optimize_centralized(uniform_weights(n), stats, opt).weights
    raise TaskError(f"unknown scheme {scheme!r}")


def run_experiment(
    cfg: ProtocolConfig,
    task,
    stats: LinkStats,
    a: AggregationMatrix,
) -> list[MetricsRow]:
    """Run the protocol for cfg.rounds rounds and record per-round metrics.

    Row 0 holds the initial metrics; row t the state after t rounds. The
    mask stream is keyed on (seed, round) only, so different schemes run
    against common random topologies for paired comparison. The "ideal"
    scheme forces every link up instead of sampling.
    """
    state = task.initial_state()
    rows = [task.metrics(state)]
    n = stats.node_count
    ideal = cfg.weights_source == "ideal"
    for t in range(cfg.rounds):
        if ideal:
            m = np.ones((n, n), dtype=np.uint8)
            np.fill_diagonal(m, 0)
            mask = LinkMask(m=m, round_index=t)
        else:
            mask = sample_mask(stats, cfg.seed, t)
        state = protocol_round(state, a, mask, task, cfg.learning_rate, cfg.seed)
        rows.append(task.metrics(state))
    return rows
