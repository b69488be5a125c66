"""Strict YAML experiment configuration.

One file drives one scenario. Sections mirror the library's config types;
unknown keys are errors rather than silently ignored, because a typo that
drops a knob corrupts an experiment without any other symptom.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from specmix.dml_sim import ProtocolConfig, TaskSpec, WEIGHT_SCHEMES, metropolis_weights
from specmix.dml_sim import InfeasibleBaselineError
from specmix.linkmodel import (
    DEFAULT_D_MAX_KM,
    DEFAULT_ORBIT_RADIUS_KM,
    DEFAULT_THETA_MAX_DEG,
    PARAMETER_SETS,
    ConstellationConfig,
    compute_link_stats,
    random_angles,
    uniform_angles,
)
from specmix.spectral_opt import ChebyshevConfig, OptimizerConfig

SCENARIOS = (
    "link_cdf",
    "optimize_weights",
    "dml_run",
    "rho_sweep",
    "baseline_compare",
    "bound_check",
)

DEFAULT_BETAS = [0.0, 0.25, 0.46, 0.74, 0.92]
DEFAULT_SCHEMES = ["ideal", "optimized", "metropolis", "uniform", "centralized"]

_REQUIRED_SECTIONS = {
    "link_cdf": ("constellation",),
    "optimize_weights": ("constellation",),
    "dml_run": ("constellation", "protocol", "task"),
    "rho_sweep": ("protocol", "task"),
    "baseline_compare": ("constellation", "protocol", "task"),
    "bound_check": ("protocol", "task"),
}

_SECTION_KEYS = {
    "constellation": {
        "parameter_set",
        "node_count",
        "placement",
        "placement_seed",
        "orbit_radius_km",
        "d_max_km",
        "theta_max_deg",
        "alpha_d",
        "alpha_theta",
        "interference",
    },
    "optimizer": {"step_size", "max_iterations", "restoration_sweeps", "convergence_tol"},
    "chebyshev": {
        "mu",
        "nu",
        "iterations",
        "normalization",
        "gossip_rounds",
        "block",
        "tol",
        "resid_tol",
        "fail_tol",
    },
    "protocol": {"learning_rate", "rounds", "weights_source", "metropolis_threshold"},
    "task": {
        "kind",
        "dimension",
        "classes",
        "samples_min",
        "samples_max",
        "heterogeneity",
        "noise_scale",
        "minibatch",
        "test_size",
    },
    "link_cdf": {"grid_points"},
    "rho_sweep": {"betas"},
    "baseline_compare": {"schemes"},
    "bound_check": {"beta"},
}

_TOP_KEYS = {"scenario", "output_dir", "seeds"} | set(_SECTION_KEYS)


@dataclass(frozen=True)
class Finding:
    """One validation result; errors block execution, warnings do not."""

    severity: str  # "error" | "warning"
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.field}: {self.message}"


@dataclass
class ExperimentConfig:
    scenario: str
    output_dir: Path
    seeds: list[int]
    constellation_raw: dict = field(default_factory=dict)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    chebyshev: ChebyshevConfig = field(default_factory=ChebyshevConfig)
    protocol: ProtocolConfig | None = None
    task: TaskSpec | None = None
    grid_points: int = 101
    betas: list[float] = field(default_factory=lambda: list(DEFAULT_BETAS))
    schemes: list[str] = field(default_factory=lambda: list(DEFAULT_SCHEMES))
    bound_beta: float = 0.25

    @property
    def node_count(self) -> int:
        return self.constellation_raw.get("node_count", 22)

    def constellation(self, seed: int) -> ConstellationConfig:
        """Geometry for one seed; random placement re-derives angles per seed."""
        raw = self.constellation_raw
        params = PARAMETER_SETS[raw.get("parameter_set", "default")]
        node_count = raw.get("node_count", 22)
        if raw.get("placement", "uniform") == "random":
            angles = random_angles(node_count, raw.get("placement_seed", seed))
        else:
            angles = uniform_angles(node_count)
        return ConstellationConfig(
            node_count=node_count,
            node_angles=angles,
            orbit_radius_km=raw.get("orbit_radius_km", DEFAULT_ORBIT_RADIUS_KM),
            d_max_km=raw.get("d_max_km", DEFAULT_D_MAX_KM),
            theta_max_deg=raw.get("theta_max_deg", DEFAULT_THETA_MAX_DEG),
            alpha_d=raw.get("alpha_d", params["alpha_d"]),
            alpha_theta=raw.get("alpha_theta", params["alpha_theta"]),
            interference=raw.get("interference", params["interference"]),
        )


def load_raw(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config root must be a mapping")
    return raw


def validate(raw: dict) -> tuple[list[Finding], ExperimentConfig | None]:
    """Check the whole config and return every violation found.

    Returns (findings, parsed config); the config is None whenever any
    finding is an error.
    """
    findings: list[Finding] = []

    def err(field_name: str, message: str) -> None:
        findings.append(Finding("error", field_name, message))

    def warn(field_name: str, message: str) -> None:
        findings.append(Finding("warning", field_name, message))

    for key in raw:
        if key not in _TOP_KEYS:
            err(key, "unknown key")
    for section, keys in _SECTION_KEYS.items():
        body = raw.get(section)
        if body is None:
            continue
        if not isinstance(body, dict):
            err(section, "must be a mapping")
            continue
        for key in body:
            if key not in keys:
                err(f"{section}.{key}", "unknown key")

    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        err("scenario", f"must be one of {SCENARIOS}, got {scenario!r}")
        return findings, None

    seeds = raw.get("seeds")
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        err("seeds", "must be a nonempty list of integers")
    output_dir = raw.get("output_dir")
    if not isinstance(output_dir, str) or not output_dir:
        err("output_dir", "must be a nonempty path string")

    for section in _REQUIRED_SECTIONS[scenario]:
        if section not in raw:
            err(section, f"section required by scenario {scenario}")

    constellation_raw = raw.get("constellation", {}) or {}
    if isinstance(constellation_raw, dict):
        pset = constellation_raw.get("parameter_set", "default")
        if pset not in PARAMETER_SETS:
            err("constellation.parameter_set", f"unknown set {pset!r}")
        placement = constellation_raw.get("placement", "uniform")
        if placement not in ("uniform", "random"):
            err("constellation.placement", f"must be 'uniform' or 'random', got {placement!r}")

    optimizer = OptimizerConfig()
    if isinstance(raw.get("optimizer"), dict):
        try:
            optimizer = OptimizerConfig(**raw["optimizer"])
        except (TypeError, ValueError) as exc:
            err("optimizer", str(exc))
    chebyshev = ChebyshevConfig()
    if isinstance(raw.get("chebyshev"), dict):
        try:
            chebyshev = ChebyshevConfig(**raw["chebyshev"])
        except (TypeError, ValueError) as exc:
            err("chebyshev", str(exc))
    protocol = None
    if isinstance(raw.get("protocol"), dict):
        try:
            protocol = ProtocolConfig(**raw["protocol"])
        except (TypeError, ValueError) as exc:
            err("protocol", str(exc))
    task = None
    if isinstance(raw.get("task"), dict):
        try:
            task = TaskSpec(**raw["task"])
        except (TypeError, ValueError) as exc:
            err("task", str(exc))

    grid_points = 101
    if isinstance(raw.get("link_cdf"), dict):
        grid_points = raw["link_cdf"].get("grid_points", 101)
        if not isinstance(grid_points, int) or grid_points < 2:
            err("link_cdf.grid_points", "must be an integer >= 2")

    betas = list(DEFAULT_BETAS)
    if isinstance(raw.get("rho_sweep"), dict):
        betas = raw["rho_sweep"].get("betas", betas)
        if not isinstance(betas, list) or not betas:
            err("rho_sweep.betas", "must be a nonempty list")
        else:
            for b in betas:
                if not isinstance(b, (int, float)) or not (0.0 <= float(b) < 1.0):
                    err("rho_sweep.betas", f"beta {b!r} outside [0, 1)")

    schemes = list(DEFAULT_SCHEMES)
    if isinstance(raw.get("baseline_compare"), dict):
        schemes = raw["baseline_compare"].get("schemes", schemes)
        if not isinstance(schemes, list) or not schemes:
            err("baseline_compare.schemes", "must be a nonempty list")
        else:
            for s in schemes:
                if s not in WEIGHT_SCHEMES:
                    err("baseline_compare.schemes", f"unknown scheme {s!r}")

    bound_beta = 0.25
    if isinstance(raw.get("bound_check"), dict):
        bound_beta = raw["bound_check"].get("beta", 0.25)
        if not isinstance(bound_beta, (int, float)) or not (0.0 <= float(bound_beta) < 1.0):
            err("bound_check.beta", "must lie in [0, 1)")

    if scenario == "bound_check" and task is not None and task.kind != "quadratic":
        err("task.kind", "bound_check requires the quadratic task")

    if any(f.severity == "error" for f in findings):
        return findings, None

    cfg = ExperimentConfig(
        scenario=scenario,
        output_dir=Path(output_dir),
        seeds=list(seeds),
        constellation_raw=constellation_raw,
        optimizer=optimizer,
        chebyshev=chebyshev,
        protocol=protocol,
        task=task,
        grid_points=int(grid_points),
        betas=[float(b) for b in betas],
        schemes=list(schemes),
        bound_beta=float(bound_beta),
    )

    findings.extend(_semantic_findings(cfg))
    if any(f.severity == "error" for f in findings):
        return findings, None
    return findings, cfg


def _semantic_findings(cfg: ExperimentConfig) -> list[Finding]:
    """Checks that need the parsed objects: baseline feasibility, step sizes."""
    findings: list[Finding] = []

    needs_metropolis = (
        cfg.scenario == "dml_run"
        and cfg.protocol is not None
        and cfg.protocol.weights_source == "metropolis"
    ) or (cfg.scenario == "baseline_compare" and "metropolis" in cfg.schemes)
    if needs_metropolis:
        threshold = cfg.protocol.metropolis_threshold if cfg.protocol else 0.8
        for seed in cfg.seeds:
            stats = compute_link_stats(cfg.constellation(seed))
            try:
                metropolis_weights(stats, threshold)
            except InfeasibleBaselineError as exc:
                findings.append(
                    Finding(
                        "error",
                        "protocol.metropolis_threshold",
                        f"infeasible baseline for seed {seed}: {exc}",
                    )
                )

    if cfg.scenario == "bound_check" and cfg.protocol is not None and cfg.task is not None:
        from specmix.dml_sim import build_task
        from specmix.theory import eta_max

        task = build_task(cfg.task, node_count=cfg.node_count, seed=cfg.seeds[0])
        consts = task.measure_constants(seed=cfg.seeds[0])
        rho_p2 = cfg.bound_beta**2
        limit = eta_max(consts["lipschitz"], cfg.node_count, rho_p2)
        if cfg.protocol.learning_rate >= limit:
            findings.append(
                Finding(
                    "warning",
                    "protocol.learning_rate",
                    "violates the admissible-rate condition "
                    f"eta < (1 - sqrt(rho(E[P^2]))) / (6 L sqrt(N)) = {limit:.6g}",
                )
            )
    return findings
