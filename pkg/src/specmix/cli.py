"""Batch experiment runner.

Verbs:
  specmix run <config.yaml>        execute the configured scenario per seed
  specmix validate <config.yaml>   report all config findings, run nothing
  specmix version

Outputs land under <output_dir>/<scenario>/<seed>/ (one trace CSV per seed,
plus scenario-level summary.json with across-seed means and standard
errors). SPECMIX_OUTPUT_DIR overrides output_dir. Identical config and
seeds reproduce byte-identical CSVs.

Exit codes: 0 ok, 2 config error, 3 infeasible baseline, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

import specmix
from specmix import oracle
from specmix.config import ExperimentConfig, Finding, load_raw, validate
from specmix.dml_sim import (
    InfeasibleBaselineError,
    MetricsRow,
    ProtocolConfig,
    TaskError,
    build_task,
    run_experiment,
    scheme_weights,
)
from specmix.linkmodel import LinkStats, compute_link_stats, empirical_cdf
from specmix.mixing import AggregationMatrix, second_moment_analytic, uniform_weights
from specmix.spectral_opt import (
    EstimateNonConvergence,
    OptimizationDiverged,
    SpectralOptError,
    optimize,
)
from specmix.theory import TheoremInputs, convergence_bound, gamma, prescribed_rho_matrix

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

_METRIC_FIELDS = ("round", "avg_loss", "avg_acc", "min_acc", "consensus_error", "grad_norm_at_mean")


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    """Row-major full-precision CSV, no header; for external cross-checks."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(repr(float(v)) for v in row) for row in np.asarray(matrix, dtype=float)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix_csv(path: Path) -> np.ndarray:
    rows = [
        [float(v) for v in line.split(",")]
        for line in path.read_text(encoding="utf-8").splitlines()
        if line
    ]
    return np.array(rows, dtype=float)


def write_summary(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def mean_se(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return {"mean": mean, "se": se, "values": [float(v) for v in values]}


def _metrics_rows(rows: list[MetricsRow]) -> list[list]:
    return [
        [r.round, r.avg_loss, r.avg_acc, r.min_acc, r.consensus_error, r.grad_norm_at_mean]
        for r in rows
    ]


def _resolved_weights(cfg: ExperimentConfig, stats: LinkStats, seed: int) -> AggregationMatrix:
    assert cfg.protocol is not None
    return scheme_weights(
        cfg.protocol.weights_source,
        stats,
        metropolis_threshold=cfg.protocol.metropolis_threshold,
        opt=cfg.optimizer,
        cheb=cfg.chebyshev,
        seed=seed,
    )


def _protocol_for_seed(cfg: ExperimentConfig, seed: int, weights_source: str | None = None) -> ProtocolConfig:
    assert cfg.protocol is not None
    return ProtocolConfig(
        learning_rate=cfg.protocol.learning_rate,
        rounds=cfg.protocol.rounds,
        weights_source=weights_source or cfg.protocol.weights_source,
        metropolis_threshold=cfg.protocol.metropolis_threshold,
        seed=seed,
    )


def _run_link_cdf(cfg: ExperimentConfig, out: Path) -> dict:
    grid = np.linspace(0.0, 1.0, cfg.grid_points)
    fractions = []
    for seed in cfg.seeds:
        stats = compute_link_stats(cfg.constellation(seed))
        points = empirical_cdf(stats, grid)
        write_csv(
            out / str(seed) / "trace.csv",
            ["value", "cumulative_fraction"],
            [[x, f] for x, f in points],
        )
        fractions.append([f for _, f in points])
    arr = np.asarray(fractions)
    return {
        "grid": [float(x) for x in grid],
        "fraction_mean": [float(v) for v in arr.mean(axis=0)],
        "fraction_se": [
            float(v)
            for v in (arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0]) if arr.shape[0] > 1 else np.zeros(arr.shape[1]))
        ],
    }


def _run_optimize_weights(cfg: ExperimentConfig, out: Path) -> dict:
    best, initial = [], []
    for seed in cfg.seeds:
        stats = compute_link_stats(cfg.constellation(seed))
        result = optimize(
            uniform_weights(stats.node_count), stats, cfg.optimizer, cfg.chebyshev, seed=seed
        )
        rows = [
            [t.iteration, t.rho_surrogate, t.rho_oracle, t.active_branch, t.feasibility_residual]
            for t in result.trace
        ]
        seed_dir = out / str(seed)
        write_csv(
            seed_dir / "trace.csv",
            ["iteration", "rho_surrogate", "rho_oracle", "active_branch", "feasibility_residual"],
            rows,
        )
        write_matrix_csv(seed_dir / "weights.csv", result.weights.a)
        best.append(result.rho)
        initial.append(result.trace[0].rho_oracle)
    return {"rho_initial": mean_se(initial), "rho_best": mean_se(best)}


def _run_dml(cfg: ExperimentConfig, out: Path) -> dict:
    assert cfg.task is not None
    finals = {"avg_loss": [], "avg_acc": [], "min_acc": [], "consensus_error": []}
    for seed in cfg.seeds:
        stats = compute_link_stats(cfg.constellation(seed))
        weights = _resolved_weights(cfg, stats, seed)
        task = build_task(cfg.task, stats.node_count, seed)
        rows = run_experiment(_protocol_for_seed(cfg, seed), task, stats, weights)
        write_csv(out / str(seed) / "trace.csv", list(_METRIC_FIELDS), _metrics_rows(rows))
        last = rows[-1]
        finals["avg_loss"].append(last.avg_loss)
        finals["avg_acc"].append(last.avg_acc)
        finals["min_acc"].append(last.min_acc)
        finals["consensus_error"].append(last.consensus_error)
    return {f"final_{k}": mean_se(v) for k, v in finals.items()}


def rounds_to_accuracy(rows: list[MetricsRow], threshold: float, metric: str = "avg_acc") -> float:
    """First round whose accuracy reaches the threshold; inf if never."""
    for r in rows:
        if getattr(r, metric) >= threshold:
            return float(r.round)
    return math.inf


def _run_rho_sweep(cfg: ExperimentConfig, out: Path) -> dict:
    assert cfg.task is not None and cfg.protocol is not None
    n = cfg.node_count
    ones = np.ones((n, n))
    np.fill_diagonal(ones, 0.0)
    ideal_stats = LinkStats(q=ones)
    per_beta_rounds: dict[float, list[float]] = {b: [] for b in cfg.betas}
    per_beta_final: dict[float, list[float]] = {b: [] for b in cfg.betas}
    for seed in cfg.seeds:
        task = build_task(cfg.task, n, seed)
        all_rows: list[list] = []
        traces: dict[float, list[MetricsRow]] = {}
        for beta in cfg.betas:
            weights = AggregationMatrix(prescribed_rho_matrix(n, beta))
            rows = run_experiment(_protocol_for_seed(cfg, seed), task, ideal_stats, weights)
            traces[beta] = rows
            all_rows.extend([[beta] + row for row in _metrics_rows(rows)])
        write_csv(out / str(seed) / "trace.csv", ["beta"] + list(_METRIC_FIELDS), all_rows)

        # threshold anchored at the best-mixing run's plateau for this seed
        base = traces[min(cfg.betas)]
        tail = max(1, len(base) // 10)
        plateau = float(np.mean([r.avg_acc for r in base[-tail:]]))
        threshold = 0.9 * plateau
        for beta in cfg.betas:
            per_beta_rounds[beta].append(rounds_to_accuracy(traces[beta], threshold))
            per_beta_final[beta].append(traces[beta][-1].avg_acc)
    return {
        "betas": cfg.betas,
        "rounds_to_threshold": {str(b): mean_se(per_beta_rounds[b]) for b in cfg.betas},
        "final_avg_acc": {str(b): mean_se(per_beta_final[b]) for b in cfg.betas},
    }


def _run_baseline_compare(cfg: ExperimentConfig, out: Path) -> dict:
    assert cfg.task is not None and cfg.protocol is not None
    per_scheme_acc: dict[str, list[float]] = {s: [] for s in cfg.schemes}
    per_scheme_min: dict[str, list[float]] = {s: [] for s in cfg.schemes}
    for seed in cfg.seeds:
        stats = compute_link_stats(cfg.constellation(seed))
        task = build_task(cfg.task, stats.node_count, seed)
        all_rows: list[list] = []
        for scheme in cfg.schemes:
            weights = scheme_weights(
                scheme,
                stats,
                metropolis_threshold=cfg.protocol.metropolis_threshold,
                opt=cfg.optimizer,
                cheb=cfg.chebyshev,
                seed=seed,
            )
            rows = run_experiment(_protocol_for_seed(cfg, seed, scheme), task, stats, weights)
            all_rows.extend([[scheme] + row for row in _metrics_rows(rows)])
            per_scheme_acc[scheme].append(rows[-1].avg_acc)
            per_scheme_min[scheme].append(rows[-1].min_acc)
        write_csv(out / str(seed) / "trace.csv", ["scheme"] + list(_METRIC_FIELDS), all_rows)
    return {
        "schemes": cfg.schemes,
        "final_avg_acc": {s: mean_se(per_scheme_acc[s]) for s in cfg.schemes},
        "final_min_acc": {s: mean_se(per_scheme_min[s]) for s in cfg.schemes},
    }


def _run_bound_check(cfg: ExperimentConfig, out: Path) -> dict:
    assert cfg.task is not None and cfg.protocol is not None
    n = cfg.node_count
    ones = np.ones((n, n)) - np.eye(n)
    ideal_stats = LinkStats(q=ones)
    weights = AggregationMatrix(prescribed_rho_matrix(n, cfg.bound_beta))
    rho_p2 = float(oracle.rho_nontrivial(second_moment_analytic(weights, ideal_stats)))

    bounds, measured = [], []
    for seed in cfg.seeds:
        task = build_task(cfg.task, n, seed)
        rows = run_experiment(_protocol_for_seed(cfg, seed), task, ideal_stats, weights)
        write_csv(out / str(seed) / "trace.csv", list(_METRIC_FIELDS), _metrics_rows(rows))
        consts = task.measure_constants(seed=seed)
        loss_gap = task.global_loss(np.zeros(task.model_dim)) - task.global_loss(task.optimum())
        inputs = TheoremInputs(
            lipschitz=consts["lipschitz"],
            sigma2=consts["sigma2"],
            delta2=consts["delta2"],
            eta=cfg.protocol.learning_rate,
            rounds=cfg.protocol.rounds,
            node_count=n,
            rho_p2=rho_p2,
            loss_gap=loss_gap,
        )
        bound = convergence_bound(inputs)
        grad_sq = [r.grad_norm_at_mean**2 for r in rows[:-1]] or [rows[0].grad_norm_at_mean**2]
        avg_grad_sq = float(np.mean(grad_sq))
        payload = {
            "inputs": {
                "lipschitz": consts["lipschitz"],
                "sigma2": consts["sigma2"],
                "delta2": consts["delta2"],
                "eta": cfg.protocol.learning_rate,
                "rounds": cfg.protocol.rounds,
                "node_count": n,
                "rho_p2": rho_p2,
                "loss_gap": loss_gap,
            },
            "gamma": gamma(inputs),
            "bound": bound,
            "measured_avg_grad_norm_sq": avg_grad_sq,
            "holds": bool(avg_grad_sq <= bound),
        }
        write_summary(out / str(seed) / "bound.json", payload)
        bounds.append(bound)
        measured.append(avg_grad_sq)
    return {
        "rho_p2": rho_p2,
        "bound": mean_se(bounds),
        "measured_avg_grad_norm_sq": mean_se(measured),
        "holds_all_seeds": bool(all(m <= b for m, b in zip(measured, bounds))),
    }


_RUNNERS = {
    "link_cdf": _run_link_cdf,
    "optimize_weights": _run_optimize_weights,
    "dml_run": _run_dml,
    "rho_sweep": _run_rho_sweep,
    "baseline_compare": _run_baseline_compare,
    "bound_check": _run_bound_check,
}


def run_config(cfg: ExperimentConfig) -> dict:
    """Execute a validated config; returns the summary payload."""
    out_base = Path(os.environ.get("SPECMIX_OUTPUT_DIR", str(cfg.output_dir)))
    out = out_base / cfg.scenario
    summary = _RUNNERS[cfg.scenario](cfg, out)
    payload = {"scenario": cfg.scenario, "seeds": cfg.seeds, **summary}
    write_summary(out / "summary.json", payload)
    return payload


def _load_and_validate(path: str) -> tuple[list[Finding], ExperimentConfig | None]:
    try:
        raw = load_raw(path)
    except FileNotFoundError:
        return [Finding("error", "config", f"file not found: {path}")], None
    except Exception as exc:  # malformed YAML
        return [Finding("error", "config", f"cannot parse: {exc}")], None
    return validate(raw)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="specmix", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    run_p = sub.add_parser("run", help="execute a scenario config")
    run_p.add_argument("config")
    val_p = sub.add_parser("validate", help="dry-run validation of a config")
    val_p.add_argument("config")
    sub.add_parser("version", help="print version")

    args = parser.parse_args(argv)
    if args.verb == "version":
        print(specmix.__version__)
        return EXIT_OK

    findings, cfg = _load_and_validate(args.config)
    if args.verb == "validate":
        for finding in findings:
            print(finding)
        if not findings:
            print("ok: no findings")
        return EXIT_OK if not any(f.severity == "error" for f in findings) else EXIT_CONFIG

    for finding in findings:
        print(finding, file=sys.stderr)
    if cfg is None:
        infeasible = any("infeasible baseline" in f.message for f in findings)
        return EXIT_INFEASIBLE if infeasible else EXIT_CONFIG

    try:
        payload = run_config(cfg)
    except InfeasibleBaselineError as exc:
        print(f"error: infeasible baseline: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (EstimateNonConvergence, OptimizationDiverged, SpectralOptError, TaskError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
