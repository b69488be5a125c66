import json
from pathlib import Path

import numpy as np
import yaml

from specmix.cli import main, read_matrix_csv, write_matrix_csv


def write_config(path: Path, body: dict) -> Path:
    path.write_text(yaml.safe_dump(body), encoding="utf-8")
    return path


def base_config(tmp_path: Path, scenario: str, **extra) -> dict:
    body = {
        "scenario": scenario,
        "output_dir": str(tmp_path / "out"),
        "seeds": [1, 2],
    }
    body.update(extra)
    return body


SMALL_TASK = {
    "kind": "softmax_synthetic",
    "dimension": 4,
    "classes": 3,
    "samples_min": 30,
    "samples_max": 40,
    "heterogeneity": 1.0,
    "noise_scale": 1.0,
    "minibatch": 4,
    "test_size": 150,
}


class TestValidate:
    def test_well_formed_config_no_findings(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "c.yaml",
            base_config(tmp_path, "link_cdf", constellation={"parameter_set": "A", "node_count": 8}),
        )
        assert main(["validate", str(cfg)]) == 0
        assert "no findings" in capsys.readouterr().out

    def test_unknown_keys_are_errors(self, tmp_path, capsys):
        body = base_config(tmp_path, "link_cdf", constellation={"parameter_set": "A"})
        body["constellation"]["maximum_warp"] = 9
        body["typo_section"] = {}
        cfg = write_config(tmp_path / "c.yaml", body)
        assert main(["validate", str(cfg)]) == 2
        out = capsys.readouterr().out
        assert "constellation.maximum_warp" in out
        assert "typo_section" in out

    def test_reports_all_findings_not_just_first(self, tmp_path, capsys):
        body = base_config(tmp_path, "dml_run")
        body["seeds"] = []
        cfg = write_config(tmp_path / "c.yaml", body)
        assert main(["validate", str(cfg)]) == 2
        out = capsys.readouterr().out
        # missing sections and the bad seed list all reported together
        assert "seeds" in out and "protocol" in out and "task" in out

    def test_metropolis_isolation_finding(self, tmp_path, capsys):
        body = base_config(
            tmp_path,
            "dml_run",
            constellation={"parameter_set": "B", "node_count": 22},
            protocol={
                "learning_rate": 0.1,
                "rounds": 2,
                "weights_source": "metropolis",
                "metropolis_threshold": 0.99,
            },
            task=dict(SMALL_TASK),
        )
        cfg = write_config(tmp_path / "c.yaml", body)
        assert main(["validate", str(cfg)]) == 2
        assert "infeasible baseline" in capsys.readouterr().out

    def test_learning_rate_warning_names_condition(self, tmp_path, capsys):
        body = base_config(
            tmp_path,
            "bound_check",
            constellation={"node_count": 6},
            protocol={"learning_rate": 0.5, "rounds": 5},
            task={"kind": "quadratic", "dimension": 3, "minibatch": 4},
            bound_check={"beta": 0.25},
        )
        cfg = write_config(tmp_path / "c.yaml", body)
        # warnings alone do not fail validation
        assert main(["validate", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "warning" in out
        assert "6 L sqrt(N)" in out

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope.yaml")]) == 2


class TestRun:
    def test_link_cdf_outputs(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "c.yaml",
            base_config(
                tmp_path,
                "link_cdf",
                constellation={"parameter_set": "A", "node_count": 10},
                link_cdf={"grid_points": 11},
            ),
        )
        assert main(["run", str(cfg)]) == 0
        out_dir = tmp_path / "out" / "link_cdf"
        for seed in (1, 2):
            trace = (out_dir / str(seed) / "trace.csv").read_text().splitlines()
            assert trace[0] == "value,cumulative_fraction"
            assert len(trace) == 12
            assert trace[-1].split(",")[1] == "1.0"
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["scenario"] == "link_cdf"

    def test_optimize_weights_outputs_and_summary_recompute(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.yaml",
            base_config(
                tmp_path,
                "optimize_weights",
                constellation={"parameter_set": "A", "node_count": 10},
                optimizer={"max_iterations": 10},
            ),
        )
        assert main(["run", str(cfg)]) == 0
        out_dir = tmp_path / "out" / "optimize_weights"
        summary = json.loads((out_dir / "summary.json").read_text())
        best = []
        for seed in (1, 2):
            lines = (out_dir / str(seed) / "trace.csv").read_text().splitlines()
            header = lines[0].split(",")
            rho_idx = header.index("rho_oracle")
            values = [float(line.split(",")[rho_idx]) for line in lines[1:]]
            best.append(min(values))
            weights = read_matrix_csv(out_dir / str(seed) / "weights.csv")
            assert weights.shape == (10, 10)
            assert np.abs(weights.sum(axis=1) - 1.0).max() < 1e-9
        # summary statistics recomputable from the per-seed CSVs
        arr = np.asarray(best)
        assert abs(float(arr.mean()) - summary["rho_best"]["mean"]) < 1e-12
        expected_se = float(arr.std(ddof=1) / np.sqrt(arr.size))
        assert abs(expected_se - summary["rho_best"]["se"]) < 1e-12

    def test_dml_run_trace_schema(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.yaml",
            base_config(
                tmp_path,
                "dml_run",
                constellation={"parameter_set": "A", "node_count": 8},
                protocol={"learning_rate": 0.3, "rounds": 4, "weights_source": "uniform"},
                task=dict(SMALL_TASK),
            ),
        )
        assert main(["run", str(cfg)]) == 0
        lines = (tmp_path / "out" / "dml_run" / "1" / "trace.csv").read_text().splitlines()
        assert lines[0] == "round,avg_loss,avg_acc,min_acc,consensus_error,grad_norm_at_mean"
        assert len(lines) == 6  # header + rounds 0..4

    def test_rho_sweep_and_bound_check(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.yaml",
            {
                "scenario": "rho_sweep",
                "output_dir": str(tmp_path / "out"),
                "seeds": [3],
                "constellation": {"node_count": 8},
                "protocol": {"learning_rate": 0.3, "rounds": 6},
                "task": dict(SMALL_TASK),
                "rho_sweep": {"betas": [0.0, 0.5]},
            },
        )
        assert main(["run", str(cfg)]) == 0
        lines = (tmp_path / "out" / "rho_sweep" / "3" / "trace.csv").read_text().splitlines()
        assert lines[0].startswith("beta,round,")
        assert len(lines) == 1 + 2 * 7

        cfg2 = write_config(
            tmp_path / "c2.yaml",
            {
                "scenario": "bound_check",
                "output_dir": str(tmp_path / "out"),
                "seeds": [3],
                "constellation": {"node_count": 6},
                "protocol": {"learning_rate": 0.01, "rounds": 30},
                "task": {"kind": "quadratic", "dimension": 3, "minibatch": 8},
                "bound_check": {"beta": 0.25},
            },
        )
        assert main(["run", str(cfg2)]) == 0
        bound = json.loads((tmp_path / "out" / "bound_check" / "3" / "bound.json").read_text())
        assert {"inputs", "gamma", "bound", "measured_avg_grad_norm_sq", "holds"} <= set(bound)

    def test_infeasible_baseline_exit_code(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.yaml",
            base_config(
                tmp_path,
                "dml_run",
                constellation={"parameter_set": "B", "node_count": 22},
                protocol={
                    "learning_rate": 0.1,
                    "rounds": 2,
                    "weights_source": "metropolis",
                    "metropolis_threshold": 0.99,
                },
                task=dict(SMALL_TASK),
            ),
        )
        assert main(["run", str(cfg)]) == 3

    def test_config_error_exit_code(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", {"scenario": "nope"})
        assert main(["run", str(cfg)]) == 2

    def test_env_var_overrides_output_dir(self, tmp_path, monkeypatch):
        cfg = write_config(
            tmp_path / "c.yaml",
            base_config(
                tmp_path,
                "link_cdf",
                constellation={"parameter_set": "A", "node_count": 6},
                link_cdf={"grid_points": 5},
            ),
        )
        override = tmp_path / "elsewhere"
        monkeypatch.setenv("SPECMIX_OUTPUT_DIR", str(override))
        assert main(["run", str(cfg)]) == 0
        assert (override / "link_cdf" / "1" / "trace.csv").exists()

    def test_reruns_byte_identical(self, tmp_path):
        cfg = write_config(
            tmp_path / "c.yaml",
            base_config(
                tmp_path,
                "dml_run",
                constellation={"parameter_set": "A", "node_count": 8},
                protocol={"learning_rate": 0.3, "rounds": 5, "weights_source": "uniform"},
                task=dict(SMALL_TASK),
            ),
        )
        assert main(["run", str(cfg)]) == 0
        first = (tmp_path / "out" / "dml_run" / "1" / "trace.csv").read_bytes()
        first_summary = (tmp_path / "out" / "dml_run" / "summary.json").read_bytes()
        assert main(["run", str(cfg)]) == 0
        assert (tmp_path / "out" / "dml_run" / "1" / "trace.csv").read_bytes() == first
        assert (tmp_path / "out" / "dml_run" / "summary.json").read_bytes() == first_summary

    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert capsys.readouterr().out.strip() == "0.1.0"


class TestMatrixCsv:
    def test_round_trip(self, tmp_path, rng):
        m = rng.standard_normal((5, 5))
        path = tmp_path / "m.csv"
        write_matrix_csv(path, m)
        back = read_matrix_csv(path)
        assert np.array_equal(back, m)
