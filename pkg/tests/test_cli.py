import json

import pandas as pd
import pytest

from social_radar.cli import EXIT_FAILURE, EXIT_INPUT, EXIT_OK, main


@pytest.fixture
def instance_path(tmp_path):
    path = tmp_path / "instance.json"
    code = main(
        [
            "-q",
            "generate",
            "--network",
            '{"model": "er", "p": 0.4}',
            "--n-ord",
            "8",
            "--n-s",
            "8",
            "--d",
            "2",
            "--seed",
            "3",
            "--out",
            str(path),
        ]
    )
    assert code == EXIT_OK
    return path


@pytest.fixture
def dataset_path(tmp_path, instance_path):
    path = tmp_path / "data.json"
    assert main(["-q", "collect", "--instance", str(instance_path), "--out", str(path)]) == 0
    return path


class TestPipeline:
    """
    Test the generate, simulate, collect and recover commands chained through files.
    """

    def test_generate_writes_an_instance(self, instance_path):
        payload = json.loads(instance_path.read_text())
        assert payload["n_ord"] == 8 and payload["n_s"] == 8
        assert len(payload["stubborn_edges"]) == 16

    def test_generate_from_an_edge_list(self, tmp_path):
        edges = tmp_path / "edges.txt"
        edges.write_text("0 1\n1 2\n2 3\n3 0\n")
        out = tmp_path / "instance.json"
        code = main(
            ["-q", "generate", "--edge-list", str(edges), "--n-s", "3", "--d", "1", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert json.loads(out.read_text())["n_ord"] == 4

    def test_simulate_writes_a_trace(self, tmp_path, instance_path):
        out = tmp_path / "trace.csv"
        code = main(
            [
                "-q",
                "simulate",
                "--instance",
                str(instance_path),
                "--steps",
                "50",
                "--dynamics",
                "bg",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        assert len(pd.read_csv(out)) == 51

    def test_collect_uses_twice_as_many_discussions_as_stubborn_agents(self, dataset_path):
        assert json.loads(dataset_path.read_text())["K"] == 16

    def test_full_support_recovery_scores_against_the_instance(
        self, tmp_path, instance_path, dataset_path
    ):
        out = tmp_path / "result.json"
        trace = tmp_path / "objective.csv"
        code = main(
            [
                "-q",
                "recover",
                "--data",
                str(dataset_path),
                "--instance",
                str(instance_path),
                "--mode",
                "full",
                "--out",
                str(out),
                "--trace",
                str(trace),
            ]
        )
        assert code == EXIT_OK
        payload = json.loads(out.read_text())
        assert payload["nmse_D"] < 1e-6
        assert payload["residuals"]["row_sum"] < 1e-12
        assert len(pd.read_csv(trace)) >= 1

    def test_sparse_recovery_uses_the_placement_of_the_instance(self, tmp_path):
        instance = tmp_path / "regular.json"
        data = tmp_path / "regular-data.json"
        out = tmp_path / "sparse.json"
        generate = [
            "-q",
            "generate",
            "--network",
            '{"model": "er", "p": 0.4}',
            "--n-ord",
            "10",
            "--n-s",
            "15",
            "--d",
            "5",
            "--seed",
            "5",
            "--out",
            str(instance),
        ]
        assert main(generate) == EXIT_OK
        assert main(["-q", "collect", "--instance", str(instance), "--out", str(data)]) == 0
        code = main(
            ["-q", "recover", "--data", str(data), "--instance", str(instance), "--out", str(out)]
        )
        assert code == EXIT_OK
        payload = json.loads(out.read_text())
        assert payload["nmse_D"] < 1e-3
        placement = {tuple(edge) for edge in json.loads(instance.read_text())["stubborn_edges"]}
        for i, row in enumerate(payload["B"]):
            for j, weight in enumerate(row):
                if (i, j) not in placement:
                    assert weight == 0.0

    def test_full_support_recovery_needs_the_instance(self, dataset_path):
        code = main(["-q", "recover", "--data", str(dataset_path), "--mode", "full"])
        assert code == EXIT_INPUT

    def test_brute_force_refuses_large_instances(self, tmp_path):
        instance = tmp_path / "large.json"
        data = tmp_path / "large-data.json"
        main(["-q", "generate", "--n-ord", "13", "--n-s", "4", "--d", "2", "--out", str(instance)])
        main(["-q", "collect", "--instance", str(instance), "--out", str(data)])
        code = main(["-q", "recover", "--data", str(data), "--brute-force"])
        assert code == EXIT_INPUT

    def test_missing_input_file_is_an_input_error(self, tmp_path):
        code = main(["-q", "recover", "--data", str(tmp_path / "absent.json")])
        assert code == EXIT_INPUT


class TestCheckCommand:
    """
    Test the identifiability certificates exposed on the command line.
    """

    def test_budget_report_on_stdout(self, capsys):
        code = main(["-q", "check", "--what", "thm1", "--alpha", "0.16", "--d", "5"])
        assert code == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["min_beta"] == pytest.approx(0.528, abs=0.005)
        assert report["failure_exponent"] == -6

    def test_expander_verdict(self, tmp_path, instance_path):
        out = tmp_path / "verdict.json"
        code = main(
            [
                "-q",
                "check",
                "--what",
                "expander",
                "--instance",
                str(instance_path),
                "--alpha",
                "0.25",
                "--delta",
                "0.5",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        payload = json.loads(out.read_text())
        assert isinstance(payload["holds"], bool)
        assert payload["spec"]["d_u"] >= payload["spec"]["d_l"]

    def test_rank_condition_on_the_collected_data(self, tmp_path, instance_path, dataset_path):
        out = tmp_path / "rank.json"
        code = main(
            [
                "-q",
                "check",
                "--what",
                "rank",
                "--in",
                str(dataset_path),
                "--instance",
                str(instance_path),
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        assert json.loads(out.read_text()) == {"what": "rank", "holds": True, "failing_rows": []}

    def test_rank_check_needs_a_dataset(self, instance_path):
        code = main(["-q", "check", "--what", "rank", "--instance", str(instance_path)])
        assert code == EXIT_INPUT


class TestExperimentCommand:
    """
    Test running a sweep from a config file.
    """

    def _config(self, tmp_path, **overrides):
        payload = {
            "sweep": "n_s",
            "grid": [8],
            "name": "cli",
            "trials": 2,
            "n_ord": 8,
            "networks": [{"model": "er", "p": 0.3}],
            "placement": {"mode": "d_regular", "d": 2},
            "mode": "full",
        }
        payload.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(payload))
        return path

    def test_sweep_writes_rows_and_a_summary(self, tmp_path):
        out, summary = tmp_path / "rows.csv", tmp_path / "summary.json"
        code = main(
            [
                "-q",
                "experiment",
                "--config",
                str(self._config(tmp_path)),
                "--out",
                str(out),
                "--summary",
                str(summary),
            ]
        )
        assert code == EXIT_OK
        assert len(pd.read_csv(out)) == 2
        points = json.loads(summary.read_text())["points"]
        assert points[0]["trials"] == 2

    def test_failed_trials_give_exit_code_three(self, tmp_path):
        config = self._config(tmp_path, grid=[1])
        code = main(["-q", "experiment", "--config", str(config), "--out", str(tmp_path / "r.csv")])
        assert code == EXIT_FAILURE

    def test_invalid_config_is_an_input_error(self, tmp_path):
        config = self._config(tmp_path, sweep="density")
        code = main(["-q", "experiment", "--config", str(config), "--out", str(tmp_path / "r.csv")])
        assert code == EXIT_INPUT
