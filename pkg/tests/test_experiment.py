import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from social_radar import experiment
from social_radar.config import DataConfig, ExperimentConfig, load_config
from social_radar.dynamics import DynamicsModel, gossip_mean_matrix
from social_radar.experiment import (
    ResultTable,
    TrialResult,
    _expected_trust,
    run_experiment,
    run_trial,
)
from social_radar.graph import BarabasiAlbert, DRegular, ErdosRenyi, WattsStrogatz
from social_radar.metrics import support_error
from social_radar.recovery import RecoveryMode, SolverConfig
from tests.factories import NetworkInstanceFactory

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _small_config(**overrides):
    settings = dict(
        sweep="n_s",
        grid=(8,),
        name="small",
        trials=3,
        n_ord=8,
        networks=(ErdosRenyi(p=0.3),),
        placement=DRegular(d=2),
        mode=RecoveryMode.FULL_SUPPORT,
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


class TestRunTrial:
    """
    Test a single generate, collect, recover and score pass.
    """

    def test_full_support_trial_recovers_the_relative_trust(self):
        config = _small_config()
        row = run_trial(config, 0, 8, 0, config.networks[0], 0)
        assert not row.failed
        assert row.K == 16
        assert row.nmse_D < 1e-6
        assert row.support_error == 0.0
        assert row.runtime > 0

    def test_sparse_trial_restricts_B_to_the_stubborn_placement(self):
        config = _small_config(grid=(10,), mode=RecoveryMode.SPARSE)
        row = run_trial(config, 0, 10, 0, config.networks[0], 0)
        assert not row.failed
        assert row.nmse_D < 1e-3
        assert row.nmse_B < 1e-3

    def test_support_error_is_averaged_over_the_support_given_to_the_solver(
        self, monkeypatch
    ):
        supports = []

        def recording_support_error(estimate, truth, tau=None, support=None):
            supports.append((np.asarray(truth), support))
            return support_error(estimate, truth, tau=tau, support=support)

        monkeypatch.setattr(experiment, "support_error", recording_support_error)
        config = _small_config(
            sweep="p_known",
            grid=(1.0,),
            n_s=8,
            mode=RecoveryMode.SPARSE,
            solver=SolverConfig(max_iters=200),
        )
        run_trial(config, 0, 1.0, 0, config.networks[0], 0)
        [(truth, support)] = supports
        assert support is not None
        offdiag = ~np.eye(truth.shape[0], dtype=bool)
        # Every true zero is revealed, so only true edges remain allowed.
        np.testing.assert_array_equal(support & offdiag, (truth > 0) & offdiag)

    def test_library_errors_become_failed_rows(self, caplog):
        config = _small_config(grid=(3,), placement=DRegular(d=5))
        row = run_trial(config, 0, 3, 0, config.networks[0], 0)
        assert row.failed
        assert "exceeds the number of stubborn agents" in row.error
        assert math.isnan(row.nmse_D)
        assert "failed" in caplog.text

    def test_same_indices_give_the_same_scores(self):
        config = _small_config(mode=RecoveryMode.SPARSE, solver=SolverConfig(max_iters=200))
        first = run_trial(config, 0, 8, 0, config.networks[0], 1)
        second = run_trial(config, 0, 8, 0, config.networks[0], 1)
        assert first.nmse_D == second.nmse_D
        assert first.iterations == second.iterations

    def test_gossip_trials_are_scored_against_the_expected_gossip_matrix(self):
        instance = NetworkInstanceFactory(seed=4)
        gossip = _small_config(data=DataConfig(model=DynamicsModel.BROADCAST_GOSSIP))
        expected = _expected_trust(gossip, instance)
        np.testing.assert_array_equal(expected.D, gossip_mean_matrix(instance.trust).D)
        assert _expected_trust(_small_config(), instance) is instance.trust


class TestRunExperiment:
    """
    Test sweeps over grids, networks and trials, and their summaries.
    """

    def test_every_grid_point_network_and_trial_gets_a_row(self):
        config = _small_config(
            grid=(6, 8), networks=(ErdosRenyi(p=0.3), WattsStrogatz(b=2, p_rewire=0.1))
        )
        table = run_experiment(config)
        assert len(table) == 2 * 2 * 3
        assert not table.failed
        frame = table.to_frame()
        assert set(frame["network"]) == {"ER", "WS"}
        assert sorted(set(frame["value"])) == [6, 8]

    def test_results_do_not_depend_on_the_worker_count(self):
        solver = SolverConfig(max_iters=300)
        serial = _small_config(mode=RecoveryMode.SPARSE, solver=solver)
        parallel = _small_config(mode=RecoveryMode.SPARSE, solver=solver, n_jobs=2)
        pd.testing.assert_frame_equal(
            run_experiment(serial).to_frame().drop(columns="runtime"),
            run_experiment(parallel).to_frame().drop(columns="runtime"),
        )

    def test_model_sweep_labels_rows_by_network(self):
        config = _small_config(
            sweep="model",
            grid=(ErdosRenyi(p=0.3), WattsStrogatz(b=2, p_rewire=0.1)),
            n_s=8,
            trials=1,
        )
        frame = run_experiment(config).to_frame()
        assert list(frame["value"]) == ["ER", "WS"]

    def test_p_known_sweep_uses_sparse_recovery(self):
        config = _small_config(
            sweep="p_known",
            grid=(0.0, 1.0),
            n_s=8,
            trials=2,
            mode=RecoveryMode.SPARSE,
            solver=SolverConfig(max_iters=500),
        )
        frame = run_experiment(config).to_frame()
        assert not frame["failed"].any()
        assert sorted(set(frame["value"])) == [0.0, 1.0]

    def test_edge_list_topology_replaces_the_generator(self, tmp_path):
        path = tmp_path / "edges.txt"
        path.write_text("0 1\n1 2\n2 3\n3 4\n4 5\n5 0\n0 3\n")
        config = _small_config(grid=(4,), trials=2, edge_list=str(path))
        frame = run_experiment(config).to_frame()
        assert (frame["n_ord"] == 6).all()
        assert (frame["network"] == "ingested").all()
        assert not frame["failed"].any()

    def test_failed_trials_are_counted_in_the_summary(self):
        config = _small_config(grid=(3, 8), placement=DRegular(d=4))
        table = run_experiment(config)
        assert len(table.failed) == 3
        summary = table.summary().set_index("value")
        assert summary.loc[3, "failed"] == 3
        assert summary.loc[8, "failed"] == 0
        assert summary.loc[8, "trials"] == 3


class TestResultTable:
    """
    Test the per-point summary statistics.
    """

    def _row(self, value, trial, nmse_D, failed=False):
        return TrialResult(
            sweep="n_s",
            value=value,
            network="ER",
            trial=trial,
            n_ord=10,
            n_s=value,
            K=2 * value,
            nmse_D=nmse_D,
            nmse_B=nmse_D,
            support_error=0.0,
            runtime=0.1,
            converged=not failed,
            failed=failed,
        )

    def test_summary_reports_mean_standard_error_and_median(self):
        table = ResultTable(
            rows=[self._row(5, 0, 1.0), self._row(5, 1, 3.0), self._row(5, 2, 8.0)]
        )
        summary = table.summary().iloc[0]
        assert summary["nmse_D_mean"] == pytest.approx(4.0)
        assert summary["nmse_D_sem"] == pytest.approx(np.std([1.0, 3.0, 8.0], ddof=1) / np.sqrt(3))
        assert summary["median_nmse_D"] == pytest.approx(3.0)
        assert summary["trials"] == 3

    def test_summary_records_are_plain_python(self):
        table = ResultTable(rows=[self._row(5, 0, 1.0), self._row(5, 1, math.nan, failed=True)])
        record = table.summary_records()[0]
        assert isinstance(record["trials"], int)
        assert isinstance(record["nmse_D_mean"], float)
        assert record["failed"] == 1

    def test_empty_table_summarizes_to_an_empty_frame(self):
        assert ResultTable().summary().empty


@pytest.mark.slow
class TestRecoveryAccuracy:
    """
    Sweeps at the sizes of the published experiments: 60 ordinary agents on an ER
    network with edge probability 0.1 and noiseless deterministic data.
    """

    def test_full_support_needs_about_twenty_stubborn_agents(self):
        config = ExperimentConfig(
            sweep="n_s",
            grid=(20,),
            name="full-support",
            trials=20,
            mode=RecoveryMode.FULL_SUPPORT,
        )
        frame = run_experiment(config).to_frame()
        assert frame["nmse_D"].median() < 1e-6

    def test_sparse_recovery_with_five_regular_placement(self):
        config = ExperimentConfig(
            sweep="n_s",
            grid=(36,),
            name="sparse",
            trials=20,
            placement=DRegular(d=5),
            mode=RecoveryMode.SPARSE,
            n_jobs=-1,
        )
        frame = run_experiment(config).to_frame()
        assert frame["nmse_D"].median() < 1e-3

    def test_knowing_more_zeros_improves_sparse_recovery(self):
        config = ExperimentConfig(
            sweep="p_known",
            grid=(0.0, 0.2, 0.4),
            name="p-known",
            trials=20,
            n_s=24,
            mode=RecoveryMode.SPARSE,
            n_jobs=-1,
        )
        summary = run_experiment(config).summary()
        medians = summary.sort_values("value")["median_nmse_D"].tolist()
        assert medians[0] >= medians[1] >= medians[2]

    def test_small_world_networks_need_fewer_stubborn_agents_than_scale_free(self):
        config = load_config(CONFIG_DIR / "network_models.json")
        summary = run_experiment(config).summary()

        def smallest_accurate_n_s(tag):
            rows = summary[(summary["network"] == tag) & (summary["median_nmse_D"] < 1e-3)]
            return rows["value"].min() if len(rows) else math.inf

        ws = smallest_accurate_n_s(WattsStrogatz(b=2, p_rewire=0.08).tag)
        ba = smallest_accurate_n_s(BarabasiAlbert(m=2).tag)
        assert ws < ba
