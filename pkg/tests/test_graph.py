import numpy as np
import pytest

from social_radar.exceptions import (
    AmbiguityOutOfClassError,
    DimensionMismatchError,
    InfeasibleProblemError,
    InvalidParameterError,
    SingularSystemError,
)
from social_radar.graph import (
    BarabasiAlbert,
    BipartiteSupport,
    DRegular,
    ErBipartite,
    ErdosRenyi,
    NetworkTopology,
    TrustMatrix,
    WattsStrogatz,
    apply_ambiguity,
    build_trust_matrix,
    canonical_relative_trust,
    gen_network,
    network_from_dict,
    network_to_dict,
    place_stubborn,
    placement_from_dict,
    validate_trust_matrix,
)
from tests.factories import NetworkInstanceFactory, TrustMatrixFactory
from tests.utils import assert_row_stochastic


class TestNetworkGeneration:
    """
    Test that the ER/BA/WS generators produce reproducible, symmetric topologies
    without self-trust edges.
    """

    @pytest.mark.parametrize(
        "model",
        [ErdosRenyi(p=0.2), BarabasiAlbert(m=2), WattsStrogatz(b=2, p_rewire=0.1)],
    )
    def test_same_seed_gives_the_same_topology(self, model):
        first = gen_network(model, 30, seed=7)
        second = gen_network(model, 30, seed=7)
        assert first.edges == second.edges
        assert first.model_tag == model.tag

    @pytest.mark.parametrize(
        "model",
        [ErdosRenyi(p=0.2), BarabasiAlbert(m=2), WattsStrogatz(b=2, p_rewire=0.1)],
    )
    def test_generated_edges_are_symmetric_and_loop_free(self, model):
        adjacency = gen_network(model, 25, seed=3).adjacency()
        assert (adjacency == adjacency.T).all()
        assert not np.diag(adjacency).any()

    def test_watts_strogatz_without_rewiring_is_a_ring_lattice(self):
        adjacency = gen_network(WattsStrogatz(b=2, p_rewire=0.0), 10, seed=0).adjacency()
        assert (adjacency.sum(axis=1) == 4).all()
        assert adjacency[0, 1] and adjacency[0, 2] and adjacency[0, 9] and adjacency[0, 8]

    def test_barabasi_albert_needs_more_agents_than_attachments(self):
        with pytest.raises(InvalidParameterError):
            gen_network(BarabasiAlbert(m=5), 5, seed=0)

    def test_watts_strogatz_needs_a_ring_narrower_than_the_population(self):
        with pytest.raises(InvalidParameterError):
            gen_network(WattsStrogatz(b=3, p_rewire=0.1), 6, seed=0)

    def test_invalid_model_parameters_are_rejected(self):
        with pytest.raises(InvalidParameterError):
            ErdosRenyi(p=1.5)
        with pytest.raises(InvalidParameterError):
            BarabasiAlbert(m=0)

    @pytest.mark.parametrize(
        "spec",
        [
            {"model": "er", "p": 0.1},
            {"model": "ba", "m": 3},
            {"model": "ws", "b": 2, "p_rewire": 0.05},
        ],
    )
    def test_network_specs_parse_from_dicts(self, spec):
        assert network_to_dict(network_from_dict(spec)) == spec

    def test_unknown_or_incomplete_network_specs_are_rejected(self):
        with pytest.raises(InvalidParameterError):
            network_from_dict({"model": "lattice"})
        with pytest.raises(InvalidParameterError):
            network_from_dict({"model": "ws", "b": 2})

    def test_edge_list_ingestion_symmetrizes_and_drops_weights(self, tmp_path):
        path = tmp_path / "edges.txt"
        path.write_text("# friendship graph\n0 1\n1 2 0.25\n")
        topology = NetworkTopology.from_edge_list(path)
        assert topology.n_ord == 3
        assert topology.edges == {(0, 1), (1, 0), (1, 2), (2, 1)}

    def test_topology_rejects_self_loops(self):
        with pytest.raises(InvalidParameterError):
            NetworkTopology(n_ord=3, edges=frozenset({(1, 1)}))


class TestStubbornPlacement:
    """
    Test the d-regular and ER-bipartite placements of stubborn agents.
    """

    def test_d_regular_placement_gives_every_agent_d_distinct_stubborn_neighbors(self):
        support = place_stubborn(40, 10, DRegular(d=4), seed=1)
        assert (support.row_degrees() == 4).all()
        assert support.is_d_regular(4)

    def test_d_regular_placement_needs_enough_stubborn_agents(self):
        with pytest.raises(InvalidParameterError):
            place_stubborn(10, 3, DRegular(d=4), seed=1)

    def test_empty_bipartite_rows_are_repaired(self):
        support = place_stubborn(20, 5, ErBipartite(p_s=0.0), seed=2)
        assert (support.row_degrees() == 1).all()
        assert support.empty_rows() == ()

    def test_placement_specs_parse_from_dicts(self):
        assert placement_from_dict({"mode": "d_regular", "d": 5}) == DRegular(d=5)
        assert placement_from_dict({"mode": "er_bipartite", "p_s": 0.2}) == ErBipartite(
            p_s=0.2
        )
        with pytest.raises(InvalidParameterError):
            placement_from_dict({"mode": "d_regular"})


class TestBuildTrustMatrix:
    """
    Test that generated trust matrices are row-stochastic, nonnegative and respect the
    declared supports.
    """

    def test_generated_instance_is_row_stochastic_on_its_supports(self):
        instance = NetworkInstanceFactory()
        trust = instance.trust
        assert_row_stochastic(trust.B, trust.D, tol=1e-12)
        assert not np.diag(trust.D).any()
        assert ((trust.D > 0) == instance.topology.adjacency()).all()
        assert ((trust.B > 0) == instance.support.mask()).all()

    def test_generated_instance_passes_validation(self):
        instance = NetworkInstanceFactory(seed=11)
        report = validate_trust_matrix(instance.trust, instance.topology, instance.support)
        assert report.passed
        assert report.spectral_radius_D < 1.0
        assert report.spectral_norm_D >= report.spectral_radius_D - 1e-12

    def test_agent_without_any_neighbor_is_infeasible(self):
        topology = NetworkTopology(n_ord=2, edges=frozenset())
        support = BipartiteSupport(n_ord=2, n_s=1, edges=frozenset({(0, 0)}))
        with pytest.raises(InfeasibleProblemError):
            build_trust_matrix(topology, support, seed=0)

    def test_full_matrix_has_the_stubborn_identity_block(self):
        trust = TrustMatrixFactory(n_ord=4, n_s=2)
        full = trust.full_matrix()
        np.testing.assert_array_equal(full[:2, :2], np.eye(2))
        np.testing.assert_array_equal(full[:2, 2:], 0.0)
        np.testing.assert_allclose(full.sum(axis=1), 1.0)

    def test_trust_matrix_rejects_inconsistent_blocks(self):
        with pytest.raises(DimensionMismatchError):
            TrustMatrix(B=np.ones((3, 2)), D=np.ones((2, 2)))
        with pytest.raises(InvalidParameterError):
            TrustMatrix(B=-np.ones((2, 1)), D=np.zeros((2, 2)))


class TestValidateTrustMatrix:
    """
    Test that validation reports problems instead of raising.
    """

    def test_row_without_stubborn_trust_fails_assumption_and_contraction(self):
        trust = TrustMatrix(
            B=np.array([[1.0], [0.0]]), D=np.array([[0.0, 0.0], [0.0, 1.0]])
        )
        report = validate_trust_matrix(trust)
        assert not report.satisfies_assumption_2
        assert report.rows_without_stubborn == (1,)
        assert report.spectral_radius_D == pytest.approx(1.0)
        assert not report.passed

    def test_weights_outside_the_declared_support_are_reported(self):
        instance = NetworkInstanceFactory(seed=4)
        empty = NetworkTopology(n_ord=instance.topology.n_ord, edges=frozenset())
        report = validate_trust_matrix(instance.trust, empty, instance.support)
        assert not report.support_D_respected
        assert report.support_B_respected


class TestAmbiguity:
    """
    Test that diagonal rescalings inside the ambiguity class leave the steady-state
    map unchanged, and that the canonical relative trust collapses the class.
    """

    def test_rescaling_preserves_the_steady_state_map(self):
        rng = np.random.default_rng(0)
        for seed in range(500):
            n_ord = int(rng.integers(2, 21))
            n_s = int(rng.integers(1, 6))
            trust = TrustMatrixFactory(
                n_ord=n_ord,
                n_s=n_s,
                density=rng.uniform(0.2, 0.8),
                self_trust=rng.uniform(0.0, 0.8),
                seed=seed,
            )
            bound = 1.0 / (trust.B.sum(axis=1) + trust.D.sum(axis=1) - np.diag(trust.D))
            scaling = rng.uniform(0.1, 1.0, size=n_ord) * bound
            B_new, D_new = apply_ambiguity(trust.B, trust.D, scaling)

            def steady_map(B, D):
                return np.linalg.solve(np.eye(n_ord) - D, B)

            assert_row_stochastic(B_new, D_new)
            np.testing.assert_allclose(
                steady_map(B_new, D_new), steady_map(trust.B, trust.D), atol=1e-8
            )

            for c in (0.0, 0.3):
                original = canonical_relative_trust(trust.B, trust.D, c)
                moved = canonical_relative_trust(B_new, D_new, c)
                np.testing.assert_allclose(moved.B, original.B, atol=1e-9)
                np.testing.assert_allclose(moved.D, original.D, atol=1e-9)

    def test_identity_scaling_changes_nothing(self):
        trust = TrustMatrixFactory(self_trust=0.3)
        B_new, D_new = apply_ambiguity(trust.B, trust.D, 1.0)
        np.testing.assert_allclose(B_new, trust.B, atol=1e-15)
        np.testing.assert_allclose(D_new, trust.D, atol=1e-15)

    def test_scaling_that_makes_self_trust_negative_is_out_of_class(self):
        trust = TrustMatrixFactory(self_trust=0.0)
        with pytest.raises(AmbiguityOutOfClassError):
            apply_ambiguity(trust.B, trust.D, 2.0)

    def test_nonpositive_scaling_is_rejected(self):
        trust = TrustMatrixFactory()
        with pytest.raises(InvalidParameterError):
            apply_ambiguity(trust.B, trust.D, 0.0)

    def test_relative_trust_pins_the_diagonal_and_row_sums(self):
        trust = TrustMatrixFactory(self_trust=0.5)
        relative = canonical_relative_trust(trust.B, trust.D, 0.2)
        np.testing.assert_allclose(np.diag(relative.D), 0.2)
        assert_row_stochastic(relative.B, relative.D)
        assert relative.to_trust_matrix().row_sum_residual() < 1e-12

    def test_full_self_trust_has_no_relative_trust(self):
        with pytest.raises(SingularSystemError):
            canonical_relative_trust(np.array([[0.0]]), np.array([[1.0]]))

    def test_relative_trust_rejects_a_diagonal_target_of_one(self):
        trust = TrustMatrixFactory()
        with pytest.raises(InvalidParameterError):
            canonical_relative_trust(trust.B, trust.D, 1.0)
