"""Solver unit tests with hand-computed energies and an exact oracle."""

import math

import numpy as np
import pytest

from scenediff.solver import (
    GmpProblem,
    brute_force_gmp,
    cut_pursuit,
    energy,
    extract_labels,
    init_labeling,
    validate_field,
)


def two_node_problem(lam=1.0, epsilon=0.0):
    return GmpProblem(n_nodes=2, edges=np.array([[0, 1]]), phi=np.array([1.0]),
                      lam=lam, epsilon=epsilon)


P_TWO = np.array([[0.8, 0.2], [0.5, 0.5]])


def merged_two_node_energy():
    # KL(p1 || m) + KL(p2 || m) with m = (0.65, 0.35), no cut edge.
    m = (0.65, 0.35)
    e = 0.8 * math.log(0.8 / m[0]) + 0.2 * math.log(0.2 / m[1])
    e += 0.5 * math.log(0.5 / m[0]) + 0.5 * math.log(0.5 / m[1])
    return e


class TestValidation:
    def test_field_shape_rejected(self):
        with pytest.raises(ValueError, match=r"\(n, 2\)"):
            validate_field(np.ones((3, 3)))

    def test_field_rows_must_sum_to_one(self):
        with pytest.raises(ValueError, match="summing to 1"):
            validate_field(np.array([[0.7, 0.2]]))

    def test_field_negative_rejected(self):
        with pytest.raises(ValueError):
            validate_field(np.array([[1.2, -0.2]]))

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError, match="lambda"):
            GmpProblem(n_nodes=2, edges=np.array([[0, 1]]), phi=np.array([1.0]), lam=-0.5)

    def test_epsilon_range(self):
        with pytest.raises(ValueError, match="epsilon"):
            GmpProblem(n_nodes=1, edges=np.empty((0, 2)), phi=np.empty(0), epsilon=1.0)

    def test_edge_endpoint_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            GmpProblem(n_nodes=2, edges=np.array([[0, 2]]), phi=np.array([1.0]))

    def test_edges_phi_length_mismatch(self):
        with pytest.raises(ValueError, match="lengths differ"):
            GmpProblem(n_nodes=3, edges=np.array([[0, 1]]), phi=np.array([1.0, 1.0]))

    def test_negative_phi_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            GmpProblem(n_nodes=2, edges=np.array([[0, 1]]), phi=np.array([-1.0]))

    def test_zero_weight_edges_dropped(self):
        prob = GmpProblem(n_nodes=3, edges=np.array([[0, 1], [1, 2]]),
                          phi=np.array([0.0, 2.0]))
        assert len(prob.edges) == 1
        assert prob.edges.tolist() == [[1, 2]]
        assert prob.coeff.tolist() == [2.0]


class TestInitLabeling:
    def test_seed_and_rest_values(self):
        p = init_labeling(3, {1}, p_seed=0.8, p_rest=0.5, epsilon=0.01)
        np.testing.assert_allclose(p, [[0.5, 0.5], [0.8, 0.2], [0.5, 0.5]], atol=1e-15)

    def test_clipped_away_from_boundary(self):
        p = init_labeling(1, {0}, p_seed=1.0, epsilon=0.01)
        assert p.tolist() == [[0.99, 0.01]]

    def test_empty_seed_set(self):
        p = init_labeling(2, set(), p_rest=0.5)
        assert p.tolist() == [[0.5, 0.5], [0.5, 0.5]]


class TestEnergy:
    def test_singleton_field_pays_only_the_cut(self):
        # q = p keeps KL at zero; the lone edge differs, so energy = lambda.
        prob = two_node_problem(lam=1.0)
        assert energy(P_TWO, P_TWO, prob) == pytest.approx(1.0, abs=1e-12)

    def test_merged_field_hand_value(self):
        prob = two_node_problem(lam=1.0)
        q = np.array([[0.65, 0.35], [0.65, 0.35]])
        assert energy(P_TWO, q, prob) == pytest.approx(merged_two_node_energy(), abs=1e-12)

    def test_smoothing_changes_fidelity_as_computed(self):
        eps = 0.01
        prob = two_node_problem(lam=1.0, epsilon=eps)
        q = np.array([[0.65, 0.35], [0.65, 0.35]])
        expect = 0.0
        for row_p, row_q in zip(P_TWO, q):
            for x, y in zip(row_p, row_q):
                zx = (1 - eps) * x + eps / 2
                zy = (1 - eps) * y + eps / 2
                expect += zx * math.log(zx / zy)
        assert energy(P_TWO, q, prob) == pytest.approx(expect, abs=1e-12)

    def test_lambda_zero_is_pure_fidelity(self):
        prob = two_node_problem(lam=0.0)
        assert energy(P_TWO, P_TWO, prob) == pytest.approx(0.0, abs=1e-12)

    def test_field_length_must_match(self):
        with pytest.raises(ValueError, match="match the problem"):
            energy(np.array([[0.5, 0.5]]), np.array([[0.5, 0.5]]), two_node_problem())


class TestExtractLabels:
    def test_changing(self):
        assert extract_labels(np.array([[0.65, 0.35]])).tolist() == [True]

    def test_tie_stays_off(self):
        assert extract_labels(np.array([[0.5, 0.5]])).tolist() == [False]

    def test_non_changing(self):
        assert extract_labels(np.array([[0.2, 0.8]])).tolist() == [False]


class TestBruteForce:
    def test_single_node_returns_field(self):
        prob = GmpProblem(n_nodes=1, edges=np.empty((0, 2)), phi=np.empty(0), epsilon=0.0)
        part, e = brute_force_gmp(np.array([[0.7, 0.3]]), prob)
        assert part.labels.tolist() == [0]
        np.testing.assert_allclose(part.values, [[0.7, 0.3]], atol=1e-12)
        assert e == pytest.approx(0.0, abs=1e-12)

    def test_two_node_merges_to_mean(self):
        part, e = brute_force_gmp(P_TWO, two_node_problem(lam=1.0))
        assert part.labels.tolist() == [0, 0]
        np.testing.assert_allclose(part.values, [[0.65, 0.35]], atol=1e-12)
        assert e == pytest.approx(merged_two_node_energy(), abs=1e-12)

    def test_two_node_splits_when_lambda_small(self):
        # Cut cost 0.01 beats the 0.1013 merge cost, so singletons win.
        part, e = brute_force_gmp(P_TWO, two_node_problem(lam=0.01))
        assert part.labels.tolist() == [0, 1]
        assert e == pytest.approx(0.01, abs=1e-12)

    def test_node_cap(self):
        prob = GmpProblem(n_nodes=13, edges=np.empty((0, 2)), phi=np.empty(0))
        with pytest.raises(ValueError, match="limited to"):
            brute_force_gmp(np.full((13, 2), 0.5), prob)


class TestCutPursuit:
    def test_two_node_instance_matches_oracle(self):
        prob = two_node_problem(lam=1.0)
        res = cut_pursuit(P_TWO, prob)
        _, e_star = brute_force_gmp(P_TWO, prob)
        assert res.energy == pytest.approx(e_star, abs=1e-12)
        np.testing.assert_allclose(res.q, [[0.65, 0.35], [0.65, 0.35]], atol=1e-12)
        assert extract_labels(res.q).tolist() == [True, True]

    def test_no_edges_returns_field(self):
        prob = GmpProblem(n_nodes=2, edges=np.empty((0, 2)), phi=np.empty(0), lam=5.0)
        res = cut_pursuit(P_TWO, prob)
        np.testing.assert_allclose(res.q, P_TWO, atol=1e-12)

    def test_lambda_zero_returns_field(self):
        res = cut_pursuit(P_TWO, two_node_problem(lam=0.0, epsilon=0.01))
        np.testing.assert_allclose(res.q, P_TWO, atol=1e-12)

    def test_chain_splits_between_blocks(self):
        # Two identical pairs, tiny lambda: cutting the middle edge costs
        # 0.01 while pooling opposite rows costs ~1.4, so the optimum is
        # exactly two components.
        p = np.array([[0.9, 0.1], [0.9, 0.1], [0.1, 0.9], [0.1, 0.9]])
        edges = np.array([[0, 1], [1, 2], [2, 3]])
        prob = GmpProblem(n_nodes=4, edges=edges, phi=np.ones(3), lam=0.01)
        res = cut_pursuit(p, prob)
        _, e_star = brute_force_gmp(p, prob)
        assert res.energy == pytest.approx(e_star, abs=1e-9)
        labels = res.partition.labels
        assert labels[0] == labels[1]
        assert labels[2] == labels[3]
        assert labels[1] != labels[2]
        assert extract_labels(res.q).tolist() == [True, True, False, False]

    def test_chain_merges_under_heavy_penalty(self):
        p = np.array([[0.9, 0.1], [0.9, 0.1], [0.1, 0.9], [0.1, 0.9]])
        edges = np.array([[0, 1], [1, 2], [2, 3]])
        prob = GmpProblem(n_nodes=4, edges=edges, phi=np.ones(3), lam=10.0)
        res = cut_pursuit(p, prob)
        _, e_star = brute_force_gmp(p, prob)
        assert res.energy == pytest.approx(e_star, abs=1e-9)
        assert len(set(res.partition.labels.tolist())) == 1

    def test_energy_never_exceeds_singleton_field(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            edges = np.array([(int(rng.integers(0, k)), k) for k in range(1, n)])
            prob = GmpProblem(n_nodes=n, edges=edges, phi=np.ones(len(edges)),
                              lam=float(rng.choice([0.1, 1.0, 5.0])))
            a = rng.random(n)
            p = np.stack([a, 1 - a], axis=1)
            res = cut_pursuit(p, prob)
            assert res.energy <= energy(p, p, prob) + 1e-9

    def test_traces_are_monotone(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            edges = np.array([(int(rng.integers(0, k)), k) for k in range(1, n)])
            prob = GmpProblem(n_nodes=n, edges=edges, phi=np.ones(len(edges)), lam=1.0)
            a = rng.random(n)
            res = cut_pursuit(np.stack([a, 1 - a], axis=1), prob)
            for trace in res.all_traces:
                assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))

    def test_reported_energy_matches_recomputation(self):
        prob = two_node_problem(lam=1.0, epsilon=0.01)
        res = cut_pursuit(P_TWO, prob)
        assert res.energy == pytest.approx(energy(P_TWO, res.q, prob), abs=1e-9)
