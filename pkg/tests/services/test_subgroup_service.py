import math

import numpy as np
import pytest

from edpcea.config.run_config import RunConfig
from edpcea.models.subject_model import Dataset, Subject
from edpcea.services.edp_sampler_service import run_mcmc
from edpcea.services.gcomp_service import gcomp_store
from edpcea.services.subgroup_service import (adjacency, cluster_labels, cluster_profiles, coclustering_probability,
                                              dsi, dsi_single, export_graph, lower_triangle_frame, mode_partition)
from edpcea.services.simulator_service import DGPConfig, simulate
from edpcea.utils.errors import ValidationError

# three draws over four subjects, (j, k) per subject
DRAWS = [
    np.array([[0, 0], [0, 0], [1, 2], [1, 2]]),
    np.array([[0, 0], [0, 1], [1, 2], [1, 2]]),
    np.array([[3, 5], [3, 5], [0, 1], [0, 1]]),
]


def brute_force_p(draws, level="joint"):
    n = len(draws[0])
    P = np.zeros((n, n))
    for assign in draws:
        for i in range(n):
            for j in range(n):
                if level == "omega":
                    P[i, j] += assign[i, 0] == assign[j, 0]
                else:
                    P[i, j] += tuple(assign[i]) == tuple(assign[j])
    return P / len(draws)


class TestCoClustering:
    def test_labels(self):
        assert cluster_labels(DRAWS[1]).tolist() == [0, 1, 2, 2]
        assert cluster_labels(DRAWS[1], "omega").tolist() == [0, 0, 1, 1]
        with pytest.raises(ValidationError):
            cluster_labels(DRAWS[0], "theta")

    def test_adjacency_is_symmetric_with_unit_diagonal(self):
        A = adjacency(DRAWS[1])
        assert np.array_equal(A, A.T)
        assert np.all(np.diag(A) == 1)
        assert A[0, 1] == 0 and A[2, 3] == 1
        assert adjacency(DRAWS[1], "omega")[0, 1] == 1

    def test_probability_matches_brute_force(self):
        for level in ("joint", "omega"):
            P = coclustering_probability(DRAWS, level)
            assert np.allclose(P, brute_force_p(DRAWS, level))
        assert coclustering_probability(DRAWS)[0, 1] == pytest.approx(2.0 / 3.0)

    def test_relabelled_draws_give_the_same_matrix(self):
        relabelled = [np.column_stack([a[:, 0] + 10, a[:, 1] * 3]) for a in DRAWS]
        assert np.array_equal(coclustering_probability(DRAWS), coclustering_probability(relabelled))

    def test_no_draws(self):
        with pytest.raises(ValidationError):
            coclustering_probability([])

    def test_mode_partition(self):
        P = coclustering_probability(DRAWS)
        assign, idx = mode_partition(DRAWS, P)
        assert idx == 0
        assert np.array_equal(assign, DRAWS[0])

    def test_mode_partition_ties_keep_first(self):
        P = np.eye(2) * 0.5 + 0.5
        assign, idx = mode_partition([np.array([[0, 0], [0, 1]]), np.array([[0, 0], [1, 1]])], P)
        assert idx == 0

    def test_lower_triangle(self):
        frame = lower_triangle_frame(np.arange(9.0).reshape(3, 3))
        assert len(frame) == 6
        assert frame[["i", "j"]].values.tolist() == [[0, 0], [1, 0], [1, 1], [2, 0], [2, 1], [2, 2]]


class TestDsi:
    def test_two_clusters_fully_explained(self):
        value, _ = dsi_single([1.0, 1.0, 3.0, 3.0], DRAWS[0])
        assert value == pytest.approx(1.0)

    def test_single_cluster_explains_nothing(self):
        value, _ = dsi_single([1.0, 2.0, 4.0], np.zeros((3, 2)))
        assert value == pytest.approx(0.0)

    def test_hand_computed_value(self):
        psi = np.array([0.0, 2.0, 4.0, 6.0])
        # clusters {0, 1} and {2, 3}: cluster means 1, 1, 5, 5 around 3
        value, weighted = dsi_single(psi, DRAWS[0], weights=np.array([0.25, 0.25, 0.25, 0.25]))
        assert value == pytest.approx(16.0 / 20.0)
        assert weighted == pytest.approx(value)

    def test_weighted_centre_differs(self):
        psi = np.array([0.0, 2.0, 4.0, 6.0])
        _, weighted = dsi_single(psi, DRAWS[0], weights=np.array([0.7, 0.1, 0.1, 0.1]))
        center = 0.7 * 0.0 + 0.1 * 12.0
        cluster_mean = np.array([1.0, 1.0, 5.0, 5.0])
        assert weighted == pytest.approx(np.sum((cluster_mean - center) ** 2) / np.sum((psi - center) ** 2))

    def test_constant_psi_is_missing(self):
        value, weighted = dsi_single([2.0, 2.0, 2.0], np.zeros((3, 2)))
        assert math.isnan(value) and math.isnan(weighted)

    def test_too_few_subjects(self):
        with pytest.raises(ValidationError):
            dsi_single([1.0], np.zeros((1, 2)))

    def test_frame_counts_missing(self):
        psi_rows = np.array([[1.0, 1.0, 3.0, 3.0], [5.0, 5.0, 5.0, 5.0], [0.0, 1.0, 2.0, 3.0]])
        frame = dsi(psi_rows, DRAWS)
        assert list(frame.columns) == ["m", "dsi", "dsi_weighted_center"]
        assert frame.attrs["missing"] == 1
        assert frame["m"].tolist() == [0, 1, 2]
        assert frame["dsi"].dropna().between(0.0, 1.0).all()

    def test_misaligned_inputs(self):
        with pytest.raises(ValidationError):
            dsi(np.zeros((2, 4)), DRAWS)


class TestExport:
    def setup_method(self, method):
        self.P = coclustering_probability(DRAWS)

    def test_edges_above_threshold(self):
        edges, nodes = export_graph(self.P, 0.5, mode_assign=DRAWS[0], psi_mean=[1.0, 2.0, 3.0, 4.0])
        assert edges[["i", "j"]].values.tolist() == [[0, 1], [2, 3]]
        assert edges["p"].tolist() == pytest.approx([2.0 / 3.0, 1.0])
        assert nodes["cluster"].tolist() == [0, 0, 1, 1]
        assert nodes["psi_mean"].tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_zero_threshold_keeps_positive_pairs(self):
        edges, nodes = export_graph(self.P, 0.0)
        assert np.all(edges["i"] < edges["j"])
        assert np.all(edges["p"] > 0)
        assert list(nodes.columns) == ["i"]

    def test_threshold_range(self):
        with pytest.raises(ValidationError):
            export_graph(self.P, 1.0)

    def test_cluster_profiles(self):
        subjects = [Subject(10.0, 1.0, 1, 0, [0.5]), Subject(20.0, 3.0, 0, 1, [1.5]),
                    Subject(30.0, 2.0, 1, 1, [2.0]), Subject(50.0, 4.0, 1, 1, [4.0])]
        profiles = cluster_profiles(Dataset(subjects), DRAWS[0])
        assert profiles[["j", "k"]].values.tolist() == [[0, 0], [1, 2]]
        assert profiles["size"].tolist() == [2, 2]
        assert profiles["mean_cost"].tolist() == [15.0, 40.0]
        assert profiles["event_rate"].tolist() == [0.5, 1.0]
        assert profiles["treated_fraction"].tolist() == [0.5, 1.0]
        assert profiles["mean_l1"].tolist() == [1.0, 3.0]


@pytest.mark.slow
class TestDsiOnBimodalData:
    def test_posterior_mean_dsi_in_range(self):
        simulated, _ = simulate(DGPConfig(n=500, p_c=0.5, p_delta=0.1, seed=71))
        dataset = Dataset(simulated.subjects, add_intercept=True)
        store = run_mcmc(dataset, RunConfig(iters=1500, burnin=750, thin=5, seed=72, log_every=0))
        gdraws = gcomp_store(store, 1.0)
        frame = dsi(np.array([g.psi_i_at(1.0) for g in gdraws]), store)
        assert 0.5 <= frame["dsi"].mean() <= 0.9
