import numpy as np
import pytest

from edpcea.models.edp_state_model import BaseMeasure, EDPState
from edpcea.utils.errors import InvariantError


def make_base():
    return BaseMeasure(theta_center=[0.0, 0.0], theta_var=[1.0, 1.0], beta_center=[0.0, 0.0, 0.0],
                       beta_var=[1.0, 1.0, 1.0], phi_shape=3.0, phi_scale=4.0)


class TestBaseMeasure:
    def setup_method(self, method):
        self.base = make_base()
        self.rng = np.random.default_rng(0)

    def test_dimensions_and_draw_shapes(self):
        assert self.base.cost_dim == 3
        assert self.base.surv_dim == 2
        assert self.base.draw_betas(self.rng, 5).shape == (5, 3)
        assert self.base.draw_thetas(self.rng, 4).shape == (4, 2)
        assert np.all(self.base.draw_phis(self.rng, 10) > 0)

    def test_phi_mean(self):
        assert self.base.phi_mean() == pytest.approx(2.0)

    def test_inverse_gamma_draws_match_mean(self):
        phis = self.base.draw_phis(self.rng, 200000)
        # IG(3, 4) has mean 2 and variance 4
        assert abs(phis.mean() - 2.0) < 5 * 2.0 / np.sqrt(200000)

    def test_invalid_variances_rejected(self):
        with pytest.raises(InvariantError):
            BaseMeasure([0.0], [0.0], [0.0], [1.0], 3.0, 1.0)
        with pytest.raises(InvariantError):
            BaseMeasure([0.0], [1.0, 1.0], [0.0], [1.0], 3.0, 1.0)

    def test_dict_round_trip(self):
        copy = BaseMeasure.from_dict(self.base.to_dict())
        assert copy.to_dict() == self.base.to_dict()


class TestEDPState:
    def setup_method(self, method):
        self.base = make_base()
        self.state = EDPState.single_cluster(6, self.base, np.random.default_rng(1))

    def test_single_cluster(self):
        assert self.state.J == 1
        assert self.state.active_theta().tolist() == [0]
        assert self.state.n_j[0] == 6
        self.state.check_bookkeeping()

    def test_remove_and_reopen_reuses_lowest_slot(self):
        j, k, omega_emptied, theta_emptied = self.state.remove(0)
        assert (j, k) == (0, 0)
        assert not omega_emptied and not theta_emptied
        new_j = self.state.open_omega(np.ones(3), 2.0)
        assert new_j == 1
        new_k = self.state.open_theta(new_j, np.ones(2))
        assert new_k == 1
        self.state.add(0, new_j, new_k)
        self.state.check_bookkeeping()
        assert self.state.J == 2

        # emptying cluster 1 frees both slots for reuse
        j, k, omega_emptied, theta_emptied = self.state.remove(0)
        assert omega_emptied and theta_emptied
        assert self.state.sub_parent[1] == -1
        assert self.state.open_omega(np.zeros(3), 1.0) == 1

    def test_arena_grows(self):
        state = EDPState(10, 3, 2, capacity=1)
        for i in range(10):
            j = state.open_omega(np.zeros(3), 1.0)
            k = state.open_theta(j, np.zeros(2))
            state.add(i, j, k)
        assert state.J == 10
        assert len(state.n_j) >= 10
        state.check_bookkeeping()

    def test_add_rejects_foreign_subcluster(self):
        self.state.remove(0)
        j = self.state.open_omega(np.zeros(3), 1.0)
        with pytest.raises(InvariantError):
            self.state.add(0, j, 0)

    def test_bookkeeping_detects_tampering(self):
        self.state.n_j[0] += 1
        with pytest.raises(InvariantError):
            self.state.check_bookkeeping()

    def test_nested_counts(self):
        self.state.remove(5)
        k = self.state.open_theta(0, np.ones(2))
        self.state.add(5, 0, k)
        assert self.state.K_per_omega().tolist() == [2]
        assert set(self.state.theta_table()) == {(0, 0), (0, k)}
        assert np.allclose(self.state.subject_thetas()[5], np.ones(2))

    def test_dict_round_trip(self):
        self.state.remove(2)
        j = self.state.open_omega(np.array([1.0, 2.0, 3.0]), 0.5)
        k = self.state.open_theta(j, np.array([0.1, 0.2]))
        self.state.add(2, j, k)
        self.state.alpha_omega = 0.7
        copy = EDPState.from_dict(self.state.to_dict())
        copy.check_bookkeeping()
        assert np.array_equal(copy.assign_j, self.state.assign_j)
        assert np.array_equal(copy.assign_k, self.state.assign_k)
        assert np.allclose(copy.subject_betas(), self.state.subject_betas())
        assert np.allclose(copy.subject_thetas(), self.state.subject_thetas())
        assert copy.alpha_omega == 0.7
