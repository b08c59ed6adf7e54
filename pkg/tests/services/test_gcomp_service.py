import math

import numpy as np
import pytest
from scipy.integrate import quad

from edpcea.models.draw_model import DrawRecord, DrawStore
from edpcea.models.edp_state_model import BaseMeasure, EDPState
from edpcea.models.estimand_model import GcompDraw
from edpcea.models.hazard_state_model import HazardState
from edpcea.models.params_model import CostParams, SurvParams
from edpcea.models.subject_model import Dataset, Subject
from edpcea.services.gcomp_service import (ceac, draw_bootstrap_weights, draw_rng, expected_mv, gcomp_store, icer,
                                           ite_summary, psi_draw, restricted_mean_survival, sample_event_times,
                                           summarize_nmb)
from edpcea.utils.errors import ValidationError


def make_hazard(lambdas=(0.3, 0.9, 0.6)):
    V = len(lambdas)
    return HazardState(np.arange(1.0, V + 1.0), lambdas, [0] * V, [1.0] * V, 1.0, 1.0, [1.0] * V)


def survival(t, rates, width):
    full = min(int(t // width), len(rates) - 1)
    return math.exp(-(sum(rates[:full]) * width + rates[full] * (t - full * width)))


def make_store(iterations=(4, 6), seed=11):
    subjects = [Subject(5.0 + i, 0.5 + 0.5 * i, 1, i % 2, [0.2 * i - 0.3]) for i in range(4)]
    dataset = Dataset(subjects, add_intercept=True)
    base = BaseMeasure([0.0, 0.0], [0.1, 0.1], [0.5, -1.0, 2.0, 0.1], [0.1] * 4, 3.0, 1.0)
    meta = {
        "type": "header",
        "config": {"seed": seed},
        "n": 4,
        "cost_model": "gaussian",
        "add_intercept": True,
        "taus": [1.0, 2.0, 3.0],
        "b": 1.0,
        "xi": 1.0,
        "lambda_star": [1.0, 1.0, 1.0],
        "lambda_star_family": "exponential",
        "lambda_star_params": [1.0],
        "chains": [0],
        "data": DrawStore.dataset_meta(dataset),
    }
    records = [DrawRecord(0, m, EDPState.single_cluster(4, base, np.random.default_rng(m)), [0.3, 0.9, 0.6],
                          [0, 0, 0], [1.0, 1.0, 1.0]) for m in iterations]
    return DrawStore(meta, records), dataset


def fixed_draws(delta_t_rows, delta_y_rows):
    return [GcompDraw(0, m, 1.0, np.full(len(dt), 1.0 / len(dt)), dt, dy)
            for m, (dt, dy) in enumerate(zip(delta_t_rows, delta_y_rows))]


class TestExpectations:
    def setup_method(self, method):
        self.hazard = make_hazard()

    def test_rmst_constant_hazard(self):
        hazard = make_hazard((0.5, 0.5))
        assert restricted_mean_survival(np.array([0.0]), hazard)[0] == pytest.approx((1 - math.exp(-1.0)) / 0.5)

    def test_rmst_matches_quadrature(self):
        etas = np.array([-1.0, 0.0, 0.4])
        closed = restricted_mean_survival(etas, self.hazard)
        for eta, value in zip(etas, closed):
            rates = [lam * math.exp(eta) for lam in self.hazard.lambdas]
            numeric, _ = quad(survival, 0.0, 3.0, args=(rates, 1.0), points=[1.0, 2.0])
            assert value == pytest.approx(numeric, rel=1e-9)

    def test_zero_rate_interval(self):
        hazard = make_hazard((1e-300, 1e-300))
        assert restricted_mean_survival(np.array([0.0]), hazard)[0] == pytest.approx(2.0)

    def test_gaussian_expected_mv(self):
        omega = CostParams([2.0, -1.0, 0.5], 1.0)
        theta = SurvParams([0.3, -0.2])
        mean_t = restricted_mean_survival(np.array([0.3 - 0.2]), self.hazard)[0]
        value = expected_mv(1, [1.0], omega, theta, self.hazard, kappa=4.0)
        assert value == pytest.approx(4.0 * mean_t - (2.0 * mean_t - 1.0 + 0.5))

    def test_intercept_column_is_skipped_for_survival(self):
        omega = CostParams([1.0, 0.0, 3.0, 0.0], 1.0)
        theta = SurvParams([0.0, 0.0])
        mean_t = restricted_mean_survival(np.array([0.0]), self.hazard)[0]
        value = expected_mv(0, [1.0, 5.0], omega, theta, self.hazard, 1.0, add_intercept=True)
        assert value == pytest.approx(mean_t - (mean_t + 3.0))

    def test_lognormal_closed_form_matches_quadrature(self):
        omega = CostParams([0.2, 0.5, 1.0], 0.5)
        theta = SurvParams([0.3, -0.2])
        closed = expected_mv(1, [1.0], omega, theta, self.hazard, 2.0, cost_model="lognormal")
        numeric = expected_mv(1, [1.0], omega, theta, self.hazard, 2.0, cost_model="lognormal",
                              method="quadrature")
        assert closed == pytest.approx(numeric, rel=1e-8)

    def test_lognormal_without_time_effect(self):
        omega = CostParams([0.0, 0.0, 1.0], 0.5)
        theta = SurvParams([0.0, 0.0])
        value = expected_mv(0, [1.0], omega, theta, self.hazard, 0.0, cost_model="lognormal")
        assert value == pytest.approx(-math.exp(1.0 + 0.25))

    def test_expected_mv_matches_forward_simulation(self):
        rng = np.random.default_rng(31)
        theta = SurvParams([0.3, -0.2])
        a, l, kappa, size = 1, 1.0, 2.0, 200000
        eta = 0.3 - 0.2 * l
        for model, omega in (("gaussian", CostParams([2.0, -1.0, 0.5], 1.0)),
                             ("lognormal", CostParams([0.2, 0.5, 1.0], 0.5))):
            t = np.minimum(sample_event_times(np.full(size, eta), self.hazard, rng), self.hazard.tau_max)
            log_scale = omega.beta_t * t + omega.beta[1] * a + omega.beta[2] * l
            y = log_scale + math.sqrt(omega.phi) * rng.standard_normal(size)
            if model == "lognormal":
                y = np.exp(y)
            mv = kappa * t - y
            expected = expected_mv(a, [l], omega, theta, self.hazard, kappa, cost_model=model)
            assert abs(mv.mean() - expected) < 3 * mv.std() / math.sqrt(size)

    def test_unknown_cost_model(self):
        with pytest.raises(ValidationError):
            expected_mv(0, [1.0], CostParams([0.0, 0.0, 0.0], 1.0), SurvParams([0.0, 0.0]), self.hazard, 1.0,
                        cost_model="gamma")


class TestBootstrap:
    def setup_method(self, method):
        self.rng = np.random.default_rng(4)

    def test_weights_form_a_simplex(self):
        for n in (1, 2, 10, 200000):
            weights = draw_bootstrap_weights(n, self.rng)
            assert len(weights) == n
            assert np.all(weights >= 0)
            assert weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_first_weight_mean(self):
        first = [draw_bootstrap_weights(5, self.rng)[0] for _ in range(20000)]
        # Dir(1/5, ...) has E[p_1] = 1/5, Var = (1/5)(4/5)/2
        assert abs(np.mean(first) - 0.2) < 5 * math.sqrt(0.08 / 20000)

    def test_invalid_size(self):
        with pytest.raises(ValidationError):
            draw_bootstrap_weights(0, self.rng)

    def test_draw_rng_depends_on_draw_identity(self):
        assert draw_rng(1, 0, 5).random() == draw_rng(1, 0, 5).random()
        assert draw_rng(1, 0, 5).random() != draw_rng(1, 1, 5).random()


class TestPsiDraw:
    def setup_method(self, method):
        self.store, self.dataset = make_store()

    def test_psi_draw_matches_per_subject_expectations(self):
        record = self.store[0]
        hazard = self.store.hazard(record)
        weights = np.array([0.1, 0.2, 0.3, 0.4])
        gdraw = psi_draw(record, hazard, self.dataset, 1.5, weights=weights)
        omega = record.edp.omega_table()[0]
        theta = list(record.edp.theta_table().values())[0]
        expected = [expected_mv(1, l, omega, theta, hazard, 1.5, add_intercept=True)
                    - expected_mv(0, l, omega, theta, hazard, 1.5, add_intercept=True) for l in self.dataset.l]
        assert gdraw.psi_i.tolist() == pytest.approx(expected)
        assert gdraw.psi == pytest.approx(float(weights @ np.array(expected)))

    def test_gcomp_store_is_reproducible(self):
        first = gcomp_store(self.store, 1.0)
        again, _ = make_store()
        second = gcomp_store(again, 1.0)
        assert [g.weights.tolist() for g in first] == [g.weights.tolist() for g in second]
        assert self.store.has_gcomp()
        assert first[0].weights.tolist() != first[1].weights.tolist()
        reseeded = gcomp_store(make_store()[0], 1.0, seed=12)
        assert reseeded[0].weights.tolist() != first[0].weights.tolist()

    def test_gcomp_output_reloads(self):
        gdraw = gcomp_store(self.store, 1.0)[1]
        reloaded = GcompDraw.from_record(self.store[1], 2.0)
        assert reloaded.psi_at(1.0) == pytest.approx(gdraw.psi)


class TestSummaries:
    def test_summarize_nmb(self):
        summary = summarize_nmb(np.arange(101.0))
        assert summary.mean == 50.0
        assert summary.lo95 == pytest.approx(2.5)
        assert summary.hi95 == pytest.approx(97.5)
        assert summary.draws == 101
        with pytest.raises(ValidationError):
            summarize_nmb([1.0])

    def test_ceac(self):
        # psi(kappa) = kappa * dT - dY with dT = 1 and dY = 0.5, 1.5, 2.5, 3.5 across draws
        draws = fixed_draws([[1.0, 1.0]] * 4, [[dy, dy] for dy in (0.5, 1.5, 2.5, 3.5)])
        curve = ceac(draws, [0.0, 1.0, 2.0, 4.0])
        assert curve.probs == [0.0, 0.25, 0.5, 1.0]

    def test_icer_flags_null_survival_difference(self):
        draws = fixed_draws([[1.0, 3.0], [0.0, 0.0], [2.0, 2.0]], [[2.0, 2.0], [1.0, 1.0], [1.0, 1.0]])
        result = icer(draws)
        assert result.flagged.tolist() == [False, True, False]
        assert result.ratios[0] == pytest.approx(1.0)
        assert math.isnan(result.ratios[1])
        assert result.summary.draws == 2
        assert result.n_flagged == 1

    def test_icer_without_enough_draws(self):
        assert icer(fixed_draws([[0.0], [1.0]], [[1.0], [1.0]])).summary is None

    def test_ite_summary(self):
        draws = fixed_draws([[1.0, 0.0]] * 3, [[0.0, 1.0], [0.5, 2.0], [1.0, 3.0]])
        frame = ite_summary(draws, 2.0)
        assert list(frame.columns) == ["i", "mean", "lo95", "hi95"]
        assert frame["mean"].tolist() == pytest.approx([1.5, -2.0])
        assert np.all(frame["lo95"] <= frame["mean"])
        assert np.all(frame["mean"] <= frame["hi95"])


class TestEventTimes:
    def test_constant_hazard_is_exponential(self):
        hazard = make_hazard((0.5, 0.5, 0.5))
        times = sample_event_times(np.zeros(40000), hazard, np.random.default_rng(2))
        assert np.all(times > 0)
        assert abs(times.mean() - 2.0) < 5 * 2.0 / math.sqrt(40000)

    def test_piecewise_survival_at_knots(self):
        hazard = make_hazard()
        times = sample_event_times(np.zeros(40000), hazard, np.random.default_rng(3))
        for knot in (1.0, 2.0):
            expected = survival(knot, list(hazard.lambdas), 1.0)
            assert abs(np.mean(times > knot) - expected) < 0.015
