import math

import numpy as np
import pytest
from scipy import integrate

from singlab.errors import DivergentCoefficient, DomainError
from singlab.schedule import (
    CosineSchedule,
    LinearAlphaSquaredSchedule,
    TabularSchedule,
    make_schedule,
    time_grid,
)

SCHEDULES = [
    CosineSchedule(),
    LinearAlphaSquaredSchedule(),
    TabularSchedule([0.0, 0.3, 0.6, 1.0], [1.0, 0.9, 0.8, 0.0]),
]


class TestEndpoints:

    @pytest.mark.parametrize("sched", SCHEDULES, ids=lambda s: s.kind.value)
    def test_alpha_is_one_then_zero(self, sched):
        assert sched.alpha(0.0) == 1.0
        assert sched.alpha(1.0) == 0.0
        assert sched.sigma(0.0) == 0.0
        assert sched.sigma(1.0) == 1.0

    @pytest.mark.parametrize("sched", SCHEDULES, ids=lambda s: s.kind.value)
    def test_unit_circle(self, sched):
        t = np.random.default_rng(0).uniform(0.0, 1.0, size=1000)
        np.testing.assert_allclose(sched.alpha(t) ** 2 + sched.sigma(t) ** 2, 1.0, atol=1e-12)

    @pytest.mark.parametrize("sched", SCHEDULES, ids=lambda s: s.kind.value)
    def test_alpha_strictly_decreasing_inside(self, sched):
        t = np.linspace(0.0, 1.0, 2001)
        assert np.all(np.diff(sched.alpha(t)) < 0.0)

    def test_cosine_midpoint(self, cosine):
        values = cosine.evaluate(0.5)
        assert values.alpha == pytest.approx(0.70710678, abs=1e-8)
        assert values.sigma == pytest.approx(0.70710678, abs=1e-8)

    def test_cosine_at_zero(self, cosine):
        values = cosine.evaluate(0.0)
        assert values.alpha == 1.0
        assert values.sigma == 0.0


class TestDerivatives:

    def test_drift_relation(self, cosine):
        for t in (0.1, 0.4, 0.9):
            values = cosine.evaluate(t)
            assert values.drift_f == pytest.approx(values.alpha_prime / values.alpha, rel=1e-14)
            assert values.diffusion_g_sq == pytest.approx(-2.0 * values.drift_f, rel=1e-14)

    def test_central_difference_is_second_order(self, cosine):
        t = 0.37
        errors = []
        for h in (1e-2, 5e-3):
            fd = (cosine.alpha(t + h) - cosine.alpha(t - h)) / (2.0 * h)
            errors.append(abs(cosine.alpha_prime(t) - fd))
        assert errors[1] < errors[0] / 3.5

    def test_drift_diverges_at_one(self, cosine):
        with pytest.raises(DivergentCoefficient):
            cosine.evaluate(1.0)
        with pytest.raises(DivergentCoefficient):
            cosine.drift(1.0)

    def test_values_without_drift_at_one(self, cosine):
        values = cosine.evaluate(1.0, drift=False)
        assert values.alpha == 0.0
        assert values.drift_f is None
        assert values.alpha_prime == pytest.approx(-0.5 * math.pi)

    def test_linear_alpha_squared_slope_diverges_at_one(self):
        with pytest.raises(DivergentCoefficient):
            LinearAlphaSquaredSchedule().evaluate(1.0, drift=False)

    def test_time_outside_unit_interval(self, cosine):
        with pytest.raises(DomainError):
            cosine.evaluate(1.5)
        with pytest.raises(DomainError):
            cosine.evaluate(-0.1)


class TestTransition:

    def test_tabular_coefficients(self):
        sched = TabularSchedule([0.0, 0.3, 0.6, 1.0], [1.0, 0.9, 0.8, 0.0])
        tr = sched.transition(0.3, 0.6)
        assert tr.alpha_t_given_s == pytest.approx(0.888889, abs=1e-6)
        assert tr.sigma_t_given_s == pytest.approx(0.458123, abs=1e-6)
        assert tr.sigma_s_given_t == pytest.approx(0.332818, abs=1e-6)
        assert tr.beta_hat == pytest.approx(1.0 - tr.alpha_t_given_s ** 2, abs=1e-15)

    def test_sigma_s_given_t_vanishes_as_t_approaches_s(self, cosine):
        values = [cosine.transition(0.5, 0.5 + h).sigma_s_given_t for h in (1e-2, 1e-4, 1e-6)]
        assert values[0] > values[1] > values[2]
        assert values[2] < 1e-2

    @pytest.mark.parametrize("sched", SCHEDULES, ids=lambda s: s.kind.value)
    def test_sigma_s_given_t_non_decreasing_and_bounded(self, sched):
        s = 0.2
        ts = np.linspace(0.21, 1.0, 200)
        values = np.array([sched.transition(s, t).sigma_s_given_t for t in ts])
        assert np.all(np.diff(values) >= -1e-15)
        assert np.all(values <= sched.sigma(s) + 1e-15)

    def test_beta_hat_matches_integrated_drift(self, cosine):
        for s, t in [(0.1, 0.2), (0.3, 0.7), (0.5, 0.95)]:
            integral, _ = integrate.quad(cosine.drift, s, t, epsabs=1e-13, epsrel=1e-12)
            assert 1.0 - math.exp(2.0 * integral) == pytest.approx(cosine.transition(s, t).beta_hat, abs=1e-6)

    def test_bad_order(self, cosine):
        with pytest.raises(DomainError):
            cosine.transition(0.6, 0.5)
        with pytest.raises(DomainError):
            cosine.transition(0.5, 0.5)

    def test_beta_table_ends_at_one(self, cosine):
        betas = cosine.beta_hat_table(50)
        assert betas.shape == (50,)
        assert betas[-1] == 1.0
        assert np.all((betas > 0.0) & (betas <= 1.0))


class TestFactory:

    def test_kinds(self):
        assert isinstance(make_schedule("cosine"), CosineSchedule)
        assert isinstance(make_schedule("linear-alpha-squared"), LinearAlphaSquaredSchedule)
        sched = make_schedule("tabular", {"times": [0.0, 1.0], "alphas": [1.0, 0.0]})
        assert sched.alpha(0.25) == pytest.approx(0.75)

    def test_tabular_needs_knots(self):
        with pytest.raises(DomainError, match="times"):
            make_schedule("tabular", {"alphas": [1.0, 0.0]})

    def test_cosine_takes_no_parameters(self):
        with pytest.raises(DomainError):
            make_schedule("cosine", {"offset": 0.008})

    def test_tabular_must_decrease(self):
        with pytest.raises(DomainError):
            TabularSchedule([0.0, 0.5, 1.0], [1.0, 1.0, 0.0])


class TestTimeGrid:

    def test_default_margin(self):
        np.testing.assert_allclose(time_grid(4), [1.0, 0.75, 0.5, 0.25, 0.0])

    def test_custom_margin(self):
        grid = time_grid(10, 0.05)
        assert grid[0] == 1.0 and grid[-1] == 0.0
        assert grid[1] == pytest.approx(0.95)
        assert grid[-2] == pytest.approx(0.05)
        assert np.all(np.diff(grid) < 0.0)

    def test_two_steps_keep_both_margins(self):
        np.testing.assert_allclose(time_grid(2, 0.1), [1.0, 0.9, 0.1, 0.0])

    def test_invalid(self):
        with pytest.raises(DomainError):
            time_grid(1)
        with pytest.raises(DomainError):
            time_grid(10, 0.5)
