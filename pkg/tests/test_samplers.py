import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import norm

from conftest import inline_model
from oracles import ddim_split_threshold_1d
from singlab.errors import DivergentCoefficient, DomainError, SingularStep
from singlab.guidance import Denoiser, GuidanceConfig
from singlab.samplers import (
    SamplerConfig,
    chain_rng,
    final_step,
    forward_chain,
    forward_sample,
    initial_step,
    ode_rhs,
    reverse_step,
    run_chain,
)


class TestSamplerConfig:

    def test_default_margin(self):
        assert SamplerConfig(T=200).eps == pytest.approx(0.005)
        assert SamplerConfig(T=200, epsilon=0.05).eps == 0.05

    @pytest.mark.parametrize("fields", [{"T": 1}, {"epsilon": 0.5}, {"chains": 0}, {"method": "heun"}])
    def test_invalid(self, fields):
        with pytest.raises(ValidationError):
            SamplerConfig(**fields)


class TestForward:

    def test_full_noise_forgets_start(self, two_point):
        x = forward_sample(two_point, np.array([5.0]), 0.0, 1.0, np.random.default_rng(7))
        np.testing.assert_array_equal(x, np.random.default_rng(7).standard_normal(1))

    def test_tiny_step_stays_put(self, two_point):
        x = forward_sample(two_point, np.array([0.7]), 0.0, 1e-8, np.random.default_rng(0))
        assert x[0] == pytest.approx(0.7, abs=1e-6)

    def test_moments(self, two_point):
        s, t, x_s = 0.3, 0.6, 1.2
        tr = two_point.schedule.transition(s, t)
        n = 100_000
        x = forward_sample(two_point, np.full(n, x_s), s, t, np.random.default_rng(1))
        assert abs(x.mean() - tr.alpha_t_given_s * x_s) < 4 * tr.sigma_t_given_s / math.sqrt(n)
        var_se = tr.sigma_t_given_s ** 2 * math.sqrt(2.0 / n)
        assert abs(x.var(ddof=1) - tr.sigma_t_given_s ** 2) < 4 * var_se

    def test_discrete_chain_reaches_noise(self, two_point):
        states = forward_chain(two_point, np.ones((2000, 1)), 20, np.random.default_rng(2))
        assert states.shape == (21, 2000, 1)
        np.testing.assert_array_equal(states[0], 1.0)
        # the last beta is 1, so x_T is a fresh standard normal
        assert abs(states[-1].mean()) < 4 / math.sqrt(2000)
        assert abs(np.corrcoef(states[-2, :, 0], states[-1, :, 0])[0, 1]) < 4 / math.sqrt(2000)


class TestReverseStep:

    def test_ddim_from_one_is_the_singular_step(self, two_point):
        eps = 0.05
        alpha, sigma = two_point.schedule.alpha(1 - eps), two_point.schedule.sigma(1 - eps)
        x1 = np.random.default_rng(3).standard_normal((50, 1))
        out = reverse_step(two_point, "ddim", x1, 1.0, 1 - eps)
        ybar = two_point.ybar(x1, 1.0)
        np.testing.assert_array_equal(out, alpha * ybar + sigma * x1)

    def test_ddim_from_one_with_label(self, two_point):
        x1 = np.array([0.3])
        out = reverse_step(two_point, "ddim", x1, 1.0, 0.9, label=1)
        expected = two_point.schedule.alpha(0.9) * 1.0 + two_point.schedule.sigma(0.9) * 0.3
        assert out[0] == pytest.approx(expected, rel=1e-15)

    def test_ddpm_and_eps_form_agree(self, two_point):
        rng = np.random.default_rng(4)
        for _ in range(20):
            t = rng.uniform(0.1, 0.99)
            s = rng.uniform(0.01, t - 0.005)
            x = rng.normal(scale=2.0, size=(8, 1))
            z = rng.standard_normal((8, 1))
            a = reverse_step(two_point, "ddpm", x, t, s, z=z)
            b = reverse_step(two_point, "ddpm_eps", x, t, s, z=z)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_ddpm_eps_refuses_one(self, two_point):
        with pytest.raises(SingularStep, match="division-by-zero") as info:
            reverse_step(two_point, "ddpm_eps", np.array([0.2]), 1.0, 0.99, rng=np.random.default_rng(0))
        assert info.value.method == "ddpm_eps"
        assert info.value.t == 1.0

    def test_sde_refuses_one(self, two_point):
        with pytest.raises(DivergentCoefficient):
            reverse_step(two_point, "sde_em", np.array([0.2]), 1.0, 0.99, rng=np.random.default_rng(0))

    def test_sde_interior_step_is_finite(self, two_point):
        out = reverse_step(two_point, "sde_em", np.array([0.2]), 0.5, 0.49, rng=np.random.default_rng(0))
        assert np.all(np.isfinite(out))

    def test_stochastic_needs_draws(self, two_point):
        with pytest.raises(DomainError):
            reverse_step(two_point, "ddpm", np.array([0.2]), 0.5, 0.4)

    def test_needs_earlier_target(self, two_point):
        with pytest.raises(DomainError):
            reverse_step(two_point, "ddim", np.array([0.2]), 0.4, 0.5)

    def test_ode_cannot_land_on_zero(self, two_point):
        with pytest.raises(DomainError):
            reverse_step(two_point, "ode_rk4", np.array([0.2]), 0.01, 0.0)

    def test_ode_velocity_on_the_exact_path(self, single_point):
        sched = single_point.schedule
        den = Denoiser(single_point)
        for t in (0.2, 0.5, 0.9, 1.0):
            x = np.array([[sched.alpha(t) * 2.0]])
            assert ode_rhs(den, x, t)[0, 0] == pytest.approx(sched.alpha_prime(t) * 2.0, rel=1e-12, abs=1e-12)

    def test_rk4_stays_on_the_exact_path(self, single_point):
        sched = single_point.schedule
        t, s = 0.5, 0.49
        x = np.array([sched.alpha(t) * 2.0])
        out = reverse_step(single_point, "ode_rk4", x, t, s)
        assert out[0] == pytest.approx(sched.alpha(s) * 2.0, abs=1e-9)

    def test_ode_euler_local_error_is_quadratic(self, single_point):
        sched = single_point.schedule
        errors = []
        for h in (0.02, 0.01):
            x = np.array([sched.alpha(0.5) * 2.0])
            out = reverse_step(single_point, "ode_euler", x, 0.5, 0.5 - h)
            errors.append(abs(out[0] - sched.alpha(0.5 - h) * 2.0))
        assert 3.0 < errors[0] / errors[1] < 5.0

    def test_deterministic_methods_ignore_noise(self, two_point):
        x = np.array([[0.4], [-1.1]])
        for method in ("ddim", "ddim_first_order", "ode_euler", "ode_rk4"):
            a = reverse_step(two_point, method, x, 0.6, 0.55, z=np.ones_like(x))
            b = reverse_step(two_point, method, x, 0.6, 0.55, z=-np.ones_like(x))
            np.testing.assert_array_equal(a, b)

    def test_first_order_ddim_close_to_ddim_for_small_steps(self, two_point):
        x = np.array([[0.4]])
        a = reverse_step(two_point, "ddim", x, 0.6, 0.599)
        b = reverse_step(two_point, "ddim_first_order", x, 0.6, 0.599)
        assert abs(a[0, 0] - b[0, 0]) < 1e-4

    def test_single_state_shape(self, two_point):
        out = reverse_step(two_point, "ddpm", np.array([0.2]), 0.5, 0.4, rng=np.random.default_rng(0))
        assert out.shape == (1,)

    def test_unit_guidance_matches_unguided(self, two_point):
        x = np.array([[0.4], [-0.3]])
        z = np.array([[0.1], [0.2]])
        cfg = GuidanceConfig(pos_label=1, scale=1.0)
        for method in ("ddpm", "ddim"):
            guided = reverse_step(two_point, method, x, 0.6, 0.55, guidance=cfg, z=z)
            plain = reverse_step(two_point, method, x, 0.6, 0.55, label=1, z=z)
            np.testing.assert_allclose(guided, plain, rtol=1e-12, atol=1e-12)


class TestInitialStep:

    def test_naive_moments(self, two_point):
        state = initial_step(two_point, "naive_gaussian", epsilon=0.05, rng=np.random.default_rng(5), size=100_000)
        x = state.x_one_minus_eps
        assert abs(x.mean()) < 4 / math.sqrt(x.size)
        assert abs(x.var(ddof=1) - 1.0) < 4 * math.sqrt(2.0 / x.size)

    def test_sing_step_on_single_point_class(self, two_point):
        eps = 0.05
        alpha, sigma = two_point.schedule.alpha(1 - eps), two_point.schedule.sigma(1 - eps)
        state = initial_step(two_point, "sing_step", label=1, epsilon=eps, rng=np.random.default_rng(6), size=1000)
        np.testing.assert_allclose(state.x_one_minus_eps, alpha * 1.0 + sigma * state.x1, rtol=1e-15)

    def test_sing_step_uses_class_mean(self, cosine):
        model = inline_model([[0.0], [2.0]], labels=[0, 0])
        state = initial_step(model, "sing_step", label=0, epsilon=0.1, rng=np.random.default_rng(8), size=500)
        implied = (state.x_one_minus_eps - cosine.sigma(0.9) * state.x1) / cosine.alpha(0.9)
        np.testing.assert_allclose(implied, 1.0, atol=1e-12)

    def test_true_forward_has_no_x1(self, two_point):
        state = initial_step(two_point, "true_forward", label=0, rng=np.random.default_rng(9), size=10)
        assert state.x1 is None
        assert state.x_one_minus_eps.shape == (10, 1)

    def test_method_step_with_ddim_equals_sing_step(self, two_point):
        a = initial_step(two_point, "sing_step", epsilon=0.05, rng=np.random.default_rng(10), size=64)
        b = initial_step(two_point, "method_step", epsilon=0.05, rng=np.random.default_rng(10), size=64, method="ddim")
        np.testing.assert_array_equal(a.x1, b.x1)
        np.testing.assert_array_equal(a.x_one_minus_eps, b.x_one_minus_eps)

    def test_method_step_with_eps_form_is_singular(self, two_point):
        with pytest.raises(SingularStep):
            initial_step(two_point, "method_step", rng=np.random.default_rng(0), size=4, method="ddpm_eps")

    def test_single_draw_shapes(self, two_point):
        state = initial_step(two_point, "sing_step", rng=np.random.default_rng(11))
        assert state.x1.shape == (1,)
        assert state.x_one_minus_eps.shape == (1,)

    def test_unknown_label(self, two_point):
        with pytest.raises(DomainError):
            initial_step(two_point, "sing_step", label=3, rng=np.random.default_rng(0))


class TestFinalStep:

    def test_single_point(self, single_point):
        assert final_step(single_point, np.array([40.0]), 0.01)[0] == 2.0

    def test_scaled_training_point(self, two_point):
        t = 0.01
        x = np.array([two_point.schedule.alpha(t) * -1.0])
        assert final_step(two_point, x, t)[0] == pytest.approx(-1.0, abs=1e-6)

    def test_separatrix(self, two_point):
        assert final_step(two_point, np.array([0.0]), 0.01)[0] == 0.0


class TestRunChain:

    def test_time_grid(self, two_point):
        batch = run_chain(two_point, SamplerConfig(T=10, chains=3), threads=1)
        np.testing.assert_allclose(batch.times, [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0])
        assert batch.states.shape == (3, 11, 1)
        np.testing.assert_array_equal(batch.states[:, 0], batch.x1)

    def test_two_step_grid_collapses_at_margin(self, two_point):
        batch = run_chain(two_point, SamplerConfig(method="ddim", T=2, epsilon=0.1, chains=2), threads=1)
        np.testing.assert_allclose(batch.times, [1.0, 0.9, 0.1, 0.0])
        np.testing.assert_allclose(batch.states[:, -1], two_point.ybar(batch.states[:, -2], 0.1))

    def test_true_forward_starts_at_margin(self, two_point):
        config = SamplerConfig(T=10, chains=3, init_mode="true_forward", final_mode="plain_last_step")
        batch = run_chain(two_point, config, threads=1)
        assert batch.times[0] == pytest.approx(0.9)
        assert batch.times[-1] == pytest.approx(0.1)
        assert batch.x1 is None

    def test_record_every_keeps_the_ends(self, two_point):
        batch = run_chain(two_point, SamplerConfig(T=100, chains=2, record_every=25), threads=1)
        assert batch.times[0] == 1.0
        assert batch.times[1] == pytest.approx(0.99)
        assert batch.times[-2] == pytest.approx(0.01)
        assert batch.times[-1] == 0.0
        assert np.all(np.diff(batch.times) < 0.0)
        assert len(batch.times) < 10

    def test_thread_count_does_not_matter(self, two_point):
        config = SamplerConfig(method="ddpm", T=50, chains=600, seed=123)
        a = run_chain(two_point, config, threads=1)
        b = run_chain(two_point, config, threads=4)
        np.testing.assert_array_equal(a.states, b.states)

    def test_chain_independent_of_total(self, two_point):
        few = run_chain(two_point, SamplerConfig(method="sde_em", T=40, chains=300, seed=9), threads=2)
        many = run_chain(two_point, SamplerConfig(method="sde_em", T=40, chains=700, seed=9), threads=3)
        np.testing.assert_array_equal(few.states, many.states[:300])

    @pytest.mark.parametrize("steps", [10_000, pytest.param(100_000, marks=pytest.mark.slow)])
    def test_ddim_split_matches_fine_step_reference(self, cosine, steps):
        points = [-1.0, 2.0]
        model = inline_model([[p] for p in points])
        config = SamplerConfig(method="ddim", T=1000, chains=10_000, record_every=1000, seed=4)
        batch = run_chain(model, config, threads=2)
        terminal = batch.terminal[:, 0]
        assert np.all(np.min(np.abs(terminal[:, None] - np.array(points)), axis=1) < 1e-2)

        threshold = ddim_split_threshold_1d(points, cosine.alpha, steps)
        coarse = np.mean(terminal > 0.5)
        fine = np.mean(batch.x1[:, 0] > threshold)
        assert abs(coarse - fine) < 0.01
        # the exact flow carries half the Gaussian mass to each point
        assert abs(norm.sf(threshold) - 0.5) < 0.01

    def test_chain_stream(self):
        a = chain_rng(5, 2).standard_normal(3)
        b = chain_rng(5, 2).standard_normal(3)
        c = chain_rng(5, 3).standard_normal(3)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_eps_form_with_method_step_aborts(self, two_point):
        config = SamplerConfig(method="ddpm_eps", T=20, chains=4, init_mode="method_step")
        with pytest.raises(SingularStep):
            run_chain(two_point, config, threads=1)

    def test_eps_form_after_singular_step_runs(self, two_point):
        config = SamplerConfig(method="ddpm_eps", T=50, chains=50)
        batch = run_chain(two_point, config, threads=1)
        assert np.all(np.isfinite(batch.states))

    def test_sde_with_method_step_diverges(self, two_point):
        config = SamplerConfig(method="sde_em", T=20, chains=4, init_mode="method_step")
        with pytest.raises(DivergentCoefficient):
            run_chain(two_point, config, threads=1)

    def test_fixed_x1(self, two_point):
        config = SamplerConfig(T=20, chains=5, fixed_x1=[0.7])
        batch = run_chain(two_point, config, threads=1)
        np.testing.assert_array_equal(batch.x1, np.full((5, 1), 0.7))

    def test_fixed_x1_dimension(self, two_point):
        with pytest.raises(DomainError):
            run_chain(two_point, SamplerConfig(T=20, chains=2, fixed_x1=[0.7, 0.1]), threads=1)

    def test_ddim_keeps_the_sign_of_x1(self, two_point):
        config = SamplerConfig(method="ddim", T=200, chains=500, seed=4)
        batch = run_chain(two_point, config, threads=2)
        np.testing.assert_allclose(np.abs(batch.terminal), 1.0, atol=1e-2)
        np.testing.assert_array_equal(np.sign(batch.terminal), np.sign(batch.x1))

    def test_ode_rk4_terminal_on_training_points(self, two_point):
        config = SamplerConfig(method="ode_rk4", T=200, chains=200, seed=4)
        batch = run_chain(two_point, config, threads=2)
        np.testing.assert_allclose(np.abs(batch.terminal), 1.0, atol=1e-2)

    def test_trajectory_view(self, two_point):
        batch = run_chain(two_point, SamplerConfig(T=10, chains=3, seed=1), threads=1)
        traj = batch.trajectory(2)
        np.testing.assert_array_equal(traj.states, batch.states[2])
        assert traj.chain == 2 and traj.seed == 1
        np.testing.assert_array_equal(batch.at(0.0), batch.terminal)

    def test_ddpm_two_point_split(self, two_point):
        n = 2000
        batch = run_chain(two_point, SamplerConfig(method="ddpm", T=1000, chains=n, seed=11), threads=4)
        np.testing.assert_allclose(np.abs(batch.terminal), 1.0, atol=1e-2)
        share = float(np.mean(batch.terminal > 0))
        assert abs(share - 0.5) < 4 * math.sqrt(0.25 / n)

    @pytest.mark.slow
    def test_ddpm_two_point_split_full(self, two_point):
        n = 10_000
        batch = run_chain(two_point, SamplerConfig(method="ddpm", T=1000, chains=n, seed=12))
        np.testing.assert_allclose(np.abs(batch.terminal), 1.0, atol=1e-2)
        share = float(np.mean(batch.terminal > 0))
        assert abs(share - 0.5) < 4 * math.sqrt(0.25 / n)

    @pytest.mark.slow
    def test_terminal_point_independent_of_x1(self, two_point):
        n = 100_000
        batch = run_chain(two_point, SamplerConfig(method="ddpm", T=1000, chains=n, seed=13))
        hit = (batch.terminal[:, 0] > 0).astype(float)
        r = np.corrcoef(batch.x1[:, 0], hit)[0, 1]
        assert abs(r) < 4 / math.sqrt(n)

    def test_fixed_x1_reaches_every_point(self, two_point):
        eps = 0.005
        x1 = 2.0
        config = SamplerConfig(method="ddpm", T=200, chains=4000, seed=14, fixed_x1=[x1])
        batch = run_chain(two_point, config, threads=4)
        share = float(np.mean(batch.terminal[:, 0] > 0))
        x_start = two_point.schedule.sigma(1 - eps) * x1
        expected = two_point.posterior_weights([x_start], 1 - eps)[1]
        assert 0.0 < share < 1.0
        assert abs(share - expected) < 4 * math.sqrt(expected * (1 - expected) / 4000)

    def test_brightness_interior_conditioning(self, brightness_model):
        config = SamplerConfig(method="ddpm", T=100, epsilon=0.05, chains=64, seed=2)
        batch = run_chain(brightness_model, config, label=None, init_label=1, threads=1)
        assert batch.label is None
        assert batch.states.shape == (64, len(batch.times), 16)
