import math

import numpy as np
import pytest

from levymc.jumpdiff import (
    CoefficientField,
    compensated_drift,
    euler_step,
    node_stream,
    reconstruct_landing,
    simulate_batch,
)
from levymc.levy import LevyMeasure

POWER = LevyMeasure.power_tail(1.0, 1.0)
POINT = LevyMeasure.point_mass(2.0, 0.5)
GAUSS = LevyMeasure.gaussian_jumps(1.5, 0.4, 0.8)


def within(value, target, se, k=3.0):
    return abs(value - target) <= k * se


class TestCompensatedDrift:
    def test_symmetric_power_tail_leaves_drift(self):
        cf = CoefficientField(lambda t, x: np.sin(x) + t, lambda t, x: 1.0, lambda t, x: 2.0 + x)
        for t, x in [(0.0, 0.3), (0.5, -1.2)]:
            assert compensated_drift(cf, POWER, 0.1, t, x) == pytest.approx(np.sin(x) + t, abs=0.0)

    def test_point_mass_compensation(self):
        cf = CoefficientField.constant(mu=0.0, sigma=1.0, eta_scale=1.0)
        assert compensated_drift(cf, POINT, 0.1, 0.0, 0.0)[0] == pytest.approx(-1.0)

    def test_kappa_one_is_uncompensated(self):
        cf = CoefficientField.constant(mu=0.7, sigma=1.0, eta_scale=3.0)
        assert compensated_drift(cf, GAUSS, 1.0, 0.0, 0.0)[0] == 0.7

    def test_non_separable_callback(self):
        cf = CoefficientField(
            lambda t, x: 0.5,
            lambda t, x: 1.0,
            lambda t, x: 1.0,
            eta=lambda t, x, z: np.tanh(z),
            compensator=lambda t, x, k: 0.25,
        )
        assert compensated_drift(cf, GAUSS, 0.1, 0.0, 0.0)[0] == 0.25


class TestEulerStep:
    def test_pure_drift_when_no_jumps(self):
        cf = CoefficientField.constant(mu=0.3, sigma=0.0, eta_scale=1.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = euler_step(cf, POINT, 0.6, 0.0, 1.0, 0.1, rng)
            assert s.n_jumps == 0 and s.marks.size == 0
            assert s.landing[0] == 1.0 + 0.3 * 0.1

    def test_landing_reconstructs_bit_exactly(self):
        cf = CoefficientField.constant(mu=0.2, sigma=0.7, eta_scale=1.3)
        b = simulate_batch(cf, POWER, 0.05, 0.0, 0.4, 0.3, 2000, np.random.default_rng(1))
        assert b.n_jumps.sum() > 0
        for i in range(0, 2000, 37):
            s = b[i]
            assert np.all(np.abs(s.marks) > 0.05)
            assert np.array_equal(reconstruct_landing(cf, POWER, 0.05, 0.0, 0.4, 0.3, s), s.landing)

    def test_two_dimensional_landing(self):
        sig = np.array([[0.5, 0.1], [0.0, 0.3]])
        cf = CoefficientField.constant(mu=[0.1, -0.2], sigma=sig, eta_scale=[1.0, -0.5], dim=2)
        b = simulate_batch(cf, GAUSS, 0.0, 0.0, [0.0, 1.0], 0.05, 500, np.random.default_rng(2))
        assert b.landing.shape == (500, 2)
        for i in (0, 17, 499):
            s = b[i]
            assert np.array_equal(reconstruct_landing(cf, GAUSS, 0.0, 0.0, [0.0, 1.0], 0.05, s), s.landing)

    @pytest.mark.slow
    def test_weak_moments_constant_coefficients(self):
        mu, sig, s, h = 0.3, 0.6, 0.9, 0.05
        cf = CoefficientField.constant(mu=mu, sigma=sig, eta_scale=s)
        b = simulate_batch(cf, GAUSS, 0.0, 0.0, 0.0, h, 1_000_000, np.random.default_rng(3))
        y = b.landing[:, 0]
        # big-jump part is not compensated: mean drift mu + s * int_{|z|>1} z nu
        mu_tilde = mu + s * (GAUSS.params["intensity"] * GAUSS.params["mean"] - GAUSS.truncated_first_moment(0.0))
        assert within(y.mean(), mu_tilde * h, y.std() / math.sqrt(y.size))
        p = GAUSS.params
        var = h * sig**2 + h * s**2 * p["intensity"] * (p["mean"] ** 2 + p["std"] ** 2)
        c2 = (y - mu_tilde * h) ** 2
        assert within(c2.mean(), var, c2.std() / math.sqrt(y.size))
        bw = b.w[:, 0] * sig
        assert within(np.mean(bw**2), h * sig**2, np.std(bw**2) / math.sqrt(y.size))


class TestBatches:
    def test_singleton_matches_euler_step(self):
        cf = CoefficientField.constant(mu=0.1, sigma=0.4, eta_scale=1.0)
        a = simulate_batch(cf, POWER, 0.1, 0.0, 0.0, 0.1, 1, node_stream(7, 3, 4))[0]
        b = euler_step(cf, POWER, 0.1, 0.0, 0.0, 0.1, node_stream(7, 3, 4))
        assert np.array_equal(a.w, b.w) and np.array_equal(a.marks, b.marks)
        assert np.array_equal(a.landing, b.landing) and a.n_jumps == b.n_jumps

    def test_same_seed_same_batch(self):
        cf = CoefficientField.constant(mu=0.1, sigma=0.4, eta_scale=1.0)
        a = simulate_batch(cf, POWER, 0.1, 0.0, 0.0, 0.1, 300, node_stream(11, 2, 9))
        b = simulate_batch(cf, POWER, 0.1, 0.0, 0.0, 0.1, 300, node_stream(11, 2, 9))
        c = simulate_batch(cf, POWER, 0.1, 0.0, 0.0, 0.1, 300, node_stream(11, 2, 10))
        assert np.array_equal(a.landing, b.landing) and np.array_equal(a.marks, b.marks)
        assert not np.array_equal(a.landing, c.landing)

    def test_poisson_count_mean(self):
        cf = CoefficientField.constant(mu=0.0, sigma=1.0, eta_scale=1.0)
        h, kappa = 0.02, 0.2
        b = simulate_batch(cf, POWER, kappa, 0.0, 0.0, h, 100_000, np.random.default_rng(4))
        target = POWER.tail_mass(kappa) * h
        assert within(b.n_jumps.mean(), target, math.sqrt(target / 100_000))

    def test_iteration_and_errors(self):
        cf = CoefficientField.constant()
        b = simulate_batch(cf, POINT, 0.0, 0.0, 0.0, 0.1, 5, 0)
        assert len(list(b)) == 5
        with pytest.raises(ValueError):
            simulate_batch(cf, POINT, 0.0, 0.0, 0.0, 0.1, 0, 0)
        with pytest.raises(ValueError):
            simulate_batch(cf, POINT, 0.0, 0.0, 0.0, 0.0, 5, 0)
        with pytest.raises(ValueError):
            simulate_batch(cf, POWER, 0.0, 0.0, 0.0, 0.1, 5, 0)


def test_eta_ratio_diagnostic():
    cf = CoefficientField.constant(eta_scale=0.5)
    z = np.linspace(-0.9, 0.9, 11)
    assert cf.eta_ratio([(0.0, 0.0)], z) == pytest.approx(0.5)


def test_condition_number_reported():
    from levymc.errors import SingularDiffusionError

    cf = CoefficientField.constant(sigma=0.0)
    with pytest.raises(SingularDiffusionError) as err:
        cf.sigma_inverse(0.0, 0.0)
    assert "condition number" in str(err.value)
