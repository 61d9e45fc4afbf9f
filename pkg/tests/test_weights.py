import numpy as np
import pytest

from levymc.jumpdiff import CoefficientField, simulate_batch
from levymc.levy import LevyMeasure
from levymc.weights import DerivativeTriple, estimate_derivatives, weight

NO_JUMPS = LevyMeasure.point_mass(1.0, 0.5)  # kappa above 0.5 removes every jump


def test_weight_examples():
    cf = CoefficientField.constant(sigma=2.0)
    assert weight(1, cf, 0.0, 0.0, 0.1, 0.3)[0] == pytest.approx(1.5)
    cf1 = CoefficientField.constant(sigma=1.0)
    assert weight(2, cf1, 0.0, 0.0, 0.1, 0.0)[0, 0] == pytest.approx(-10.0)
    assert weight(0, cf1, 0.0, 0.0, 0.1, 123.0) == 1.0
    with pytest.raises(ValueError):
        weight(3, cf1, 0.0, 0.0, 0.1, 0.0)


def test_weight_two_dimensional_matches_formula():
    sig = np.array([[1.0, 0.3], [0.0, 0.5]])
    cf = CoefficientField.constant(sigma=sig, dim=2)
    w, h = np.array([0.2, -0.1]), 0.05
    si = np.linalg.inv(sig)
    h2 = np.linalg.inv(sig.T) @ (np.outer(w, w) - h * np.eye(2)) @ si / h**2
    assert np.allclose(weight(2, cf, 0.0, [0, 0], h, w), h2, rtol=1e-13)
    assert np.allclose(weight(1, cf, 0.0, [0, 0], h, w), np.linalg.inv(sig.T) @ w / h)


def test_triple_is_symmetrized():
    t = DerivativeTriple(1.0, [0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])
    assert np.array_equal(t.d2, t.d2.T) and t.d2[0, 1] == 1.0


class TestEstimates:
    def batch(self, seed, m=100_000, sigma=1.0, h=0.1, x=0.3, mu=0.0):
        cf = CoefficientField.constant(mu=mu, sigma=sigma)
        return cf, simulate_batch(cf, NO_JUMPS, 1.0, 0.0, x, h, m, np.random.default_rng(seed))

    def test_constant_psi(self):
        cf, b = self.batch(1)
        est = estimate_derivatives(lambda y: np.full_like(y, 2.5), b, cf, 0.0, 0.3, 0.1, std_errors=True)
        assert est.d0 == 2.5
        assert abs(est.d1[0]) <= 3 * est.se1[0]
        assert abs(est.d2[0, 0]) <= 3 * est.se2[0, 0]

    def test_square_hessian_is_two(self):
        cf, b = self.batch(2, x=0.0)
        est = estimate_derivatives(lambda y: y**2, b, cf, 0.0, 0.0, 0.1, std_errors=True)
        assert abs(est.d2[0, 0] - 2.0) <= 3 * est.se2[0, 0]

    def test_affine_gradient(self):
        cf, b = self.batch(3, sigma=0.7)
        est = estimate_derivatives(lambda y: 3.0 * y - 1.0, b, cf, 0.0, 0.3, 0.1, std_errors=True)
        assert abs(est.d1[0] - 3.0) <= 3 * est.se1[0]

    def test_list_of_samples_equals_batch(self):
        cf, b = self.batch(4, m=50)
        f = lambda y: np.sin(y)
        a = estimate_derivatives(f, b, cf, 0.0, 0.3, 0.1)
        c = estimate_derivatives(f, list(b), cf, 0.0, 0.3, 0.1)
        assert a.d0 == c.d0 and np.array_equal(a.d1, c.d1) and np.array_equal(a.d2, c.d2)

    def test_empty_batch(self):
        cf = CoefficientField.constant()
        with pytest.raises(ValueError):
            estimate_derivatives(np.sin, [], cf, 0.0, 0.0, 0.1)

    def test_linearity_on_shared_batch(self):
        cf, b = self.batch(5, m=20_000)
        f1, f2 = np.sin, lambda y: y**3
        a, c = 1.7, -0.4
        lhs = estimate_derivatives(lambda y: a * f1(y) + c * f2(y), b, cf, 0.0, 0.3, 0.1)
        r1 = estimate_derivatives(f1, b, cf, 0.0, 0.3, 0.1)
        r2 = estimate_derivatives(f2, b, cf, 0.0, 0.3, 0.1)
        assert lhs.d0 == pytest.approx(a * r1.d0 + c * r2.d0, rel=1e-12, abs=1e-12)
        assert np.allclose(lhs.d1, a * r1.d1 + c * r2.d1, rtol=1e-11, atol=1e-11)
        assert np.allclose(lhs.d2, a * r1.d2 + c * r2.d2, rtol=1e-11, atol=1e-10)

    def test_quadratic_with_jumps_and_drift(self):
        # E[psi(X) H1] = E[psi'(X)] conditionally on the jumps
        m = LevyMeasure.gaussian_jumps(2.0, 0.2, 0.3)
        cf = CoefficientField.constant(mu=0.4, sigma=0.8, eta_scale=1.0)
        h, x = 0.05, 0.5
        b = simulate_batch(cf, m, 0.0, 0.0, x, h, 100_000, np.random.default_rng(6))
        est = estimate_derivatives(lambda y: 1.5 * y**2 - y, b, cf, 0.0, x, h, std_errors=True)
        mean_x = x + h * (0.4 - m.truncated_first_moment(0.0)) + h * 2.0 * 0.2
        assert abs(est.d1[0] - (3.0 * mean_x - 1.0)) <= 3 * est.se1[0]
        assert abs(est.d2[0, 0] - 3.0) <= 3 * est.se2[0, 0]

    def test_two_dimensional_quadratic(self):
        sig = np.array([[0.6, 0.2], [0.0, 0.4]])
        cf = CoefficientField.constant(mu=[0.0, 0.0], sigma=sig, dim=2)
        x = np.array([0.2, -0.1])
        b = simulate_batch(cf, NO_JUMPS, 1.0, 0.0, x, 0.05, 200_000, np.random.default_rng(7))
        q = np.array([[1.0, 0.5], [0.5, -2.0]])
        psi = lambda y: np.einsum("ij,jk,ik->i", y, q, y)
        est = estimate_derivatives(psi, b, cf, 0.0, x, 0.05, std_errors=True)
        assert np.all(np.abs(est.d1 - 2 * q @ x) <= 3 * est.se1)
        assert np.all(np.abs(est.d2 - 2 * q) <= 3 * est.se2 + 1e-12)
