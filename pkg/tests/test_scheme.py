import math

import numpy as np
import pytest

from levymc.errors import ConfigError, NumericalAbort
from levymc.hjb import Control, ControlledProblem
from levymc.jumpdiff import CoefficientField, node_stream, simulate_batch
from levymc.levy import LevyMeasure
from levymc.scheme import (
    KappaRule,
    SchemeConfig,
    UniformGrid,
    apply_T,
    boundary_influence,
    interpolate,
    node_contributions,
    solve_backward,
)

GAUSS = LevyMeasure.gaussian_jumps(1.0, 0.1, 0.3)
SYM = LevyMeasure.gaussian_jumps(1.0, 0.0, 0.3)


@pytest.fixture
def dom():
    return CoefficientField.constant(mu=0.1, sigma=0.3, eta_scale=1.0)


def zero_problem(cf):
    return ControlledProblem.concave(cf, {0: Control()})


def toy_problem(cf):
    return ControlledProblem.concave(
        cf,
        {
            1: Control(a=0.05, b=0.1, c=-0.2, k=lambda t, x: 0.3 * math.cos(x[0])),
            2: Control(a=0.02, b=-0.05, k=0.1, s=0.5),
        },
    )


def small_cfg(**kw):
    base = dict(T=0.2, n=4, lo=[-0.5], hi=[0.5], dx=0.1, padding=2.5, samples=2000, seed=3)
    base.update(kw)
    return SchemeConfig(**base)


class TestGridAndInterpolation:
    def test_grid_cover(self):
        g = UniformGrid.cover([-1.0], [1.0], 0.25)
        assert g.shape == (9,) and g.hi[0] == pytest.approx(1.0)
        g2 = UniformGrid.cover([0, 0], [1, 2], [0.5, 1.0])
        assert g2.shape == (3, 3) and g2.points().shape == (9, 2)

    def test_node_midpoint_outside(self):
        g = UniformGrid.cover([-1.0], [1.0], 0.5)
        v = np.array([1.0, 4.0, -2.0, 0.5, 3.0])
        assert interpolate(v, g, -0.5) == 4.0
        assert interpolate(v, g, -0.25) == pytest.approx(1.0)
        assert interpolate(v, g, 5.0) == 3.0 and interpolate(v, g, -5.0) == 1.0

    def test_two_dimensional_point(self):
        g = UniformGrid.cover([0, 0], [1, 1], 1.0)
        v = np.array([0.0, 1.0, 2.0, 3.0])
        assert interpolate(v, g, [0.5, 0.5]) == pytest.approx(1.5)

    def test_interior_mask(self):
        cfg = small_cfg()
        pts = cfg.grid.points()[cfg.interior_mask()]
        assert pts.min() == pytest.approx(-0.5) and pts.max() == pytest.approx(0.5) and len(pts) == 11


class TestApplyT:
    def test_constant_surface_zero_F(self, dom):
        g = UniformGrid.cover([-3.0], [3.0], 0.1)
        v = np.full(g.size, 2.5)
        out = apply_T(v, g, zero_problem(dom), GAUSS, 0.0, 0.0, [0.2], 0.05, 1000, node_stream(0))
        assert out == pytest.approx(2.5, abs=1e-12)

    def test_affine_one_step_identity(self, dom):
        # F = 0: E T[psi] = psi(x) + alpha h (mu - s m1 + s int_{|z|>kappa} z nu)
        g = UniformGrid.cover([-4.0], [4.0], 0.05)
        alpha, beta, x, h = 1.3, -0.2, 0.1, 0.05
        v = alpha * g.points()[:, 0] + beta
        full_m1 = GAUSS.params["intensity"] * GAUSS.params["mean"]
        target = alpha * x + beta + alpha * h * (0.1 - GAUSS.truncated_first_moment(0.0) + full_m1)
        p = zero_problem(dom)
        b = simulate_batch(dom, GAUSS, 0.0, 0.0, [x], h, 100_000, node_stream(1))
        cols, const = node_contributions(v, g, p, GAUSS, 0.0, b)
        se = cols[:, 0].std(ddof=1) / math.sqrt(len(b))
        val = apply_T(v, g, p, GAUSS, 0.0, 0.0, [x], h, 100_000, node_stream(1))
        assert val == pytest.approx(cols[:, 0].mean() + const[0], abs=1e-12)
        assert abs(val - target) <= 3 * se

    @pytest.mark.parametrize("use_numba", [False, True])
    def test_monotonized_zero_theta_is_identical(self, dom, use_numba):
        g = UniformGrid.cover([-3.0], [3.0], 0.1)
        v = np.cos(g.points()[:, 0])
        p = toy_problem(dom)
        args = (v, g, p, GAUSS, 0.0, 0.0, [0.3], 0.02, 5000)
        a = apply_T(*args, node_stream(5), use_numba=use_numba)
        b = apply_T(*args, node_stream(5), theta=0.0, T_minus_t=0.7, use_numba=use_numba)
        assert a == b

    def test_matches_contribution_form_with_theta(self, dom):
        g = UniformGrid.cover([-3.0], [3.0], 0.1)
        v = np.sin(g.points()[:, 0])
        p = toy_problem(dom)
        out = apply_T(v, g, p, GAUSS, 0.0, 0.0, [0.3], 0.02, 5000, node_stream(6), theta=1.7, T_minus_t=0.4, details=True)
        b = simulate_batch(dom, GAUSS, 0.0, 0.0, [0.3], 0.02, 5000, node_stream(6))
        cols, const = node_contributions(v, g, p, GAUSS, 0.0, b, theta=1.7, T_minus_t=0.4)
        assert out.value == pytest.approx(float(np.min(cols.mean(axis=0) + const)), abs=1e-12)
        assert out.control[0] in (1, 2)


class TestSolveBackward:
    def test_terminal_layer_is_g(self, dom):
        surf = solve_backward(zero_problem(dom), GAUSS, small_cfg(n=2), np.cos)
        assert np.array_equal(surf.values[-1], np.cos(surf.grid.points()[:, 0]))

    def test_single_step_is_direct_average(self, dom):
        cfg = small_cfg(n=1, use_numba=False)
        surf = solve_backward(zero_problem(dom), GAUSS, cfg, np.cos)
        j = 7
        x = surf.grid.points()[j]
        b = simulate_batch(dom, GAUSS, 0.0, 0.0, x, cfg.h, cfg.samples, node_stream(cfg.seed, 0, j))
        direct = interpolate(surf.values[1], surf.grid, b.landing).sum() / cfg.samples
        assert surf.values[0, j] == direct

    def test_constants_preserved(self):
        cf = CoefficientField.constant(mu=0.0, sigma=0.3, eta_scale=1.0)
        surf = solve_backward(zero_problem(cf), SYM, small_cfg(), lambda x: np.full_like(x, 1.7))
        assert np.allclose(surf.values, 1.7, atol=1e-12)

    def test_seed_determinism_and_threads(self, dom):
        a = solve_backward(toy_problem(dom), GAUSS, small_cfg(), np.cos)
        b = solve_backward(toy_problem(dom), GAUSS, small_cfg(threads=3), np.cos)
        c = solve_backward(toy_problem(dom), GAUSS, small_cfg(seed=4), np.cos)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
        assert a.to_csv() == b.to_csv()

    def test_threads_from_environment(self, dom, monkeypatch):
        monkeypatch.setenv("LEVYMC_THREADS", "2")
        assert small_cfg().worker_count() == 2
        a = solve_backward(toy_problem(dom), GAUSS, small_cfg(), np.cos)
        monkeypatch.delenv("LEVYMC_THREADS")
        assert small_cfg().worker_count() == 1
        b = solve_backward(toy_problem(dom), GAUSS, small_cfg(), np.cos)
        assert np.array_equal(a.values, b.values)

    def test_monotonized_rescaling(self, dom):
        # for F = 0 with theta > 0 the rescaled monotonized surface equals the plain one in expectation
        p = ControlledProblem.concave(dom, {0: Control(s=1.0)})
        plain = solve_backward(p, GAUSS, small_cfg(samples=20_000), np.cos)
        mono = solve_backward(p, GAUSS, small_cfg(samples=20_000, monotonized=True), np.cos)
        # a = 0 so the pseudo-inverse term vanishes: theta = lambda
        assert mono.theta.value == 1.0
        mask = small_cfg().interior_mask()
        assert np.max(np.abs(plain.values[0, mask] - mono.values[0, mask])) < 0.05
        assert np.array_equal(mono.values[-1], plain.values[-1])

    def test_nan_aborts_with_location(self, dom):
        bad = ControlledProblem.concave(dom, {0: Control(k=math.nan)})
        with pytest.raises(NumericalAbort) as err:
            solve_backward(bad, GAUSS, small_cfg(), np.cos)
        assert err.value.layer == 3 and err.value.node == 0
        with pytest.raises(NumericalAbort) as err:
            solve_backward(zero_problem(dom), GAUSS, small_cfg(), lambda x: np.where(x > 0, np.nan, 0.0))
        assert err.value.layer == 4

    def test_csv_layout(self, dom):
        surf = solve_backward(zero_problem(dom), GAUSS, small_cfg(n=1), np.cos)
        lines = surf.to_csv().splitlines()
        assert lines[0] == "t,x,value"
        assert len(lines) == 1 + 2 * surf.grid.size
        t, x, v = lines[1].split(",")
        assert float(t) == 0.0 and float(x) == surf.grid.lo[0]

    def test_stability_envelope(self, dom):
        surf = solve_backward(toy_problem(dom), GAUSS, small_cfg(), np.cos)
        # |v| <= (C T + |g|) e^{(C + theta) T} with C bounding |k| and |c|
        cbar, gsup = 0.3, 1.0
        th = surf.theta.value
        assert np.max(np.abs(surf.values)) <= (cbar * 0.2 + gsup) * math.exp((0.2 + th) * 0.2) + 0.05


class TestConfig:
    def test_h_from_n(self):
        cfg = small_cfg(T=1.0, n=3)
        assert cfg.h * cfg.n == 1.0 and len(cfg.times()) == 4

    def test_invalid(self):
        with pytest.raises(ConfigError):
            small_cfg(n=0)
        with pytest.raises(ConfigError):
            small_cfg(samples=0)
        with pytest.raises(ValueError):
            KappaRule("bogus")

    def test_padding_rule(self, dom):
        with pytest.raises(ConfigError, match="padding"):
            solve_backward(zero_problem(dom), GAUSS, small_cfg(padding=0.5), np.cos)

    def test_dimension_mismatch(self, dom):
        cfg = small_cfg(lo=[0, 0], hi=[1, 1])
        with pytest.raises(ConfigError, match="dimension"):
            cfg.validate(zero_problem(dom), GAUSS, 0.0)

    def test_kappa_rules(self, dom):
        power = LevyMeasure.power_tail(1.0, 1.0)
        p = ControlledProblem.concave(dom, {0: Control(s=1.0)})
        sample = [(0.0, np.array([0.0]))]
        lvl = KappaRule("convergence").resolve(p, power, 0.01, sample)
        assert lvl.theta.value <= 10.0
        assert not KappaRule("rate").resolve(p, power, 0.01, sample).feasible
        assert KappaRule("fixed", 0.3).resolve(p, power, 0.01, sample).kappa == 0.3


def test_boundary_influence_is_small(dom):
    cfg = small_cfg(n=2, samples=500)
    assert boundary_influence(zero_problem(dom), GAUSS, cfg, np.cos) < 0.2


class TestTwoDimensional:
    def test_pure_diffusion_constant_and_shape(self):
        cf = CoefficientField.constant(mu=[0.0, 0.0], sigma=np.diag([0.3, 0.2]), eta_scale=[1.0, 0.0], dim=2)
        cfg = SchemeConfig(T=0.1, n=2, lo=[-0.2, -0.2], hi=[0.2, 0.2], dx=0.2, padding=2.0, samples=500)
        surf = solve_backward(zero_problem(cf), SYM, cfg, lambda x: np.cos(x[:, 0]) + x[:, 1] ** 2)
        assert surf.values.shape == (3, cfg.grid.size)
        assert surf.to_csv().splitlines()[0] == "t,x0,x1,value"
        assert np.all(np.isfinite(surf.values))
