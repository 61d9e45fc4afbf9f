"""Benchmark problems with independent reference values."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..hjb import Control, ControlledProblem
from ..jumpdiff import CoefficientField
from ..levy import LevyMeasure
from .oracles import FiniteDifferenceHJB, merton_put_oracle, symbol_oracle

KEYS = ("linear-symbol", "merton-linear", "concave-hjb-toy", "portfolio-nu0")


@dataclass
class BenchmarkProblem:
    key: str
    problem: ControlledProblem
    measure: LevyMeasure
    g: Callable
    T: float
    lo: float
    hi: float
    oracle: Optional[Callable] = None  # oracle(t, x_array, kappa) -> array
    oracle_kind: str = ""
    params: dict = field(default_factory=dict)

    def oracle_value(self, t, x, kappa=0.0):
        if self.oracle is None:
            raise NotImplementedError(f"problem {self.key!r} has no value oracle")
        return self.oracle(t, np.atleast_1d(np.asarray(x, dtype=float)), kappa)

    def spread(self, kappa=0.0):
        """Standard deviation of ``X_T - x`` under the dominating process."""
        cf = self.problem.dominating
        sig = float(cf.diffusion(0.0, np.zeros(1))[0, 0])
        s = float(cf.jump_scale(0.0, np.zeros(1))[0])
        jv = self.measure.tail_second_moment(kappa) if self.measure.tail_mass(kappa) > 0 else 0.0
        return math.sqrt(self.T * (sig * sig + s * s * jv))


def _dominating(params):
    return CoefficientField.constant(mu=params["mu"], sigma=params["sigma"], eta_scale=params["eta_scale"])


def linear_symbol(measure=None, mu=0.1, sigma=0.3, eta_scale=1.0, u=1.0, T=1.0, lo=-1.0, hi=1.0):
    """Linear problem (F = 0) with ``g = cos(u x)``."""
    m = measure or LevyMeasure.gaussian_jumps(1.0, 0.1, 0.3)
    params = dict(mu=mu, sigma=sigma, eta_scale=eta_scale, u=u)
    cf = _dominating(params)
    p = ControlledProblem.concave(cf, {0: Control()})
    oracle = lambda t, x, kappa: symbol_oracle(t, x, T, u, mu, sigma, eta_scale, m, kappa)
    return BenchmarkProblem("linear-symbol", p, m, lambda x: np.cos(u * x), T, lo, hi, oracle, "symbol", params)


def merton_linear(measure=None, mu=0.05, sigma=0.25, eta_scale=1.0, strike=1.0, T=1.0, lo=-0.5, hi=0.5):
    """Linear problem with a put payoff; reference by the Poisson conditioning series."""
    m = measure or LevyMeasure.gaussian_jumps(0.5, -0.1, 0.2)
    params = dict(mu=mu, sigma=sigma, eta_scale=eta_scale, strike=strike)
    cf = _dominating(params)
    p = ControlledProblem.concave(cf, {0: Control()})
    oracle = lambda t, x, kappa: merton_put_oracle(t, x, T, mu, sigma, eta_scale, m, strike, kappa)
    g = lambda x: np.maximum(strike - np.exp(x), 0.0)
    return BenchmarkProblem("merton-linear", p, m, g, T, lo, hi, oracle, "series", params)


TOY_CONTROLS = {
    "a1": dict(a=0.08, b=0.1, c=-0.2, k={"fn": "cos", "scale": 0.3}, s=None),
    "a2": dict(a=0.04, b=-0.05, c=0.0, k=0.1, s=0.5),
}


def concave_toy(measure=None, mu=0.0, sigma=0.4, eta_scale=1.0, T=1.0, lo=-1.0, hi=1.0, controls=None,
                fd_dx=None, fd_dt=None, fd_pad=None):
    """Two-control concave problem; reference by monotone finite differences."""
    from .config import build_control

    m = measure or LevyMeasure.gaussian_jumps(1.0, 0.0, 0.2)
    params = dict(mu=mu, sigma=sigma, eta_scale=eta_scale)
    cf = _dominating(params)
    spec = controls or TOY_CONTROLS
    p = ControlledProblem.concave(cf, {name: build_control(c) for name, c in spec.items()})
    g = np.cos
    prob = BenchmarkProblem("concave-hjb-toy", p, m, g, T, lo, hi, None, "finite-difference", params)
    cache = {}

    def oracle(t, x, kappa, _p=prob):
        key = (t, kappa)
        if key not in cache:
            pad = fd_pad if fd_pad is not None else max(4.0, 8.0 * _p.spread())
            fd = FiniteDifferenceHJB(p, m, lo - pad, hi + pad, fd_dx or 0.005, fd_dt or 0.001)
            cache[key] = (fd.x, fd.solve(g, T - t))
        grid, vals = cache[key]
        return np.interp(x, grid, vals)

    prob.oracle = oracle
    return prob


def portfolio_controls(a, b, thetas):
    """Control grid of the one-asset portfolio example with no jumps."""
    return {(0, float(th)): Control(a=th * th * a * a, b=th * b) for th in thetas}


def portfolio_nu0(a=0.3, b=0.1, thetas=None, T=1.0, lo=-1.0, hi=1.0):
    """No value oracle; the nonlinearity itself has the closed form ``-(b p)^2 / (2 a^2 gamma)``."""
    thetas = np.linspace(0.0, 3.0, 61) if thetas is None else np.asarray(thetas, dtype=float)
    sigma = max(1.0, float(np.max(thetas)) * a)
    params = dict(mu=0.0, sigma=sigma, eta_scale=0.0, a=a, b=b)
    cf = _dominating(params)
    p = ControlledProblem(cf, portfolio_controls(a, b, thetas))
    m = LevyMeasure.point_mass(0.0, 1.0)
    return BenchmarkProblem("portfolio-nu0", p, m, lambda x: np.zeros_like(x), T, lo, hi, None, "closed-form F", params)


def portfolio_F_closed_form(a, b, p, gamma):
    if gamma >= 0:
        raise ValueError("closed form needs gamma < 0")
    if b * p <= 0:
        return 0.0
    return -((b * p) ** 2) / (2 * a * a * gamma)


FACTORIES = {
    "linear-symbol": linear_symbol,
    "merton-linear": merton_linear,
    "concave-hjb-toy": concave_toy,
    "portfolio-nu0": portfolio_nu0,
}


def get_problem(key, **overrides) -> BenchmarkProblem:
    try:
        factory = FACTORIES[key]
    except KeyError:
        raise KeyError(f"unknown problem {key!r}; choose one of {', '.join(KEYS)}") from None
    return factory(**overrides)


def oracle_value(prob: BenchmarkProblem, t, x, kappa=0.0):
    return prob.oracle_value(t, x, kappa)
