"""Reference values that do not touch the Monte Carlo code path.

* ``symbol_oracle``: Fourier value of a linear problem with ``g = cos(u x)``.
* ``merton_put_oracle``: compound-Poisson conditioning series for a put payoff.
* ``FiniteDifferenceHJB``: monotone implicit finite differences with policy
  iteration for one-dimensional concave problems with finite jump measures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse, stats
from scipy.linalg import solve_banded

from ..errors import LevyMCError, QuadratureError
from ..hjb import ControlledProblem
from ..levy import GAUSSIAN_JUMPS, POINT_MASS, LevyMeasure
from ..mcq import levy_symbol


def symbol_oracle(t, x, T, u, mu, sigma, scale, m: LevyMeasure, kappa=0.0):
    """``Re[exp((T - t) psi(u)) exp(i u x)]`` with the truncated symbol by quadrature."""
    mu_k = mu - scale * m.truncated_first_moment(kappa)
    psi = levy_symbol(u, mu_k, sigma, scale, m, kappa)
    x = np.asarray(x, dtype=float)
    return np.real(np.exp((T - t) * psi) * np.exp(1j * u * x))


def _bs_put(mean, var, strike):
    """``E[(K - e^Y)^+]`` for ``Y ~ N(mean, var)``."""
    if var <= 0.0:
        return np.maximum(strike - np.exp(mean), 0.0)
    sd = math.sqrt(var)
    d = (math.log(strike) - mean) / sd
    return strike * stats.norm.cdf(d) - np.exp(mean + 0.5 * var) * stats.norm.cdf(d - sd)


def merton_put_oracle(t, x, T, mu, sigma, scale, m: LevyMeasure, strike=1.0, kappa=0.0, tail=1e-12, max_terms=500):
    """``E[(K - exp(X_T))^+ | X_t = x]`` for Gaussian (or point-mass) jumps.

    Sums over the Poisson count until the remaining Poisson mass is below ``tail``.
    """
    if m.kind not in (GAUSSIAN_JUMPS, POINT_MASS) or (m.kind == GAUSSIAN_JUMPS and kappa > 0):
        raise ValueError("conditioning series needs point-mass or untruncated Gaussian jumps")
    x = np.asarray(x, dtype=float)
    tau = T - t
    lam = m.tail_mass(kappa)
    drift = mu - scale * m.truncated_first_moment(kappa)
    if m.kind == POINT_MASS:
        zm, zv = m.params["location"], 0.0
    else:
        zm, zv = m.params["mean"], m.params["std"] ** 2
    pois = stats.poisson(lam * tau)
    out = np.zeros_like(x)
    acc = 0.0
    for n in range(max_terms):
        p = pois.pmf(n)
        mean = x + drift * tau + scale * n * zm
        var = sigma * sigma * tau + scale * scale * n * zv
        out = out + p * _bs_put(mean, var, strike)
        acc += p
        if 1.0 - acc < tail or lam == 0.0:
            return out
    raise QuadratureError("Poisson series did not reach the requested tail", 1.0 - acc)


@dataclass
class FiniteDifferenceHJB:
    """Implicit-explicit Euler in time, central differences in space, policy iteration.

    Solves ``-v_t - L v - min_alpha (L_alpha v + k_alpha) = 0`` on
    ``[lo, hi]`` with ``v(T) = g``, where ``L`` is the dominating generator and
    ``L_alpha`` the control operators (singleton beta grid).  Jump integrals use
    Gauss-Hermite nodes and linear interpolation with constant extrapolation and
    are stepped explicitly; all weights are non-negative so the step is monotone.
    """

    problem: ControlledProblem
    measure: LevyMeasure
    lo: float
    hi: float
    dx: float
    dt: float
    order: int = 40
    max_policy_iter: int = 50

    def __post_init__(self):
        p = self.problem
        if p.dim != 1 or len(p.beta_grid) != 1:
            raise ValueError("finite-difference oracle handles one-dimensional concave problems")
        if not self.measure.is_finite:
            raise ValueError("finite-difference oracle needs a finite measure")
        if 2.0 * self.measure.tail_mass(0.0) * self.dt > 1.0:
            raise ValueError("dt too large for the explicit jump step to stay monotone")
        n = int(round((self.hi - self.lo) / self.dx)) + 1
        self.x = self.lo + self.dx * np.arange(n)

    def _jump_matrix(self, scale):
        """Rows give ``int v(x + scale z) nu(dz)`` on the grid."""
        m, x, n = self.measure, self.x, self.x.size
        lam = m.tail_mass(0.0)
        if lam == 0.0 or scale == 0.0:
            return sparse.csr_matrix((n, n))
        if m.kind == POINT_MASS:
            z, w = np.array([m.params["location"]]), np.array([1.0])
        else:
            xi, w = np.polynomial.hermite_e.hermegauss(self.order)
            z, w = m.params["mean"] + m.params["std"] * xi, w / w.sum()
        rows, cols, vals = [], [], []
        for zq, wq in zip(z, w):
            u = np.clip((x + scale * zq - self.lo) / self.dx, 0.0, n - 1.0)
            i = np.minimum(np.floor(u).astype(int), n - 2)
            f = u - i
            r = np.arange(n)
            rows += [r, r]
            cols += [i, i + 1]
            vals += [lam * wq * (1 - f), lam * wq * f]
        return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))

    def _local_bands(self, diff, drift, react):
        """Central second/first differences with reflecting (ghost = boundary) ends.

        Returns the (lower, main, upper) diagonals of the local operator.
        """
        h = self.dx
        up = diff / h**2 + drift / (2 * h)
        dn = diff / h**2 - drift / (2 * h)
        # upwind where the cell Peclet number is too large for central differences
        bad = (up < 0) | (dn < 0)
        if np.any(bad):
            up = np.where(bad, diff / h**2 + np.maximum(drift, 0) / h, up)
            dn = np.where(bad, diff / h**2 + np.maximum(-drift, 0) / h, dn)
        main = -(up + dn) + react
        main[0] += dn[0]
        main[-1] += up[-1]
        return dn, main, up

    def _operators(self, t):
        p, m, x = self.problem, self.measure, self.x
        cf = p.dominating
        lam = m.tail_mass(0.0)
        m1 = m.truncated_first_moment(0.0)
        sig = np.array([cf.diffusion(t, np.array([xi]))[0, 0] for xi in x])
        mu = np.array([cf.drift(t, np.array([xi]))[0] for xi in x])
        s0 = float(cf.jump_scale(t, np.array([x[0]]))[0])
        base_drift = mu - s0 * m1
        J0 = self._jump_matrix(s0)
        ops = []
        for key in p.keys:
            co = [p.controls[key].coeffs(t, np.array([xi]), 1) for xi in x]
            a = np.array([c[0][0, 0] for c in co])
            b = np.array([c[1][0] for c in co])
            c = np.array([c[2] for c in co])
            k = np.array([c[3] for c in co])
            s = co[0][4]
            drift = base_drift + b
            react = -lam + c
            J = J0
            if s is not None:
                drift = drift - float(s[0]) * m1
                react = react - lam
                J = J + self._jump_matrix(float(s[0]))
            ops.append((self._local_bands(0.5 * (sig**2 + a), drift, react), J.tocsr(), k))
        return ops

    def solve(self, g, T, constant_in_time=True):
        """Value at ``t = 0`` on ``self.x``.

        Local terms are implicit, jump integrals explicit (monotone while
        ``dt`` times the total jump intensity stays below one half).
        """
        n_steps = int(round(T / self.dt))
        if abs(n_steps * self.dt - T) > 1e-12:
            raise ValueError("T must be a multiple of dt")
        v = np.asarray(g(self.x), dtype=float)
        n = self.x.size
        dt = self.dt
        ops = self._operators(0.0)
        for step in range(n_steps):
            if not constant_in_time:
                ops = self._operators(T - (step + 1) * dt)
            old = v
            rhs = [old + dt * (J @ old + k) for _, J, k in ops]
            policy = None
            for _ in range(self.max_policy_iter):
                scores = np.stack([_band_apply(bands, v) + (r - old) / dt for (bands, _, _), r in zip(ops, rhs)])
                new_policy = np.argmin(scores, axis=0)
                if policy is not None and np.array_equal(new_policy, policy):
                    break
                policy = new_policy
                dn = np.choose(policy, [b[0] for b, _, _ in ops])
                main = np.choose(policy, [b[1] for b, _, _ in ops])
                up = np.choose(policy, [b[2] for b, _, _ in ops])
                ab = np.zeros((3, n))
                ab[0, 1:] = -dt * up[:-1]
                ab[1] = 1.0 - dt * main
                ab[2, :-1] = -dt * dn[1:]
                v = solve_banded((1, 1), ab, np.choose(policy, rhs))
            else:
                raise LevyMCError("policy iteration did not converge")
        return v

    def value(self, g, T, x):
        return np.interp(np.asarray(x, dtype=float), self.x, self.solve(g, T))


def _band_apply(bands, v):
    dn, main, up = bands
    out = main * v
    out[1:] += dn[1:] * v[:-1]
    out[:-1] += up[:-1] * v[1:]
    return out
