"""Monte Carlo quadrature of Levy integrals.

For a compound Poisson step ``X_h`` with marks ``Z_i`` and ``Y_h = sum_i zeta(Z_i)``

    (1/h) E[phi(X_h) Y_h] = E[ int phi(X_h + eta(z)) zeta(z) nu(dz) ]

so a Levy integral is estimated from the same one-step samples used for the
derivative weights.  The deterministic quadrature oracles below are used for
validation and error tables only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .errors import QuadratureError
from .jumpdiff import CoefficientField, StepBatch, compensated_drift
from .levy import GAUSSIAN_JUMPS, POINT_MASS, POWER_TAIL, LevyMeasure, check_kappa_admissible
from .weights import evaluate_on_landing


@dataclass(frozen=True)
class McqEstimate:
    value: float
    std_error: float
    n_samples: int


def _mean_se(contrib):
    n = contrib.size
    mean = float(contrib.mean())
    se = float(contrib.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _marks_of(samples):
    if isinstance(samples, StepBatch):
        return samples.marks, samples.owner, samples.landing, samples.n_jumps
    samples = list(samples)
    counts = np.array([s.n_jumps for s in samples], dtype=np.int64)
    marks = np.concatenate([np.asarray(s.marks, dtype=float) for s in samples]) if samples else np.zeros(0)
    owner = np.repeat(np.arange(len(samples)), counts)
    landing = np.stack([np.atleast_1d(s.landing) for s in samples])
    return marks, owner, landing, counts


def nu_hat(phi, zeta, samples, h, landing=None) -> McqEstimate:
    """``(1/h)`` times the sample mean of ``phi(X_h) * sum_i zeta(Z_i)``.

    ``landing`` overrides the landing points of the batch (used for per-control
    jump amplitudes sharing the same marks).
    """
    if not h > 0:
        raise ValueError("time step must be positive")
    marks, owner, own_landing, counts = _marks_of(samples)
    if landing is None:
        landing = own_landing
    n = landing.shape[0]
    zvals = np.asarray(zeta(marks), dtype=float) if marks.size else np.zeros(0)
    if zvals.ndim == 0:
        zvals = np.full(marks.size, float(zvals))
    y = np.bincount(owner, weights=zvals, minlength=n)
    hit = y != 0.0
    contrib = np.zeros(n)
    if hit.any():
        contrib[hit] = evaluate_on_landing(phi, landing[hit]) * y[hit] / h
    mean, se = _mean_se(contrib)
    return McqEstimate(mean, se, n)


def levy_operator_mcq(phi, grad_phi, cf: CoefficientField, m: LevyMeasure, kappa, t, x, h, samples) -> McqEstimate:
    """MCQ estimate of the truncated Levy operator at ``x``.

    ``nu_hat(phi, 1) - phi(x) lambda_kappa - grad_phi(x) . s(t, x) int_{kappa<|z|<=1} z nu(dz)``
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    est = nu_hat(phi, lambda z: np.ones_like(z), samples, h)
    arg = x[0] if x.size == 1 else x
    phix = float(np.asarray(phi(np.atleast_1d(arg))).reshape(-1)[0]) if x.size == 1 else float(phi(x[None, :])[0])
    comp = phix * m.tail_mass(kappa)
    m1 = m.truncated_first_moment(kappa)
    if m1 != 0.0:
        grad = np.atleast_1d(np.asarray(grad_phi(arg), dtype=float))
        comp += float(grad @ cf.jump_scale(t, x)) * m1
    return McqEstimate(est.value - comp, est.std_error, est.n_samples)


# -- deterministic oracles ----------------------------------------------------
_QUAD_OPTS = dict(limit=400, epsrel=1e-11)


def _quad(f, a, b, tol, **kw):
    opts = dict(_QUAD_OPTS, epsabs=tol)
    opts.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, **opts)
    if not np.isfinite(val) or err > max(10 * tol, 1e-9 * abs(val)):
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge", err)
    return val, err


def _regions(kappa, upper):
    """Pieces of ``{kappa < |z| <= upper}`` split at |z| = 1."""
    pieces = []
    for lo, hi in ((kappa, min(1.0, upper)), (max(1.0, kappa), upper)):
        if hi > lo:
            pieces.append((lo, hi, lo < 1.0))
    return pieces


def levy_operator_quadrature(
    phi, cf: CoefficientField, m: LevyMeasure, kappa, x, t=0.0, dphi=None, d2phi=None, upper=math.inf, tol=1e-9
) -> float:
    """Adaptive-quadrature value of the truncated Levy operator at scalar ``x``.

    Integrates ``phi(x + s z) - phi(x) - 1{|z|<=1} s z phi'(x)`` against ``nu`` over
    ``kappa < |z| <= upper``.  With ``d2phi`` the small-jump part of a power tail
    is integrated through the Taylor remainder ``s^2 z^2 int_0^1 (1-u) phi''(x+usz) du``,
    which also allows ``kappa = 0``.
    """
    if cf.dim != 1:
        raise NotImplementedError("the quadrature oracle is one-dimensional")
    x = float(np.ravel(x)[0])
    s = float(cf.jump_scale(t, np.array([x]))[0])
    kappa = float(kappa)
    if kappa == 0.0 and m.kind == POWER_TAIL and d2phi is None:
        raise ValueError("kappa = 0 on a power tail needs d2phi for the remainder form")
    if kappa > 0.0 or m.is_finite:
        check_kappa_admissible(m, kappa)
    f0 = float(phi(x))
    needs_grad = kappa < 1.0 and upper > kappa
    g0 = float(dphi(x)) if (dphi is not None and needs_grad) else None

    def integrand(z, inner):
        val = phi(x + s * z) - f0
        if inner:
            if g0 is None:
                raise ValueError("dphi is required when the compensated region kappa < |z| <= 1 is charged")
            val -= s * z * g0
        return val

    if m.kind == POINT_MASS:
        z0 = m.params["location"]
        if kappa < abs(z0) <= upper:
            return m.params["intensity"] * integrand(z0, abs(z0) <= 1.0)
        return 0.0

    total = 0.0
    for lo, hi, inner in _regions(kappa, upper):
        for sign in (1.0, -1.0):
            if m.kind == POWER_TAIL and inner and d2phi is not None:
                c, al = m.params["amplitude"], m.params["alpha"]

                def rem(z, sign=sign):
                    r, _ = integrate.quad(lambda u: (1 - u) * d2phi(x + u * s * sign * z), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
                    return c * s * s * z ** (1.0 - al) * r

                val, _ = _quad(rem, lo, hi, tol / 4)
            else:
                dens = lambda z, sign=sign, inner=inner: integrand(sign * z, inner) * float(m.density(sign * z))
                if math.isinf(hi):
                    # split so the adaptive rule sees the bulk before the mapped tail
                    mid = max(lo, 1.0) * 64.0
                    v1, _ = _quad(dens, lo, mid, tol / 8)
                    v2, _ = _quad(dens, mid, math.inf, tol / 8)
                    val = v1 + v2
                else:
                    val, _ = _quad(dens, lo, hi, tol / 4)
            total += val
    return total


def levy_operator_exact_finite(phi, dphi, cf: CoefficientField, m: LevyMeasure, x, t=0.0):
    """Full (kappa = 0) operator for a finite measure; alias of the quadrature oracle."""
    return levy_operator_quadrature(phi, cf, m, 0.0, x, t=t, dphi=dphi)


def nu_hat_quadrature(phi, zeta, cf: CoefficientField, m: LevyMeasure, kappa, t, x, h, order=48, tail=1e-14) -> float:
    """Deterministic value of ``E[int_{|z|>kappa} phi(X_h + s z) zeta(z) nu(dz)]``.

    Conditions on the Poisson count, integrates the (Gaussian) continuous part
    with Gauss-Hermite rules.  Finite kinds only; Gaussian jumps need kappa = 0.
    """
    if cf.dim != 1:
        raise NotImplementedError("the quadrature oracle is one-dimensional")
    if m.kind == POWER_TAIL or (m.kind == GAUSSIAN_JUMPS and kappa > 0):
        raise NotImplementedError("conditioning oracle needs a point mass or untruncated Gaussian jumps")
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    lam = m.tail_mass(kappa)
    if lam == 0.0:
        return 0.0
    s = float(cf.jump_scale(t, xv)[0])
    sig = float(cf.diffusion(t, xv)[0, 0])
    base = float(xv[0] + compensated_drift(cf, m, kappa, t, xv)[0] * h)
    nodes, wts = np.polynomial.hermite_e.hermegauss(order)
    wts = wts / wts.sum()
    if m.kind == POINT_MASS:
        zm, zv = m.params["location"], 0.0
    else:
        zm, zv = m.params["mean"], m.params["std"] ** 2
    pois = stats.poisson(lam * h)
    total, n, acc = 0.0, 0, 0.0
    while True:
        pn = pois.pmf(n)
        mean_n = base + s * n * zm
        sd_n = math.sqrt(sig * sig * h + s * s * n * zv)
        y = mean_n + sd_n * nodes  # law of X_h given N = n
        if m.kind == POINT_MASS:
            inner = lam * float(zeta(np.array([zm]))[0]) * np.asarray(phi(y + s * zm), dtype=float)
            val = float(wts @ inner)
        else:
            z = zm + math.sqrt(zv) * nodes
            grid = y[:, None] + s * z[None, :]
            inner = np.asarray(phi(grid.ravel()), dtype=float).reshape(grid.shape) * np.asarray(zeta(z), dtype=float)[None, :]
            val = lam * float(wts @ inner @ wts)
        total += pn * val
        acc += pn
        n += 1
        if 1.0 - acc < tail and n > lam * h:
            break
    return total


def levy_symbol(u, mu_kappa, sigma, scale, m: LevyMeasure, kappa, tol=1e-11) -> complex:
    """Truncated Levy-Khintchine exponent by quadrature.

    ``i mu_kappa u - sigma^2 u^2 / 2 + int_{|z|>kappa} (exp(i u s z) - 1) nu(dz)``
    """
    u = float(u)
    base = 1j * mu_kappa * u - 0.5 * sigma * sigma * u * u
    us = u * scale
    if m.kind == POINT_MASS:
        z0 = m.params["location"]
        lam = m.tail_mass(kappa)
        return base + lam * (np.exp(1j * us * z0) - 1.0)
    if m.kind == GAUSSIAN_JUMPS:
        re = im = 0.0
        for a, b in ((-math.inf, -kappa), (kappa, math.inf)):
            re += _quad(lambda z: (math.cos(us * z) - 1.0) * float(m.density(z)), a, b, tol)[0]
            im += _quad(lambda z: math.sin(us * z) * float(m.density(z)), a, b, tol)[0]
        return base + re + 1j * im
    c, al = m.params["amplitude"], m.params["alpha"]
    if us == 0.0:
        return complex(base)
    # symmetric: 2 c [ int_kappa^inf cos(|us| z) z^(-1-a) dz - kappa^(-a) / a ]
    w = abs(us)
    split = kappa + 50.0 * 2 * math.pi / w
    near, _ = _quad(lambda z: (math.cos(w * z) - 1.0) * z ** (-1.0 - al), kappa, split, tol, limit=2000)
    far, err = integrate.quad(lambda z: z ** (-1.0 - al), split, math.inf, weight="cos", wvar=w)
    if not np.isfinite(far):
        raise QuadratureError("oscillatory tail of the symbol did not converge", err)
    far -= split ** (-al) / al
    return base + 2.0 * c * (near + far)
