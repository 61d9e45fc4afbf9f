"""Controlled nonlinearity over a finite control grid, theta_kappa and kappa rules.

A problem is a family of linear integro-differential operators indexed by
``(alpha, beta)``.  The discrete nonlinearity is

    F = min_alpha max_beta { 1/2 a:D2 + b.D1 + c D0 + k
                             + nu_hat - D0 lambda_kappa - (D1 . s) m1(kappa) }

where the last bracket is present only for controls with a jump amplitude ``s``
and ``m1(kappa)`` is the first moment of ``nu`` over ``kappa < |z| <= 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Hashable, Iterable, Optional, Tuple, Union

import numpy as np

from .errors import InfiniteMassError, LevyMCError
from .jumpdiff import CoefficientField
from .levy import LevyMeasure
from .mcq import McqEstimate
from .weights import DerivativeTriple

PINV_THRESHOLD = 1e-12
BISECTION_TOL = 1e-6

Coef = Union[float, np.ndarray, Callable]


def _const(v):
    return v if callable(v) else (lambda t, x, _v=v: _v)


@dataclass(frozen=True)
class Control:
    """Coefficients of one linear operator; each field is a constant or ``f(t, x)``.

    ``s = None`` switches the nonlocal term off for this control.
    """

    a: Coef = 0.0
    b: Coef = 0.0
    c: Coef = 0.0
    k: Coef = 0.0
    s: Optional[Coef] = None

    def coeffs(self, t, x, dim=1):
        """Return ``(a (d,d), b (d,), c, k, s (d,) or None)`` at ``(t, x)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        a = np.asarray(_const(self.a)(t, x), dtype=float)
        a = a.reshape(dim, dim) if a.size == dim * dim else np.eye(dim) * float(a)
        b = np.broadcast_to(np.asarray(_const(self.b)(t, x), dtype=float), (dim,))
        c = float(_const(self.c)(t, x))
        k = float(_const(self.k)(t, x))
        s = None if self.s is None else np.broadcast_to(np.asarray(_const(self.s)(t, x), dtype=float), (dim,))
        return a, b, c, k, s


ControlKey = Tuple[Hashable, Hashable]


@dataclass
class ControlledProblem:
    """Finite control grid over a dominating jump-diffusion.

    ``controls`` maps ``(alpha, beta)`` to a :class:`Control`.  A singleton beta
    grid is the concave (inf-only) case.
    """

    dominating: CoefficientField
    controls: Dict[ControlKey, Control]
    alpha_grid: list = field(default_factory=list)
    beta_grid: list = field(default_factory=list)

    def __post_init__(self):
        if not self.controls:
            raise ValueError("at least one control is required")
        if not self.alpha_grid:
            self.alpha_grid = list(dict.fromkeys(k[0] for k in self.controls))
        if not self.beta_grid:
            self.beta_grid = list(dict.fromkeys(k[1] for k in self.controls))
        for a in self.alpha_grid:
            for b in self.beta_grid:
                if (a, b) not in self.controls:
                    raise ValueError(f"control grid is not rectangular: missing {(a, b)!r}")

    @classmethod
    def concave(cls, dominating, controls: Dict[Hashable, Control]):
        return cls(dominating, {(a, None): c for a, c in controls.items()})

    @property
    def dim(self):
        return self.dominating.dim

    @property
    def keys(self):
        return [(a, b) for a in self.alpha_grid for b in self.beta_grid]

    def validate(self, sample: Iterable[Tuple[float, np.ndarray]], tol=1e-10):
        """Check ``0 <= a^{ab} <= sigma sigma^T`` and finite coefficients on a domain sample."""
        for t, x in sample:
            sig = self.dominating.diffusion(t, np.atleast_1d(x))
            big = sig @ sig.T
            for key, ctl in self.controls.items():
                a, b, c, k, s = ctl.coeffs(t, x, self.dim)
                parts = [a, b, c, k] + ([] if s is None else [s])
                if not all(np.all(np.isfinite(p)) for p in parts):
                    raise ValueError(f"control {key!r} has non-finite coefficients at t={t}, x={x}")
                sym = 0.5 * (a + a.T)
                if np.linalg.eigvalsh(sym).min() < -tol:
                    raise ValueError(f"a for control {key!r} is not positive semidefinite at t={t}, x={x}")
                if np.linalg.eigvalsh(big - sym).min() < -tol:
                    raise ValueError(f"a for control {key!r} is not dominated by sigma sigma^T at t={t}, x={x}")
        return True


def pseudo_inverse(a, threshold=PINV_THRESHOLD):
    """Symmetric pseudo-inverse through the eigendecomposition."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape == (1, 1):
        v = a[0, 0]
        return np.array([[1.0 / v if abs(v) > threshold else 0.0]])
    lam, vec = np.linalg.eigh(0.5 * (a + a.T))
    inv = np.where(np.abs(lam) > threshold, 1.0 / np.where(lam == 0, 1.0, lam), 0.0)
    return (vec * inv) @ vec.T


@dataclass(frozen=True)
class ThetaKappa:
    value: float
    per_control: Dict[ControlKey, float]
    kappa: float = 0.0


def _tail_mass_or_inf(m: LevyMeasure, kappa):
    try:
        return m.tail_mass(kappa)
    except InfiniteMassError:
        return math.inf


def theta_kappa(p: ControlledProblem, m: LevyMeasure, kappa, sample) -> ThetaKappa:
    """Per-control ``sup |c + lambda_kappa + 1/4 b_k^T a^- b_k|`` over the domain sample."""
    sample = list(sample)
    if not sample:
        raise ValueError("domain sample is empty")
    lam = _tail_mass_or_inf(m, kappa)
    m1 = m.truncated_first_moment(kappa) if math.isfinite(lam) else 0.0
    per = {}
    for key, ctl in p.controls.items():
        best = 0.0
        for t, x in sample:
            a, b, c, k, s = ctl.coeffs(t, x, p.dim)
            if s is None:
                val = c + 0.25 * float(b @ pseudo_inverse(a) @ b)
            else:
                bk = b - s * m1
                val = c + lam + 0.25 * float(bk @ pseudo_inverse(a) @ bk)
            best = max(best, abs(val))
        per[key] = best
    return ThetaKappa(max(per.values()), per, float(kappa))


@dataclass(frozen=True)
class TruncationLevel:
    """Outcome of a kappa rule.  ``feasible=False`` carries the failing condition in ``reason``."""

    kappa: float
    rule: str
    h: float
    theta: Optional[ThetaKappa] = None
    second_moment: float = math.nan
    feasible: bool = True
    reason: str = ""


class KappaSearchError(LevyMCError):
    pass


def _upper_crossing(pred, tol=BISECTION_TOL, hi=1.0, max_hi=1e6):
    """Smallest ``kappa`` (to ``tol``, upper end) with ``pred(kappa)`` true, ``pred`` monotone."""
    if pred(0.0):
        return 0.0
    while not pred(hi):
        hi *= 2.0
        if hi > max_hi:
            return None
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def select_kappa_convergence(p: ControlledProblem, m: LevyMeasure, h, sample) -> TruncationLevel:
    """``kappa_h = inf{kappa : theta_kappa <= h^{-1/2}} + h``, or 0 when kappa = 0 already qualifies."""
    if not h > 0:
        raise ValueError("h must be positive")
    sample = list(sample)
    target = h**-0.5
    theta = lambda k: theta_kappa(p, m, k, sample).value
    star = _upper_crossing(lambda k: theta(k) <= target)
    if star is None:
        raise KappaSearchError(f"theta_kappa stays above h^(-1/2) = {target:.6g} for every kappa <= 1e6")
    kappa = 0.0 if star == 0.0 else star + h
    th = theta_kappa(p, m, kappa, sample)
    if not th.value <= target:
        raise KappaSearchError(f"post-condition failed: theta = {th.value} > {target}")
    return TruncationLevel(kappa, "convergence", h, th, m.small_jump_second_moment(kappa))


def select_kappa_rate(p: ControlledProblem, m: LevyMeasure, h, sample, c_theta=1.0, c_m=1.0) -> TruncationLevel:
    """Smallest kappa with ``theta <= c_theta h^{-3/8}`` and ``m2(kappa) <= c_m h^{1/2}``.

    Returns an infeasible :class:`TruncationLevel` naming the failing condition
    when no kappa satisfies both.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    sample = list(sample)
    t_theta = c_theta * h ** (-3.0 / 8.0)
    t_m2 = c_m * h**0.5
    star = _upper_crossing(lambda k: theta_kappa(p, m, k, sample).value <= t_theta)
    if star is None:
        return TruncationLevel(
            math.nan, "rate", h, None, math.nan, False, f"theta_kappa never drops below {t_theta:.6g}"
        )
    th = theta_kappa(p, m, star, sample)
    m2 = m.small_jump_second_moment(star)
    if m2 > t_m2:
        reason = (
            f"second moment {m2:.6g} at the smallest admissible kappa {star:.6g} "
            f"exceeds {t_m2:.6g}; theta and second-moment conditions are incompatible"
        )
        return TruncationLevel(star, "rate", h, th, m2, False, reason)
    return TruncationLevel(star, "rate", h, th, m2)


def _nu_value(v):
    return v.value if isinstance(v, McqEstimate) else float(v)


def _control_values(p, m, kappa, t, x, triple: DerivativeTriple, nu_hats, c_shift=0.0, k_scale=1.0):
    lam = None
    m1 = None
    out = {}
    for key in p.keys:
        a, b, c, k, s = p.controls[key].coeffs(t, x, p.dim)
        val = 0.5 * float(np.sum(a * triple.d2)) + float(b @ triple.d1) + (c + c_shift) * triple.d0 + k * k_scale
        if s is not None:
            if key not in nu_hats:
                raise KeyError(f"missing nu_hat estimate for control {key!r}")
            if lam is None:
                lam = m.tail_mass(kappa)
                m1 = m.truncated_first_moment(kappa)
            val += _nu_value(nu_hats[key]) - triple.d0 * lam - float(triple.d1 @ s) * m1
        out[key] = val
    return out


def _min_max(p, vals):
    best, arg = math.inf, None
    for a in p.alpha_grid:
        inner, barg = -math.inf, None
        for b in p.beta_grid:
            if vals[(a, b)] > inner:
                inner, barg = vals[(a, b)], b
        if inner < best:
            best, arg = inner, (a, barg)
    return best, arg


def evaluate_F(p: ControlledProblem, m: LevyMeasure, kappa, t, x, triple, nu_hats, return_control=False):
    """Grid min-max of the discretized nonlinearity."""
    val, arg = _min_max(p, _control_values(p, m, kappa, t, x, triple, nu_hats))
    return (val, arg) if return_control else val


def evaluate_F_monotonized(
    p: ControlledProblem, m: LevyMeasure, kappa, t, x, triple, nu_hats, theta, T_minus_t, return_control=False
):
    """As :func:`evaluate_F` with ``c -> c + theta`` and ``k -> exp(theta (T - t)) k``."""
    th = theta.value if isinstance(theta, ThetaKappa) else float(theta)
    vals = _control_values(p, m, kappa, t, x, triple, nu_hats, c_shift=th, k_scale=math.exp(th * T_minus_t))
    val, arg = _min_max(p, vals)
    return (val, arg) if return_control else val
