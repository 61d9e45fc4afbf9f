"""One-dimensional Levy measures with closed-form truncation functionals.

Three kinds are supported:

* ``point_mass``     -- finite measure ``lam * delta_{z0}``
* ``gaussian_jumps`` -- finite measure ``lam * N(mean, std**2)``
* ``power_tail``     -- symmetric ``c * |z|**(-1 - alpha) dz`` on ``R \\ {0}``, ``0 < alpha < 2``

All functionals are exact; quadrature is only used by the test oracles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .errors import CannotSampleError, InfiniteMassError

POINT_MASS = "point_mass"
GAUSSIAN_JUMPS = "gaussian_jumps"
POWER_TAIL = "power_tail"
KINDS = (POINT_MASS, GAUSSIAN_JUMPS, POWER_TAIL)


def _check_kappa(kappa):
    kappa = float(kappa)
    if not kappa >= 0.0:
        raise ValueError(f"truncation level must be nonnegative, got {kappa}")
    return kappa


def _gauss_interval(mean, std, a, b):
    """Mass, first and second raw moments of N(mean, std^2) restricted to (a, b]."""
    if b <= a:
        return 0.0, 0.0, 0.0
    al = (a - mean) / std
    be = (b - mean) / std
    # complementary form keeps precision when both ends sit in the right tail
    if al > 0:
        mass = special.ndtr(-al) - special.ndtr(-be)
    else:
        mass = special.ndtr(be) - special.ndtr(al)
    pa = math.exp(-0.5 * al * al) / math.sqrt(2 * math.pi) if math.isfinite(al) else 0.0
    pb = math.exp(-0.5 * be * be) / math.sqrt(2 * math.pi) if math.isfinite(be) else 0.0
    ta = al * pa if math.isfinite(al) else 0.0
    tb = be * pb if math.isfinite(be) else 0.0
    m1 = mean * mass + std * (pa - pb)
    m2 = mean * mean * mass + 2 * mean * std * (pa - pb) + std * std * (mass + ta - tb)
    return float(mass), float(m1), float(m2)


@dataclass(frozen=True)
class LevyMeasure:
    """Immutable Levy measure on the real line.

    Build instances with :meth:`point_mass`, :meth:`gaussian_jumps` or
    :meth:`power_tail` rather than calling the constructor directly.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}; expected one of {KINDS}")
        p = self.params
        if self.kind == POINT_MASS:
            if p["intensity"] < 0:
                raise ValueError("intensity must be nonnegative")
            if p["location"] == 0:
                raise ValueError("a Levy measure cannot charge z = 0")
        elif self.kind == GAUSSIAN_JUMPS:
            if p["intensity"] < 0:
                raise ValueError("intensity must be nonnegative")
            if p["std"] <= 0:
                raise ValueError("jump std must be positive")
        else:
            if p["amplitude"] <= 0:
                raise ValueError("amplitude must be positive")
            if not 0 < p["alpha"] < 2:
                raise ValueError("power-tail exponent alpha must lie in (0, 2)")

    # -- constructors -----------------------------------------------------
    @classmethod
    def point_mass(cls, intensity, location):
        return cls(POINT_MASS, {"intensity": float(intensity), "location": float(location)})

    @classmethod
    def gaussian_jumps(cls, intensity, mean=0.0, std=1.0):
        return cls(GAUSSIAN_JUMPS, {"intensity": float(intensity), "mean": float(mean), "std": float(std)})

    @classmethod
    def power_tail(cls, amplitude=1.0, alpha=1.0):
        return cls(POWER_TAIL, {"amplitude": float(amplitude), "alpha": float(alpha)})

    @classmethod
    def from_dict(cls, spec):
        """Build from a config mapping such as ``{"kind": "power_tail", "alpha": 1.0}``."""
        spec = dict(spec)
        kind = spec.pop("kind")
        builders = {POINT_MASS: cls.point_mass, GAUSSIAN_JUMPS: cls.gaussian_jumps, POWER_TAIL: cls.power_tail}
        if kind not in builders:
            raise ValueError(f"unknown measure kind {kind!r}")
        return builders[kind](**spec)

    def to_dict(self):
        return {"kind": self.kind, **self.params}

    # -- structure --------------------------------------------------------
    @property
    def is_finite(self):
        return self.kind != POWER_TAIL

    @property
    def is_symmetric(self):
        if self.kind == POWER_TAIL:
            return True
        if self.kind == GAUSSIAN_JUMPS:
            return self.params["mean"] == 0.0
        return self.params["intensity"] == 0.0

    def density(self, z):
        """Lebesgue density; only defined for the absolutely continuous kinds."""
        z = np.asarray(z, dtype=float)
        p = self.params
        if self.kind == GAUSSIAN_JUMPS:
            u = (z - p["mean"]) / p["std"]
            return p["intensity"] * np.exp(-0.5 * u * u) / (p["std"] * math.sqrt(2 * math.pi))
        if self.kind == POWER_TAIL:
            with np.errstate(divide="ignore"):
                out = p["amplitude"] * np.abs(z) ** (-1.0 - p["alpha"])
            return np.where(z == 0, np.inf, out)
        raise TypeError("point-mass measure has no density")

    # -- functionals ------------------------------------------------------
    def tail_mass(self, kappa):
        """``lambda_kappa``: mass of ``{|z| > kappa}``."""
        kappa = _check_kappa(kappa)
        p = self.params
        if self.kind == POINT_MASS:
            return p["intensity"] if abs(p["location"]) > kappa else 0.0
        if self.kind == GAUSSIAN_JUMPS:
            if kappa == 0.0:
                return p["intensity"]
            left, _, _ = _gauss_interval(p["mean"], p["std"], -math.inf, -kappa)
            right, _, _ = _gauss_interval(p["mean"], p["std"], kappa, math.inf)
            return p["intensity"] * (left + right)
        if kappa == 0.0:
            raise InfiniteMassError("power-tail measure has infinite mass near zero; use kappa > 0")
        if math.isinf(kappa):
            return 0.0
        return 2.0 * p["amplitude"] * kappa ** (-p["alpha"]) / p["alpha"]

    def truncated_first_moment(self, kappa):
        """Integral of ``z`` over ``{kappa < |z| <= 1}``; zero once ``kappa >= 1``."""
        kappa = _check_kappa(kappa)
        if kappa >= 1.0:
            return 0.0
        p = self.params
        if self.kind == POINT_MASS:
            z0 = p["location"]
            return p["intensity"] * z0 if kappa < abs(z0) <= 1.0 else 0.0
        if self.kind == GAUSSIAN_JUMPS:
            _, a, _ = _gauss_interval(p["mean"], p["std"], -1.0, -kappa)
            _, b, _ = _gauss_interval(p["mean"], p["std"], kappa, 1.0)
            return p["intensity"] * (a + b)
        return 0.0

    def small_jump_second_moment(self, kappa):
        """Integral of ``z**2`` over ``{0 < |z| <= kappa}``."""
        kappa = _check_kappa(kappa)
        if kappa == 0.0:
            return 0.0
        p = self.params
        if self.kind == POINT_MASS:
            z0 = p["location"]
            return p["intensity"] * z0 * z0 if abs(z0) <= kappa else 0.0
        if self.kind == GAUSSIAN_JUMPS:
            _, _, m2 = _gauss_interval(p["mean"], p["std"], -kappa, kappa)
            return p["intensity"] * m2
        c, al = p["amplitude"], p["alpha"]
        return 2.0 * c * kappa ** (2.0 - al) / (2.0 - al)

    def tail_second_moment(self, kappa, upper=math.inf):
        """Integral of ``z**2`` over ``{kappa < |z| <= upper}`` (may be infinite)."""
        kappa = _check_kappa(kappa)
        if upper <= kappa:
            return 0.0
        if math.isinf(upper):
            if self.kind == POWER_TAIL:
                return math.inf
        return self.small_jump_second_moment(upper) - self.small_jump_second_moment(kappa)

    def tail_cdf(self, z, kappa):
        """CDF of the normalized tail law ``1{|z|>kappa} nu(dz) / lambda_kappa``."""
        lam = self.tail_mass(kappa)
        if not lam > 0:
            raise CannotSampleError(f"zero tail mass above kappa={kappa}")
        z = np.asarray(z, dtype=float)
        p = self.params
        if self.kind == POINT_MASS:
            return (z >= p["location"]).astype(float)
        if self.kind == GAUSSIAN_JUMPS:
            mu, s = p["mean"], p["std"]
            lo = special.ndtr((np.minimum(z, -kappa) - mu) / s)
            hi = np.where(z > kappa, special.ndtr((z - mu) / s) - special.ndtr((kappa - mu) / s), 0.0)
            return p["intensity"] * (lo + hi) / lam
        c, al = p["amplitude"], p["alpha"]
        half = c * kappa ** (-al) / al
        with np.errstate(divide="ignore"):
            az = np.abs(z)
            left = c * np.maximum(az, kappa) ** (-al) / al
            right = half + c * (kappa ** (-al) - np.maximum(z, kappa) ** (-al)) / al
        return np.where(z <= -kappa, left, np.where(z < kappa, half, right)) / lam

    def sample_truncated_jump(self, kappa, rng, size=None):
        """Draw from ``1{|z| > kappa} nu(dz) / lambda_kappa``.

        Power tails use the exact inverse CDF on each half-line; Gaussian jumps
        use the inverse normal CDF restricted to the chosen half-line.
        """
        lam = self.tail_mass(kappa)
        if not (lam > 0 and math.isfinite(lam)):
            raise CannotSampleError(f"cannot sample: tail mass above kappa={kappa} is {lam}")
        n = 1 if size is None else int(size)
        p = self.params
        if self.kind == POINT_MASS:
            out = np.full(n, p["location"])
        elif self.kind == GAUSSIAN_JUMPS:
            out = self._sample_gaussian_tail(kappa, rng, n)
        else:
            u = rng.random(n)
            sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            # P(|Z| > r) = (r / kappa)^-alpha on each half-line; 1 - u keeps u in (0, 1]
            out = sign * kappa * (1.0 - u) ** (-1.0 / p["alpha"])
        return float(out[0]) if size is None else out

    def _sample_gaussian_tail(self, kappa, rng, n):
        mu, s = self.params["mean"], self.params["std"]
        if kappa == 0.0:
            return mu + s * rng.standard_normal(n)
        p_left = float(special.ndtr((-kappa - mu) / s))
        p_right = float(special.ndtr((mu - kappa) / s))
        side = rng.random(n)
        u = 1.0 - rng.random(n)
        left = side * (p_left + p_right) < p_left
        out = np.empty(n)
        out[left] = mu + s * special.ndtri(u[left] * p_left)
        out[~left] = mu - s * special.ndtri(u[~left] * p_right)
        # guard the boundary against ndtri rounding
        out[left] = np.minimum(out[left], np.nextafter(-kappa, -np.inf))
        out[~left] = np.maximum(out[~left], np.nextafter(kappa, np.inf))
        return out

    def jump_spread(self, kappa, horizon, scale=1.0):
        """Typical displacement from retained jumps over ``horizon``.

        Square root of the accumulated jump variance; jumps beyond |z| = 1 of a
        power tail are counted with unit size since their variance is infinite.
        """
        if self.kind == POWER_TAIL:
            var = self.tail_second_moment(kappa, 1.0) + self.tail_mass(max(kappa, 1.0))
        else:
            var = self.tail_second_moment(kappa)
        return abs(scale) * math.sqrt(horizon * var)


# Functional forms mirroring the method API.
def tail_mass(m: LevyMeasure, kappa) -> float:
    return m.tail_mass(kappa)


def truncated_first_moment(m: LevyMeasure, kappa) -> float:
    return m.truncated_first_moment(kappa)


def small_jump_second_moment(m: LevyMeasure, kappa) -> float:
    return m.small_jump_second_moment(kappa)


def sample_truncated_jump(m: LevyMeasure, kappa, rng: np.random.Generator, size: Optional[int] = None):
    return m.sample_truncated_jump(kappa, rng, size)


def check_kappa_admissible(m: LevyMeasure, kappa) -> float:
    kappa = _check_kappa(kappa)
    if kappa == 0.0 and not m.is_finite:
        raise InfiniteMassError("kappa = 0 is only admissible for finite measures")
    return kappa
