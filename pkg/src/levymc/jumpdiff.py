"""One-step Euler simulation of the truncated jump-diffusion.

The retained jumps (``|z| > kappa``) are simulated as a compound Poisson sum
and the small-jump compensator over ``kappa < |z| <= 1`` is folded into the
drift, so that one step reads

    X_h = x + mu_kappa(t, x) h + sigma(t, x) W_h + sum_{i <= N} eta(t, x, Z_i)

with ``N ~ Poisson(lambda_kappa h)`` and ``Z_i`` drawn from the normalized
tail law.  Every random ingredient is kept in the returned batch so that the
derivative weights and the Monte Carlo quadrature can reuse it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import SingularDiffusionError
from .levy import LevyMeasure, check_kappa_admissible

# numpy's Generator.poisson switches from inversion to PTRS rejection at this mean
POISSON_INVERSION_THRESHOLD = 10.0


def _as_vector(v, dim):
    out = np.asarray(v, dtype=float).reshape(-1)
    if out.size == 1 and dim > 1:
        out = np.full(dim, out[0])
    if out.size != dim:
        raise ValueError(f"expected a vector of length {dim}, got shape {np.shape(v)}")
    return out


def _as_matrix(v, dim):
    out = np.asarray(v, dtype=float)
    if out.ndim == 0 or out.size == 1:
        return np.eye(dim) * float(out.reshape(-1)[0]) if dim > 1 else out.reshape(1, 1)
    if out.ndim == 1:
        return np.diag(out)
    if out.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix, got shape {out.shape}")
    return out


def _const(value):
    return lambda t, x: value


@dataclass(frozen=True)
class CoefficientField:
    """Drift, diffusion and separable jump amplitude of the dominating process.

    ``mu``, ``sigma`` and ``eta_scale`` are callables of ``(t, x)`` with ``x`` a
    length-``dim`` array.  The jump amplitude is ``eta(t, x, z) = eta_scale(t, x) * z``.

    For a non-separable amplitude pass ``eta(t, x, z) -> (len(z), dim)`` together
    with ``compensator(t, x, kappa)`` returning the integral of ``eta`` over
    ``kappa < |z| <= 1``; both are then used instead of ``eta_scale``.
    """

    mu: Callable
    sigma: Callable
    eta_scale: Callable
    dim: int = 1
    eta: Optional[Callable] = None
    compensator: Optional[Callable] = None

    def __post_init__(self):
        if (self.eta is None) != (self.compensator is None):
            raise ValueError("a non-separable eta needs a matching compensator callback")

    @classmethod
    def constant(cls, mu=0.0, sigma=1.0, eta_scale=1.0, dim=1):
        mu = _as_vector(mu, dim)
        sigma = _as_matrix(sigma, dim)
        s = _as_vector(eta_scale, dim)
        return cls(_const(mu), _const(sigma), _const(s), dim)

    @property
    def separable(self):
        return self.eta is None

    def drift(self, t, x):
        return _as_vector(self.mu(t, x), self.dim)

    def diffusion(self, t, x):
        return _as_matrix(self.sigma(t, x), self.dim)

    def jump_scale(self, t, x):
        return _as_vector(self.eta_scale(t, x), self.dim)

    def sigma_inverse(self, t, x, max_condition=1e12):
        sig = self.diffusion(t, x)
        cond = np.linalg.cond(sig)
        if not np.isfinite(cond) or cond > max_condition:
            raise SingularDiffusionError(f"sigma(t={t}, x={np.ravel(x)}) is not invertible", cond)
        return np.linalg.inv(sig)

    def condition_number(self, t, x):
        return float(np.linalg.cond(self.diffusion(t, x)))

    def eta_ratio(self, points, z):
        """Largest ``|eta(t, x, z)| / min(|z|, 1)`` over ``points`` x ``z``.

        Diagnostic for the growth condition on the jump amplitude.
        """
        z = np.asarray(z, dtype=float)
        z = z[z != 0]
        worst = 0.0
        for t, x in points:
            x = np.atleast_1d(np.asarray(x, dtype=float))
            if self.separable:
                amp = np.abs(z)[:, None] * np.abs(self.jump_scale(t, x))[None, :]
            else:
                amp = np.abs(np.asarray(self.eta(t, x, z)).reshape(z.size, self.dim))
            worst = max(worst, float(np.max(np.linalg.norm(amp, axis=1) / np.minimum(np.abs(z), 1.0))))
        return worst


@dataclass
class OneStepSample:
    """Random ingredients and landing point of a single Euler step."""

    w: np.ndarray
    n_jumps: int
    marks: np.ndarray
    landing: np.ndarray


def compensated_drift(cf: CoefficientField, m: LevyMeasure, kappa, t, x):
    """``mu_kappa = mu - int_{kappa < |z| <= 1} eta(t, x, z) nu(dz)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not cf.separable:
        return cf.drift(t, x) - _as_vector(cf.compensator(t, x, kappa), cf.dim)
    return cf.drift(t, x) - cf.jump_scale(t, x) * m.truncated_first_moment(kappa)


def _jump_shift(cf, t, x, marks, owner, count):
    """Per-sample sums of eta(Z_i) and of the raw marks (sequential bincount sums)."""
    mark_sum = np.bincount(owner, weights=marks, minlength=count)
    if cf.separable:
        shift = mark_sum[:, None] * cf.jump_scale(t, x)[None, :]
    else:
        eta = np.asarray(cf.eta(t, x, marks), dtype=float).reshape(marks.size, cf.dim)
        shift = np.stack([np.bincount(owner, weights=eta[:, j], minlength=count) for j in range(cf.dim)], axis=1)
    return mark_sum, shift


def _assemble(x, drift, h, sigma, w, shift):
    return (x + drift * h)[None, :] + w @ sigma.T + shift


@dataclass
class StepBatch:
    """A batch of independent one-step samples from a common ``(t, x)``.

    Stored column-wise; indexing or iterating yields :class:`OneStepSample`.
    """

    t: float
    x: np.ndarray
    h: float
    kappa: float
    drift: np.ndarray
    sigma: np.ndarray
    w: np.ndarray
    n_jumps: np.ndarray
    marks: np.ndarray
    owner: np.ndarray
    mark_sum: np.ndarray
    jump_shift: np.ndarray
    landing: np.ndarray

    def __len__(self):
        return self.w.shape[0]

    @property
    def offsets(self):
        return np.concatenate(([0], np.cumsum(self.n_jumps)))

    def __getitem__(self, i):
        n = len(self)
        if not -n <= i < n:
            raise IndexError(i)
        i %= n
        off = self.offsets
        return OneStepSample(
            w=self.w[i].copy(),
            n_jumps=int(self.n_jumps[i]),
            marks=self.marks[off[i] : off[i + 1]].copy(),
            landing=self.landing[i].copy(),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def node_stream(seed, layer=0, node=0):
    """Independent random stream for a (time layer, grid node) pair.

    Streams depend only on the triple, never on scheduling order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(layer), int(node)))
    return np.random.Generator(np.random.PCG64(ss))


def simulate_batch(cf: CoefficientField, m: LevyMeasure, kappa, t, x, h, count, rng) -> StepBatch:
    if count < 1:
        raise ValueError("count must be at least 1")
    if not h > 0:
        raise ValueError("time step must be positive")
    kappa = check_kappa_admissible(m, kappa)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = cf.dim
    drift = compensated_drift(cf, m, kappa, t, x)
    sigma = cf.diffusion(t, x)
    lam_h = m.tail_mass(kappa) * h

    w = rng.standard_normal((count, d)) * np.sqrt(h)
    if lam_h > 0:
        n_jumps = rng.poisson(lam_h, count)
    else:
        n_jumps = np.zeros(count, dtype=np.int64)
    total = int(n_jumps.sum())
    if total:
        marks = m.sample_truncated_jump(kappa, rng, size=total)
    else:
        marks = np.zeros(0)
    owner = np.repeat(np.arange(count), n_jumps)
    mark_sum, shift = _jump_shift(cf, t, x, marks, owner, count)
    landing = _assemble(x, drift, h, sigma, w, shift)
    return StepBatch(t, x, h, kappa, drift, sigma, w, n_jumps, marks, owner, mark_sum, shift, landing)


def euler_step(cf: CoefficientField, m: LevyMeasure, kappa, t, x, h, rng) -> OneStepSample:
    return simulate_batch(cf, m, kappa, t, x, h, 1, rng)[0]


def reconstruct_landing(cf: CoefficientField, m: LevyMeasure, kappa, t, x, h, sample: OneStepSample):
    """Recompute the landing point of ``sample`` from its stored ingredients."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    owner = np.zeros(sample.marks.size, dtype=np.int64)
    _, shift = _jump_shift(cf, t, x, np.asarray(sample.marks, dtype=float), owner, 1)
    drift = compensated_drift(cf, m, kappa, t, x)
    return _assemble(x, drift, h, cf.diffusion(t, x), np.asarray(sample.w).reshape(1, -1), shift)[0]
