"""Hermite-type weights and Monte Carlo estimates of ``E[psi]``, ``D psi`` and ``D^2 psi``.

For one Euler step from ``(t, x)`` with Brownian increment ``W_h``::

    H0 = 1
    H1 = (sigma^T)^{-1} W_h / h
    H2 = (sigma^T)^{-1} (W_h W_h^T - h I) / h^2 sigma^{-1}

and ``D^k_h psi = E[psi(X_h) H_k]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .jumpdiff import CoefficientField, OneStepSample, StepBatch


@dataclass
class DerivativeTriple:
    """Estimates of (value, gradient, Hessian); the Hessian is symmetrized."""

    d0: float
    d1: np.ndarray
    d2: np.ndarray
    se0: Optional[float] = None
    se1: Optional[np.ndarray] = None
    se2: Optional[np.ndarray] = None

    def __post_init__(self):
        self.d0 = float(self.d0)
        self.d1 = np.atleast_1d(np.asarray(self.d1, dtype=float))
        d2 = np.atleast_2d(np.asarray(self.d2, dtype=float))
        self.d2 = 0.5 * (d2 + d2.T)


def weight(k, cf: CoefficientField, t, x, h, w, sigma_inv=None):
    """Weight ``H_k`` for a single Brownian increment ``w``."""
    if k == 0:
        return 1.0
    if sigma_inv is None:
        sigma_inv = cf.sigma_inverse(t, np.atleast_1d(x))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if k == 1:
        return sigma_inv.T @ w / h
    if k == 2:
        d = w.size
        return sigma_inv.T @ (np.outer(w, w) - h * np.eye(d)) @ sigma_inv / h**2
    raise ValueError(f"weight order must be 0, 1 or 2, got {k}")


def _as_batch(samples):
    if isinstance(samples, StepBatch):
        return samples.w, samples.landing
    samples = list(samples)
    if not samples:
        raise ValueError("cannot estimate derivatives from an empty batch")
    w = np.stack([np.atleast_1d(s.w) for s in samples])
    landing = np.stack([np.atleast_1d(s.landing) for s in samples])
    return w, landing


def evaluate_on_landing(psi, landing):
    """Apply ``psi`` to landing points; 1-d problems receive a flat array."""
    pts = landing[:, 0] if landing.shape[1] == 1 else landing
    return np.asarray(psi(pts), dtype=float).reshape(landing.shape[0])


def derivatives_from_values(values, w, sigma_inv, h, std_errors=False):
    """Core estimator from ``psi(X_h)`` values and the matching increments ``w``."""
    values = np.asarray(values, dtype=float)
    m, d = w.shape
    if m == 0:
        raise ValueError("cannot estimate derivatives from an empty batch")
    z = w @ sigma_inv  # rows: (sigma^{-1})^T w
    c1 = values[:, None] * z / h
    # (sigma^T)^{-1}(w w^T - h I) sigma^{-1} = z z^T - h (sigma sigma^T)^{-1}
    ainv = sigma_inv.T @ sigma_inv
    d0 = values.mean()
    d1 = c1.mean(axis=0)
    d2 = ((values[:, None] * z).T @ z - h * values.sum() * ainv) / (m * h**2)
    if not std_errors:
        return DerivativeTriple(d0, d1, d2)
    root = math.sqrt(m)
    c2 = values[:, None, None] * (z[:, :, None] * z[:, None, :] - h * ainv[None]) / h**2
    c2 = 0.5 * (c2 + np.swapaxes(c2, 1, 2))
    return DerivativeTriple(
        d0,
        d1,
        d2,
        se0=values.std(ddof=1) / root if m > 1 else 0.0,
        se1=c1.std(axis=0, ddof=1) / root if m > 1 else np.zeros(d),
        se2=c2.std(axis=0, ddof=1) / root if m > 1 else np.zeros((d, d)),
    )


def estimate_derivatives(
    psi,
    samples: Union[StepBatch, Sequence[OneStepSample]],
    cf: CoefficientField,
    t,
    x,
    h,
    std_errors: bool = False,
) -> DerivativeTriple:
    """Sample means of ``psi(X_h) H_k`` over a batch generated at ``(t, x, h)``.

    ``sigma^{-1}`` is computed once for the batch.  With ``std_errors=True`` the
    triple also carries the standard error of every component.
    """
    w, landing = _as_batch(samples)
    sigma_inv = cf.sigma_inverse(t, np.atleast_1d(np.asarray(x, dtype=float)))
    values = evaluate_on_landing(psi, landing)
    return derivatives_from_values(values, w, sigma_inv, h, std_errors=std_errors)
