"""Backward Monte Carlo scheme on a spatial grid.

At every time layer and grid node one batch of one-step samples is drawn; the
next-layer surface is interpolated at the landing points and the same batch
feeds the expectation, the Hermite derivative estimates and the per-control
Levy integrals:

    v(t_i, x) = D0 + h F(t_i, x, D0, D1, D2, nu_hat)
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, LevyMCError, NumericalAbort
from .hjb import (
    ControlledProblem,
    ThetaKappa,
    TruncationLevel,
    evaluate_F,
    evaluate_F_monotonized,
    select_kappa_convergence,
    select_kappa_rate,
    theta_kappa,
)
from .jumpdiff import node_stream, simulate_batch
from .levy import LevyMeasure
from .mcq import McqEstimate
from .weights import DerivativeTriple

THREADS_ENV = "LEVYMC_THREADS"


def _vec(v, d):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    return np.broadcast_to(a, (d,)).copy() if a.size in (1, d) else a


@dataclass(frozen=True)
class UniformGrid:
    """Tensor grid with ``shape[k]`` equispaced points from ``lo[k]`` with step ``dx[k]``."""

    lo: tuple
    dx: tuple
    shape: tuple

    @classmethod
    def cover(cls, lo, hi, dx):
        lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
        dx = _vec(dx, lo.size)
        shape = tuple(int(math.ceil((b - a) / s - 1e-9)) + 1 for a, b, s in zip(lo, hi, dx))
        return cls(tuple(lo), tuple(dx), shape)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def hi(self):
        return tuple(a + (n - 1) * s for a, s, n in zip(self.lo, self.dx, self.shape))

    @property
    def size(self):
        return int(np.prod(self.shape))

    def axes(self):
        return [a + s * np.arange(n) for a, s, n in zip(self.lo, self.dx, self.shape)]

    def points(self):
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def mask(self, lo, hi, tol=1e-9):
        pts = self.points()
        lo, hi = _vec(lo, self.dim), _vec(hi, self.dim)
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)


def interpolate(values, grid: UniformGrid, x, use_numba=None):
    """Multilinear interpolation of a surface slice; constant beyond the box."""
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 0 or (pts.ndim == 1 and grid.dim > 1 and pts.size == grid.dim)
    pts = pts.reshape(-1, grid.dim)
    out = _kernels.interp(np.asarray(values).reshape(grid.shape), np.array(grid.lo), np.array(grid.dx), pts, use_numba)
    return float(out[0]) if scalar else out


@dataclass
class ValueSurface:
    """Values per (time layer, node); ``values[i]`` is flat in C order over the grid."""

    grid: UniformGrid
    times: np.ndarray
    values: np.ndarray
    level: Optional[TruncationLevel] = None
    theta: Optional[ThetaKappa] = None
    monotonized: bool = False

    def slice(self, i):
        return self.values[i]

    def interpolate(self, i, x):
        return interpolate(self.values[i], self.grid, x)

    def to_csv(self, fh=None, layers=None, mask=None):
        """Rows ``t, x..., value``; floats in shortest round-trip form.

        ``mask`` selects grid nodes (e.g. the interior of the padded box).
        """
        own = fh is None
        fh = io.StringIO() if own else fh
        d = self.grid.dim
        header = ["t", "x"] if d == 1 else ["t"] + [f"x{k}" for k in range(d)]
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header + ["value"])
        pts = self.grid.points()
        keep = np.ones(len(pts), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        for i in range(len(self.times)) if layers is None else layers:
            t = repr(float(self.times[i]))
            for p, v in zip(pts[keep], self.values[i][keep]):
                wr.writerow([t] + [repr(float(c)) for c in p] + [repr(float(v))])
        return fh.getvalue() if own else None


@dataclass(frozen=True)
class KappaRule:
    """``fixed`` (uses ``kappa``), ``convergence`` or ``rate`` (with its constants)."""

    kind: str = "fixed"
    kappa: float = 0.0
    c_theta: float = 1.0
    c_m: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "convergence", "rate"):
            raise ValueError(f"unknown kappa rule {self.kind!r}")

    def resolve(self, p, m, h, sample) -> TruncationLevel:
        if self.kind == "convergence":
            return select_kappa_convergence(p, m, h, sample)
        if self.kind == "rate":
            return select_kappa_rate(p, m, h, sample, self.c_theta, self.c_m)
        th = theta_kappa(p, m, self.kappa, sample)
        return TruncationLevel(self.kappa, "fixed", h, th, m.small_jump_second_moment(self.kappa))


@dataclass
class SchemeConfig:
    """Time grid ``t_i = i T / n``; spatial box = interior ``[lo, hi]`` widened by ``padding``."""

    T: float
    n: int
    lo: Sequence
    hi: Sequence
    dx: float
    padding: float
    samples: int
    kappa_rule: KappaRule = field(default_factory=KappaRule)
    monotonized: bool = False
    seed: int = 0
    threads: Optional[int] = None
    use_numba: Optional[bool] = None

    def __post_init__(self):
        if int(self.n) < 1 or self.n != int(self.n):
            raise ConfigError("n must be a positive integer")
        if int(self.samples) < 1:
            raise ConfigError("samples per node must be at least 1")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        self.n = int(self.n)
        self.samples = int(self.samples)

    @property
    def h(self):
        return self.T / self.n

    @property
    def dim(self):
        return np.atleast_1d(self.lo).size

    @property
    def grid(self) -> UniformGrid:
        # padding rounded up to whole steps so the interior box starts on a node
        dx = _vec(self.dx, self.dim)
        pad = np.ceil(_vec(self.padding, self.dim) / dx - 1e-9) * dx
        return UniformGrid.cover(_vec(self.lo, self.dim) - pad, _vec(self.hi, self.dim) + pad, dx)

    def interior_mask(self):
        return self.grid.mask(self.lo, self.hi)

    def times(self):
        return np.arange(self.n + 1) * self.h

    def worker_count(self):
        if self.threads is not None:
            return max(1, int(self.threads))
        env = os.environ.get(THREADS_ENV, "").strip()
        return max(1, int(env)) if env else 1

    def required_padding(self, p: ControlledProblem, m: LevyMeasure, kappa):
        """``4 (sigma sqrt(T) + jump spread)`` with sup-norms over the grid at t = 0."""
        cf = p.dominating
        pts = self.grid.points()
        sig = max(np.linalg.norm(cf.diffusion(0.0, x), 2) for x in pts[:: max(1, len(pts) // 50)])
        s = max(np.max(np.abs(cf.jump_scale(0.0, x))) for x in pts[:: max(1, len(pts) // 50)])
        spread = m.jump_spread(kappa, self.T, s) if m.tail_mass(kappa) > 0 else 0.0
        return 4.0 * (sig * math.sqrt(self.T) + spread)

    def validate(self, p: ControlledProblem, m: LevyMeasure, kappa):
        if p.dim != self.dim:
            raise ConfigError(f"problem dimension {p.dim} does not match the box dimension {self.dim}")
        need = self.required_padding(p, m, kappa)
        have = float(np.min(_vec(self.padding, self.dim)))
        if have < need - 1e-12:
            raise ConfigError(f"box padding {have:.6g} is below the required 4 (sigma sqrt(T) + jump spread) = {need:.6g}")


@dataclass
class NodeUpdate:
    value: float
    triple: DerivativeTriple
    nu_hats: dict
    F: float
    control: tuple


def _jump_controls(p: ControlledProblem, t, x):
    """Keys with a jump term and the shift of their amplitude relative to the dominating one."""
    keys, shifts = [], []
    s0 = p.dominating.jump_scale(t, x)
    for key in p.keys:
        s = p.controls[key].coeffs(t, x, p.dim)[4]
        if s is not None:
            keys.append(key)
            shifts.append(np.asarray(s, dtype=float) - s0)
    return keys, np.array(shifts, dtype=float).reshape(len(keys), p.dim)


def _check_separable(p, m, kappa):
    if not p.dominating.separable and m.tail_mass(kappa) > 0:
        raise NotImplementedError("the scheme needs a separable jump coefficient eta = s(t, x) z")


def apply_T(values, grid: UniformGrid, p: ControlledProblem, m: LevyMeasure, kappa, t, x, h, samples, rng,
            theta=None, T_minus_t=0.0, use_numba=None, details=False):
    """One application of the scheme operator at node ``x``.

    ``values`` is the next-layer surface on ``grid``.  With ``theta`` the
    monotonized nonlinearity is used.  Returns the new value, or a
    :class:`NodeUpdate` when ``details`` is true.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cf = p.dominating
    batch = simulate_batch(cf, m, kappa, t, x, h, samples, rng)
    keys, shifts = _jump_controls(p, t, x)
    s0, s1, s2, snu = _kernels.node_sums(
        np.asarray(values, dtype=float).reshape(grid.shape), np.array(grid.lo), np.array(grid.dx),
        batch.landing, batch.w, batch.n_jumps, batch.mark_sum, shifts, use_numba,
    )
    M = float(samples)
    si = cf.sigma_inverse(t, x)
    ainv = si.T @ si
    d0 = s0 / M
    d1 = si.T @ s1 / (M * h)
    d2 = (si.T @ s2 @ si - h * s0 * ainv) / (M * h * h)
    triple = DerivativeTriple(d0, d1, d2)
    nu = {k: McqEstimate(float(v) / (M * h), math.nan, samples) for k, v in zip(keys, snu)}
    if theta is None:
        F, ctl = evaluate_F(p, m, kappa, t, x, triple, nu, return_control=True)
    else:
        F, ctl = evaluate_F_monotonized(p, m, kappa, t, x, triple, nu, theta, T_minus_t, return_control=True)
    value = float(d0 + h * F)
    return NodeUpdate(value, triple, nu, F, ctl) if details else value


def node_contributions(values, grid, p, m, kappa, batch, theta=0.0, T_minus_t=0.0):
    """Per-sample terms of the scheme operator, one column per control.

    For control ``c`` the operator value is ``terms[:, c].mean() + const[c]``
    and the scheme takes the grid min-max of these.  Used for standard errors of
    differences between surfaces evaluated on a shared batch.
    """
    t, x, h = batch.t, batch.x, batch.h
    cf = p.dominating
    si = cf.sigma_inverse(t, x)
    ainv = si.T @ si
    z = batch.w @ si
    psi = interpolate(values, grid, batch.landing)
    s_dom = cf.jump_scale(t, x)
    lam = m.tail_mass(kappa)
    m1 = m.truncated_first_moment(kappa)
    th = theta.value if isinstance(theta, ThetaKappa) else float(theta)
    cols, consts = [], []
    for key in p.keys:
        a, b, c, k, s = p.controls[key].coeffs(t, x, p.dim)
        cc = c + th
        bb = b
        jump = np.zeros(len(batch))
        if s is not None:
            cc = cc - lam
            bb = b - s * m1
            shifted = batch.landing + batch.mark_sum[:, None] * (s - s_dom)[None, :]
            jump = interpolate(values, grid, shifted) * batch.n_jumps
        quad = np.einsum("ij,ik,jk->i", z, z, a) - h * float(np.sum(a * ainv))
        weight = 1.0 + h * cc + 0.5 * quad / h + z @ bb
        cols.append(psi * weight + jump)
        consts.append(h * k * math.exp(th * T_minus_t))
    return np.stack(cols, axis=1), np.array(consts)


def theta_sample(cfg: SchemeConfig):
    pts = cfg.grid.points()
    return [(0.0, x) for x in pts] + [(cfg.T, x) for x in pts]


def solve_backward(p: ControlledProblem, m: LevyMeasure, cfg: SchemeConfig, g, validate=True) -> ValueSurface:
    """Fill the value surface from ``t = T`` down to ``t = 0``.

    With ``cfg.monotonized`` the monotonized recursion is solved and the result
    is returned rescaled by ``exp(-theta (T - t))``.
    """
    grid = cfg.grid
    h = cfg.h
    sample = theta_sample(cfg)
    level = cfg.kappa_rule.resolve(p, m, h, sample)
    if not level.feasible:
        raise LevyMCError(f"kappa rule infeasible at h={h:g}: {level.reason}")
    kappa = level.kappa
    _check_separable(p, m, kappa)
    if validate:
        cfg.validate(p, m, kappa)
    theta = level.theta if cfg.monotonized else None
    th = theta.value if theta is not None else 0.0
    pts = grid.points()
    times = cfg.times()
    vals = np.empty((cfg.n + 1, grid.size))
    arg = pts[:, 0] if grid.dim == 1 else pts
    vals[cfg.n] = np.asarray(g(arg), dtype=float).reshape(grid.size)
    bad = ~np.isfinite(vals[cfg.n])
    if bad.any():
        j = int(np.argmax(bad))
        raise NumericalAbort(cfg.n, j, vals[cfg.n, j])
    workers = cfg.worker_count()
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for i in range(cfg.n - 1, -1, -1):
            nxt = vals[i + 1]
            t = times[i]

            def node(j, i=i, t=t, nxt=nxt):
                return apply_T(nxt, grid, p, m, kappa, t, pts[j], h, cfg.samples, node_stream(cfg.seed, i, j),
                               theta=theta, T_minus_t=cfg.T - t, use_numba=cfg.use_numba)

            layer = list(pool.map(node, range(grid.size))) if pool else [node(j) for j in range(grid.size)]
            vals[i] = layer
            bad = ~np.isfinite(vals[i])
            if bad.any():
                j = int(np.argmax(bad))
                raise NumericalAbort(i, j, vals[i, j])
    finally:
        if pool:
            pool.shutdown()
    if cfg.monotonized:
        vals = vals * np.exp(-th * (cfg.T - times))[:, None]
    return ValueSurface(grid, times, vals, level, level.theta, cfg.monotonized)


def boundary_influence(p, m, cfg: SchemeConfig, g, factor=1.5, layer=0):
    """Max interior difference at ``layer`` after widening the padding by ``factor``."""
    base = solve_backward(p, m, cfg, g)
    wide_cfg = replace(cfg, padding=np.asarray(cfg.padding, dtype=float) * factor)
    wide = solve_backward(p, m, wide_cfg, g)
    pts = cfg.grid.points()[cfg.interior_mask()]
    a = interpolate(base.values[layer], base.grid, pts)
    b = interpolate(wide.values[layer], wide.grid, pts)
    return float(np.max(np.abs(a - b)))
