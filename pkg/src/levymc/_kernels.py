"""Hot inner loops of the backward scheme.

Each kernel has a pure-numpy implementation and, when numba is importable, an
``@njit`` twin.  Set ``LEVYMC_DISABLE_NUMBA=1`` to force the numpy path.  Both
paths evaluate the same arithmetic per sample; they differ only in the order
of the final reductions.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("LEVYMC_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by LEVYMC_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised through the env flag
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not args or not callable(args[0]) else args[0]


# -- numpy reference path ---------------------------------------------------
SNAP = 1e-10  # grid coordinates this close to a node hit it exactly


def _np_interp_axis(u, n):
    r = np.rint(u)
    u = np.where(np.abs(u - r) <= SNAP, r, u)
    i = np.clip(np.floor(u), 0, n - 2).astype(np.int64)
    f = np.clip(u - i, 0.0, 1.0)
    return i, f


def np_interp(values, lo, dx, pts):
    """Multilinear interpolation on a uniform grid, constant beyond the box.

    ``values`` has one axis per dimension; ``pts`` is ``(M, d)``.
    """
    d = values.ndim
    if d == 1:
        n = values.shape[0]
        if n == 1:
            return np.full(pts.shape[0], values[0])
        i, f = _np_interp_axis((pts[:, 0] - lo[0]) / dx[0], n)
        return values[i] * (1.0 - f) + values[i + 1] * f
    if d == 2:
        n0, n1 = values.shape
        i, f = _np_interp_axis((pts[:, 0] - lo[0]) / dx[0], n0)
        j, g = _np_interp_axis((pts[:, 1] - lo[1]) / dx[1], n1)
        return (
            (values[i, j] * (1.0 - g) + values[i, j + 1] * g) * (1.0 - f)
            + (values[i + 1, j] * (1.0 - g) + values[i + 1, j + 1] * g) * f
        )
    raise NotImplementedError("interpolation is implemented for d <= 2")


def np_node_sums(values, lo, dx, landing, w, n_jumps, mark_sum, dscale):
    """Raw sums feeding the derivative and quadrature estimators at one node.

    Returns ``(S0, S1, S2, SNU)`` with ``S0 = sum psi``, ``S1 = sum psi w``,
    ``S2 = sum psi w w^T`` and ``SNU[c] = sum psi(landing + dscale[c] * mark_sum) N``,
    where ``psi`` is the interpolated surface.
    """
    psi = np_interp(values, lo, dx, landing)
    s0 = psi.sum()
    pw = psi[:, None] * w
    s1 = pw.sum(axis=0)
    s2 = pw.T @ w
    ncon = dscale.shape[0]
    snu = np.zeros(ncon)
    has = n_jumps > 0
    if ncon and has.any():
        lj = landing[has]
        nj = n_jumps[has].astype(float)
        ms = mark_sum[has]
        for c in range(ncon):
            shifted = lj + ms[:, None] * dscale[c][None, :]
            snu[c] = (np_interp(values, lo, dx, shifted) * nj).sum()
    return s0, s1, s2, snu


# -- numba path ---------------------------------------------------------------
@njit(cache=True, nogil=True)
def _nb_interp1(values, lo, dx, y):
    n = values.shape[0]
    if n == 1:
        return values[0]
    u = (y - lo) / dx
    r = np.rint(u)
    if abs(u - r) <= SNAP:
        u = r
    i = np.floor(u)
    if i < 0.0:
        i = 0.0
    elif i > n - 2:
        i = n - 2.0
    f = u - i
    if f < 0.0:
        f = 0.0
    elif f > 1.0:
        f = 1.0
    k = int(i)
    return values[k] * (1.0 - f) + values[k + 1] * f


@njit(cache=True, nogil=True)
def _nb_interp2(values, lo0, dx0, lo1, dx1, y0, y1):
    n0 = values.shape[0]
    n1 = values.shape[1]
    u = (y0 - lo0) / dx0
    r = np.rint(u)
    if abs(u - r) <= SNAP:
        u = r
    i = np.floor(u)
    if i < 0.0:
        i = 0.0
    elif i > n0 - 2:
        i = n0 - 2.0
    f = u - i
    if f < 0.0:
        f = 0.0
    elif f > 1.0:
        f = 1.0
    v = (y1 - lo1) / dx1
    r = np.rint(v)
    if abs(v - r) <= SNAP:
        v = r
    j = np.floor(v)
    if j < 0.0:
        j = 0.0
    elif j > n1 - 2:
        j = n1 - 2.0
    g = v - j
    if g < 0.0:
        g = 0.0
    elif g > 1.0:
        g = 1.0
    a = int(i)
    b = int(j)
    return (values[a, b] * (1.0 - g) + values[a, b + 1] * g) * (1.0 - f) + (
        values[a + 1, b] * (1.0 - g) + values[a + 1, b + 1] * g
    ) * f


@njit(cache=True, nogil=True)
def _nb_interp_1d_many(values, lo, dx, pts):
    m = pts.shape[0]
    out = np.empty(m)
    for r in range(m):
        out[r] = _nb_interp1(values, lo, dx, pts[r, 0])
    return out


@njit(cache=True, nogil=True)
def _nb_interp_2d_many(values, lo0, dx0, lo1, dx1, pts):
    m = pts.shape[0]
    out = np.empty(m)
    for r in range(m):
        out[r] = _nb_interp2(values, lo0, dx0, lo1, dx1, pts[r, 0], pts[r, 1])
    return out


@njit(cache=True, nogil=True)
def _nb_node_sums_1d(values, lo, dx, landing, w, n_jumps, mark_sum, dscale):
    m = landing.shape[0]
    ncon = dscale.shape[0]
    s0 = 0.0
    s1 = np.zeros(1)
    s2 = np.zeros((1, 1))
    snu = np.zeros(ncon)
    for r in range(m):
        y = landing[r, 0]
        psi = _nb_interp1(values, lo, dx, y)
        s0 += psi
        pw = psi * w[r, 0]
        s1[0] += pw
        s2[0, 0] += pw * w[r, 0]
        nj = n_jumps[r]
        if nj > 0:
            for c in range(ncon):
                snu[c] += _nb_interp1(values, lo, dx, y + mark_sum[r] * dscale[c, 0]) * nj
    return s0, s1, s2, snu


@njit(cache=True, nogil=True)
def _nb_node_sums_2d(values, lo0, dx0, lo1, dx1, landing, w, n_jumps, mark_sum, dscale):
    m = landing.shape[0]
    ncon = dscale.shape[0]
    s0 = 0.0
    s1 = np.zeros(2)
    s2 = np.zeros((2, 2))
    snu = np.zeros(ncon)
    for r in range(m):
        y0 = landing[r, 0]
        y1 = landing[r, 1]
        psi = _nb_interp2(values, lo0, dx0, lo1, dx1, y0, y1)
        s0 += psi
        for a in range(2):
            pw = psi * w[r, a]
            s1[a] += pw
            for b in range(2):
                s2[a, b] += pw * w[r, b]
        nj = n_jumps[r]
        if nj > 0:
            ms = mark_sum[r]
            for c in range(ncon):
                snu[c] += _nb_interp2(values, lo0, dx0, lo1, dx1, y0 + ms * dscale[c, 0], y1 + ms * dscale[c, 1]) * nj
    return s0, s1, s2, snu


# -- dispatch -----------------------------------------------------------------
def interp(values, lo, dx, pts, use_numba=None):
    use = HAS_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)
    values = np.ascontiguousarray(values, dtype=float)
    pts = np.ascontiguousarray(pts, dtype=float)
    if not use:
        return np_interp(values, lo, dx, pts)
    if values.ndim == 1:
        return _nb_interp_1d_many(values, float(lo[0]), float(dx[0]), pts)
    if values.ndim == 2:
        return _nb_interp_2d_many(values, float(lo[0]), float(dx[0]), float(lo[1]), float(dx[1]), pts)
    raise NotImplementedError("interpolation is implemented for d <= 2")


def node_sums(values, lo, dx, landing, w, n_jumps, mark_sum, dscale, use_numba=None):
    use = HAS_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)
    dscale = np.ascontiguousarray(np.asarray(dscale, dtype=float).reshape(-1, values.ndim))
    if not use:
        return np_node_sums(values, lo, dx, landing, w, n_jumps, mark_sum, dscale)
    values = np.ascontiguousarray(values, dtype=float)
    args = (
        np.ascontiguousarray(landing, dtype=float),
        np.ascontiguousarray(w, dtype=float),
        np.ascontiguousarray(n_jumps, dtype=np.int64),
        np.ascontiguousarray(mark_sum, dtype=float),
        dscale,
    )
    if values.ndim == 1:
        return _nb_node_sums_1d(values, float(lo[0]), float(dx[0]), *args)
    if values.ndim == 2:
        return _nb_node_sums_2d(values, float(lo[0]), float(dx[0]), float(lo[1]), float(dx[1]), *args)
    raise NotImplementedError("node sums are implemented for d <= 2")
