"""Convergence studies over a ladder of time steps."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import List

import numpy as np

from ..scheme import SchemeConfig, interpolate, solve_backward
from .problems import BenchmarkProblem


@dataclass
class RateReport:
    h: List[float]
    errors: List[float]
    kappa: List[float]
    theta: List[float]
    samples: List[int] = field(default_factory=list)
    slope: float = math.nan

    def to_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["h", "kappa", "theta_kappa", "error"])
        for row in zip(self.h, self.kappa, self.theta, self.errors):
            wr.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @property
    def strictly_decreasing(self):
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))


def fit_slope(h, err):
    """Least-squares slope of ``log err`` against ``log h``."""
    lh, le = np.log(np.asarray(h, float)), np.log(np.asarray(err, float))
    return float(np.polyfit(lh, le, 1)[0])


def interior_error(prob: BenchmarkProblem, surface, cfg: SchemeConfig):
    """Max error at ``t = 0`` over grid nodes inside ``[cfg.lo, cfg.hi]``."""
    mask = cfg.interior_mask()
    pts = surface.grid.points()[mask]
    ref = prob.oracle_value(0.0, pts[:, 0], surface.level.kappa)
    return float(np.max(np.abs(surface.values[0][mask] - ref))), float(np.max(np.abs(ref)))


def run_convergence_study(prob: BenchmarkProblem, ladder, template: SchemeConfig, samples_coef=None, dx_coef=None):
    """Solve once per ``h`` and compare with the oracle.

    ``samples_coef``: if given, ``M = ceil(samples_coef * h^-2)``.  ``dx_coef``:
    if given, spatial step ``dx_coef * h``.  Rungs run sequentially.
    """
    ladder = [float(h) for h in ladder]
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("h ladder must be strictly decreasing")
    rep = RateReport([], [], [], [])
    for h in ladder:
        n = int(round(prob.T / h))
        if abs(n * h - prob.T) > 1e-9 * prob.T:
            raise ValueError(f"h={h} does not divide T={prob.T}")
        kw = dict(n=n)
        if samples_coef is not None:
            kw["samples"] = int(math.ceil(samples_coef * h**-2))
        if dx_coef is not None:
            kw["dx"] = dx_coef * h
        cfg = replace(template, **kw)
        surf = solve_backward(prob.problem, prob.measure, cfg, prob.g)
        lvl = surf.level
        if lvl.rule == "convergence" and not lvl.theta.value <= cfg.h**-0.5:
            raise AssertionError(f"kappa rule post-condition failed at h={h}")
        err, _ = interior_error(prob, surf, cfg)
        rep.h.append(cfg.h)
        rep.errors.append(err)
        rep.kappa.append(lvl.kappa)
        rep.theta.append(lvl.theta.value)
        rep.samples.append(cfg.samples)
    rep.slope = fit_slope(rep.h, rep.errors) if len(ladder) > 1 else math.nan
    return rep
