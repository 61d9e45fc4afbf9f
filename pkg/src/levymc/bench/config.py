"""JSON run configuration.

Sections: ``problem``, ``measure``, ``controls``, ``scheme``, ``kappa_rule``.
Coefficients are numbers or named built-ins ``{"fn": "cos", "scale": s,
"freq": w, "shift": c}`` meaning ``s * fn(w x + c)``.  Errors carry the line of
the offending key.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..hjb import Control
from ..levy import LevyMeasure
from ..scheme import KappaRule, SchemeConfig

SECTIONS = ("problem", "measure", "controls", "scheme", "kappa_rule")
BUILTINS = {"const": lambda y: np.ones_like(y), "cos": np.cos, "sin": np.sin, "tanh": np.tanh, "identity": lambda y: y}
SCHEME_KEYS = {"n", "samples", "lo", "hi", "dx", "padding", "seed", "monotonized", "threads", "use_numba"}


def coefficient(spec, where="coefficient"):
    """Turn a number, list or built-in description into a constant or ``f(t, x)``."""
    if spec is None or isinstance(spec, (int, float)):
        return spec
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if isinstance(spec, dict):
        name = spec.get("fn")
        if name not in BUILTINS:
            raise ConfigError(f"{where}: unknown built-in {name!r}; choose one of {', '.join(BUILTINS)}")
        fn = BUILTINS[name]
        scale, freq, shift = (float(spec.get(k, d)) for k, d in (("scale", 1.0), ("freq", 1.0), ("shift", 0.0)))
        return lambda t, x: scale * float(fn(freq * np.atleast_1d(x)[0] + shift))
    raise ConfigError(f"{where}: cannot interpret {spec!r}")


def build_control(spec, where="control"):
    unknown = set(spec) - {"a", "b", "c", "k", "s", "name"}
    if unknown:
        raise ConfigError(f"{where}: unknown fields {sorted(unknown)}")
    kw = {f: coefficient(spec.get(f, 0.0 if f != "s" else None), f"{where}.{f}") for f in "abcks"}
    return Control(**kw)


@dataclass
class RunConfig:
    problem: dict
    measure: dict
    controls: object
    scheme: dict
    kappa_rule: dict
    text: str = ""
    source: str = "<config>"

    def line_of(self, *path):
        """Best-effort line of the last key in ``path`` in the raw text."""
        pos = 0
        for key in path:
            hit = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(self.text, pos)
            if hit is None:
                break
            pos = hit.start()
        return self.text.count("\n", 0, pos) + 1

    def error(self, message, *path):
        return ConfigError(message, self.line_of(*path) if self.text else None, self.source)

    def measure_obj(self):
        if not self.measure:
            return None
        try:
            return LevyMeasure.from_dict(self.measure)
        except (KeyError, ValueError, TypeError) as exc:
            raise self.error(f"invalid measure: {exc}", "measure") from None

    def kappa_rule_obj(self):
        kr = dict(self.kappa_rule or {})
        unknown = set(kr) - {"kind", "kappa", "c_theta", "c_m"}
        if unknown:
            raise self.error(f"unknown kappa_rule fields {sorted(unknown)}", "kappa_rule", sorted(unknown)[0])
        try:
            return KappaRule(
                kind=kr.get("kind", "fixed"),
                kappa=float(kr.get("kappa", 0.0)),
                c_theta=float(kr.get("c_theta", 1.0)),
                c_m=float(kr.get("c_m", 1.0)),
            )
        except (TypeError, ValueError) as exc:
            raise self.error(str(exc), "kappa_rule", "kind") from None

    def scheme_obj(self, T, lo, hi, default_padding, **override):
        sc = dict(self.scheme or {})
        sc.update({k: v for k, v in override.items() if v is not None})
        unknown = set(sc) - SCHEME_KEYS
        if unknown:
            raise self.error(f"unknown scheme fields {sorted(unknown)}", "scheme", sorted(unknown)[0])
        for req in ("n", "samples"):
            if req not in sc:
                raise self.error(f"scheme.{req} is required", "scheme")
        try:
            return SchemeConfig(
                T=T,
                n=sc["n"],
                lo=sc.get("lo", [lo]),
                hi=sc.get("hi", [hi]),
                dx=float(sc.get("dx", 0.05)),
                padding=sc.get("padding", default_padding),
                samples=sc["samples"],
                kappa_rule=self.kappa_rule_obj(),
                monotonized=bool(sc.get("monotonized", False)),
                seed=int(sc.get("seed", 0)),
                threads=sc.get("threads"),
                use_numba=sc.get("use_numba"),
            )
        except ConfigError as exc:
            raise self.error(exc.detail, "scheme") from None


def parse_config(text, source="<config>") -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    cfg = RunConfig({}, {}, None, {}, {}, text, source)
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", 1, source)
    for key in doc:
        if key not in SECTIONS:
            raise cfg.error(f"unknown section {key!r}; expected {', '.join(SECTIONS)}", key)
    cfg.problem = doc.get("problem", {})
    cfg.measure = doc.get("measure", {})
    cfg.controls = doc.get("controls")
    cfg.scheme = doc.get("scheme", {})
    cfg.kappa_rule = doc.get("kappa_rule", {})
    if "key" not in cfg.problem:
        raise cfg.error("problem.key is required", "problem")
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def build_benchmark(cfg: RunConfig):
    """Instantiate the benchmark problem described by ``cfg``."""
    from .problems import KEYS, get_problem

    pr = dict(cfg.problem)
    key = pr.pop("key")
    if key not in KEYS:
        raise cfg.error(f"unknown problem {key!r}; choose one of {', '.join(KEYS)}", "problem", "key")
    m = cfg.measure_obj()
    if m is not None and key != "portfolio-nu0":
        pr["measure"] = m
    if cfg.controls is not None:
        if key != "concave-hjb-toy":
            raise cfg.error("controls are only configurable for concave-hjb-toy", "controls")
        ctl = cfg.controls
        if isinstance(ctl, list):
            ctl = {c.get("name", f"c{i}"): c for i, c in enumerate(ctl)}
        for name, c in ctl.items():
            try:
                build_control(c, f"controls.{name}")
            except ConfigError as exc:
                raise cfg.error(exc.detail, "controls", name) from None
        pr["controls"] = {n: {k: v for k, v in c.items() if k != "name"} for n, c in ctl.items()}
    try:
        return get_problem(key, **pr)
    except TypeError as exc:
        raise cfg.error(f"invalid problem parameters: {exc}", "problem") from None


def default_padding(prob, kappa=0.0):
    """Larger of five standard deviations of ``X_T`` and the validation minimum."""
    cf = prob.problem.dominating
    sig = float(cf.diffusion(0.0, np.zeros(1))[0, 0])
    s = abs(float(cf.jump_scale(0.0, np.zeros(1))[0]))
    m = prob.measure
    spread = m.jump_spread(kappa, prob.T, s) if m.tail_mass(kappa) > 0 else 0.0
    need = 4.0 * (sig * math.sqrt(prob.T) + spread)
    return max(5.0 * prob.spread(kappa), need) * (1 + 1e-9)
