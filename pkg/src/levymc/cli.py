"""Command-line driver.

Subcommands::

    levymc mcq       one-step Levy-integral estimates against quadrature
    levymc solve     value surface at t = 0 for a benchmark problem
    levymc rate      error table over a ladder of time steps
    levymc validate-measure   tail mass and moments of a measure

Problems come from ``--problem KEY`` or a JSON ``--config``; flags override the
config.  Exit codes: 0 success, 2 bad configuration, 3 numerical abort, 1 other
library errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .bench.config import build_benchmark, default_padding, load_config, parse_config
from .bench.problems import KEYS
from .bench.study import run_convergence_study
from .errors import ConfigError, LevyMCError, NumericalAbort
from .jumpdiff import node_stream, simulate_batch
from .levy import LevyMeasure
from .mcq import levy_operator_mcq, levy_operator_quadrature
from .scheme import solve_backward

MCQ_HEADER = ["kappa", "h", "n_samples", "mcq_value", "std_error", "quadrature_value", "abs_error"]
MEASURE_HEADER = ["kappa", "tail_mass", "truncated_first_moment", "small_jump_second_moment"]
ARGS_SOURCE = "<args>"


def _floats(text, flag):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated numbers, got {text!r}", 1, ARGS_SOURCE) from None
    if not vals:
        raise ConfigError(f"{flag} is empty", 1, ARGS_SOURCE)
    return vals


def _fmt(v):
    return repr(float(v))


def _bump(y):
    return np.exp(-0.5 * np.asarray(y, dtype=float) ** 2)


def _dbump(y):
    y = np.asarray(y, dtype=float)
    return -y * _bump(y)


def _d2bump(y):
    y = np.asarray(y, dtype=float)
    return (y * y - 1.0) * _bump(y)


def _run_config(args):
    """Config from ``--config`` or a minimal document built from ``--problem``."""
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", None, args.config) from None
        if args.problem:
            cfg.problem = dict(cfg.problem, key=args.problem)
        return cfg
    if not args.problem:
        raise ConfigError(f"give --problem ({', '.join(KEYS)}) or --config", 1, ARGS_SOURCE)
    return parse_config(json.dumps({"problem": {"key": args.problem}}), ARGS_SOURCE)


def _scheme(cfg, prob, args, **extra):
    sc = cfg.scheme or {}
    kappa = getattr(args, "kappa", None)
    if kappa is not None:
        cfg.kappa_rule = {"kind": "fixed", "kappa": float(kappa)}
    over = dict(
        n=args.n if args.n is not None else (None if "n" in sc else 20),
        samples=args.samples if args.samples is not None else (None if "samples" in sc else 10_000),
        seed=args.seed,
        threads=args.threads,
        dx=getattr(args, "dx", None),
        monotonized=True if getattr(args, "monotonized", False) else None,
    )
    over.update(extra)
    rule = cfg.kappa_rule_obj()
    pad = default_padding(prob, rule.kappa if rule.kind == "fixed" else 0.0)
    return cfg.scheme_obj(prob.T, prob.lo, prob.hi, pad, **over)


def _write(text, output):
    if output in (None, "-"):
        sys.stdout.write(text)
        return
    with open(output, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_solve(args):
    cfg = _run_config(args)
    prob = build_benchmark(cfg)
    sc = _scheme(cfg, prob, args)
    surf = solve_backward(prob.problem, prob.measure, sc, prob.g)
    _write(surf.to_csv(layers=[0], mask=sc.interior_mask()), args.output)
    return 0


def cmd_rate(args):
    cfg = _run_config(args)
    prob = build_benchmark(cfg)
    if prob.oracle is None:
        raise ConfigError(f"problem {prob.key!r} has no value oracle", 1, ARGS_SOURCE)
    ladder = _floats(args.ladder, "--ladder")
    tmpl = _scheme(cfg, prob, args, n=1)
    try:
        rep = run_convergence_study(prob, ladder, tmpl, samples_coef=args.samples_coef, dx_coef=args.dx_coef)
    except ValueError as exc:
        raise ConfigError(str(exc), 1, ARGS_SOURCE) from None
    _write(rep.to_csv(), args.output)
    return 0


def cmd_mcq(args):
    cfg = _run_config(args)
    prob = build_benchmark(cfg)
    cf, m = prob.problem.dominating, prob.measure
    if prob.problem.dim != 1:
        raise ConfigError("mcq runs on one-dimensional problems", 1, ARGS_SOURCE)
    kappas = _floats(args.kappa, "--kappa")
    h = float(args.h)
    if not h > 0:
        raise ConfigError("--h must be positive", 1, ARGS_SOURCE)
    samples = int(args.samples if args.samples is not None else 100_000)
    seed = int(args.seed if args.seed is not None else 0)
    x = np.array([float(args.x)])
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(MCQ_HEADER)
    for i, kappa in enumerate(kappas):
        try:
            m.tail_mass(kappa)
        except ValueError as exc:
            raise ConfigError(f"kappa={kappa:g}: {exc}", 1, ARGS_SOURCE) from None
        batch = simulate_batch(cf, m, kappa, 0.0, x, h, samples, node_stream(seed, 0, i))
        est = levy_operator_mcq(_bump, _dbump, cf, m, kappa, 0.0, x, h, batch)
        ref = levy_operator_quadrature(_bump, cf, m, kappa, x, dphi=_dbump, d2phi=_d2bump)
        wr.writerow([_fmt(kappa), _fmt(h), samples, _fmt(est.value), _fmt(est.std_error), _fmt(ref),
                     _fmt(abs(est.value - ref))])
    _write(buf.getvalue(), args.output)
    return 0


def cmd_validate_measure(args):
    if args.config:
        cfg = load_config(args.config)
        spec = cfg.measure
        if not spec:
            raise cfg.error("config has no measure section")
        try:
            m = LevyMeasure.from_dict(spec)
        except (KeyError, ValueError, TypeError) as exc:
            raise cfg.error(f"invalid measure: {exc}", "measure") from None
    elif args.measure:
        try:
            spec = json.loads(args.measure)
            m = LevyMeasure.from_dict(spec)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--measure is not JSON: {exc.msg}", 1, ARGS_SOURCE) from None
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid measure: {exc}", 1, ARGS_SOURCE) from None
    else:
        raise ConfigError("give --measure JSON or --config", 1, ARGS_SOURCE)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(MEASURE_HEADER)
    for kappa in _floats(args.kappa, "--kappa"):
        try:
            row = [m.tail_mass(kappa), m.truncated_first_moment(kappa), m.small_jump_second_moment(kappa)]
        except ValueError:
            row = [math.inf, m.truncated_first_moment(kappa), m.small_jump_second_moment(kappa)]
        wr.writerow([_fmt(kappa)] + [_fmt(v) for v in row])
    _write(buf.getvalue(), args.output)
    return 0


def _parser():
    ap = argparse.ArgumentParser(prog="levymc", description="Monte Carlo schemes for HJB equations with jumps")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scheme=True):
        p.add_argument("--problem", choices=KEYS)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--samples", type=int, help="samples per node")
        p.add_argument("--seed", type=int)
        p.add_argument("--output", "-o", help="CSV path (stdout when omitted)")
        if scheme:
            p.add_argument("--n", type=int, help="number of time steps")
            p.add_argument("--dx", type=float, help="spatial step")
            p.add_argument("--threads", type=int, help="worker threads (default: $LEVYMC_THREADS or 1)")
            p.add_argument("--monotonized", action="store_true", help="solve the monotonized recursion")

    p = sub.add_parser("solve", help="solve a benchmark problem and write the t = 0 layer")
    common(p)
    p.add_argument("--kappa", type=float, help="fixed truncation level (overrides kappa_rule)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("rate", help="convergence table over an h ladder")
    common(p)
    p.add_argument("--ladder", required=True, help="comma-separated decreasing time steps")
    p.add_argument("--kappa", type=float, help="fixed truncation level (overrides kappa_rule)")
    p.add_argument("--samples-coef", type=float, help="use M = ceil(coef / h^2) samples per node")
    p.add_argument("--dx-coef", type=float, help="use spatial step coef * h")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("mcq", help="MCQ estimates of the truncated Levy operator vs quadrature")
    common(p, scheme=False)
    p.add_argument("--kappa", default="0", help="comma-separated truncation levels")
    p.add_argument("--h", type=float, default=0.01, help="time step")
    p.add_argument("--x", type=float, default=0.0, help="evaluation point")
    p.set_defaults(func=cmd_mcq)

    p = sub.add_parser("validate-measure", help="check a measure and tabulate its truncated moments")
    p.add_argument("--measure", help='JSON, e.g. {"kind": "power_tail", "amplitude": 1, "alpha": 1}')
    p.add_argument("--config", help="JSON run configuration with a measure section")
    p.add_argument("--kappa", default="0,0.01,0.1,1", help="comma-separated truncation levels")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_validate_measure)
    return ap


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except LevyMCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
