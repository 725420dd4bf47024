"""Command-line entry point: ``itoconc {bound,vsolve,simulate,verify,scenarios}``.

Exit codes: 0 success (for ``verify``: the report passed), 1 the report
failed, 2 usage or configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bounds as bd
from .config import FORMATS, SIGMA_SOURCES, ScenarioConfig, parse_x_grid
from .errors import ConfigError, ItoConcError
from .scenarios import SCENARIOS, StageError, get_scenario, run_verification
from .vsolver import OptimalV

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
OUT_DIR_ENV = "ITOCONC_OUT_DIR"

BOUND_FAMILIES = ("classical", "alpha0", "explicit-lt1", "explicit-eq1", "explicit-neg",
                  "gaussian-functional", "double-integral", "cir")

# scenario parameter flags: (flag, dest, type)
PARAM_FLAGS = (("--M", "M", float), ("--a", "a", float), ("--b", "b", float),
               ("--sigma", "sigma", float), ("--x0", "x0", float), ("--eps", "eps", float),
               ("--kernel", "kernel", str), ("--scale", "scale", float), ("--rate", "rate", float),
               ("--matrix", "matrix", str))


def _float_list(text):
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# -- bound ------------------------------------------------------------------------

def _bound_evaluator(args):
    fam = args.family
    need = {
        "classical": ("m",), "alpha0": ("sigma", "c"), "explicit-lt1": ("sigma", "c", "alpha"),
        "explicit-eq1": ("sigma", "c"), "explicit-neg": ("sigma", "c", "alpha"),
        "gaussian-functional": ("sigma", "c"), "double-integral": ("g_norm",),
        "cir": ("a", "b", "sigma", "x0"),
    }[fam]
    missing = [n for n in need if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"bound {fam} needs " + ", ".join("--" + n.replace("_", "-") for n in missing))
    if fam == "classical":
        return lambda x: bd.eval_gaussian_tail(x, args.m)
    if fam == "gaussian-functional":
        return lambda x: bd.eval_gaussian_functional(x, args.sigma, args.c)
    if fam == "double-integral":
        return lambda x: bd.eval_double_integral(x, args.g_norm)
    if fam == "cir":
        return lambda x: bd.eval_cir(x, args.a, args.b, args.sigma, args.x0, args.T)
    alpha = {"alpha0": 0.0, "explicit-eq1": 1.0}.get(fam, args.alpha)
    p = bd.BoundParams(args.sigma, args.c, alpha, args.T)
    fn = {"alpha0": bd.eval_alpha0, "explicit-lt1": bd.eval_explicit_lt1,
          "explicit-eq1": bd.eval_explicit_eq1, "explicit-neg": bd.eval_explicit_neg_alpha}[fam]
    return lambda x: fn(x, p)


def cmd_bound(args) -> int:
    ev = _bound_evaluator(args)
    rows = []
    for x in args.x:
        b = ev(x)
        rows.append({"x": x, "raw": b.raw, "clamped": b.clamped, "log_raw": b.log_raw})
    if args.json:
        print(json.dumps({"family": args.family, "values": rows}, indent=2))
    else:
        print(f"{'x':>14} {'raw':>24} {'clamped':>24}")
        for r in rows:
            print(f"{r['x']:>14.8g} {r['raw']:>24.17g} {r['clamped']:>24.17g}")
    return EXIT_PASS


# -- vsolve -----------------------------------------------------------------------

def cmd_vsolve(args) -> int:
    p = bd.BoundParams(args.sigma, args.c, args.alpha, args.T)
    solve = OptimalV(p, closed_form=not args.bisect)
    sols = [solve(x) for x in args.x]
    if args.json:
        print(json.dumps([{"x": s.x, "v": s.v, "log_v": s.log_v, "residual": s.residual} for s in sols],
                         indent=2))
    else:
        print(f"{'x':>14} {'v':>24} {'residual':>12}")
        for s in sols:
            print(f"{s.x:>14.8g} {s.v:>24.17g} {s.residual:>12.3e}")
    return EXIT_PASS


# -- shared scenario options ------------------------------------------------------

def _add_scenario_options(p: argparse.ArgumentParser):
    p.add_argument("scenario", nargs="?", help="scenario name (see `itoconc scenarios`)")
    p.add_argument("--config", type=Path, help="INI configuration file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int, dest="n_paths")
    p.add_argument("--steps", type=int, dest="n_steps")
    p.add_argument("--T", type=float)
    p.add_argument("--confidence", type=float)
    p.add_argument("--k-min", type=int)
    p.add_argument("--x-grid", help="comma-separated thresholds or 'auto'")
    p.add_argument("--n-points", type=int)
    p.add_argument("--sigma-source", choices=SIGMA_SOURCES)
    p.add_argument("--workers", type=int, default=1, help="process count; never changes results")
    p.add_argument("--out", help=f"output directory (env {OUT_DIR_ENV} overrides the config file)")
    p.add_argument("--format", choices=FORMATS, dest="fmt")
    g = p.add_argument_group("scenario parameters")
    for flag, dest, typ in PARAM_FLAGS:
        g.add_argument(flag, dest="param_" + dest, type=typ, default=None)


def build_config(args) -> ScenarioConfig:
    """Config file first, then environment, then flags."""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc
        cfg = ScenarioConfig.from_ini(text)
        if args.scenario is not None and args.scenario != cfg.scenario:
            raise ConfigError(f"scenario {args.scenario!r} conflicts with config file ({cfg.scenario!r})")
    elif args.scenario is None:
        raise ConfigError("give a scenario name or --config")
    else:
        get_scenario(args.scenario)
        cfg = ScenarioConfig(args.scenario)
    env_out = os.environ.get(OUT_DIR_ENV)
    if env_out:
        cfg.out_dir = env_out
    for name in ("seed", "n_paths", "n_steps", "T", "confidence", "k_min", "n_points", "sigma_source", "fmt"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.x_grid is not None:
        try:
            cfg.x_grid = parse_x_grid(args.x_grid)
        except ValueError as exc:
            raise ConfigError(f"--x-grid: {exc}") from exc
    params = dict(cfg.params)
    for _, dest, _ in PARAM_FLAGS:
        val = getattr(args, "param_" + dest)
        if val is not None:
            params[dest] = val
    return replace(cfg, params=params).validated()


# -- simulate ---------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = build_config(args)
    scenario = get_scenario(cfg.scenario)
    sim = scenario.simulate(cfg, cfg.params, args.workers)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.scenario}-samples.csv"
    with open(path, "w") as fh:
        fh.write("path,sup\n")
        for i, v in enumerate(sim.sample):
            fh.write(f"{i},{float(v)!r}\n")
    print(f"{cfg.scenario}: {sim.sample.size} samples -> {path}")
    q = np.quantile(sim.sample, [0.5, 0.9, 0.99])
    print(f"median {q[0]:.6g}  q90 {q[1]:.6g}  q99 {q[2]:.6g}  max {sim.sample.max():.6g}")
    return EXIT_PASS


# -- verify -----------------------------------------------------------------------

def _print_table(report):
    print(f"scenario {report.scenario}  family {report.bound_family}  seed {report.seed}  "
          f"confidence {report.confidence}")
    print(f"{'x':>12} {'k':>7} {'p_hat':>11} {'upper_cl':>11} {'bound':>11}  verdict")
    for r in report.rows:
        print(f"{r.x:>12.6g} {r.k:>7d} {r.p_hat:>11.4e} {r.upper_cl:>11.4e} {r.bound_clamped:>11.4e}  {r.verdict}")
    for k, v in report.diagnostics.items():
        print(f"  {k}: {v:.6g}" if isinstance(v, float) else f"  {k}: {v}")
    counts = ", ".join(f"{k} {v}" for k, v in report.counts().items())
    print(f"{'PASS' if report.passed else 'FAIL'} ({counts})")


def cmd_verify(args) -> int:
    cfg = build_config(args)
    if args.write_config is not None:
        args.write_config.write_text(cfg.to_ini())
    report = run_verification(cfg, workers=args.workers)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.scenario}.json").write_text(report.to_json())
    (out / f"{cfg.scenario}.csv").write_text(report.to_csv())
    if cfg.fmt == "structured":
        sys.stdout.write(report.to_json())
    else:
        _print_table(report)
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_scenarios(args) -> int:
    for name, sc in SCENARIOS.items():
        params = ", ".join(f"{k}={sc.format_param(k, v)}" for k, v in sc.defaults.items()) or "-"
        print(f"{name:<20} {sc.description}  [{params}]")
    return EXIT_PASS


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itoconc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="evaluate a tail bound")
    p.add_argument("family", choices=BOUND_FAMILIES)
    p.add_argument("--x", type=_float_list, default=[0.0, 1.0, 2.0, 5.0, 10.0], help="thresholds")
    p.add_argument("--m", type=float, help="deterministic bound M (classical)")
    p.add_argument("--sigma", type=float, help="sigma_bar, or the CIR volatility")
    p.add_argument("--c", type=float, help="Malliavin constant")
    p.add_argument("--alpha", type=float, help="growth exponent (explicit-lt1, explicit-neg)")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--g-norm", type=float, help="L2 norm of the double-integral kernel")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("vsolve", help="solve for the balancing v(x)")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--x", type=_float_list, default=[0.0, 1.0, 10.0, 100.0])
    p.add_argument("--bisect", action="store_true", help="use bisection even when alpha = 0")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_vsolve)

    p = sub.add_parser("simulate", help="write running-supremum samples of a scenario")
    _add_scenario_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="certify a scenario's bound against simulation")
    _add_scenario_options(p)
    p.add_argument("--write-config", type=Path, help="also write the resolved configuration here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("scenarios", help="list registered scenarios")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        usage = exc.stage == "config" or isinstance(exc.cause, ConfigError)
        return EXIT_USAGE if usage else EXIT_RUNTIME
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ItoConcError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
