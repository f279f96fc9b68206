"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 failed ``--assert`` or
failed kernel validation.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import operator
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    apply_overrides,
    load_ini,
    merge_sections,
    preset_sections,
    resolve,
    resolved_sections,
    sections_to_ini,
)
from .estimate import aggregation_grid
from .harness import _PathContext, _estimate, grid_search, run_experiment, tau_grid
from .kernels import get_kernel, load_kernel_csv, validate_kernel
from .reporting import dumps, summary_csv, write_report
from .sim import path_rng, read_path_csv, simulate_path, write_path_csv
from .theory import (
    JumpActivityParams,
    mc_truncated_moment_oracle,
    truncated_moment_difference,
    truncated_moment_expansion,
)

log = logging.getLogger("spotvol")

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT = 0, 2, 3

_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt,
        "==": operator.eq}
_ASSERT_RE = re.compile(r"^\s*([\w\-]+)\.(rmse|are|re)\s*(<=|>=|==|<|>)\s*(\S+)\s*$")


def parse_assertion(text: str):
    """``"c2_exp.rmse<=0.14"`` -> ``("c2_exp", "rmse", "<=", 0.14)``."""
    m = _ASSERT_RE.match(text)
    if not m:
        raise ConfigError(f"bad --assert {text!r}; expected <estimator>.<rmse|are|re><op><value>")
    try:
        value = float(m.group(4))
    except ValueError:
        raise ConfigError(f"bad --assert value in {text!r}") from None
    return m.group(1), m.group(2), m.group(3), value


def check_assertions(report, assertions) -> list[str]:
    """Failure messages for every assertion that does not hold."""
    failed = []
    for text in assertions:
        name, metric, op, value = parse_assertion(text)
        try:
            res = report.result(name)
        except KeyError:
            raise ConfigError(f"--assert names unknown estimator {name!r}") from None
        got = getattr(res.metrics, metric)
        if not (math.isfinite(got) and _OPS[op](got, value)):
            failed.append(f"{name}.{metric} = {got:.6g} violates {op} {value:g}")
    return failed


# ----------------------------------------------------------------------------

def _load_sections(args) -> dict:
    sections: dict = {}
    if getattr(args, "preset", None):
        y = args.y if args.y is not None else 1.6
        kw = {}
        if args.preset == "realistic" and getattr(args, "v0_exponent", None) is not None:
            kw["v0_k"] = args.v0_exponent
        sections = preset_sections(args.preset, y, **kw)
    if getattr(args, "config", None):
        path = Path(args.config)
        if path.suffix == ".json":
            try:
                data = json.loads(path.read_text())
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read {path}: {exc}") from exc
            if "config" not in data:
                raise ConfigError(f"{path} has no embedded config")
            extra = data["config"]
        else:
            extra = load_ini(path)
        sections = merge_sections(sections, extra)
    if not sections:
        raise ConfigError("give --preset and/or --config")
    sections = apply_overrides(sections, getattr(args, "set", None) or [])
    exp = sections.setdefault("experiment", {})
    if getattr(args, "y", None) is not None:
        sections.setdefault("model", {})["jump_y"] = repr(float(args.y))
    if getattr(args, "M", None) is not None:
        exp["n_paths"] = str(args.M)
    if getattr(args, "seed", None) is not None:
        exp["seed"] = str(args.seed)
    if getattr(args, "pilot_M", None) is not None:
        exp["pilot_paths"] = str(args.pilot_M)
    only = getattr(args, "estimators", None)
    if only:
        keep = set(only.split(","))
        missing = keep - {s.split(".", 1)[1] for s in sections if s.startswith("estimator.")}
        if missing:
            raise ConfigError(f"unknown estimators in --estimators: {sorted(missing)}")
        sections = {k: v for k, v in sections.items()
                    if not k.startswith("estimator.") or k.split(".", 1)[1] in keep}
    return resolved_sections(sections)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    sections = _load_sections(args)
    config, _ = resolve(sections)
    out = _out_dir(args)
    for j in range(args.paths):
        path = simulate_path(config.model, path_rng(config.seed, j), seed=(config.seed, j))
        dest = out / f"path_{j:05d}.csv"
        write_path_csv(path, dest)
        print(dest)
    (out / "config.ini").write_text(sections_to_ini(sections))
    return EXIT_OK


def cmd_estimate(args) -> int:
    sections = _load_sections(args)
    config, _ = resolve(sections)
    path = read_path_csv(args.path)
    if args.tau:
        taus = np.array([float(t) for t in args.tau.split(",")])
    else:
        taus = path.times[tau_grid(path.n, config.tau_first, config.tau_last)]
    ctx = _PathContext(path, taus)
    rows = []
    for spec in config.estimators:
        vals, flags = _estimate(ctx, spec)
        flag_txt = ";".join(k for k, c in sorted(flags.items()) if c) or "-"
        for t, v in zip(taus, vals):
            rows.append(f"{spec.name},{float(t)!r},{spec.stage},{float(v)!r},{flag_txt}")
    text = "estimator,tau,stage,value,flags\n" + "\n".join(rows) + "\n"
    if args.out:
        out = _out_dir(args)
        (out / "estimates.csv").write_text(text)
        m = config.estimators[0].config.m(path.dt)
        diag = {"bipower_variation": ctx.bv, "n": path.n, "dt": path.dt,
                "aggregation_points": int(len(aggregation_grid(path.n, m)))}
        (out / "diagnostics.json").write_text(dumps(diag))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args) -> int:
    sections = _load_sections(args)
    config, _ = resolve(sections)
    for a in args.asserts or []:
        parse_assertion(a)
    report = run_experiment(config, workers=args.workers)
    out = _out_dir(args)
    paths = write_report(report, out, sections)
    sys.stdout.write(summary_csv(report.summary_rows()))
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    failed = check_assertions(report, args.asserts or [])
    for msg in failed:
        print(f"ASSERTION FAILED: {msg}", file=sys.stderr)
    return EXIT_ASSERT if failed else EXIT_OK


def cmd_gridsearch(args) -> int:
    sections = _load_sections(args)
    config, grids = resolve(sections)
    names = args.estimators.split(",") if args.estimators else None
    result = grid_search(config, names=names, zeta_grid=grids["zeta_grid"],
                         p_grid=grids["p_grid"], lambda_grid=grids["lambda_grid"],
                         pilot_paths=grids["pilot_paths"], independent=args.independent_pilot,
                         workers=args.workers)
    out = _out_dir(args)
    (out / "gridsearch.json").write_text(dumps({"config": sections, **result.to_dict()}))
    tuned = {k: dict(v) for k, v in sections.items()}
    for name, (spec, rmse) in result.best.items():
        body = tuned[f"estimator.{name}"]
        t = spec.tuning()
        if "zeta" in t:
            body["zeta"] = ",".join(repr(z) for z in t["zeta"])
        if spec.kind == "practical":
            body["p"] = ",".join(repr(p) for p in t["p"])
        if spec.kind == "cf_debiased":
            body["lam"], body["p"] = repr(t["lambda"]), repr(t["p"])
        print(f"{name}: {spec.tuning_label()}  pilot RMSE {rmse:.5g}")
    (out / "tuned.ini").write_text(sections_to_ini(tuned))
    return EXIT_OK


def cmd_validate_kernel(args) -> int:
    kern = load_kernel_csv(args.kernel) if args.kernel.endswith(".csv") else None
    if kern is None:
        try:
            kern = get_kernel(args.kernel)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    report = validate_kernel(kern, tol=args.tol)
    for c in report.checks:
        status = "ok  " if c.passed else "FAIL"
        print(f"{status} {c.name:<14} residual={c.residual:.3g} {c.detail}")
    if args.out:
        out = _out_dir(args)
        (out / f"kernel_{kern.name}.json").write_text(dumps(report.to_dict()))
    return EXIT_OK if report.passed else EXIT_ASSERT


def cmd_oracle(args) -> int:
    params = JumpActivityParams.from_stable(args.y, args.scale, sigma2=args.sigma ** 2)
    v = args.v if args.v is not None else args.dt ** (5 / 12)
    stream = np.random.default_rng(args.seed)
    if args.zeta is None:
        expansion = truncated_moment_expansion(args.p, params, args.dt, v)
        label = f"E[dX^{2 * args.p} 1{{|dX|<=v}}]"
    else:
        if args.p != 1:
            raise ConfigError("the difference form is only available for p = 1")
        expansion = truncated_moment_difference(params, args.dt, v, args.zeta)
        label = "E[dX^2 1{v<|dX|<=zeta v}]"
    mc, se = mc_truncated_moment_oracle(args.p, params, args.dt, v, int(args.draws), stream,
                                        zeta=args.zeta)
    z = (expansion - mc) / se if se > 0 else math.inf
    print(f"{label} Y={args.y:g} dt={args.dt:g} v={v:.6g}: expansion={expansion:.6e} "
          f"mc={mc:.6e} se={se:.3e} z={z:+.2f}")
    return EXIT_OK


# ----------------------------------------------------------------------------

def _add_config_args(p, experiment=True):
    p.add_argument("--preset", choices=["liu2018", "liu2018_literal", "realistic"])
    p.add_argument("--config", help="INI file, or a report.json with an embedded config")
    p.add_argument("--y", type=float, help="jump activity index (also picks preset tunings)")
    p.add_argument("--v0-exponent", type=int, dest="v0_exponent",
                   help="realistic preset: threshold dt^(k/48) with this k")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--estimators", help="comma list of estimator names to keep")
    if experiment:
        p.add_argument("--M", type=int, help="number of Monte Carlo paths")
        p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spotvol", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write simulated paths as CSV")
    _add_config_args(p, experiment=False)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--out", default="paths")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate spot variance on one path CSV")
    _add_config_args(p, experiment=False)
    p.add_argument("--path", required=True)
    p.add_argument("--tau", help="comma list of times (default: the experiment tau grid)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("experiment", help="Monte Carlo experiment with report")
    _add_config_args(p)
    p.add_argument("--out", default="out")
    p.add_argument("--assert", dest="asserts", action="append", metavar="EST.METRIC<OP>VALUE")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("gridsearch", help="pilot grid search over debias tunings")
    _add_config_args(p)
    p.add_argument("--pilot-M", type=int, dest="pilot_M")
    p.add_argument("--independent-pilot", action="store_true",
                   help="fresh paths for every grid point instead of common random numbers")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("validate-kernel", help="numerically check kernel conditions")
    p.add_argument("--kernel", required=True, help="built-in name or two-column CSV")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate_kernel)

    p = sub.add_parser("oracle", help="truncated-moment expansion vs Monte Carlo")
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--y", type=float, default=1.5)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--v", type=float)
    p.add_argument("--sigma", type=float, default=0.4)
    p.add_argument("--scale", type=float, default=0.5, help="stable scale of the jumps")
    p.add_argument("--zeta", type=float, help="use the band v < |dX| <= zeta v")
    p.add_argument("--draws", type=float, default=1e6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
