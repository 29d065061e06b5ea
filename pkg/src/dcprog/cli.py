"""Command-line interface: ``dcprog {list,run,sweep,verify,dump-cone}``.

Exit codes: 0 when every run converged to a feasible point, 2 when the
heuristic returned an infeasible point, 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .ccp import CcpParams, initialize
from .cone import canonicalize, dump
from .gallery import (
    EXAMPLES,
    ExampleSpec,
    build_instance,
    get_example,
    list_examples,
    resolve,
    run_example,
    run_sweep,
    sweep_values,
)
from .report import FORMATS, RunReport, UnsupportedFormat, emit, emit_sweep
from .transform import build_penalty_subproblem, is_dcp, split_equalities

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

# CLI flag -> CcpParams field
CCP_FLAGS = {
    "tau0": float, "mu": float, "tau_max": float, "alpha": float, "max_iter": int,
    "restarts": int, "tol_obj": float, "tol_slack": float, "k_ini": int,
}


class _Parser(argparse.ArgumentParser):
    # usage errors share the generic error code; 2 is reserved for infeasible runs
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip().replace("-", "_") if k.strip() in CCP_FLAGS else k.strip(), v.strip()


def _number(text: str) -> float:
    return float(Fraction(text))


def parse_sweep(text: str) -> tuple[str, list[float]]:
    """``name=start:step:stop`` with inclusive stop; fractions like ``16/7`` are allowed."""
    name, rng = _key_value(text)
    parts = rng.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("sweep must look like name=start:step:stop")
    start, step, stop = (_number(p) for p in parts)
    values = sweep_values(start, step, stop)
    if not values:
        raise argparse.ArgumentTypeError("sweep range is empty")
    return name, values


def _formats(text: str) -> list[str]:
    out = [f.strip() for f in text.split(",") if f.strip()]
    for f in out:
        if f not in FORMATS:
            raise argparse.ArgumentTypeError(f"unknown format {f!r}; choose from {', '.join(FORMATS)}")
    return out


def load_config(path: str | None) -> dict:
    path = path or os.environ.get("DCPROG_CONFIG")
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _add_common(p: argparse.ArgumentParser, example_required: bool = True):
    p.add_argument("--example", required=example_required, choices=list(EXAMPLES),
                   metavar="NAME", help="example name (see 'dcprog list')")
    p.add_argument("--param", action="append", type=_key_value, default=[], metavar="KEY=VALUE",
                   help="override an example scale parameter; repeatable")
    p.add_argument("--seed", type=int, default=None, help="random seed for data and initialization")
    for flag, typ in CCP_FLAGS.items():
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
    p.add_argument("--config", default=None, help="TOML file with a [ccp] table of defaults")
    p.add_argument("--out", default=None, help="output directory (default: $DCPROG_OUT or .)")
    p.add_argument("--format", type=_formats, default=None, help="comma list of json,csv,svg")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dcprog", description="Disciplined convex-concave programming examples.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("list", help="show examples and their default parameters")

    run = sub.add_parser("run", help="solve one example instance")
    _add_common(run)

    sw = sub.add_parser("sweep", help="solve an example over a parameter grid")
    _add_common(sw)
    sw.add_argument("--sweep", required=True, type=parse_sweep, metavar="NAME=START:STEP:STOP")
    sw.add_argument("--instances", type=int, default=1, help="seeds per grid point (seed, seed+1, ...)")
    sw.add_argument("--metric", default=None, help="metric summarized in the figure")

    ver = sub.add_parser("verify", help="re-run a JSON report and compare the results")
    ver.add_argument("report", help="path to a JSON report written by 'run'")

    dc = sub.add_parser("dump-cone", help="print the cone program of the first convex subproblem")
    _add_common(dc)
    return parser


def make_spec(args, config: dict) -> ExampleSpec:
    ccp = {k: v for k, v in config.get("ccp", {}).items()}
    unknown = set(ccp) - set(CcpParams.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown [ccp] keys in config: {', '.join(sorted(unknown))}")
    ccp.pop("rng_seed", None)
    for flag in CCP_FLAGS:
        v = getattr(args, flag)
        if v is not None:
            ccp[flag] = v
    params = dict(config.get("examples", {}).get(args.example, {}))
    params.update(dict(args.param))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    spec = ExampleSpec(args.example, params, seed, ccp)
    resolve(spec)  # validate early
    return spec


def _out_dir(args, config) -> Path:
    return Path(args.out or os.environ.get("DCPROG_OUT") or config.get("output", {}).get("dir", "."))


def _summary(r: RunReport) -> str:
    obj = "n/a" if r.objective is None else f"{r.objective:.6g}"
    metrics = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in r.metrics.items() if v is not None and not isinstance(v, (list, dict)))
    return (f"{r.example}: {r.status} objective={obj} iterations={len(r.trace)} "
            f"max_violation={r.max_violation():.2e} {metrics}")


def _exit_code(r: RunReport, tol: float) -> int:
    return EXIT_OK if r.converged and r.max_violation() <= tol + 1e-6 else EXIT_INFEASIBLE


def cmd_list(args, config) -> int:
    for spec in list_examples():
        ex = get_example(spec.name)
        print(json.dumps({**spec.to_dict(), "description": ex.description}, sort_keys=True))
    return EXIT_OK


def cmd_run(args, config) -> int:
    spec = make_spec(args, config)
    report = run_example(spec)
    out = _out_dir(args, config)
    for fmt in args.format or ["json"]:
        try:
            path = emit(report, fmt, out)
            print(f"wrote {path}", file=sys.stderr)
        except UnsupportedFormat as exc:
            print(f"warning: {exc}", file=sys.stderr)
    print(_summary(report))
    return _exit_code(report, report.ccp["tol_slack"])


def cmd_sweep(args, config) -> int:
    spec = make_spec(args, config)
    param, values = args.sweep
    ex = get_example(spec.name)
    if param not in ex.defaults:
        raise ValueError(f"{spec.name} has no parameter {param!r}")
    reports = run_sweep(spec, param, values, args.instances)
    metric = args.metric or ex.primary
    out = _out_dir(args, config)
    stem = f"{spec.name}-sweep-{param}"
    for fmt in args.format or ["csv", "json"]:
        path = emit_sweep(reports, param, metric, fmt, out, stem)
        print(f"wrote {path}", file=sys.stderr)
    for r in reports:
        print(f"{param}={r.params[param]:g} seed={r.seed} " + _summary(r))
    codes = [_exit_code(r, r.ccp["tol_slack"]) for r in reports]
    return max(codes)


def cmd_verify(args, config) -> int:
    old = RunReport.from_json(Path(args.report).read_text())
    ccp = {k: v for k, v in old.ccp.items() if k != "rng_seed"}
    new = run_example(ExampleSpec(old.example, old.params, old.seed, ccp))
    if new.to_json(timing=False) == old.to_json(timing=False):
        print(f"{old.example}: reproduced")
        return EXIT_OK
    a, b = old.to_dict(False), new.to_dict(False)
    diff = sorted(k for k in a if a[k] != b.get(k))
    print(f"{old.example}: differs in {', '.join(diff)}")
    return EXIT_ERROR


def cmd_dump_cone(args, config) -> int:
    spec = make_spec(args, config)
    _, _, params = resolve(spec)
    inst = build_instance(spec)
    p = split_equalities(inst.problem)
    if is_dcp(p):
        cp, _ = canonicalize(p)
    else:
        # same stream as the first CCP restart
        (seq,) = np.random.SeedSequence(params.rng_seed).spawn(1)
        x0 = initialize(p, params.k_ini, np.random.default_rng(seq), params.solver_tol)
        x0.update(inst.initial)
        sub = build_penalty_subproblem(p, x0, params.tau0)
        cp, _ = canonicalize(sub.base)
    if args.out:
        path = Path(args.out)
        if path.suffix == "":
            path.mkdir(parents=True, exist_ok=True)
            path = path / f"{spec.name}.cone"
        with open(path, "w") as fh:
            dump(cp, fh)
        print(f"wrote {path}", file=sys.stderr)
    else:
        dump(cp, sys.stdout)
    return EXIT_OK


COMMANDS = {"list": cmd_list, "run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify,
            "dump-cone": cmd_dump_cone}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        config = load_config(getattr(args, "config", None))
        return COMMANDS[args.command](args, config)
    except (KeyError, ValueError, OSError, tomllib.TOMLDecodeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"dcprog: error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
