"""Command line: ``run``, ``gen-sect6`` and ``certify``.

Exit codes: 0 ok, 2 config error, 3 assumption violation, 4 oracle failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from asyncdual.config import ConfigError
from asyncdual.experiment import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_ORACLE,
    EXIT_VIOLATION,
    OUTPUT_ENV,
    ExperimentSpec,
    compute_reference,
    generate_sect6_config,
    run_experiment,
)
from asyncdual.oracles import OracleError
from asyncdual.reference import ReferenceError, grid_certify


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument("--iters", type=int, default=None, help="override the iteration count")
    p.add_argument("--out", default=None, help=f"output directory (default: spec, then ${OUTPUT_ENV}, then .)")
    p.add_argument("--allow-violations", action="store_true", help="exit 0 even when assumptions are flagged")
    p.add_argument("--channels", default=None, help="comma list from lambda,Q,gap,residual,witness")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asyncdual", description="Asynchronous dual decomposition experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every variant of a spec file")
    p_run.add_argument("spec", help="JSON experiment spec")
    _common(p_run)

    p_gen = sub.add_parser("gen-sect6", help="write (and optionally run) a hinge/entropy network experiment")
    p_gen.add_argument("--hinge", type=int, required=True, help="number of hinge agents")
    p_gen.add_argument("--entropy", type=int, required=True, help="number of entropy agents")
    p_gen.add_argument("--graph", choices=("path", "rgg"), default="path")
    p_gen.add_argument("--no-regularize", action="store_true", help="drop the 0.005 x^2 term on hinge agents")
    p_gen.add_argument("--write", default=None, help="write the spec here instead of stdout")
    p_gen.add_argument("--execute", action="store_true", help="also run the generated spec")
    _common(p_gen)

    p_cert = sub.add_parser("certify", help="reference solution and grid certificate only")
    p_cert.add_argument("spec", help="JSON experiment spec")
    p_cert.add_argument("--radius", type=float, default=1.0)
    p_cert.add_argument("--step", type=float, default=0.05)
    p_cert.add_argument("--seed", type=int, default=None)
    return parser


def _apply(spec: ExperimentSpec, args) -> ExperimentSpec:
    if args.iters is not None and args.iters < 1:
        raise ConfigError("must be at least 1", "--iters")
    return spec.with_overrides(seed=args.seed, iterations=args.iters, channels=args.channels, directory=args.out)


def _execute(spec: ExperimentSpec, args) -> int:
    result = run_experiment(spec, allow_violations=args.allow_violations)
    for v in result.variants:
        s = v.trace.summary()
        gap = f" gap={s['final_gap']:.3e}" if "final_gap" in s else ""
        print(f"{v.name}: Q={s['final_Q']:.10g}{gap} residual={s['final_residual']:.3e}")
        for flag in v.report.flags:
            print(f"  flag: {flag}")
        for warn in v.report.warnings:
            print(f"  warning: {warn}")
    if result.status == EXIT_ORACLE:
        print(f"oracle failure: {result.message}", file=sys.stderr)
    elif result.status == EXIT_VIOLATION:
        print("assumption violations flagged (use --allow-violations to accept)", file=sys.stderr)
    return result.status


def _cmd_run(args) -> int:
    spec = _apply(ExperimentSpec.load(args.spec), args)
    return _execute(spec, args)


def _cmd_gen(args) -> int:
    if args.hinge < 0 or args.entropy < 0 or args.hinge + args.entropy < 1:
        raise ConfigError("need non-negative counts and at least one agent", "--hinge/--entropy")
    spec = generate_sect6_config(
        args.hinge, args.entropy, args.graph, 0 if args.seed is None else args.seed, regularize=not args.no_regularize
    )
    spec = _apply(spec, args)
    text = spec.dumps()
    if args.write:
        Path(args.write).write_text(text, encoding="utf-8")
    elif not args.execute:
        sys.stdout.write(text)
    return _execute(spec, args) if args.execute else EXIT_OK


def _cmd_certify(args) -> int:
    spec = ExperimentSpec.load(args.spec)
    if args.seed is not None:
        spec = spec.with_overrides(seed=args.seed)
    status = EXIT_OK
    for name, config in spec.run_configs():
        ref = compute_reference(config.problem)
        out = {"variant": name, "reference": None if ref is None else ref.to_dict()}
        if ref is not None and ref.lambda_star is not None:
            try:
                out["grid_certified"] = grid_certify(config.problem, ref.lambda_star, args.radius, args.step)
            except ReferenceError as exc:
                out["grid_certified"] = None
                out["grid_note"] = str(exc)
        print(json.dumps(out, sort_keys=True))
        if out.get("grid_certified") is False:
            status = EXIT_VIOLATION
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "gen-sect6": _cmd_gen, "certify": _cmd_certify}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
