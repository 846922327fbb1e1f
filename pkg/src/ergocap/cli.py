"""Command-line entry points.

    ergocap run CONFIG            full configured pipeline
    ergocap capacity --preset     channel capacity oracle
    ergocap coupling --mu --nu    maximal-coupling mismatch probability
    ergocap entropy CONFIG        spanning/entropy experiment only
    ergocap diagnose CONFIG       ergodicity diagnostic only
    ergocap bound CONFIG          simulate + diagnose + bound + verdict
    ergocap decode CONFIG         bin-decoder experiment only

Exit codes: 0 completed, 1 error (schema violations name the field
path), 2 bound verdict VIOLATION-FLAG. ERGOCAP_SEED overrides the
config seed; an explicit --seed overrides both.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .channels import channel_preset, capacity, maximal_coupling
from .config import ConfigError, load_config
from .errors import InvalidArgument
from .runner import EXIT_ERROR, EXIT_OK, ExperimentRunner, write_json


def _parse_pmf(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise InvalidArgument(f"bad pmf '{text}': {exc}") from exc


def _resolve_seed(args, cfg_seed: int) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("ERGOCAP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise InvalidArgument(f"ERGOCAP_SEED must be an integer, got '{env}'") from exc
    return cfg_seed


def _add_shared(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--tol", type=float, default=None)


def _run_pipeline(args, forced_stages=None) -> int:
    cfg = load_config(args.config)
    if forced_stages is not None:
        cfg.pipeline = list(forced_stages)
    seed = _resolve_seed(args, cfg.seed)
    if args.tol is not None:
        cfg.tol = args.tol
    runner = ExperimentRunner(cfg, out_dir=args.out, seed=seed)
    code = runner.run()
    if runner.diagnostic is not None:
        print(f"diagnostic: {'PASS' if runner.diagnostic.passed else 'FAIL'} "
              f"(dispersion={runner.diagnostic.dispersion:.6g})")
    if runner.bound_report is not None:
        br = runner.bound_report
        print(f"mc_bound: {br.mc_bound:.6f} +- {br.mc_ci:.6f} bits, capacity: {br.capacity:.6f}")
    if runner.verdict_value is not None:
        print(f"verdict: {runner.verdict_value}")
    if runner.entropy_result is not None:
        for row in runner.entropy_result["rows"]:
            print(f"T={row['T']} s={row['s']} ({row['method']})")
        if runner.entropy_result["summary"]:
            print(f"entropy slope: {runner.entropy_result['summary']['slope']:.4f} bits/step")
    if runner.decode_result is not None:
        d = runner.decode_result
        if d.degenerate:
            print(f"decode: degenerate ({d.note})")
        else:
            print(f"decode error: {d.error_rate:.4f} (budget {d.budget:.4f})")
    print(f"artifacts in {runner.out_dir}")
    return code


def cmd_run(args) -> int:
    return _run_pipeline(args)


def cmd_capacity(args) -> int:
    channel = channel_preset(args.preset)
    value = capacity(channel, tol=args.tol if args.tol is not None else 1e-9)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "capacity.json"),
                   {"preset": args.preset, "capacity": value})
    print(f"{value:.6f}")
    return EXIT_OK


def cmd_coupling(args) -> int:
    plan = maximal_coupling(_parse_pmf(args.mu), _parse_pmf(args.nu))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "coupling.json"), {
            "mu": plan.mu, "nu": plan.nu,
            "joint": plan.joint,
            "diagonal_mass": plan.diagonal_mass,
            "prob_mismatch": plan.prob_mismatch,
        })
    print(f"{plan.prob_mismatch:.6f}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    return _run_pipeline(args, forced_stages=["simulate", "diagnose"])


def cmd_bound(args) -> int:
    return _run_pipeline(args, forced_stages=["simulate", "diagnose", "bound", "verdict"])


def cmd_entropy(args) -> int:
    return _run_pipeline(args, forced_stages=["entropy"])


def cmd_decode(args) -> int:
    return _run_pipeline(args, forced_stages=["decode"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergocap", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run the configured pipeline")
    p_run.add_argument("config")
    _add_shared(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cap = sub.add_parser("capacity", help="channel capacity in bits")
    p_cap.add_argument("--preset", required=True, help="noiseless:K | bsc:p | bec:p")
    _add_shared(p_cap)
    p_cap.set_defaults(func=cmd_capacity)

    p_cpl = sub.add_parser("coupling", help="maximal-coupling mismatch probability")
    p_cpl.add_argument("--mu", required=True, help="comma-separated pmf")
    p_cpl.add_argument("--nu", required=True, help="comma-separated pmf")
    _add_shared(p_cpl)
    p_cpl.set_defaults(func=cmd_coupling)

    for name, fn in (("diagnose", cmd_diagnose), ("bound", cmd_bound),
                     ("entropy", cmd_entropy), ("decode", cmd_decode)):
        p = sub.add_parser(name, help=f"{name} stage from a config")
        p.add_argument("config")
        _add_shared(p)
        p.set_defaults(func=fn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # normalize argparse's exit-2 on bad usage
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (InvalidArgument, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
