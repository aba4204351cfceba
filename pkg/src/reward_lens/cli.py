"""``reward-lens`` command line.

Exit codes: 0 success, 2 bad config or arguments, 3 file or process I/O,
4 numerical divergence, 5 failed equivalence, 6 failed demo property.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import pipeline
from .env import mc_rollout, trajectories_to_csv
from .equivalence import equivalence_report
from .errors import (
    AcceptanceFailure,
    BridgeError,
    ConfigError,
    ConvergenceError,
    DivergenceError,
    EquivalenceFailure,
    InputError,
    RewardFileError,
)
from .policy import mc_expert
from .rewards import load_tabular

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_EQUIVALENCE = 5
EXIT_ACCEPTANCE = 6


def _config(args) -> pipeline.ExperimentConfig:
    return pipeline.load_config_file(args.config, seed=args.seed, out=args.out, steps=args.steps)


def cmd_generate(args) -> int:
    cfg = _config(args)
    root = pipeline.output_root(cfg, args.out)
    for p in pipeline.generate(cfg, root):
        print(p)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = _config(args)
    root = pipeline.output_root(cfg, args.out)
    for s in pipeline.preprocess_all(cfg, root, args.jobs):
        print(f"{s['variant']:<24} {s['cost']:<11} {s['initial_cost']:.6g} -> {s['final_cost']:.6g}")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _config(args)
    print(pipeline.render(cfg, pipeline.output_root(cfg, args.out)))
    return EXIT_OK


def cmd_check_equiv(args) -> int:
    a, b = load_tabular(args.a), load_tabular(args.b)
    gamma = args.gamma if args.gamma is not None else (a.gamma if a.gamma is not None else 0.99)
    report = equivalence_report(a, b, gamma, args.tol, check_policy=not args.no_policy)
    if args.report:
        Path(args.report).write_text(report.to_json())
    verdict = "equivalent" if report.passed else "NOT equivalent"
    print(f"{verdict}: max residual {report.max_residual:.3e} (tol {args.tol:g})")
    return EXIT_OK if report.passed else EXIT_EQUIVALENCE


def cmd_rollout(args) -> int:
    if args.episodes < 1:
        raise ConfigError("--episodes must be >= 1")
    trajs = mc_rollout(mc_expert, args.episodes, args.max_steps, args.seed if args.seed is not None else 0)
    text = trajectories_to_csv(trajs)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text)
        print(args.output)
    return EXIT_OK


def cmd_demo(args) -> int:
    if args.name not in pipeline.DEMOS:
        raise ConfigError(f"unknown demo {args.name!r}; choose from {', '.join(pipeline.DEMOS)}")
    root = Path(args.out or os.environ.get(pipeline.OUT_ENV) or pipeline.DEFAULT_OUT) / args.name
    try:
        pipeline.run_demo(args.name, root, seed=args.seed, steps=args.steps, jobs=args.jobs)
    finally:
        _print_checks(root)
    print(f"wrote {root}")
    return EXIT_OK


def _print_checks(root: Path) -> None:
    path = root / "checks.json"
    if not path.exists():
        return
    for c in json.loads(path.read_text()):
        mark = "PASS" if c["passed"] else "FAIL"
        detail = f" ({c['detail']})" if c["detail"] else ""
        print(f"{mark} {c['check']}{detail}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reward-lens", description="Simplify rewards within their potential-shaping class.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="experiment config (JSON)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output root (default: $REWARD_LENS_OUT, then the config)")
        sp.add_argument("--steps", type=int, help="optimizer steps for every run")

    sp = sub.add_parser("generate", help="write base, shaped and noisy reward files")
    common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("preprocess", help="run every variant x cost and write result bundles")
    common(sp)
    sp.add_argument("--jobs", type=int, default=None, help="bundles to run in parallel")
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("render", help="draw the original / preprocessed panel sheet")
    common(sp)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("check-equiv", help="certify two tabular rewards differ by potential shaping")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--report", help="write the equivalence report JSON here")
    sp.add_argument("--no-policy", action="store_true", help="skip the value-iteration policy comparison")
    sp.set_defaults(func=cmd_check_equiv)

    sp = sub.add_parser("rollout", help="expert mountain-car episodes as CSV")
    sp.add_argument("--episodes", type=int, default=5)
    sp.add_argument("--max-steps", type=int, default=500)
    sp.add_argument("--seed", type=int)
    sp.add_argument("-o", "--output", default="-")
    sp.set_defaults(func=cmd_rollout)

    sp = sub.add_parser("demo", help="full pipeline with pinned settings")
    sp.add_argument("name", help=", ".join(pipeline.DEMOS))
    common(sp, config=False)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_demo)
    return p


# checked in order; argparse usage errors also exit with 2
EXIT_CODES = (
    ((ConfigError, InputError), EXIT_CONFIG, "config error"),
    ((OSError, RewardFileError, BridgeError), EXIT_IO, "i/o error"),
    ((DivergenceError, ConvergenceError), EXIT_DIVERGENCE, "divergence"),
    ((EquivalenceFailure,), EXIT_EQUIVALENCE, "equivalence failed"),
    ((AcceptanceFailure,), EXIT_ACCEPTANCE, "demo check failed"),
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except tuple(t for types, _, _ in EXIT_CODES for t in types) as exc:
        for types, code, label in EXIT_CODES:
            if isinstance(exc, types):
                print(f"reward-lens: {label}: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
