"""Command-line entry point: ``ganssl-lab {case1d,case2d,verify}``.

Exit codes: 0 success, 1 configuration error, 2 runtime or numeric error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import copy
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ConfigError, GansslError
from .experiments import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, run_case_study_1d, run_case_study_2d, run_verification_suite
from .report import ArtifactError, default_out_root

log = logging.getLogger("ganssl_lab")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage errors are config errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _eps_list(text: str):
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--eps expects a comma-separated list of numbers, got {text!r}")
    return values


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seed expects a non-negative integer, got {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"--seed must lie in [0, 2^64), got {v}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--cells expects an integer, got {text!r}")
    if v < 2:
        raise argparse.ArgumentTypeError(f"--cells must be at least 2, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ganssl-lab",
        description="Semi-supervised GAN case studies and verification checks.",
        epilog="Exit codes: 0 success, 1 config error, 2 runtime/numeric error, 3 verification failure.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="TOML config file (default: built-in defaults)")
    common.add_argument(
        "--out",
        type=Path,
        default=None,
        help="run directory (default: $GANSSL_LAB_OUT/<subcommand>, GANSSL_LAB_OUT defaults to ./runs)",
    )
    common.add_argument("--seed", type=_u64, default=None, help="random seed (default: config value, 0)")
    common.add_argument("--cells", type=_positive, default=None, help="grid cells per axis (default: config value, 400)")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log progress at debug level")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="only log errors")

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p1 = sub.add_parser("case1d", parents=[common], help="direct C(G) training for each eps")
    p1.add_argument("--eps", type=_eps_list, default=None, help="comma list of eps values (default: 0,0.1,0.2)")
    p2 = sub.add_parser("case2d", parents=[common], help="2-D minimax runs for one coverage scenario")
    p2.add_argument(
        "--scenario", choices=("satisfied", "violated"), default=None, help="label coverage scenario (default: satisfied)"
    )
    p3 = sub.add_parser("verify", parents=[common], help="run the proposition checks")
    p3.add_argument("--eps", type=_eps_list, default=None, help="comma list of eps values (default: 0,0.05,0.1,0.2)")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = copy.deepcopy(cfg)
    cfg.study = args.command
    if args.seed is not None:
        cfg.seed = args.seed
    if args.cells is not None:
        cfg.grid.cells = args.cells
    eps = getattr(args, "eps", None)
    if eps is not None:
        if args.command == "verify":
            cfg.verify.eps = eps
        else:
            cfg.eps = eps
    scenario = getattr(args, "scenario", None)
    if scenario is not None:
        cfg.case2d.scenario = scenario
    if args.out is not None:
        cfg.out = str(args.out)
    return cfg.validate()


def _setup_logging(args):
    level = logging.DEBUG if args.verbose else logging.ERROR if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    out = Path(cfg.out) if cfg.out else default_out_root() / args.command
    runner = {"case1d": run_case_study_1d, "case2d": run_case_study_2d, "verify": run_verification_suite}[args.command]
    try:
        result = runner(cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (GansslError, ArtifactError, ArithmeticError, OSError) as exc:
        log.error("run failed: %s", exc)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - anything else is still a runtime failure
        log.debug("unexpected failure", exc_info=True)
        log.error("run failed: %s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    _print_result(args.command, result)
    return result.exit_code


def _print_result(command, result):
    m = result.summary["metrics"]
    if command == "case1d":
        for row in m["tv_by_eps"]:
            print(f"eps={row['eps']:g} tv={row['tv']:.4f} violation_steps={row['violation_steps']}")
        print(f"tv strictly increasing: {m['tv_strictly_increasing']}")
    elif command == "case2d":
        for name, accs in m["accuracy_by_subdomain"].items():
            print(f"{name}: " + " ".join(f"{a:.3f}" for a in accs))
    else:
        print(f"failures: {result.summary['failures']} of {m['reports']} reports")
    print(f"artifacts: {result.out_dir}")


if __name__ == "__main__":
    sys.exit(main())
