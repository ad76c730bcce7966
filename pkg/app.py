"""
hitrev - command-line front end.

Subcommands: simulate, times, estimate, oracle, validate, test.
Reports go to stdout (or --out) as JSON or CSV; logs go to stderr.
"""

import argparse
import logging
import os
import signal
import sys
import threading
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict

from hitrev import MODEL_HASH_ALGORITHM, __version__
from hitrev.config import load_settings
from hitrev.errors import (
    ConfigError,
    DegenerateVarianceError,
    HitrevError,
    IndeterminateError,
    NumericError,
    UsageError,
)
from hitrev.estimators import EstimateReport, TestReport
from hitrev.io import emit_report
from hitrev.server import HitrevServer

logger = logging.getLogger("hitrev")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REJECT = 2
EXIT_INDETERMINATE = 3
EXIT_NUMERIC = 4

DECISION_EXIT = {
    "no_evidence": EXIT_OK,
    "reject_reversibility": EXIT_REJECT,
    "indeterminate": EXIT_INDETERMINATE,
}

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

SubcommandName = Literal["simulate", "times", "estimate", "oracle", "validate", "test"]


class GlobalFlags(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: Optional[int] = None
    model: Optional[str] = None
    out: Optional[str] = None
    format: Optional[Literal["csv", "json"]] = None
    config: Optional[str] = None
    log_level: Optional[str] = None
    cap: Optional[int] = None
    workers: Optional[int] = None


class Command(BaseModel):
    """A parsed command line: one subcommand, its options and the global flags."""

    model_config = ConfigDict(frozen=True)

    name: SubcommandName
    options: Dict[str, Any]
    flags: GlobalFlags


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    group = parent.add_argument_group("global options")
    group.add_argument("--seed", type=int, help="Base seed (default 0)")
    group.add_argument("--model", help="Model JSON file or builtin:<name>")
    group.add_argument("--out", help="Write the report here instead of stdout")
    group.add_argument("--format", choices=["csv", "json"], help="Report format (default json)")
    group.add_argument("--config", help="Dotenv file with HITREV_* settings")
    group.add_argument("--log-level", type=str.upper, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    group.add_argument("--cap", type=int, help="Search cap (default 10^8)")
    group.add_argument("--workers", type=int, help="Worker processes for validation suites")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    parser = _Parser(prog="hitrev", description="Entropy production from hitting, return and waiting times")
    parser.add_argument(
        "--version", action="version", version=f"hitrev {__version__} (model-hash: {MODEL_HASH_ALGORITHM})"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = sub.add_parser("simulate", parents=[parent], help="Simulate a stationary trajectory")
    simulate.add_argument("--length", type=int, required=True)

    times = sub.add_parser("times", parents=[parent], help="Return, hitting and waiting times")
    times.add_argument("--n", type=int, required=True)
    times.add_argument("--trajectory")
    times.add_argument("--target")
    times.add_argument("--alphabet", help="Comma-separated tokens when no model is given")

    estimate = sub.add_parser("estimate", parents=[parent], help="Entropy-production estimate")
    estimate.add_argument("--which", choices=["H", "W", "dual", "entropy"], default="H")
    estimate.add_argument("--n", type=int, required=True)
    estimate.add_argument("--trajectory")
    estimate.add_argument("--target")
    estimate.add_argument("--alphabet")

    oracle = sub.add_parser("oracle", parents=[parent], help="Exact MEP, variance, SCGF and rate function")
    oracle.add_argument("--scgf-grid", dest="scgf_grid", type=int, default=41)
    oracle.add_argument("--rate-grid", dest="rate_grid", type=int, default=9)
    oracle.add_argument("--curve", choices=["scgf", "rate"], default="scgf")

    validate = sub.add_parser("validate", parents=[parent], help="Monte Carlo validation suite")
    validate.add_argument(
        "--suite", required=True, choices=["exponential", "consistency", "clt", "ldp", "calibration"]
    )
    validate.add_argument("--n", type=int, nargs="+", required=True)
    validate.add_argument("--trials", type=int)
    validate.add_argument("--estimator", choices=["H", "W"])
    validate.add_argument("--word")
    validate.add_argument("--p-grid", dest="p_grid", type=float, nargs="+")
    validate.add_argument("--pairs", type=int)
    validate.add_argument("--alpha", type=float)
    validate.add_argument("--raw-out", dest="raw_out", help="Per-trial CSV (suite,n,trial,value)")

    test = sub.add_parser("test", parents=[parent], help="Irreversibility test")
    test.add_argument("--method", choices=["sign", "threshold"], default="sign")
    test.add_argument("--n", type=int, required=True)
    test.add_argument("--trajectory")
    test.add_argument("--alphabet")
    test.add_argument("--pairs", type=int, default=100)
    test.add_argument("--alpha", type=float)
    test.add_argument("--c-thr", dest="c_thr", type=float)
    return parser


def _check(name: str, options: Dict[str, Any], flags: GlobalFlags) -> None:
    """Cross-flag rules argparse cannot express."""
    # a config file or HITREV_MODEL may also name the model
    has_model = bool(flags.model or flags.config or os.getenv("HITREV_MODEL"))
    if name in ("simulate", "oracle") and not has_model:
        raise UsageError(f"{name} needs --model")
    if name in ("times", "estimate", "test") and not (has_model or options.get("trajectory")):
        raise UsageError(f"{name} needs --model or --trajectory")
    if name == "estimate" and options["which"] == "W" and not has_model:
        if not (options.get("trajectory") and options.get("target")):
            raise UsageError("estimate --which W needs --model or both --trajectory and --target")
    if options.get("target") and not options.get("trajectory"):
        raise UsageError("--target needs --trajectory")


def parse_args(argv: Optional[List[str]] = None) -> Command:
    """
    Parse a command line.

    Raises:
        UsageError: Unknown flags, missing subcommand or inconsistent options
    """
    namespace = vars(build_parser().parse_args(argv))
    name = namespace.pop("command")
    flags = GlobalFlags(**{k: namespace.pop(k) for k in GlobalFlags.model_fields})
    options = {k: v for k, v in namespace.items() if v is not None}
    if name == "simulate" and flags.out is not None:
        options["out"] = flags.out
    if flags.model is not None:
        options["model"] = flags.model
    if flags.seed is not None:
        options["seed"] = flags.seed
    if flags.cap is not None:
        options["cap"] = flags.cap
    _check(name, options, flags)
    return Command(name=name, options=options, flags=flags)


def _exit_code(result: Dict[str, Any]) -> int:
    report = result.get("report")
    if isinstance(report, TestReport):
        return DECISION_EXIT[report.decision]
    if isinstance(report, EstimateReport) and report.indeterminate:
        return EXIT_INDETERMINATE
    return EXIT_OK


def _render(result: Dict[str, Any], format: str):
    if format == "csv" and "table" in result:
        return result["table"]
    return {k: v for k, v in result.items() if k != "table"}


def main(argv: Optional[List[str]] = None, server=None) -> int:
    try:
        command = parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE

    flags = command.flags
    try:
        settings = load_settings(
            flags.config,
            seed=flags.seed,
            cap=flags.cap,
            workers=flags.workers,
            log_level=flags.log_level,
            format=flags.format,
            model=flags.model,
            alpha=command.options.get("alpha"),
            c_thr=command.options.get("c_thr"),
        )
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=settings.log_level, format=LOG_FORMAT, stream=sys.stderr)
    if server is None:
        server = HitrevServer(settings)

    cancel = threading.Event()

    def _interrupt(signum, frame):
        logger.warning("Interrupt received, finishing current trials")
        cancel.set()

    previous = signal.signal(signal.SIGINT, _interrupt)
    try:
        result = server.execute_tool(command.name, dict(command.options), cancel=cancel)
        if "error" in result:
            logger.error(result["error"])
            return EXIT_USAGE
        emit_report(_render(result, settings.format), settings.format, None if command.name == "simulate" else flags.out)
        return _exit_code(result)
    except IndeterminateError as e:
        logger.error("Indeterminate: %s", e)
        return EXIT_INDETERMINATE
    except (NumericError, DegenerateVarianceError) as e:
        logger.error("Numeric failure: %s", e)
        return EXIT_NUMERIC
    except HitrevError as e:
        logger.error("%s", e)
        return EXIT_USAGE
    finally:
        signal.signal(signal.SIGINT, previous)


if __name__ == "__main__":
    sys.exit(main())
