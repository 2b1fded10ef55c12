"""Semiflow Selection Lab - Command-line entry point"""

import argparse
import logging
import sys
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from src.commands import convergence, select, semigroup, verify  # noqa: E402
from src.components.errors import SemiflowError  # noqa: E402
from src.components.experiment_config import ExperimentConfig  # noqa: E402
from src.components.run_recorder import LOG_FORMAT, RunRecorder  # noqa: E402

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

HANDLERS = {
    "verify": verify.run,
    "select": select.run,
    "semigroup": semigroup.run,
    "convergence": convergence.run,
}

logger = logging.getLogger("src.app")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semiflow",
        description="Verify, select and restart-check solution families of compressible Navier-Stokes "
                    "and non-unique ODE systems",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Experiment config (JSON)")
    common.add_argument("--out", help="Output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="Random seed (overrides seed)")
    common.add_argument("--flat", action="store_true", help="Write into --out instead of a timestamped run directory")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("verify", parents=[common], help="Weak-form and energy checks")
    p.add_argument("--bundle", help="Verify a saved trajectory bundle or trajectory set instead")
    p.add_argument("--save-bundles", action="store_true", help="Also write every verified trajectory")
    sub.add_parser("select", parents=[common], help="Run the selection cascade on the candidate family")
    p = sub.add_parser("semigroup", parents=[common], help="Restart (semigroup) deviations")
    p.add_argument("--t1", type=float, help="Restart time (overrides semigroup.t1)")
    p.add_argument("--t2", type=float, help="Comparison window (overrides semigroup.t2)")
    p.add_argument("--restricted", action="store_true",
                   help="Fix E0 to the field energy and check only full-measure times")
    sub.add_parser("convergence", parents=[common], help="Residuals under grid refinement")
    return parser


def _configure_stderr(verbose: bool) -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    package = logging.getLogger("src")
    package.setLevel(logging.DEBUG)
    package.addHandler(handler)
    return handler


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Resolved config with command-line overrides applied"""
    config = ExperimentConfig(args.config)
    if args.seed is not None:
        config.update({"seed": args.seed})
    if args.out is not None:
        config.update({"output": {"directory": args.out}})
    return config


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PASS if e.code == 0 else EXIT_USAGE

    handler = _configure_stderr(args.verbose)
    try:
        try:
            config = load_config(args)
        except (OSError, ValueError) as e:
            logger.error(f"Cannot load config: {e}")
            return EXIT_USAGE
        ok, errors, warnings = config.validate(args.command)
        for w in warnings:
            logger.warning(w)
        if not ok:
            for err in errors:
                logger.error(f"Config error: {err}")
            return EXIT_USAGE

        recorder = RunRecorder(config["output"]["directory"], args.command, config.config_hash(),
                               timestamped=not args.flat)
        config.save(str(recorder.path("config.json")))
        passed = None
        try:
            code = HANDLERS[args.command](config, args, recorder)
            passed = code == EXIT_PASS
        except ValueError as e:
            # Domain, shape, time-grid and configuration errors: bad request
            logger.error(f"{type(e).__name__}: {e}")
            code = EXIT_USAGE
        except SemiflowError as e:
            logger.error(f"{type(e).__name__}: {e}")
            code = EXIT_FAIL
        finally:
            recorder.close(passed)
        logger.info(f"{args.command}: {'PASS' if code == EXIT_PASS else 'FAIL'} (exit {code})")
        return code
    finally:
        logging.getLogger("src").removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
