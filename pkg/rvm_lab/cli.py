"""Command-line entry point: identities, run, fit and dump-info.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for
configuration and input errors.

Authors: rvm_lab team
"""
import argparse
import logging
import os
import sys

from . import diagnostics as dg
from . import dumps
from . import identities
from . import outputs
from . import simulation
from .config import ConfigError, RunConfig
from .maxwell import CFLViolation
from .presets import all_presets

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _build_config(args, default_scenario):
    """Config file or scenario preset, then the --set overrides."""
    if args.config:
        config = RunConfig.load(args.config)
    else:
        config = all_presets[args.scenario or default_scenario]()
    return config.with_overrides(args.set)


def _add_config_arguments(parser, scenarios):
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--scenario", choices=scenarios, help="preset used when no --config is given")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one configuration value (repeatable)",
    )
    parser.add_argument("--output", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="rvm-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--verbose", action="store_true", help="log every step")
    commands = parser.add_subparsers(dest="command", required=True)

    cmd = commands.add_parser("identities", help="run the identity and commutation suite")
    _add_config_arguments(cmd, ["identities"])
    cmd.add_argument(
        "--negative-controls",
        action="store_true",
        help="also witness that plain grad_v does not commute with transport",
    )

    cmd = commands.add_parser("run", help="run a simulation scenario")
    _add_config_arguments(cmd, ["free-wave", "free-transport", "rvm"])

    cmd = commands.add_parser("fit", help="fit a decay exponent from a run table")
    cmd.add_argument("run", help="run directory or observables CSV")
    cmd.add_argument("--observable", default="field_max")
    cmd.add_argument("--window", nargs=2, type=float, metavar=("T_A", "T_B"))

    cmd = commands.add_parser("dump-info", help="print the header of a binary dump")
    cmd.add_argument("path")
    return parser


def cmd_identities(args):
    config = _build_config(args, "identities")
    if args.negative_controls:
        config = config.with_overrides(["identities.negative_controls=true"])
    directory = args.output or os.path.join(config.output_root, "identities")
    os.makedirs(directory, exist_ok=True)
    report = identities.run_identity_suite(config, os.path.join(directory, outputs.CALIBRATION_FILE))
    path = os.path.join(directory, outputs.IDENTITIES_FILE)
    report.to_csv(path, index=False, float_format="%.6e")
    print(report.to_string(index=False))
    logger.info("identity report written to %s", path)
    return EXIT_PASS if report["passed"].all() else EXIT_FAIL


def cmd_run(args):
    config = _build_config(args, "rvm")
    record = simulation.run_simulation(config)
    directory = simulation.write_run(record, args.output or simulation.run_directory(config))
    print(dg.format_report(record.report_, title=f"{config.scenario} run in {directory}"), end="")
    return EXIT_PASS if record.passed else EXIT_FAIL


def cmd_fit(args):
    series = outputs.load_series(args.run, args.observable, args.window)
    exponent, stderr = dg.fit_decay_exponent(series)
    print(
        dg.format_report(
            {
                "observable": args.observable,
                "window": f"{series.window[0]:g} {series.window[1]:g}",
                "exponent": exponent,
                "stderr": stderr,
            }
        ),
        end="",
    )
    print(f"{args.observable}: {exponent:.3f} +- {stderr:.3f}")
    return EXIT_PASS


def cmd_dump_info(args):
    print(dg.format_report(dumps.read_header(args.path), title=args.path), end="")
    return EXIT_PASS


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    command = {
        "identities": cmd_identities,
        "run": cmd_run,
        "fit": cmd_fit,
        "dump-info": cmd_dump_info,
    }[args.command]
    try:
        return command(args)
    except (ConfigError, CFLViolation) as exception:
        logger.error("configuration error: %s", exception)
        return EXIT_CONFIG
    except (ValueError, OSError) as exception:
        logger.error("%s", exception)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
