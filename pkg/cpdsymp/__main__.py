import argparse
import asyncio
import logging
import os
import sys
import typing

from cpdsymp import ExperimentConfig, load_config, load_preset, preset_names, run_experiment, write_report
from cpdsymp.utils import ConfigError

ENV_PREFIX = "CPDSYMP_"

# a subcommand without --config or --preset runs this preset
DEFAULT_PRESETS = {
    "converge": "p1-converge",
    "energy": "p1-energy",
    "symplectic": "p1-symplectic",
    "sweep-eps": "p1-sweep",
    "trajectory": "p1-trajectory",
    "run": "p1-converge",
}


def _env(name: str) -> typing.Optional[str]:
    return os.environ.get(ENV_PREFIX + name) or None


def _int(parser: argparse.ArgumentParser, name: str, value: typing.Optional[str]) -> typing.Optional[int]:
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        return parser.error(f"{name} must be an integer, got `{value}`")


def open_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> ExperimentConfig:
    config_path = args.config or _env("CONFIG")
    preset = args.preset or _env("PRESET")
    if args.config and args.preset:
        return parser.error("--config and --preset are mutually exclusive")

    try:
        if config_path and not args.preset:
            config = load_config(config_path)
        else:
            config = load_preset(preset or DEFAULT_PRESETS[args.command])

        if args.command != "run" and config.command != args.command:
            overridden = config.as_dict()
            overridden["command"] = args.command
            config = ExperimentConfig(overridden)

        seed = args.seed if args.seed is not None else _int(parser, ENV_PREFIX + "SEED", _env("SEED"))
        return config.with_overrides(out_dir=args.out_dir or _env("OUT_DIR"), seed=seed)
    except ConfigError as err:
        return parser.error(str(err))


def entry_point():
    parser = argparse.ArgumentParser(prog="cpdsymp")
    parser.add_argument("command", choices=sorted(DEFAULT_PRESETS), help="experiment to run")
    parser.add_argument("-c", "--config", help="TOML experiment config")
    parser.add_argument("-p", "--preset", help=f"built-in experiment, one of {', '.join(preset_names())}")
    parser.add_argument("-o", "--out-dir", help="directory receiving CSV files and metadata.toml")
    parser.add_argument("-j", "--jobs", type=int, help="worker processes (default: available cores)")
    parser.add_argument("-s", "--seed", type=int, help="seed for sampled states")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    args = parser.parse_args()

    if args.verbose == 0:
        logging_level = logging.ERROR
    elif args.verbose == 1:
        logging_level = logging.WARNING
    elif args.verbose == 2:
        logging_level = logging.INFO
    else:
        logging_level = logging.DEBUG

    logging_format = "%(asctime)s %(levelname)-8s %(message)s"
    logging.basicConfig(format=logging_format, level=logging_level)

    config = open_config(parser, args)
    jobs = args.jobs if args.jobs is not None else _int(parser, ENV_PREFIX + "JOBS", _env("JOBS"))
    if jobs is not None and jobs < 1:
        parser.error("--jobs must be at least 1")

    result = asyncio.run(run_experiment(config, jobs))
    write_report(result)

    for outcome in result.failed:
        logging.error("cell %s failed: %s", outcome.key, outcome.error)
    for check in result.oracle_failures:
        logging.error("oracle self-check failed for %s", check)
    sys.exit(result.exit_code)


if __name__ == "__main__":
    entry_point()
