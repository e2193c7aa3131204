"""
Command-line entry point for the DI-QSDC simulator.

This module parses the command line (and an optional JSON config file),
dispatches to the run, trials, tables and selftest subcommands, and maps
protocol outcomes and errors to exit codes. Reports and tables go to standard
output or --out; diagnostics and logs go to standard error.

Exit codes:
    0  message delivered (or subcommand succeeded)
    1  invalid configuration or flags
    2  first CHSH check failed
    3  receiver authentication failed
    4  second CHSH check failed
    5  sender authentication failed
    6  integrity check failed
    7  report could not be written
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from typing import Any, Dict, List, Optional

from utils.adversary import AdversaryKind, AdversarySpec, Transmission
from utils.console import (
    EXIT_CONFIG_INVALID,
    exit_code_for,
    render_selftest,
    render_table,
    show_error_message,
)
from utils.data_models import ProtocolConfig, ProtocolMode, hex_to_bits, validate_bits
from utils.errors import ConfigInvalidError, ReportWriteError, SimulationError
from utils.reporting import (
    render_report,
    render_summary,
    summarize_trials,
    qsdc_rules_frame,
    qd_rules_frame,
    tables_to_dict,
    to_json,
    write_output,
)
from utils.selftest import run_selftest
from utils.trial_service import TrialRunner, default_workers, execute_run, resolve_inputs

# Set up logging
logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = "QSDC_LOG_LEVEL"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
EXIT_IO_ERROR = 7

# Keys a config file may carry besides the ProtocolConfig fields
_CLI_KEYS = ('adversary', 'intercept_basis_mix', 'applies_to', 'knows_id_b', 'trials', 'workers',
             'message', 'message_b', 'id_a', 'id_b')


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the ConfigInvalid code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        show_error_message(message, "config_invalid")
        raise SystemExit(EXIT_CONFIG_INVALID)


@dataclass
class CliConfig:
    """Fully resolved command line: defaults, then config file, then flags."""
    subcommand: str
    protocol: ProtocolConfig
    adversary: AdversarySpec
    trials: int = 1
    workers: int = 1
    message: Optional[str] = None
    message_b: Optional[str] = None
    id_a: Optional[str] = None
    id_b: Optional[str] = None
    out: Optional[str] = None
    fmt: str = 'json'


def build_parser() -> argparse.ArgumentParser:
    """
    Build the argument parser with the four subcommands.

    Protocol flags default to None so that a config file value is only
    overridden by flags the user actually passed.
    """
    common = CliArgumentParser(add_help=False)
    common.add_argument('--verbosity', choices=LOG_LEVELS, default=None,
                        help=f"Log level on standard error (default: ${LOG_LEVEL_ENV} or WARNING)")

    protocol = CliArgumentParser(add_help=False)
    group = protocol.add_argument_group('protocol')
    group.add_argument('--n', type=int, help="Message length in bits")
    group.add_argument('--c', type=int, help="Number of check bits")
    group.add_argument('--k', type=int, help="Identity length in bit pairs")
    group.add_argument('--d', type=int, help="Pairs per CHSH security check")
    group.add_argument('--noise-p', type=float, dest='noise_p', help="Depolarizing probability per transit")
    group.add_argument('--storage-noise-p', type=float, dest='storage_noise_p',
                       help="Depolarizing probability per stored qubit")
    group.add_argument('--s-threshold', type=float, dest='s_threshold', help="Abort when S <= threshold")
    group.add_argument('--auth-tolerance', type=float, dest='auth_tolerance',
                       help="Accepted authentication failure fraction")
    group.add_argument('--integrity-tolerance', type=float, dest='integrity_tolerance',
                       help="Accepted check-bit mismatch fraction")
    group.add_argument('--mode', choices=[mode.value for mode in ProtocolMode])
    group.add_argument('--seed', type=int)
    group.add_argument('--adversary', choices=[kind.value for kind in AdversaryKind])
    group.add_argument('--intercept-basis-mix', type=float, dest='intercept_basis_mix',
                       help="Probability of a Z-basis intercept (X otherwise)")
    group.add_argument('--applies-to', choices=[t.value for t in Transmission], dest='applies_to',
                       help="Transmission(s) the intercept-resend attack targets")
    group.add_argument('--knows-id-b', action='store_const', const=True, dest='knows_id_b',
                       help="impersonate-bob only: the impersonator prepares with the true Id_B")
    group.add_argument('--message', help="Alice's message as hex, or 'random'")
    group.add_argument('--message-b', dest='message_b', help="Bob's message as hex (qd mode), or 'random'")
    group.add_argument('--id-a', dest='id_a', help="Alice's identity as a bit string, or 'random'")
    group.add_argument('--id-b', dest='id_b', help="Bob's identity as a bit string, or 'random'")
    group.add_argument('--config', help="JSON config file (flags override its values)")
    group.add_argument('--out', help="Output path (standard output by default)")
    group.add_argument('--format', choices=['json', 'csv'], default='json', dest='fmt')

    parser = CliArgumentParser(
        prog='app.py',
        description="Device-independent QSDC / quantum dialogue simulator with mutual authentication",
    )
    subparsers = parser.add_subparsers(dest='subcommand', metavar='{run,trials,tables,selftest}')
    subparsers.required = True

    subparsers.add_parser('run', parents=[common, protocol], help="Execute one protocol run")
    trials = subparsers.add_parser('trials', parents=[common, protocol], help="Execute a Monte Carlo batch")
    trials.add_argument('--trials', type=int, help="Number of trials")
    trials.add_argument('--workers', type=int, help="Worker processes (default: $QSDC_WORKERS or 1)")

    tables = subparsers.add_parser('tables', parents=[common], help="Print the encoding rule tables")
    tables.add_argument('--format', choices=['text', 'json'], default='text', dest='fmt')
    tables.add_argument('--out', help="Output path (standard output by default)")
    subparsers.add_parser('selftest', parents=[common], help="Run the fast invariant suites")
    return parser


def configure_logging(verbosity: Optional[str]) -> None:
    """Send log records to standard error at the requested level."""
    level = verbosity or os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    if level not in LOG_LEVELS:
        level = "WARNING"
    logging.basicConfig(
        level=getattr(logging, level),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a JSON config file.

    Raises:
        ConfigInvalidError: If the file is unreadable, not a JSON object, or has unknown keys
    """
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as e:
        raise ConfigInvalidError(f"Cannot read config file '{path}': {e}")
    except json.JSONDecodeError as e:
        raise ConfigInvalidError(f"Config file '{path}' is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigInvalidError(f"Config file '{path}' must hold a JSON object")

    known = {f.name for f in fields(ProtocolConfig)} | set(_CLI_KEYS)
    unknown = set(data) - known
    if unknown:
        raise ConfigInvalidError(f"Unknown keys in config file: {', '.join(sorted(unknown))}")
    return data


def _optional_input(value: Optional[str]) -> Optional[str]:
    if value is None or str(value).lower() == 'random':
        return None
    return str(value)


def _message_bits(value: Optional[str], n: int, name: str) -> Optional[str]:
    text = _optional_input(value)
    if text is None:
        return None
    try:
        return hex_to_bits(text, n)
    except ValueError as e:
        raise ConfigInvalidError(f"--{name}: {e}")


def _identity_bits(value: Optional[str], k: int, name: str) -> Optional[str]:
    text = _optional_input(value)
    if text is None:
        return None
    if not validate_bits(text) or len(text) != 2 * k:
        raise ConfigInvalidError(f"--{name} must be a bit string of length 2k = {2 * k}")
    return text


def resolve_cli_config(args: argparse.Namespace) -> CliConfig:
    """
    Merge defaults, config file and flags into a validated CliConfig.

    Args:
        args: Parsed arguments of the run or trials subcommand

    Returns:
        CliConfig

    Raises:
        ConfigInvalidError: For any invalid value
    """
    settings: Dict[str, Any] = {}
    if getattr(args, 'config', None):
        settings.update(load_config_file(args.config))
    for key, value in vars(args).items():
        if value is not None and key not in ('config', 'subcommand', 'verbosity', 'out', 'fmt'):
            settings[key] = value

    protocol_keys = {f.name for f in fields(ProtocolConfig)}
    protocol = ProtocolConfig.from_dict({key: settings[key] for key in protocol_keys if key in settings})
    protocol.validate()

    adversary = AdversarySpec(
        kind=settings.get('adversary', AdversaryKind.NONE.value),
        intercept_basis_mix=settings.get('intercept_basis_mix', 0.5),
        applies_to=settings.get('applies_to', Transmission.BOTH.value),
        knows_id_b=bool(settings.get('knows_id_b', False)),
    )

    trials = settings.get('trials', 1)
    workers = settings.get('workers')
    workers = default_workers() if workers is None else workers
    if not isinstance(trials, int) or trials < 1:
        raise ConfigInvalidError(f"trials must be at least 1, got {trials!r}")
    if not isinstance(workers, int) or workers < 1:
        raise ConfigInvalidError(f"workers must be at least 1, got {workers!r}")

    return CliConfig(
        subcommand=args.subcommand,
        protocol=protocol,
        adversary=adversary,
        trials=trials,
        workers=workers,
        message=_message_bits(settings.get('message'), protocol.n, 'message'),
        message_b=_message_bits(settings.get('message_b'), protocol.n, 'message-b'),
        id_a=_identity_bits(settings.get('id_a'), protocol.k, 'id-a'),
        id_b=_identity_bits(settings.get('id_b'), protocol.k, 'id-b'),
        out=args.out,
        fmt=args.fmt,
    )


def cmd_run(config: CliConfig) -> int:
    """
    Execute one protocol run and write its report.

    Returns:
        0 on delivery, otherwise the exit code of the abort reason
    """
    inputs = resolve_inputs(config.protocol, config.id_a, config.id_b, config.message, config.message_b)
    report = execute_run(config.protocol, inputs, config.adversary)
    write_output(render_report(report, config.fmt), config.out)
    if report.abort is not None:
        logger.warning(f"Protocol aborted: {report.abort.value}")
    return exit_code_for(report.abort)


def cmd_trials(config: CliConfig) -> int:
    """
    Execute a batch of trials and write the summary.

    Aborted runs are data; the exit code is 0 whenever every trial executed.
    """
    runner = TrialRunner(
        config.protocol,
        config.adversary,
        id_a=config.id_a,
        id_b=config.id_b,
        message=config.message,
        message_b=config.message_b,
        workers=config.workers,
    )
    reports = runner.run(config.trials)
    summary = summarize_trials(reports, config.protocol.to_dict(), config.adversary.to_dict())
    write_output(render_summary(summary, config.fmt), config.out)
    return 0


def cmd_tables(fmt: str = 'text', out: Optional[str] = None) -> int:
    """Print both encoding rule tables, computed from the simulator."""
    if fmt == 'json':
        write_output(to_json(tables_to_dict()), out)
        return 0
    if out:
        with open(out, 'w', encoding='utf-8') as handle:
            render_table(qsdc_rules_frame(), "Direct-communication encoding and decoding rules", handle)
            render_table(qd_rules_frame(), "Dialogue encoding rules", handle)
        return 0
    render_table(qsdc_rules_frame(), "Direct-communication encoding and decoding rules")
    render_table(qd_rules_frame(), "Dialogue encoding rules")
    return 0


def cmd_selftest() -> int:
    """Run the invariant suites; exit 0 iff every suite passes."""
    results = run_selftest()
    render_selftest(results)
    return 0 if all(passed for _, passed, _ in results) else 1


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse the command line and dispatch to a subcommand.

    Args:
        argv: Arguments without the program name (sys.argv[1:] by default)

    Returns:
        Process exit code
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbosity)

    try:
        if args.subcommand == 'tables':
            return cmd_tables(args.fmt, args.out)
        if args.subcommand == 'selftest':
            return cmd_selftest()

        config = resolve_cli_config(args)
        if config.subcommand == 'run':
            return cmd_run(config)
        return cmd_trials(config)

    except ReportWriteError as e:
        show_error_message(str(e), e.error_type)
        return EXIT_IO_ERROR
    except OSError as e:
        show_error_message(str(e), "io")
        return EXIT_IO_ERROR
    except SimulationError as e:
        logger.error(f"{type(e).__name__}: {e}")
        show_error_message(str(e), e.error_type)
        return EXIT_CONFIG_INVALID
    except ValueError as e:
        show_error_message(str(e), "config_invalid")
        return EXIT_CONFIG_INVALID


if __name__ == "__main__":
    sys.exit(main())
