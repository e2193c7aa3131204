"""
Console output helpers for the command-line interface.

Diagnostics go to standard error; tables and reports go to standard output.
"""

import sys
from typing import Iterable, Optional, TextIO, Tuple

import pandas as pd

from .data_models import AbortReason

# Exit code per protocol outcome; never changes within a schema version
EXIT_DELIVERED = 0
EXIT_CONFIG_INVALID = 1
EXIT_CODES = {
    None: EXIT_DELIVERED,
    AbortReason.CONFIG_INVALID: EXIT_CONFIG_INVALID,
    AbortReason.CHSH_FIRST_FAILED: 2,
    AbortReason.RECEIVER_AUTH_FAILED: 3,
    AbortReason.CHSH_SECOND_FAILED: 4,
    AbortReason.SENDER_AUTH_FAILED: 5,
    AbortReason.INTEGRITY_FAILED: 6,
}

_HINTS = {
    'config_invalid': "check the protocol parameters (n + c even, k >= 1, d >= 1, probabilities in [0, 1])",
    'odd_length': "choose n and c so that n + c is even",
    'size_mismatch': "identity and message lengths must match k and n",
    'insufficient_rounds': "increase d so every CHSH cell receives rounds",
    'io': "check that the output path is writable",
}


def exit_code_for(reason: Optional[AbortReason]) -> int:
    return EXIT_CODES[reason]


def show_error_message(error: str, error_type: str = "error", stream: Optional[TextIO] = None) -> None:
    """
    Print a one-line diagnostic, with a hint when the error category has one.

    Args:
        error: Error message
        error_type: Category from the exception's error_type
        stream: Output stream (standard error by default)
    """
    stream = stream or sys.stderr
    hint = _HINTS.get(error_type)
    line = f"error [{error_type}]: {error}"
    if hint:
        line += f" ({hint})"
    print(line, file=stream)


def render_table(frame: pd.DataFrame, title: Optional[str] = None, stream: Optional[TextIO] = None) -> None:
    """Print a DataFrame as a fixed-width text table."""
    stream = stream or sys.stdout
    if title:
        print(title, file=stream)
        print("-" * len(title), file=stream)
    print(frame.to_string(index=False), file=stream)
    print(file=stream)


def render_selftest(results: Iterable[Tuple[str, bool, str]], stream: Optional[TextIO] = None) -> None:
    """Print one PASS/FAIL line per self-test suite."""
    stream = stream or sys.stdout
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        suffix = f"  {detail}" if detail else ""
        print(f"{status}  {name}{suffix}", file=stream)
