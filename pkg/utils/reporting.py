"""
Reporting module for run reports, trial summaries and rule tables.

This module turns RunReports into pandas DataFrames, aggregates trial batches
into a TrialSummary, writes JSON and CSV renderings, and builds the encoding
rule tables for display.
"""

import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from .data_models import SCHEMA_VERSION, AbortReason, RunReport
from .errors import ReportWriteError
from .protocol import qd_table, transition_table

# Set up logging
logger = logging.getLogger(__name__)

# Decimal places kept in every rendered number
ROUND_DIGITS = 12

TRIAL_COLUMNS = [
    'trial', 'seed', 'abort', 's_first', 's_second', 'qber_first', 'qber_second',
    'receiver_pass', 'receiver_fail', 'sender_pass', 'sender_fail',
    'integrity_mismatches', 'bit_errors', 'delivered_bits', 'delivered',
]

AGGREGATE_COLUMNS = [
    'trial_count', 'delivered_count',
    'abort_none', 'abort_chsh_first_failed', 'abort_receiver_auth_failed',
    'abort_chsh_second_failed', 'abort_sender_auth_failed', 'abort_integrity_failed',
    's_first_mean', 's_first_std', 's_second_mean', 's_second_std',
    'qber_first_mean', 'qber_second_mean',
    'receiver_pass_rate', 'sender_pass_rate', 'bit_error_rate',
]

_ABORT_KEYS = {
    None: 'abort_none',
    AbortReason.CHSH_FIRST_FAILED: 'abort_chsh_first_failed',
    AbortReason.RECEIVER_AUTH_FAILED: 'abort_receiver_auth_failed',
    AbortReason.CHSH_SECOND_FAILED: 'abort_chsh_second_failed',
    AbortReason.SENDER_AUTH_FAILED: 'abort_sender_auth_failed',
    AbortReason.INTEGRITY_FAILED: 'abort_integrity_failed',
}


def round_value(value: Any) -> Any:
    """Round floats to ROUND_DIGITS; NaN becomes None; other values pass through."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if math.isnan(value):
            return None
        return round(float(value), ROUND_DIGITS)
    if hasattr(value, 'item'):
        return round_value(value.item())
    if isinstance(value, dict):
        return {key: round_value(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_value(item) for item in value]
    return value


def report_row(report: RunReport, trial: Optional[int] = None) -> Dict[str, Any]:
    """Flatten one RunReport into a trial row."""
    delivered_bits = 0
    for message in (report.delivered_message, report.delivered_message_b):
        if message is not None:
            delivered_bits += message.n
    return {
        'trial': trial,
        'seed': report.seed,
        'abort': report.abort.value if report.abort else None,
        's_first': report.s_first.s_value if report.s_first else None,
        's_second': report.s_second.s_value if report.s_second else None,
        'qber_first': report.qber_first,
        'qber_second': report.qber_second,
        'receiver_pass': report.receiver_auth.pass_count if report.receiver_auth else None,
        'receiver_fail': report.receiver_auth.fail_count if report.receiver_auth else None,
        'sender_pass': report.sender_auth.pass_count if report.sender_auth else None,
        'sender_fail': report.sender_auth.fail_count if report.sender_auth else None,
        'integrity_mismatches': report.integrity.mismatches if report.integrity else None,
        'bit_errors': report.bit_errors,
        'delivered_bits': delivered_bits,
        'delivered': report.delivered,
    }


def reports_to_dataframe(reports: Sequence[RunReport]) -> pd.DataFrame:
    """
    Convert a batch of RunReports to a DataFrame, one row per trial.

    Args:
        reports: Reports ordered by trial index

    Returns:
        DataFrame with TRIAL_COLUMNS
    """
    if not reports:
        return pd.DataFrame(columns=TRIAL_COLUMNS)
    rows = [report_row(report, trial=i) for i, report in enumerate(reports)]
    return pd.DataFrame(rows, columns=TRIAL_COLUMNS)


def _mean(series: pd.Series) -> Optional[float]:
    values = pd.to_numeric(series, errors='coerce').dropna()
    return float(values.mean()) if not values.empty else None


def _std(series: pd.Series) -> Optional[float]:
    values = pd.to_numeric(series, errors='coerce').dropna()
    # Population standard deviation; a single trial has spread 0
    return float(values.std(ddof=0)) if not values.empty else None


def _rate(passes: pd.Series, failures: pd.Series) -> Optional[float]:
    passed = pd.to_numeric(passes, errors='coerce').dropna().sum()
    failed = pd.to_numeric(failures, errors='coerce').dropna().sum()
    total = passed + failed
    return float(passed / total) if total else None


def aggregate_trials(frame: pd.DataFrame) -> Dict[str, Any]:
    """
    Compute the batch aggregates from a trial DataFrame.

    Args:
        frame: Output of reports_to_dataframe

    Returns:
        Dictionary with AGGREGATE_COLUMNS keys
    """
    aggregates: Dict[str, Any] = {'trial_count': int(len(frame))}
    aggregates['delivered_count'] = int(frame['delivered'].sum()) if len(frame) else 0
    for reason, key in _ABORT_KEYS.items():
        label = reason.value if reason else None
        if label is None:
            aggregates[key] = int(frame['abort'].isna().sum())
        else:
            aggregates[key] = int((frame['abort'] == label).sum())

    aggregates['s_first_mean'] = _mean(frame['s_first'])
    aggregates['s_first_std'] = _std(frame['s_first'])
    aggregates['s_second_mean'] = _mean(frame['s_second'])
    aggregates['s_second_std'] = _std(frame['s_second'])
    aggregates['qber_first_mean'] = _mean(frame['qber_first'])
    aggregates['qber_second_mean'] = _mean(frame['qber_second'])
    aggregates['receiver_pass_rate'] = _rate(frame['receiver_pass'], frame['receiver_fail'])
    aggregates['sender_pass_rate'] = _rate(frame['sender_pass'], frame['sender_fail'])

    delivered_bits = pd.to_numeric(frame['delivered_bits'], errors='coerce').fillna(0).sum()
    bit_errors = pd.to_numeric(frame['bit_errors'], errors='coerce').dropna().sum()
    aggregates['bit_error_rate'] = float(bit_errors / delivered_bits) if delivered_bits else None
    return {column: aggregates[column] for column in AGGREGATE_COLUMNS}


@dataclass
class TrialSummary:
    """Per-trial rows of a batch plus its aggregates."""
    config: Dict[str, Any]
    adversary: Dict[str, Any]
    trials: pd.DataFrame
    aggregates: Dict[str, Any]

    def __post_init__(self):
        """Check that the aggregates describe the trial rows."""
        histogram = sum(self.aggregates[key] for key in _ABORT_KEYS.values())
        if histogram != len(self.trials) or self.aggregates['trial_count'] != len(self.trials):
            raise ValueError("Aggregate counts must equal the number of trials")

    @property
    def trial_count(self) -> int:
        return len(self.trials)

    def to_dict(self) -> Dict[str, Any]:
        rows = [
            {column: round_value(row[column]) for column in TRIAL_COLUMNS}
            for row in self.trials.astype(object).where(self.trials.notna(), None).to_dict('records')
        ]
        return {
            'schema_version': SCHEMA_VERSION,
            'config': round_value(dict(self.config)),
            'adversary': round_value(dict(self.adversary)),
            'trial_count': self.trial_count,
            'aggregates': round_value(dict(self.aggregates)),
            'trials': rows,
        }

    def to_csv(self) -> str:
        """One header row and one data row of the rounded aggregates."""
        row = {column: round_value(self.aggregates[column]) for column in AGGREGATE_COLUMNS}
        buffer = io.StringIO()
        pd.DataFrame([row], columns=AGGREGATE_COLUMNS).to_csv(
            buffer, index=False, lineterminator='\n'
        )
        return buffer.getvalue()


def summarize_trials(reports: Sequence[RunReport], config: Dict[str, Any],
                     adversary: Dict[str, Any]) -> TrialSummary:
    """
    Build a TrialSummary from a batch of reports.

    Args:
        reports: Reports ordered by trial index
        config: Batch configuration echo
        adversary: Adversary spec echo

    Returns:
        TrialSummary
    """
    frame = reports_to_dataframe(reports)
    return TrialSummary(config=config, adversary=adversary, trials=frame, aggregates=aggregate_trials(frame))


def to_json(data: Dict[str, Any]) -> str:
    """Deterministic JSON rendering (sorted keys, rounded numbers)."""
    return json.dumps(round_value(data), sort_keys=True, indent=2) + "\n"


def write_output(text: str, path: Optional[str] = None) -> None:
    """
    Write a rendered report to a file, or to standard output when path is None.

    Raises:
        ReportWriteError: If the file cannot be written
    """
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
    except OSError as e:
        logger.error(f"Could not write report to {path}: {e}")
        raise ReportWriteError(f"Could not write report to '{path}': {e}")
    logger.info(f"Wrote report to {path}")


def render_summary(summary: TrialSummary, fmt: str = 'json') -> str:
    if fmt == 'csv':
        return summary.to_csv()
    return to_json(summary.to_dict())


def render_report(report: RunReport, fmt: str = 'json') -> str:
    """JSON report, or a one-row CSV of the flattened report."""
    if fmt == 'csv':
        buffer = io.StringIO()
        row = {key: round_value(value) for key, value in report_row(report).items() if key != 'trial'}
        pd.DataFrame([row]).to_csv(buffer, index=False, lineterminator='\n')
        return buffer.getvalue()
    return to_json(report.to_dict())


# Rule tables

def qsdc_rules_frame() -> pd.DataFrame:
    """
    Encoding/decoding rules for direct communication as a DataFrame.

    Returns:
        16 rows with columns ['initial', 'bits', 'operation', 'final']
    """
    rows = [
        {'initial': initial.symbol, 'bits': bits, 'operation': op.symbol, 'final': final.symbol}
        for initial, bits, op, final in transition_table()
    ]
    return pd.DataFrame(rows, columns=['initial', 'bits', 'operation', 'final'])


def qd_rules_frame() -> pd.DataFrame:
    """
    Dialogue-mode encoding rules as a DataFrame.

    Returns:
        16 rows with columns ['alice_bit', 'bob_bit', 'prepared', 'operation', 'final']
    """
    rows = [
        {'alice_bit': alice_bit, 'bob_bit': bob_bit, 'prepared': prepared.symbol,
         'operation': op.symbol, 'final': final.symbol}
        for alice_bit, bob_bit, prepared, op, final in qd_table()
    ]
    return pd.DataFrame(rows, columns=['alice_bit', 'bob_bit', 'prepared', 'operation', 'final'])


def tables_to_dict() -> Dict[str, List[Dict[str, Any]]]:
    return {
        'qsdc_rules': qsdc_rules_frame().to_dict('records'),
        'qd_rules': qd_rules_frame().to_dict('records'),
    }
