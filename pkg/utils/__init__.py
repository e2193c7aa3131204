"""
Utilities package for the DI-QSDC simulator.

This package contains the exact two-qubit simulator core, the protocol data
models and party steps, run orchestration, attacker models, Monte Carlo trial
execution, and report rendering.
"""

from .errors import (
    SimulationError,
    ConfigInvalidError,
    OddLengthError,
    SizeMismatchError,
    InsufficientRoundsError,
    InconsistentTransitionError,
    PairLifecycleError,
    ReportWriteError,
)
from .qcore import BellLabel, PairState, RandomSource, RotatedBasis, Side, SingleQubitOp, bell_state
from .data_models import AbortReason, Identity, MessageBits, ProtocolConfig, ProtocolMode, RunReport
from .adversary import AdversaryKind, AdversarySpec, Transmission
from .session import run_protocol, run_qd, run_qsdc
from .trial_service import TrialRunner, derive_trial_seed
from .reporting import TrialSummary, summarize_trials

__all__ = [
    # Errors
    'SimulationError',
    'ConfigInvalidError',
    'OddLengthError',
    'SizeMismatchError',
    'InsufficientRoundsError',
    'InconsistentTransitionError',
    'PairLifecycleError',
    'ReportWriteError',

    # Simulator core
    'BellLabel',
    'PairState',
    'RandomSource',
    'RotatedBasis',
    'Side',
    'SingleQubitOp',
    'bell_state',

    # Data models
    'AbortReason',
    'Identity',
    'MessageBits',
    'ProtocolConfig',
    'ProtocolMode',
    'RunReport',

    # Adversary
    'AdversaryKind',
    'AdversarySpec',
    'Transmission',

    # Runs and trials
    'run_protocol',
    'run_qd',
    'run_qsdc',
    'TrialRunner',
    'derive_trial_seed',
    'TrialSummary',
    'summarize_trials',
]
