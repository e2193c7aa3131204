"""
Trial service module for single runs and Monte Carlo batches.

This module resolves run inputs (explicit or seeded-random identities and
messages), derives independent per-trial seeds, and executes batches of
protocol runs sequentially or in a process pool. Results are always returned
in trial-index order, so parallel and sequential batches are identical.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .adversary import AdversarySpec
from .data_models import Identity, MessageBits, ProtocolConfig, ProtocolMode, RunReport
from .errors import ConfigInvalidError, SimulationError
from .qcore import RandomSource
from .session import run_protocol

# Set up logging
logger = logging.getLogger(__name__)

WORKERS_ENV = "QSDC_WORKERS"
_SEED_MASK = (1 << 64) - 1


def default_workers() -> int:
    """Worker count from QSDC_WORKERS (1 when unset)."""
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(value)
    except ValueError:
        raise ConfigInvalidError(f"{WORKERS_ENV} must be an integer, got '{value}'")
    if workers < 1:
        raise ConfigInvalidError(f"{WORKERS_ENV} must be at least 1, got {workers}")
    return workers


def derive_trial_seed(seed: int, trial_index: int) -> int:
    """
    Derive an independent 64-bit seed for one trial.

    Args:
        seed: Batch seed
        trial_index: Zero-based trial index

    Returns:
        Seed that depends only on (seed, trial_index)
    """
    sequence = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK, spawn_key=(int(trial_index),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class RunInputs:
    """Identities and messages of one run."""
    id_a: Identity
    id_b: Identity
    message: MessageBits
    message_b: Optional[MessageBits] = None


def resolve_inputs(config: ProtocolConfig, id_a: Optional[str] = None, id_b: Optional[str] = None,
                   message: Optional[str] = None, message_b: Optional[str] = None) -> RunInputs:
    """
    Fill in missing identities and messages with seeded-random values.

    Args:
        config: Configuration whose seed drives the random defaults
        id_a: Alice's identity bits, or None for random
        id_b: Bob's identity bits, or None for random
        message: Alice's message bits, or None for random
        message_b: Bob's message bits (dialogue mode), or None for random

    Returns:
        RunInputs; message_b is None outside dialogue mode
    """
    rng = RandomSource(config.seed).substream("inputs")
    try:
        resolved = RunInputs(
            id_a=Identity(id_a if id_a is not None else rng.substream("id-a").bits(2 * config.k)),
            id_b=Identity(id_b if id_b is not None else rng.substream("id-b").bits(2 * config.k)),
            message=MessageBits(message if message is not None else rng.substream("message").bits(config.n)),
            message_b=(
                MessageBits(message_b if message_b is not None else rng.substream("message-b").bits(config.n))
                if config.mode is ProtocolMode.QD else None
            ),
        )
    except ValueError as e:
        raise ConfigInvalidError(f"Invalid run input: {e}")

    for name, identity in (("id_a", resolved.id_a), ("id_b", resolved.id_b)):
        if identity.k != config.k:
            raise ConfigInvalidError(f"{name} must have 2k = {2 * config.k} bits, got {len(identity.bits)}")
    for name, bits in (("message", resolved.message), ("message_b", resolved.message_b)):
        if bits is not None and bits.n != config.n:
            raise ConfigInvalidError(f"{name} must have n = {config.n} bits, got {bits.n}")
    return resolved


def execute_run(config: ProtocolConfig, inputs: RunInputs, adversary: Optional[AdversarySpec] = None) -> RunReport:
    """Run one protocol execution with the mode selected by config."""
    return run_protocol(config, inputs.id_a, inputs.id_b, inputs.message, inputs.message_b, adversary)


class TrialRunner:
    """Runs independent, reproducible protocol trials."""

    def __init__(self, config: ProtocolConfig, adversary: Optional[AdversarySpec] = None,
                 id_a: Optional[str] = None, id_b: Optional[str] = None,
                 message: Optional[str] = None, message_b: Optional[str] = None,
                 workers: int = 1):
        """
        Initialize the runner.

        Inputs left as None are drawn per trial from the trial's derived seed.

        Args:
            config: Batch configuration; config.seed is the batch seed
            adversary: Active attacker model
            id_a: Fixed Alice identity bits, or None
            id_b: Fixed Bob identity bits, or None
            message: Fixed Alice message bits, or None
            message_b: Fixed Bob message bits, or None
            workers: Number of worker processes (1 runs in-process)
        """
        config.validate()
        if workers < 1:
            raise ConfigInvalidError(f"workers must be at least 1, got {workers}")
        self.config = config
        self.adversary = adversary or AdversarySpec()
        self.id_a = id_a
        self.id_b = id_b
        self.message = message
        self.message_b = message_b
        self.workers = workers

    def trial_config(self, trial_index: int) -> ProtocolConfig:
        return replace(self.config, seed=derive_trial_seed(self.config.seed, trial_index))

    def run_trial(self, trial_index: int) -> RunReport:
        """
        Execute one trial.

        Args:
            trial_index: Zero-based trial index

        Returns:
            RunReport of the trial
        """
        config = self.trial_config(trial_index)
        inputs = resolve_inputs(config, self.id_a, self.id_b, self.message, self.message_b)
        return execute_run(config, inputs, self.adversary)

    def run(self, trials: int) -> List[RunReport]:
        """
        Execute a batch of trials.

        Args:
            trials: Number of trials (at least 1)

        Returns:
            RunReports ordered by trial index

        Raises:
            ConfigInvalidError: If trials < 1
            SimulationError: If a trial fails for a reason other than a protocol abort
        """
        if trials < 1:
            raise ConfigInvalidError(f"trials must be at least 1, got {trials}")
        indices = range(trials)
        logger.info(f"Running {trials} trials with {self.workers} worker(s)")

        try:
            if self.workers == 1 or trials == 1:
                reports = [self.run_trial(i) for i in indices]
            else:
                with ProcessPoolExecutor(max_workers=min(self.workers, trials)) as executor:
                    # map() yields in submission order regardless of completion order
                    reports = list(executor.map(self.run_trial, indices))
        except SimulationError:
            raise
        except Exception as e:
            logger.error(f"Trial batch failed: {e}")
            raise SimulationError(f"Trial batch failed: {e}")

        aborted = sum(1 for report in reports if report.abort is not None)
        logger.info(f"Completed {trials} trials, {aborted} aborted")
        return reports
