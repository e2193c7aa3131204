"""
Data models and validation utilities for the DI-QSDC simulator.

This module contains the protocol-level data models (identities, messages,
the EPR pair registry, transmission layouts, configuration, CHSH estimates
and run reports), validation functions, and bit-string helpers shared by the
protocol, adversary and reporting modules.
"""

import logging
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import pandas as pd

from .errors import ConfigInvalidError, OddLengthError, PairLifecycleError
from .qcore import TOLERANCE, BellLabel, PairState, RandomSource, Side

# Set up logging
logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# Standard deviations of binomial slack in a noise-derived tolerance
NOISE_MARGIN_SIGMAS = 3.0

# Seeds are 64-bit
SEED_LIMIT = 2 ** 64


class ProtocolMode(str, Enum):
    """One-way direct communication or two-way dialogue."""
    QSDC = "qsdc"
    QD = "qd"


class PairRole(Enum):
    """Which prepared sequence a pair belongs to."""
    TRANSPORT = "Transport"                 # S-sequence
    IDENTITY_CARRIER = "IdentityCarrier"    # I-sequence


class Partition(Enum):
    """Use a transport pair is assigned to."""
    MESSAGE = "Message"             # M_A
    SENDER_ID = "SenderId"          # C_A
    SECOND_CHECK = "SecondCheck"    # D_A
    FIRST_CHECK = "FirstCheck"
    UNASSIGNED = "Unassigned"


class Lifecycle(Enum):
    HELD = "Held"
    IN_TRANSIT_FIRST = "InTransitFirst"
    IN_TRANSIT_SECOND = "InTransitSecond"
    MEASURED = "Measured"
    DISCARDED = "Discarded"


class Verdict(Enum):
    CONTINUE = "continue"
    ABORT = "abort"


class AbortReason(Enum):
    """Why a run stopped, in protocol order."""
    CONFIG_INVALID = "ConfigInvalid"
    CHSH_FIRST_FAILED = "ChshFirstFailed"
    RECEIVER_AUTH_FAILED = "ReceiverAuthFailed"
    CHSH_SECOND_FAILED = "ChshSecondFailed"
    SENDER_AUTH_FAILED = "SenderAuthFailed"
    INTEGRITY_FAILED = "IntegrityFailed"

    @property
    def stage(self) -> int:
        return list(AbortReason).index(self)


# Data validation functions

def validate_bits(bits: Union[str, None]) -> bool:
    """
    Validate that a value is a bit string.

    Args:
        bits: Candidate bit string

    Returns:
        True if bits is a (possibly empty) string of '0' and '1', False otherwise
    """
    if bits is None or not isinstance(bits, str):
        return False
    return all(ch in "01" for ch in bits)


def validate_probability(value: Union[float, int, None]) -> bool:
    """
    Validate that a value is a probability (or tolerance fraction).

    Args:
        value: Value to validate

    Returns:
        True if value is a finite number in [0, 1], False otherwise
    """
    if value is None or isinstance(value, bool):
        return False
    try:
        float_value = float(value)
    except (ValueError, TypeError):
        return False
    return 0.0 <= float_value <= 1.0


def validate_count(value: Union[int, None]) -> bool:
    """Validate that a value is a nonnegative integer."""
    if value is None or isinstance(value, bool):
        return False
    return isinstance(value, int) and value >= 0


def validate_hex(text: Union[str, None]) -> bool:
    """Validate a hexadecimal string (no 0x prefix)."""
    if not text or not isinstance(text, str):
        return False
    try:
        int(text, 16)
    except ValueError:
        return False
    return not text.lower().startswith("0x")


# Bit-string helpers

def bits_to_hex(bits: str) -> str:
    """
    Render a bit string as hex, left-padding with zeros to a whole nibble.

    Args:
        bits: Bit string

    Returns:
        Lowercase hex string ("" for an empty bit string)
    """
    if not bits:
        return ""
    width = (len(bits) + 3) // 4
    return format(int(bits, 2), f"0{width}x")


def hex_to_bits(text: str, n: Optional[int] = None) -> str:
    """
    Convert hex to a bit string.

    Args:
        text: Hex string
        n: Desired bit length; short input is left-padded with zeros and
            dropped leading bits must be zero

    Returns:
        Bit string of length n (or 4 * len(text) when n is None)
    """
    if not validate_hex(text):
        raise ValueError(f"Invalid hex string: '{text}'")
    bits = "".join(format(int(ch, 16), "04b") for ch in text)
    if n is None:
        return bits
    if n > len(bits):
        return bits.zfill(n)
    if "1" in bits[:len(bits) - n]:
        raise ValueError(f"Hex '{text}' does not fit in {n} bits")
    return bits[len(bits) - n:]


def bit_pairs(bits: str) -> List[str]:
    """Split an even-length bit string into consecutive 2-bit values."""
    return [bits[i:i + 2] for i in range(0, len(bits), 2)]


def remove_positions(bits: str, positions: Sequence[int]) -> str:
    """Drop the characters at the given indices, keeping the rest in order."""
    skip = set(positions)
    return "".join(ch for i, ch in enumerate(bits) if i not in skip)


@dataclass(frozen=True)
class Identity:
    """Pre-shared secret identity of 2k bits."""
    bits: str

    def __post_init__(self):
        """Validate identity bits after initialization."""
        if not validate_bits(self.bits) or not self.bits:
            raise ValueError("Identity must be a non-empty bit string")
        if len(self.bits) % 2:
            raise ValueError(f"Identity length must be even, got {len(self.bits)}")

    @property
    def k(self) -> int:
        return len(self.bits) // 2

    @property
    def pairs(self) -> List[str]:
        return bit_pairs(self.bits)


@dataclass(frozen=True)
class MessageBits:
    """An n-bit secret message."""
    bits: str

    def __post_init__(self):
        """Validate message bits after initialization."""
        if not validate_bits(self.bits):
            raise ValueError("Message must be a bit string")

    @property
    def n(self) -> int:
        return len(self.bits)

    def to_hex(self) -> str:
        return bits_to_hex(self.bits)


@dataclass(frozen=True)
class CheckedMessage:
    """Message with c check bits inserted at recorded positions."""
    bits: str
    check_positions: Tuple[int, ...]
    check_values: str

    def __post_init__(self):
        """Validate check-bit bookkeeping after initialization."""
        object.__setattr__(self, "check_positions", tuple(int(p) for p in self.check_positions))
        if not validate_bits(self.bits) or not validate_bits(self.check_values):
            raise ValueError("Checked message and check values must be bit strings")
        if len(self.check_positions) != len(self.check_values):
            raise ValueError("Each check position needs exactly one check value")
        if len(set(self.check_positions)) != len(self.check_positions):
            raise ValueError("Check positions must be distinct")
        for position, value in zip(self.check_positions, self.check_values):
            if not 0 <= position < len(self.bits):
                raise ValueError(f"Check position {position} outside message of length {len(self.bits)}")
            if self.bits[position] != value:
                raise ValueError(f"Bit at check position {position} does not match its check value")

    def strip_checks(self) -> str:
        """The original message: checked bits with check positions removed."""
        return remove_positions(self.bits, self.check_positions)

    @property
    def pairs(self) -> List[str]:
        return bit_pairs(self.bits)


@dataclass
class PairRecord:
    """Bookkeeping for one EPR pair."""
    pair_id: int
    prepared_label: BellLabel
    role: PairRole
    state: Optional[PairState]
    partition: Partition = Partition.UNASSIGNED
    lifecycle: Lifecycle = Lifecycle.HELD

    @property
    def consumed(self) -> bool:
        return self.lifecycle in (Lifecycle.MEASURED, Lifecycle.DISCARDED)


class PairRegistry:
    """Ownership, role, partition and lifecycle of every EPR pair in a run."""

    def __init__(self):
        """Initialize an empty registry; pair ids are assigned in preparation order."""
        self._records: Dict[int, PairRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[PairRecord]:
        return iter(self._records[pid] for pid in sorted(self._records))

    def __contains__(self, pair_id: int) -> bool:
        return pair_id in self._records

    def add_pair(self, label: BellLabel, role: PairRole, state: PairState,
                 partition: Partition = Partition.UNASSIGNED) -> int:
        """
        Register a freshly prepared pair.

        Args:
            label: Bell state the pair was prepared in
            role: Transport or identity carrier
            state: Initial two-qubit state
            partition: Pre-assigned partition (message pairs in dialogue mode)

        Returns:
            New pair id
        """
        pair_id = len(self._records)
        self._records[pair_id] = PairRecord(pair_id, label, role, state, partition)
        return pair_id

    def record(self, pair_id: int) -> PairRecord:
        if pair_id not in self._records:
            raise PairLifecycleError(f"Unknown pair id {pair_id}")
        return self._records[pair_id]

    def _live(self, pair_id: int) -> PairRecord:
        record = self.record(pair_id)
        if record.consumed:
            raise PairLifecycleError(f"Pair {pair_id} was already {record.lifecycle.value.lower()}")
        return record

    def state(self, pair_id: int) -> PairState:
        return self._live(pair_id).state

    def update_state(self, pair_id: int, state: PairState) -> None:
        self._live(pair_id).state = state

    def prepared_label(self, pair_id: int) -> BellLabel:
        return self.record(pair_id).prepared_label

    def set_partition(self, pair_id: int, partition: Partition) -> None:
        self._live(pair_id).partition = partition

    def set_lifecycle(self, pair_id: int, lifecycle: Lifecycle) -> None:
        if lifecycle in (Lifecycle.MEASURED, Lifecycle.DISCARDED):
            raise PairLifecycleError("Use consume() or discard() to end a pair's lifecycle")
        self._live(pair_id).lifecycle = lifecycle

    def consume(self, pair_id: int) -> PairState:
        """Hand out a pair's state for measurement; the pair is never usable again."""
        record = self._live(pair_id)
        state = record.state
        record.state = None
        record.lifecycle = Lifecycle.MEASURED
        return state

    def discard(self, pair_id: int) -> None:
        record = self.record(pair_id)
        record.state = None
        record.lifecycle = Lifecycle.DISCARDED

    def pair_ids(self, role: Optional[PairRole] = None, partition: Optional[Partition] = None,
                 live_only: bool = False) -> List[int]:
        """Pair ids in preparation order, filtered by role, partition and liveness."""
        return [
            record.pair_id for record in self
            if (role is None or record.role is role)
            and (partition is None or record.partition is partition)
            and (not live_only or not record.consumed)
        ]

    def discard_live(self) -> int:
        """Discard every pair not yet measured or discarded; returns how many."""
        live = self.pair_ids(live_only=True)
        for pid in live:
            self.discard(pid)
        return len(live)

    def lifecycle_counts(self) -> Dict[str, int]:
        """Number of pairs per lifecycle stage, including empty stages."""
        counts = {stage.value: 0 for stage in Lifecycle}
        for record in self:
            counts[record.lifecycle.value] += 1
        return counts

    def partition_sizes(self) -> Dict[Partition, int]:
        sizes = {partition: 0 for partition in Partition}
        for record in self:
            if record.role is PairRole.TRANSPORT:
                sizes[record.partition] += 1
        return sizes

    def to_dataframe(self) -> pd.DataFrame:
        """
        Convert the registry to a DataFrame for inspection and reporting.

        Returns:
            DataFrame with columns: ['pair_id', 'prepared_label', 'role', 'partition', 'lifecycle']
        """
        columns = ['pair_id', 'prepared_label', 'role', 'partition', 'lifecycle']
        if not self._records:
            return pd.DataFrame(columns=columns)
        rows = [
            {
                'pair_id': record.pair_id,
                'prepared_label': record.prepared_label.value,
                'role': record.role.value,
                'partition': record.partition.value,
                'lifecycle': record.lifecycle.value,
            }
            for record in self
        ]
        return pd.DataFrame(rows, columns=columns)


@dataclass
class SequenceLayout:
    """Transmission order of single qubits: slot index -> (pair id, side)."""
    slots: List[Tuple[int, Side]]
    announced_positions: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        """Validate that every transmitted qubit occupies exactly one slot."""
        self.slots = [(int(pid), Side(side)) for pid, side in self.slots]
        if len(set(self.slots)) != len(self.slots):
            raise ValueError("SequenceLayout slots must not repeat a qubit")

    def __len__(self) -> int:
        return len(self.slots)

    @classmethod
    def interleave(cls, primary: Sequence[Tuple[int, Side]], inserted: Sequence[Tuple[int, Side]],
                   rng: RandomSource) -> "SequenceLayout":
        """
        Insert one qubit sequence into another at uniformly random positions.

        The relative order inside each of the two sequences is preserved.

        Args:
            primary: Qubits of the carrier sequence, in order
            inserted: Qubits to interleave, in order
            rng: Random source

        Returns:
            SequenceLayout of length len(primary) + len(inserted)
        """
        total = len(primary) + len(inserted)
        insert_at = set(rng.sample(range(total), len(inserted)))
        primary_iter, inserted_iter = iter(primary), iter(inserted)
        slots = [next(inserted_iter) if i in insert_at else next(primary_iter) for i in range(total)]
        return cls(slots)

    @property
    def pair_ids(self) -> List[int]:
        return [pid for pid, _ in self.slots]

    def positions_of(self, pair_ids: Sequence[int]) -> Tuple[int, ...]:
        """Slot indices holding any of the given pairs, ascending."""
        wanted = set(pair_ids)
        return tuple(i for i, (pid, _) in enumerate(self.slots) if pid in wanted)

    def announce(self, name: str, pair_ids: Sequence[int]) -> Tuple[int, ...]:
        """Record (and return) the positions published on the classical channel."""
        positions = self.positions_of(pair_ids)
        self.announced_positions[name] = positions
        return positions


@dataclass
class ProtocolConfig:
    """All tunable parameters of a protocol run."""
    n: int = 64
    c: int = 16
    k: int = 16
    d: int = 6000
    s_threshold: float = 2.0
    auth_tolerance: Optional[float] = None
    integrity_tolerance: Optional[float] = None
    noise_p: float = 0.0
    storage_noise_p: float = 0.0
    mode: ProtocolMode = ProtocolMode.QSDC
    seed: int = 0

    def __post_init__(self):
        """Normalize the mode field after initialization."""
        try:
            self.mode = ProtocolMode(self.mode)
        except ValueError:
            raise ConfigInvalidError(f"Unknown protocol mode: '{self.mode}'")

    def validate(self) -> None:
        """
        Check the configuration invariants.

        Raises:
            OddLengthError: If n + c is odd
            ConfigInvalidError: For any other violated invariant
        """
        for name in ('n', 'c', 'k', 'd'):
            if not validate_count(getattr(self, name)):
                raise ConfigInvalidError(f"{name} must be a nonnegative integer, got {getattr(self, name)!r}")
        if (self.n + self.c) % 2:
            raise OddLengthError(f"n + c must be even, got n={self.n}, c={self.c}")
        if self.k < 1:
            raise ConfigInvalidError(f"k must be at least 1, got {self.k}")
        if self.d < 1:
            raise ConfigInvalidError(f"d must be at least 1, got {self.d}")
        for name in ('auth_tolerance', 'integrity_tolerance', 'noise_p', 'storage_noise_p'):
            value = getattr(self, name)
            if value is None and name.endswith('tolerance'):
                continue
            if not validate_probability(value):
                raise ConfigInvalidError(f"{name} must be in [0, 1], got {getattr(self, name)!r}")
        try:
            threshold = float(self.s_threshold)
        except (ValueError, TypeError):
            raise ConfigInvalidError(f"s_threshold must be a number, got {self.s_threshold!r}")
        if not -4.0 <= threshold <= 4.0:
            raise ConfigInvalidError(f"s_threshold must lie in [-4, 4], got {threshold}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigInvalidError(f"seed must be an integer, got {self.seed!r}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ConfigInvalidError(f"seed must lie in [0, 2^64), got {self.seed}")

    @property
    def pair_error_rate(self) -> float:
        """
        Probability that noise changes the Bell label of a pair that made both trips.

        Two transits and one storage epoch on each qubit compose to a single
        depolarizing channel; a uniform Pauli leaves the label unchanged one
        time in four.
        """
        survival = (1 - self.noise_p) ** 2 * (1 - self.storage_noise_p) ** 2
        return 0.75 * (1 - survival)

    def _derived_tolerance(self, positions: int) -> float:
        rate = self.pair_error_rate
        if rate == 0.0 or positions < 1:
            return 0.0
        return min(1.0, rate + NOISE_MARGIN_SIGMAS * math.sqrt(rate * (1 - rate) / positions))

    def auth_tolerance_for(self, positions: int) -> float:
        """Explicit auth_tolerance, or one derived from the noise level when unset."""
        if self.auth_tolerance is not None:
            return self.auth_tolerance
        return self._derived_tolerance(positions)

    def integrity_tolerance_for(self, positions: int) -> float:
        """Explicit integrity_tolerance, or one derived from the noise level when unset."""
        if self.integrity_tolerance is not None:
            return self.integrity_tolerance
        return self._derived_tolerance(positions)

    @property
    def checked_length(self) -> int:
        return self.n + self.c

    @property
    def message_pairs(self) -> int:
        """N = (n + c) / 2 in direct communication; n + c in dialogue mode (one bit per pair)."""
        if self.mode is ProtocolMode.QD:
            return self.checked_length
        return self.checked_length // 2

    @property
    def transport_pairs(self) -> int:
        return self.message_pairs + self.k + 2 * self.d

    @property
    def total_pairs(self) -> int:
        return self.transport_pairs + self.k

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data['mode'] = self.mode.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ProtocolConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalidError(f"Unknown configuration keys: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class ChshEstimate:
    """Sampled CHSH value with the tallies it was computed from."""
    s_value: float
    correlators: Dict[str, float]
    counts: Dict[str, Dict[str, int]]
    rounds_used: int
    qber: Optional[float] = None
    qber_rounds: int = 0
    discarded_rounds: int = 0

    def __post_init__(self):
        """Validate the algebraic bound after initialization."""
        if abs(self.s_value) > 4.0 + TOLERANCE:
            raise ValueError(f"CHSH value {self.s_value} exceeds the algebraic bound 4")

    def to_dict(self) -> Dict[str, Any]:
        return {
            's_value': self.s_value,
            'rounds_used': self.rounds_used,
            'correlators': dict(self.correlators),
            'counts': {cell: dict(tally) for cell, tally in self.counts.items()},
            'qber': self.qber,
            'qber_rounds': self.qber_rounds,
            'discarded_rounds': self.discarded_rounds,
        }


@dataclass(frozen=True)
class AuthResult:
    """Per-position authentication tally and the resulting verdict."""
    pass_count: int
    fail_count: int
    verdict: Verdict

    @property
    def failure_fraction(self) -> float:
        total = self.pass_count + self.fail_count
        return self.fail_count / total if total else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {'pass_count': self.pass_count, 'fail_count': self.fail_count, 'verdict': self.verdict.value}


@dataclass(frozen=True)
class IntegrityResult:
    """Outcome of the public check-bit comparison."""
    checked: int
    mismatches: int
    verdict: Verdict

    def to_dict(self) -> Dict[str, Any]:
        return {'checked': self.checked, 'mismatches': self.mismatches, 'verdict': self.verdict.value}


@dataclass(frozen=True)
class Announcement:
    """One classical-channel message, attributable to a party and a step."""
    index: int
    step: str
    party: str
    kind: str
    payload: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        return {'index': self.index, 'step': self.step, 'party': self.party,
                'kind': self.kind, 'payload': self.payload}


class Transcript:
    """Ordered, append-only log of classical announcements."""

    def __init__(self):
        self._entries: List[Announcement] = []

    def __len__(self) -> int:
        return len(self._entries)

    def announce(self, party: str, step: str, kind: str, **payload: Any) -> Announcement:
        entry = Announcement(len(self._entries), step, party, kind, payload)
        self._entries.append(entry)
        return entry

    @property
    def entries(self) -> Tuple[Announcement, ...]:
        return tuple(self._entries)

    def to_list(self) -> List[Dict[str, Any]]:
        return [entry.to_dict() for entry in self._entries]


@dataclass
class RunReport:
    """Full machine-readable outcome of one protocol run."""
    mode: ProtocolMode
    seed: int
    config: Dict[str, Any]
    adversary: Dict[str, Any]
    inputs: Dict[str, Any]
    s_first: Optional[ChshEstimate] = None
    s_second: Optional[ChshEstimate] = None
    receiver_auth: Optional[AuthResult] = None
    sender_auth: Optional[AuthResult] = None
    integrity: Optional[IntegrityResult] = None
    delivered_message: Optional[MessageBits] = None
    delivered_message_b: Optional[MessageBits] = None
    bit_errors: Optional[int] = None
    abort: Optional[AbortReason] = None
    transcript: Transcript = field(default_factory=Transcript)
    pair_lifecycle: Dict[str, int] = field(default_factory=dict)

    @property
    def qber_first(self) -> Optional[float]:
        return self.s_first.qber if self.s_first else None

    @property
    def qber_second(self) -> Optional[float]:
        return self.s_second.qber if self.s_second else None

    @property
    def delivered(self) -> bool:
        return self.abort is None

    def to_dict(self) -> Dict[str, Any]:
        """
        Serialize the report (schema_version 1).

        Returns:
            JSON-compatible dictionary; stages the run never reached are None
        """
        return {
            'schema_version': SCHEMA_VERSION,
            'mode': self.mode.value,
            'seed': self.seed,
            'config': dict(self.config),
            'adversary': dict(self.adversary),
            'inputs': dict(self.inputs),
            's_first': self.s_first.to_dict() if self.s_first else None,
            's_second': self.s_second.to_dict() if self.s_second else None,
            'qber_first': self.qber_first,
            'qber_second': self.qber_second,
            'receiver_auth': self.receiver_auth.to_dict() if self.receiver_auth else None,
            'sender_auth': self.sender_auth.to_dict() if self.sender_auth else None,
            'integrity': self.integrity.to_dict() if self.integrity else None,
            'delivered_message': self.delivered_message.to_hex() if self.delivered_message else None,
            'delivered_message_b': self.delivered_message_b.to_hex() if self.delivered_message_b else None,
            'bit_errors': self.bit_errors,
            'abort': self.abort.value if self.abort else None,
            'transcript': self.transcript.to_list(),
            'pair_lifecycle': dict(self.pair_lifecycle),
        }
