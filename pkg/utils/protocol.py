"""
Party-level protocol steps for DI-QSDC and DI-QD.

This module holds the operations Alice and Bob perform at each step of a run:
check-bit insertion, EPR preparation, the two CHSH security gates, message and
identity encoding, mutual authentication, decoding and the integrity check.
Every encoding and decoding rule is derived from the qcore simulator rather
than hard-coded, so the rule tables can be regenerated and audited.

Orchestration of a whole run lives in session.py.
"""

import functools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data_models import (
    AuthResult,
    ChshEstimate,
    CheckedMessage,
    Identity,
    IntegrityResult,
    Lifecycle,
    MessageBits,
    PairRegistry,
    PairRole,
    Partition,
    ProtocolConfig,
    SequenceLayout,
    Verdict,
    remove_positions,
)
from .errors import (
    ConfigInvalidError,
    InconsistentTransitionError,
    InsufficientRoundsError,
    OddLengthError,
    SizeMismatchError,
)
from .qcore import (
    COVER_OPS,
    TOLERANCE,
    BellLabel,
    PairState,
    RandomSource,
    RotatedBasis,
    Side,
    SingleQubitOp,
    apply_to_side,
    bell_label_of,
    bell_probabilities,
    bell_state,
    correlator,
    measure_bell,
)

# Set up logging
logger = logging.getLogger(__name__)

# Measurement angles: Alice A0, A1, A2 and Bob B1, B2
ALICE_ANGLES: Tuple[float, ...] = (np.pi / 4, 0.0, np.pi / 2)
BOB_ANGLES: Tuple[float, ...] = (np.pi / 4, -np.pi / 4)

# Rows are the conjugated +1 and -1 basis vectors of each angle
_ALICE_BRAS = np.array([np.conj(RotatedBasis(theta).vectors) for theta in ALICE_ANGLES])
_BOB_BRAS = np.array([np.conj(RotatedBasis(theta).vectors) for theta in BOB_ANGLES])

# Frame correction: σx on side B for Φ±, sign flip on side B for Φ⁻ and Ψ⁻
_PHI_LABELS = (BellLabel.PHI_PLUS, BellLabel.PHI_MINUS)
_NEGATIVE_FRAME = (BellLabel.PHI_MINUS, BellLabel.PSI_MINUS)

# CHSH cells (Alice angle index, Bob angle index) and their sign in S
CHSH_CELLS: Dict[str, Tuple[int, int, int]] = {
    "a1b1": (1, 0, 1),
    "a2b1": (2, 0, 1),
    "a1b2": (1, 1, 1),
    "a2b2": (2, 1, -1),
}

_PAULI_FOR_BITS = {
    "00": SingleQubitOp.ID,
    "01": SingleQubitOp.SIGMA_X,
    "10": SingleQubitOp.I_SIGMA_Y,
    "11": SingleQubitOp.SIGMA_Z,
}

_BELL_FOR_ID_BITS = {
    "00": BellLabel.PHI_PLUS,
    "01": BellLabel.PHI_MINUS,
    "10": BellLabel.PSI_PLUS,
    "11": BellLabel.PSI_MINUS,
}

# Dialogue mode: Bob's bit selects a Bell family, Alice's bit a pair of Paulis
QD_FAMILIES: Dict[int, Tuple[BellLabel, BellLabel]] = {
    0: (BellLabel.PHI_PLUS, BellLabel.PSI_PLUS),
    1: (BellLabel.PHI_MINUS, BellLabel.PSI_MINUS),
}
QD_OPS: Dict[int, Tuple[SingleQubitOp, SingleQubitOp]] = {
    0: (SingleQubitOp.ID, SingleQubitOp.SIGMA_Z),
    1: (SingleQubitOp.SIGMA_X, SingleQubitOp.I_SIGMA_Y),
}

ChannelHook = Callable[[PairState, Side], PairState]


@dataclass
class EncodingRecord:
    """Alice's view of step 5: the outgoing layout plus the private encoding choices."""
    layout: SequenceLayout
    message_ops: Dict[int, SingleQubitOp]
    covers: Dict[int, SingleQubitOp]
    message_pairs: List[int] = field(default_factory=list)
    sender_id_pairs: List[int] = field(default_factory=list)
    second_check_pairs: List[int] = field(default_factory=list)
    identity_pairs: List[int] = field(default_factory=list)

    def cover_sequence(self) -> List[SingleQubitOp]:
        return [self.covers[pid] for pid in self.identity_pairs]


def _normalize_bits(bits: str) -> str:
    bits = str(bits)
    if bits not in _PAULI_FOR_BITS:
        raise ValueError(f"Expected a 2-bit value in {{00, 01, 10, 11}}, got '{bits}'")
    return bits


def _normalize_bit(bit) -> int:
    value = int(bit)
    if value not in (0, 1):
        raise ValueError(f"Expected a single bit, got {bit!r}")
    return value


def insert_check_bits(m: MessageBits, c: int, rng: RandomSource) -> CheckedMessage:
    """
    Insert c random check bits into a message at random distinct positions.

    Args:
        m: Message to protect
        c: Number of check bits
        rng: Random source for positions and values

    Returns:
        CheckedMessage of length n + c recording positions and values
    """
    if c < 0:
        raise ConfigInvalidError(f"Check-bit count must be nonnegative, got {c}")
    total = m.n + c
    if total % 2:
        raise OddLengthError(f"n + c must be even, got n={m.n}, c={c}")

    positions = sorted(rng.sample(range(total), c))
    values = rng.bits(c)
    checks = dict(zip(positions, values))
    message_iter = iter(m.bits)
    bits = "".join(checks[i] if i in checks else next(message_iter) for i in range(total))
    return CheckedMessage(bits, tuple(positions), values)


def pauli_for_bits(bits: str) -> SingleQubitOp:
    """Encoding Pauli for a 2-bit value: 00→I, 01→σx, 10→iσy, 11→σz."""
    return _PAULI_FOR_BITS[_normalize_bits(bits)]


def bell_for_id_bits(bits: str) -> BellLabel:
    """Identity-carrier Bell state for a 2-bit value: 00→Φ⁺, 01→Φ⁻, 10→Ψ⁺, 11→Ψ⁻."""
    return _BELL_FOR_ID_BITS[_normalize_bits(bits)]


@functools.lru_cache(maxsize=None)
def transition(initial: BellLabel, op: SingleQubitOp) -> Optional[BellLabel]:
    """Bell state reached by applying op to side A of bell_state(initial), or None."""
    return bell_label_of(apply_to_side(bell_state(initial), Side.A, op))


@functools.lru_cache(maxsize=None)
def bits_for_transition(initial: BellLabel, final: BellLabel) -> str:
    """
    Decode the 2-bit value whose Pauli maps initial to final.

    Args:
        initial: Prepared Bell state
        final: Measured Bell state

    Returns:
        The unique 2-bit value
    """
    for bits, op in _PAULI_FOR_BITS.items():
        if transition(initial, op) is final:
            return bits
    raise InconsistentTransitionError(f"No Pauli maps {initial.value} to {final.value}")


@functools.lru_cache(maxsize=None)
def transition_table() -> Tuple[Tuple[BellLabel, str, SingleQubitOp, BellLabel], ...]:
    """Encoding/decoding rows (initial, bits, Pauli, final) for all 16 combinations."""
    return tuple(
        (initial, bits, op, transition(initial, op))
        for initial in BellLabel
        for bits, op in _PAULI_FOR_BITS.items()
    )


# CHSH estimation

def frame_correct(state: PairState, label: BellLabel) -> Tuple[PairState, int]:
    """
    Bring a pair into the Ψ⁺ correlation frame.

    Φ± pairs get σx on side B; Φ⁻ and Ψ⁻ additionally flip the sign of
    side-B outcomes, returned as the second element.
    """
    if label in _PHI_LABELS:
        state = apply_to_side(state, Side.B, SingleQubitOp.SIGMA_X)
    sign = -1 if label in _NEGATIVE_FRAME else 1
    return state, sign


def analytic_chsh(state: PairState, label: BellLabel) -> float:
    """
    Sampling-free frame-corrected CHSH value of a single pair.

    Args:
        state: Current pair state
        label: Label the pair was prepared in (selects the frame correction)

    Returns:
        S computed from exact correlators
    """
    corrected, sign = frame_correct(state, label)
    return sum(
        cell_sign * sign * correlator(corrected, ALICE_ANGLES[a], BOB_ANGLES[b])
        for a, b, cell_sign in CHSH_CELLS.values()
    )


def ensemble_chsh(pairs: Sequence[Tuple[PairState, BellLabel]]) -> float:
    """Mean analytic CHSH value over (state, prepared label) pairs."""
    if not pairs:
        raise InsufficientRoundsError("Cannot evaluate CHSH on an empty ensemble")
    return float(np.mean([analytic_chsh(state, label) for state, label in pairs]))


def chsh_estimate(pairs: Sequence[Tuple[PairState, BellLabel]], rng: RandomSource) -> ChshEstimate:
    """
    Sampled CHSH value from randomized rotated measurements.

    Alice draws one of three angles, Bob one of two. Rounds with Alice at A1
    or A2 feed the correlators; (A0, B1) rounds estimate QBER; (A0, B2) rounds
    are discarded. All rounds are sampled at once from the exact joint outcome
    distribution of each pair, which equals measuring A then B.

    Args:
        pairs: (state, prepared label) for each tested pair
        rng: Random source for basis choices and outcomes

    Returns:
        ChshEstimate

    Raises:
        InsufficientRoundsError: If any correlator cell received no rounds
    """
    rounds = len(pairs)
    generator = rng.generator
    a_index = generator.integers(len(ALICE_ANGLES), size=rounds)
    b_index = generator.integers(len(BOB_ANGLES), size=rounds)
    draws = generator.random(rounds)

    agree = np.zeros(rounds, dtype=bool)
    if rounds:
        psi = np.stack([state.amp for state, _ in pairs]).reshape(rounds, 2, 2)
        labels = [label for _, label in pairs]
        # Frame correction: σx on side B swaps the side-B amplitudes of Φ± pairs
        flip = np.array([label in _PHI_LABELS for label in labels])
        psi[flip] = psi[flip][:, :, ::-1]
        sign = np.array([-1 if label in _NEGATIVE_FRAME else 1 for label in labels])

        # amplitudes[n, i, j] = <u_i| ⊗ <v_j| psi_n for outcome i of A and j of B
        amplitudes = np.einsum('nia,nab,njb->nij', _ALICE_BRAS[a_index], psi, _BOB_BRAS[b_index])
        probabilities = (np.abs(amplitudes) ** 2).reshape(rounds, 4)
        cumulative = np.cumsum(probabilities, axis=1)
        joint = np.minimum((cumulative < (draws * cumulative[:, -1])[:, None]).sum(axis=1), 3)
        # Joint index 0 and 3 are equal outcomes (+,+) and (-,-)
        equal = (joint == 0) | (joint == 3)
        agree = np.where(sign == 1, equal, ~equal)

    tallies = {}
    for cell, (a, b, _) in CHSH_CELLS.items():
        in_cell = (a_index == a) & (b_index == b)
        agreed = int(np.count_nonzero(agree & in_cell))
        tallies[cell] = {"agree": agreed, "disagree": int(np.count_nonzero(in_cell)) - agreed}

    qber_mask = (a_index == 0) & (b_index == 0)
    qber_rounds = int(np.count_nonzero(qber_mask))
    qber_disagree = int(np.count_nonzero(qber_mask & ~agree))
    discarded = int(np.count_nonzero((a_index == 0) & (b_index != 0)))

    empty = [cell for cell, tally in tallies.items() if tally["agree"] + tally["disagree"] == 0]
    if empty:
        raise InsufficientRoundsError(
            f"CHSH cells without rounds: {', '.join(empty)} ({rounds} pairs tested)"
        )

    correlators = {
        cell: (tally["agree"] - tally["disagree"]) / (tally["agree"] + tally["disagree"])
        for cell, tally in tallies.items()
    }
    s_value = sum(CHSH_CELLS[cell][2] * value for cell, value in correlators.items())
    qber = qber_disagree / qber_rounds if qber_rounds else None
    return ChshEstimate(
        s_value=float(s_value),
        correlators=correlators,
        counts=tallies,
        rounds_used=rounds,
        qber=qber,
        qber_rounds=qber_rounds,
        discarded_rounds=discarded,
    )


def _gate(s_value: float, threshold: float) -> Verdict:
    return Verdict.CONTINUE if s_value > threshold else Verdict.ABORT


def _tolerance_verdict(failures: int, total: int, tolerance: float) -> Verdict:
    fraction = failures / total if total else 0.0
    return Verdict.CONTINUE if fraction <= tolerance + TOLERANCE else Verdict.ABORT


# Preparation and transmission

def prepare_pairs(config: ProtocolConfig, identity_labels: Sequence[BellLabel], rng: RandomSource,
                  message_labels: Optional[Sequence[BellLabel]] = None) -> Tuple[PairRegistry, SequenceLayout]:
    """
    Prepare the transport and identity-carrier EPR pairs and lay out Q_A.

    Args:
        config: Protocol configuration
        identity_labels: Bell label of each identity-carrier pair
        rng: Random source
        message_labels: Dialogue mode only, the labels encoding Bob's checked message

    Returns:
        (registry, layout of the side-A qubits sent in the first transmission)
    """
    registry = PairRegistry()
    label_rng = rng.substream("labels")
    layout_rng = rng.substream("layout")
    labels = list(BellLabel)

    if message_labels is None:
        transport = [
            registry.add_pair(label, PairRole.TRANSPORT, bell_state(label))
            for label in (label_rng.choice(labels) for _ in range(config.transport_pairs))
        ]
        s_a = [(pid, Side.A) for pid in transport]
    else:
        message = [
            registry.add_pair(label, PairRole.TRANSPORT, bell_state(label), Partition.MESSAGE)
            for label in message_labels
        ]
        extra_count = config.transport_pairs - len(message)
        extra = [
            registry.add_pair(label, PairRole.TRANSPORT, bell_state(label))
            for label in (label_rng.choice(labels) for _ in range(extra_count))
        ]
        s_a = SequenceLayout.interleave(
            [(pid, Side.A) for pid in message], [(pid, Side.A) for pid in extra], layout_rng
        ).slots

    identity = [
        registry.add_pair(label, PairRole.IDENTITY_CARRIER, bell_state(label))
        for label in identity_labels
    ]
    layout = SequenceLayout.interleave(s_a, [(pid, Side.A) for pid in identity], layout_rng)
    logger.info(f"Prepared {len(registry)} EPR pairs ({len(identity)} identity carriers)")
    return registry, layout


def bob_prepare(config: ProtocolConfig, id_b: Identity, rng: RandomSource,
                message_labels: Optional[Sequence[BellLabel]] = None) -> Tuple[PairRegistry, SequenceLayout]:
    """
    Bob's preparation: random transport pairs plus identity pairs encoding Id_B.

    Raises:
        ConfigInvalidError: If the configuration is invalid or Id_B has the wrong length
    """
    config.validate()
    if id_b.k != config.k:
        raise ConfigInvalidError(f"Id_B holds {id_b.k} bit pairs but k = {config.k}")
    return prepare_pairs(config, [bell_for_id_bits(bits) for bits in id_b.pairs], rng, message_labels)


def _transmit(registry: PairRegistry, layout: SequenceLayout, in_transit: Lifecycle,
              channel_hook: ChannelHook) -> None:
    for pair_id, side in layout.slots:
        registry.set_lifecycle(pair_id, in_transit)
        registry.update_state(pair_id, channel_hook(registry.state(pair_id), side))
        registry.set_lifecycle(pair_id, Lifecycle.HELD)


def first_transmission(registry: PairRegistry, layout: SequenceLayout, channel_hook: ChannelHook) -> None:
    """Send Q_A from Bob to Alice, passing every qubit through the channel in slot order."""
    _transmit(registry, layout, Lifecycle.IN_TRANSIT_FIRST, channel_hook)


def second_transmission(registry: PairRegistry, layout: SequenceLayout, channel_hook: ChannelHook) -> None:
    """Send Q'_A from Alice back to Bob."""
    _transmit(registry, layout, Lifecycle.IN_TRANSIT_SECOND, channel_hook)


def measure_pairs(registry: PairRegistry, pair_ids: Sequence[int], rng: RandomSource) -> List[BellLabel]:
    """Bell-measure and consume the given pairs, in order."""
    return [measure_bell(registry.consume(pid), rng) for pid in pair_ids]


# Security checks

def first_security_check(registry: PairRegistry, layout: SequenceLayout, config: ProtocolConfig,
                         rng: RandomSource) -> Tuple[ChshEstimate, Verdict]:
    """
    CHSH test on d transport pairs chosen uniformly after the first transmission.

    The chosen positions are recorded in layout.announced_positions under
    "first_check"; the tested pairs are consumed and discarded.

    Args:
        registry: Pair registry
        layout: Layout of the first transmission
        config: Protocol configuration (d and s_threshold)
        rng: Random source

    Returns:
        (estimate, verdict)
    """
    candidates = registry.pair_ids(role=PairRole.TRANSPORT, partition=Partition.UNASSIGNED, live_only=True)
    if config.d > len(candidates):
        raise ConfigInvalidError(f"d = {config.d} exceeds the {len(candidates)} available transport pairs")

    chosen = sorted(rng.sample(candidates, config.d))
    for pid in chosen:
        registry.set_partition(pid, Partition.FIRST_CHECK)
    layout.announce("first_check", chosen)

    tested = [(registry.consume(pid), registry.prepared_label(pid)) for pid in chosen]
    estimate = chsh_estimate(tested, rng.substream("chsh"))
    for pid in chosen:
        registry.discard(pid)

    verdict = _gate(estimate.s_value, config.s_threshold)
    logger.info(f"First CHSH check: S = {estimate.s_value:.4f} over {estimate.rounds_used} pairs -> {verdict.value}")
    return estimate, verdict


def second_security_check(registry: PairRegistry, config: ProtocolConfig,
                          rng: RandomSource) -> Tuple[ChshEstimate, Verdict]:
    """
    CHSH test on the D_A pairs after the second transmission.

    Raises:
        InsufficientRoundsError: If D_A is empty or too small to fill every cell
    """
    chosen = registry.pair_ids(partition=Partition.SECOND_CHECK, live_only=True)
    tested = [(registry.consume(pid), registry.prepared_label(pid)) for pid in chosen]
    estimate = chsh_estimate(tested, rng.substream("chsh"))
    verdict = _gate(estimate.s_value, config.s_threshold)
    logger.info(f"Second CHSH check: S = {estimate.s_value:.4f} over {estimate.rounds_used} pairs -> {verdict.value}")
    return estimate, verdict


# Encoding

def _encode(registry: PairRegistry, message_ops: Dict[int, SingleQubitOp], remaining: Sequence[int],
            id_a: Identity, rng: RandomSource) -> EncodingRecord:
    identity_pairs = registry.pair_ids(role=PairRole.IDENTITY_CARRIER, live_only=True)
    if id_a.k != len(identity_pairs):
        raise SizeMismatchError(f"Id_A holds {id_a.k} bit pairs but {len(identity_pairs)} identity pairs are live")

    sender_id_pairs = sorted(remaining[:id_a.k])
    second_check_pairs = sorted(remaining[id_a.k:])
    message_pairs = sorted(message_ops)

    for pid, op in message_ops.items():
        registry.set_partition(pid, Partition.MESSAGE)
        registry.update_state(pid, apply_to_side(registry.state(pid), Side.A, op))
    for pid, bits in zip(sender_id_pairs, id_a.pairs):
        registry.set_partition(pid, Partition.SENDER_ID)
        registry.update_state(pid, apply_to_side(registry.state(pid), Side.A, pauli_for_bits(bits)))
    for pid in second_check_pairs:
        registry.set_partition(pid, Partition.SECOND_CHECK)

    covers = {}
    for pid in identity_pairs:
        covers[pid] = rng.choice(COVER_OPS)
        registry.update_state(pid, apply_to_side(registry.state(pid), Side.A, covers[pid]))

    transport = registry.pair_ids(role=PairRole.TRANSPORT, live_only=True)
    layout = SequenceLayout.interleave(
        [(pid, Side.A) for pid in transport], [(pid, Side.A) for pid in identity_pairs], rng
    )
    return EncodingRecord(
        layout=layout,
        message_ops=dict(message_ops),
        covers=covers,
        message_pairs=message_pairs,
        sender_id_pairs=sender_id_pairs,
        second_check_pairs=second_check_pairs,
        identity_pairs=identity_pairs,
    )


def alice_encode(registry: PairRegistry, m_prime: CheckedMessage, id_a: Identity,
                 rng: RandomSource) -> EncodingRecord:
    """
    Alice's step 5: partition, Pauli-encode message and identity, cover I_A.

    The live transport pairs are split uniformly into M_A (N pairs), C_A (k)
    and D_A (d, left untouched).

    Args:
        registry: Pair registry after the first security check
        m_prime: Checked message of length 2N
        id_a: Alice's identity (2k bits)
        rng: Random source

    Returns:
        EncodingRecord whose layout is Q'_A

    Raises:
        SizeMismatchError: If m_prime or id_a do not fit the registry
    """
    live = registry.pair_ids(role=PairRole.TRANSPORT, partition=Partition.UNASSIGNED, live_only=True)
    k = len(registry.pair_ids(role=PairRole.IDENTITY_CARRIER, live_only=True))
    d = len(registry.pair_ids(partition=Partition.FIRST_CHECK))
    n_pairs = len(live) - k - d
    if n_pairs < 0 or len(m_prime.bits) != 2 * n_pairs:
        raise SizeMismatchError(f"Checked message has {len(m_prime.bits)} bits; the registry carries {2 * max(n_pairs, 0)}")
    if len(id_a.bits) != 2 * k:
        raise SizeMismatchError(f"Id_A has {len(id_a.bits)} bits; the registry carries {2 * k}")

    shuffled = [live[i] for i in rng.permutation(len(live))]
    message_pairs = sorted(shuffled[:n_pairs])
    message_ops = {pid: pauli_for_bits(bits) for pid, bits in zip(message_pairs, m_prime.pairs)}
    return _encode(registry, message_ops, shuffled[n_pairs:], id_a, rng)


def qd_alice_encode(registry: PairRegistry, m_prime_a: CheckedMessage, id_a: Identity,
                    rng: RandomSource) -> EncodingRecord:
    """
    Dialogue-mode step 5: one of Alice's bits per message pair via qd_alice_op.

    Message pairs are the ones Bob pre-assigned; the remaining k + d live
    transport pairs split uniformly into C_A and D_A.
    """
    message_pairs = registry.pair_ids(partition=Partition.MESSAGE, live_only=True)
    if len(m_prime_a.bits) != len(message_pairs):
        raise SizeMismatchError(
            f"Checked message has {len(m_prime_a.bits)} bits; the registry carries {len(message_pairs)} message pairs"
        )
    op_rng = rng.substream("qd-ops")
    message_ops = {pid: qd_alice_op(bit, op_rng) for pid, bit in zip(message_pairs, m_prime_a.bits)}
    live = registry.pair_ids(role=PairRole.TRANSPORT, partition=Partition.UNASSIGNED, live_only=True)
    shuffled = [live[i] for i in rng.permutation(len(live))]
    return _encode(registry, message_ops, shuffled, id_a, rng)


# Authentication

@functools.lru_cache(maxsize=None)
def allowed_outcomes(truth: BellLabel, cover: SingleQubitOp) -> frozenset:
    """Bell labels Bob can observe on an identity pair prepared as truth and covered by cover."""
    probabilities = bell_probabilities(apply_to_side(bell_state(truth), Side.A, cover))
    return frozenset(label for label, p in probabilities.items() if p > TOLERANCE)


def verify_receiver(id_b: Identity, covers: Sequence[SingleQubitOp], announced: Sequence[BellLabel],
                    tolerance: float) -> AuthResult:
    """
    Alice authenticates Bob from the announced identity-pair measurements.

    Args:
        id_b: Bob's identity as known to Alice
        covers: Alice's cover op for each identity pair, in order
        announced: Bob's announced Bell label for each identity pair
        tolerance: Largest failure fraction still accepted

    Returns:
        AuthResult
    """
    truths = [bell_for_id_bits(bits) for bits in id_b.pairs]
    if not len(truths) == len(covers) == len(announced):
        raise SizeMismatchError(
            f"Receiver authentication needs one cover and one result per identity pair "
            f"({len(truths)} pairs, {len(covers)} covers, {len(announced)} results)"
        )
    passes = sum(label in allowed_outcomes(truth, cover) for truth, cover, label in zip(truths, covers, announced))
    failures = len(truths) - passes
    return AuthResult(passes, failures, _tolerance_verdict(failures, len(truths), tolerance))


def verify_sender(measured: Sequence[BellLabel], prepared: Sequence[BellLabel], id_a: Identity,
                  tolerance: float) -> AuthResult:
    """
    Bob authenticates Alice from the C_A measurement results.

    Args:
        measured: Bell labels Bob observed on the C_A pairs
        prepared: Labels Bob prepared those pairs in
        id_a: Alice's identity as known to Bob
        tolerance: Largest failure fraction still accepted

    Returns:
        AuthResult
    """
    if not len(measured) == len(prepared) == id_a.k:
        raise SizeMismatchError(
            f"Sender authentication needs {id_a.k} results, got {len(measured)} measured / {len(prepared)} prepared"
        )
    passes = sum(
        transition(initial, pauli_for_bits(bits)) is observed
        for initial, bits, observed in zip(prepared, id_a.pairs, measured)
    )
    failures = id_a.k - passes
    return AuthResult(passes, failures, _tolerance_verdict(failures, id_a.k, tolerance))


# Decoding

def bob_decode(registry: PairRegistry, message_pairs: Sequence[int], rng: RandomSource) -> str:
    """Bell-measure the M_A pairs and decode two bits per pair with the transition rules."""
    finals = measure_pairs(registry, message_pairs, rng)
    return "".join(
        bits_for_transition(registry.prepared_label(pid), final)
        for pid, final in zip(message_pairs, finals)
    )


def verify_integrity(decoded: str, check_positions: Sequence[int], check_values: str,
                     tolerance: float) -> Tuple[MessageBits, IntegrityResult]:
    """
    Compare decoded bits with the announced check bits and strip them.

    Args:
        decoded: Decoded checked message
        check_positions: Announced check positions
        check_values: Announced check values
        tolerance: Largest mismatch fraction still accepted

    Returns:
        (recovered message, IntegrityResult)
    """
    mismatches = sum(decoded[pos] != value for pos, value in zip(check_positions, check_values))
    checked = len(check_positions)
    result = IntegrityResult(checked, mismatches, _tolerance_verdict(mismatches, checked, tolerance))
    return MessageBits(remove_positions(decoded, check_positions)), result


# Dialogue mode

def qd_prepare_bit(bit, rng: RandomSource) -> BellLabel:
    """Bob's bit 0 → Φ⁺ or Ψ⁺, bit 1 → Φ⁻ or Ψ⁻, uniformly."""
    return rng.choice(QD_FAMILIES[_normalize_bit(bit)])


def qd_alice_op(bit, rng: RandomSource) -> SingleQubitOp:
    """Alice's bit 0 → I or σz, bit 1 → σx or iσy, uniformly."""
    return rng.choice(QD_OPS[_normalize_bit(bit)])


def _family_bit(label: BellLabel) -> int:
    return next(bit for bit, family in QD_FAMILIES.items() if label in family)


def _op_bit(op: SingleQubitOp) -> int:
    for bit, ops in QD_OPS.items():
        if op in ops:
            return bit
    raise InconsistentTransitionError(f"{op.value} is not a dialogue-mode encoding operator")


def qd_decode(prepared: Optional[BellLabel], final: BellLabel,
              alice_op: Optional[SingleQubitOp] = None) -> Tuple[int, int]:
    """
    Recover both parties' bits from one dialogue-mode pair.

    Bob's view passes prepared (alice_op unknown); Alice's view passes
    alice_op with prepared=None and reconstructs the prepared state.

    Args:
        prepared: Label Bob prepared, or None when decoding as Alice
        final: Label Bob measured and announced
        alice_op: Operator Alice applied, or None when decoding as Bob

    Returns:
        (alice_bit, bob_bit)

    Raises:
        InconsistentTransitionError: If no encoding rule yields this transition
    """
    if prepared is None and alice_op is None:
        raise ValueError("qd_decode needs the prepared label, Alice's operator, or both")

    if prepared is None:
        alice_bit = _op_bit(alice_op)
        candidates = [label for label in BellLabel if transition(label, alice_op) is final]
        if len(candidates) != 1:
            raise InconsistentTransitionError(f"{alice_op.value} cannot produce {final.value}")
        return alice_bit, _family_bit(candidates[0])

    alice_bit = _op_bit(pauli_for_bits(bits_for_transition(prepared, final)))
    if alice_op is not None:
        if _op_bit(alice_op) != alice_bit or transition(prepared, alice_op) is not final:
            raise InconsistentTransitionError(
                f"{alice_op.value} does not map {prepared.value} to {final.value}"
            )
    return alice_bit, _family_bit(prepared)


@functools.lru_cache(maxsize=None)
def qd_table() -> Tuple[Tuple[int, int, BellLabel, SingleQubitOp, BellLabel], ...]:
    """Dialogue-mode rows (alice_bit, bob_bit, prepared, op, final) for all 16 combinations."""
    return tuple(
        (alice_bit, bob_bit, prepared, op, transition(prepared, op))
        for alice_bit in (0, 1)
        for bob_bit in (0, 1)
        for prepared in QD_FAMILIES[bob_bit]
        for op in QD_OPS[alice_bit]
    )
