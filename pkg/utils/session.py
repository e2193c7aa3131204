"""
End-to-end orchestration of DI-QSDC and DI-QD runs.

A run threads one RandomSource through named substreams per step, records
every classical announcement in the transcript, and stops at the first failed
verdict. Report fields for stages the run never reached stay None.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

from .adversary import (
    AdversaryKind,
    AdversarySpec,
    ChannelModel,
    Transmission,
    impersonate_alice_encode,
    impersonate_bob_prepare,
    storage_epoch,
    transit,
)
from .data_models import (
    AbortReason,
    CheckedMessage,
    Identity,
    IntegrityResult,
    MessageBits,
    PairRegistry,
    PairRole,
    Partition,
    ProtocolConfig,
    ProtocolMode,
    RunReport,
    SequenceLayout,
    Transcript,
    Verdict,
)
from .errors import ConfigInvalidError
from .protocol import (
    EncodingRecord,
    alice_encode,
    bob_decode,
    bob_prepare,
    first_security_check,
    first_transmission,
    insert_check_bits,
    measure_pairs,
    qd_alice_encode,
    qd_decode,
    qd_prepare_bit,
    second_security_check,
    second_transmission,
    verify_integrity,
    verify_receiver,
    verify_sender,
)
from .qcore import PairState, RandomSource, Side

# Set up logging
logger = logging.getLogger(__name__)

ALICE = "Alice"
BOB = "Bob"

# Party that announces each abort
_ABORTING_PARTY = {
    AbortReason.CHSH_FIRST_FAILED: ALICE,
    AbortReason.RECEIVER_AUTH_FAILED: ALICE,
    AbortReason.CHSH_SECOND_FAILED: BOB,
    AbortReason.SENDER_AUTH_FAILED: BOB,
    AbortReason.INTEGRITY_FAILED: BOB,
}


@dataclass
class _Run:
    """Per-run state shared by the step helpers."""
    config: ProtocolConfig
    adversary: AdversarySpec
    channel: ChannelModel
    rng: RandomSource
    report: RunReport
    registry: Optional[PairRegistry] = None

    @property
    def transcript(self) -> Transcript:
        return self.report.transcript

    def channel_hook(self, transmission: Transmission):
        stream = self.rng.substream(f"channel-{transmission.value}")

        def hook(state: PairState, side: Side) -> PairState:
            return transit(state, side, self.channel, self.adversary, stream, transmission)
        return hook

    def finish(self) -> RunReport:
        if self.registry is not None:
            self.report.pair_lifecycle = self.registry.lifecycle_counts()
        return self.report

    def abort(self, reason: AbortReason) -> RunReport:
        self.report.abort = reason
        self.transcript.announce(_ABORTING_PARTY[reason], "abort", "abort", reason=reason.value)
        # Pairs still held after an abort are never used
        if self.registry is not None:
            dropped = self.registry.discard_live()
            logger.debug(f"Discarded {dropped} unused pairs")
        logger.info(f"Run aborted: {reason.value}")
        return self.finish()


def _hamming(a: str, b: str) -> int:
    return sum(x != y for x, y in zip(a, b)) + abs(len(a) - len(b))


def _check_inputs(config: ProtocolConfig, id_a: Identity, id_b: Identity, *messages: MessageBits) -> None:
    config.validate()
    for name, identity in (("Id_A", id_a), ("Id_B", id_b)):
        if identity.k != config.k:
            raise ConfigInvalidError(f"{name} holds {identity.k} bit pairs but k = {config.k}")
    for message in messages:
        if message.n != config.n:
            raise ConfigInvalidError(f"Message has {message.n} bits but n = {config.n}")


def _start(config: ProtocolConfig, id_a: Identity, id_b: Identity, m: MessageBits,
           m_b: Optional[MessageBits], adversary: Optional[AdversarySpec],
           rng: Optional[RandomSource]) -> _Run:
    adversary = adversary or AdversarySpec()
    inputs = {
        'id_a': id_a.bits,
        'id_b': id_b.bits,
        'message_hex': m.to_hex(),
        'message_b_hex': m_b.to_hex() if m_b is not None else None,
    }
    report = RunReport(
        mode=config.mode,
        seed=config.seed,
        config=config.to_dict(),
        adversary=adversary.to_dict(),
        inputs=inputs,
    )
    return _Run(config, adversary, ChannelModel.from_config(config), rng or RandomSource(config.seed), report)


def _prepare(run: _Run, id_b: Identity, message_labels=None) -> Tuple[PairRegistry, SequenceLayout]:
    """Step 2: Bob (or an impersonator) prepares and sends Q_A."""
    prep_rng = run.rng.substream("bob-prepare")
    if run.adversary.kind is AdversaryKind.IMPERSONATE_BOB:
        known = id_b if run.adversary.knows_id_b else None
        registry, layout = impersonate_bob_prepare(run.config, prep_rng, known, message_labels)
    else:
        registry, layout = bob_prepare(run.config, id_b, prep_rng, message_labels)
    run.registry = registry

    identity_ids = registry.pair_ids(role=PairRole.IDENTITY_CARRIER)
    run.transcript.announce(BOB, "2", "identity_positions", positions=list(layout.announce("identity", identity_ids)))
    if message_labels is not None:
        random_ids = registry.pair_ids(role=PairRole.TRANSPORT, partition=Partition.UNASSIGNED)
        run.transcript.announce(BOB, "2", "random_pair_positions", positions=list(layout.announce("random", random_ids)))
    first_transmission(registry, layout, run.channel_hook(Transmission.FIRST))
    return registry, layout


def _first_check(run: _Run, registry: PairRegistry, layout: SequenceLayout) -> Verdict:
    """Steps 3 and 4: CHSH on d transport pairs, then store the rest."""
    estimate, verdict = first_security_check(registry, layout, run.config, run.rng.substream("first-check"))
    run.transcript.announce(ALICE, "3b", "check_positions", positions=list(layout.announced_positions["first_check"]))
    run.transcript.announce(ALICE, "3d", "chsh_value", s_value=estimate.s_value)
    run.report.s_first = estimate
    if verdict is Verdict.CONTINUE:
        storage_epoch(registry, run.channel, run.rng.substream("storage"))
    return verdict


def _authenticate_and_check(run: _Run, registry: PairRegistry, record: EncodingRecord,
                            id_a: Identity, id_b: Identity) -> Optional[AbortReason]:
    """Step 6: receiver authentication, second CHSH check, sender authentication."""
    layout = record.layout
    run.transcript.announce(ALICE, "6a", "identity_positions",
                            positions=list(layout.announce("identity", record.identity_pairs)))
    announced = measure_pairs(registry, record.identity_pairs, run.rng.substream("identity-measure"))
    run.transcript.announce(BOB, "6a", "identity_results", labels=[label.value for label in announced])
    receiver = verify_receiver(id_b, record.cover_sequence(), announced,
                               run.config.auth_tolerance_for(len(announced)))
    run.report.receiver_auth = receiver
    run.transcript.announce(ALICE, "6a", "receiver_verdict", verdict=receiver.verdict.value)
    if receiver.verdict is Verdict.ABORT:
        return AbortReason.RECEIVER_AUTH_FAILED

    run.transcript.announce(ALICE, "6b", "check_positions",
                            positions=list(layout.announce("second_check", record.second_check_pairs)))
    estimate, verdict = second_security_check(registry, run.config, run.rng.substream("second-check"))
    run.transcript.announce(BOB, "6b", "chsh_value", s_value=estimate.s_value)
    run.report.s_second = estimate
    if verdict is Verdict.ABORT:
        return AbortReason.CHSH_SECOND_FAILED

    run.transcript.announce(ALICE, "6c", "sender_id_positions",
                            positions=list(layout.announce("sender_id", record.sender_id_pairs)))
    prepared = [registry.prepared_label(pid) for pid in record.sender_id_pairs]
    measured = measure_pairs(registry, record.sender_id_pairs, run.rng.substream("sender-measure"))
    sender = verify_sender(measured, prepared, id_a, run.config.auth_tolerance_for(len(measured)))
    run.report.sender_auth = sender
    run.transcript.announce(BOB, "6c", "sender_verdict", verdict=sender.verdict.value)
    if sender.verdict is Verdict.ABORT:
        return AbortReason.SENDER_AUTH_FAILED
    return None


def _announce_checks(run: _Run, party: str, m_prime: CheckedMessage) -> None:
    run.transcript.announce(party, "8", "check_bits",
                            positions=list(m_prime.check_positions), values=m_prime.check_values)


def run_qsdc(config: ProtocolConfig, id_a: Identity, id_b: Identity, m: MessageBits,
             adversary: Optional[AdversarySpec] = None, rng: Optional[RandomSource] = None) -> RunReport:
    """
    Execute one full DI-QSDC run with mutual authentication.

    Args:
        config: Protocol configuration with mode = qsdc
        id_a: Alice's identity
        id_b: Bob's identity
        m: Alice's n-bit message
        adversary: Active attacker model (honest channel by default)
        rng: Random source (RandomSource(config.seed) by default)

    Returns:
        RunReport; abort is None iff the message was delivered

    Raises:
        ConfigInvalidError: If the configuration or input lengths are invalid
    """
    if config.mode is not ProtocolMode.QSDC:
        raise ConfigInvalidError("run_qsdc needs mode = qsdc")
    _check_inputs(config, id_a, id_b, m)
    run = _start(config, id_a, id_b, m, None, adversary, rng)
    logger.info(f"Starting QSDC run: n={config.n}, c={config.c}, k={config.k}, d={config.d}, "
                f"adversary={run.adversary.kind.value}")

    # Step 1
    m_prime = insert_check_bits(m, config.c, run.rng.substream("check-bits"))

    # Steps 2 to 4
    registry, layout = _prepare(run, id_b)
    if _first_check(run, registry, layout) is Verdict.ABORT:
        return run.abort(AbortReason.CHSH_FIRST_FAILED)

    # Step 5
    encode_rng = run.rng.substream("alice-encode")
    if run.adversary.kind is AdversaryKind.IMPERSONATE_ALICE:
        record = impersonate_alice_encode(registry, m_prime, encode_rng)
    else:
        record = alice_encode(registry, m_prime, id_a, encode_rng)
    second_transmission(registry, record.layout, run.channel_hook(Transmission.SECOND))

    # Step 6
    reason = _authenticate_and_check(run, registry, record, id_a, id_b)
    if reason is not None:
        return run.abort(reason)

    # Step 7
    run.transcript.announce(ALICE, "7", "message_positions",
                            positions=list(record.layout.announce("message", record.message_pairs)))
    decoded = bob_decode(registry, record.message_pairs, run.rng.substream("decode"))

    # Step 8
    _announce_checks(run, ALICE, m_prime)
    delivered, integrity = verify_integrity(decoded, m_prime.check_positions, m_prime.check_values,
                                            config.integrity_tolerance_for(config.c))
    run.report.integrity = integrity
    if integrity.verdict is Verdict.ABORT:
        return run.abort(AbortReason.INTEGRITY_FAILED)

    run.report.delivered_message = delivered
    run.report.bit_errors = _hamming(m.bits, delivered.bits)
    logger.info(f"QSDC run delivered {delivered.n} bits with {run.report.bit_errors} bit errors")
    return run.finish()


def run_qd(config: ProtocolConfig, id_a: Identity, id_b: Identity, m_alice: MessageBits, m_bob: MessageBits,
           adversary: Optional[AdversarySpec] = None, rng: Optional[RandomSource] = None) -> RunReport:
    """
    Execute one full DI-QD run: both parties exchange n-bit messages.

    Bob prepares one message pair per bit of the checked message m_bob; Alice
    encodes one bit per pair. Bob announces the Bell-measurement results as
    final labels so that each side decodes the other's message.

    Args:
        config: Protocol configuration with mode = qd
        id_a: Alice's identity
        id_b: Bob's identity
        m_alice: Alice's message
        m_bob: Bob's message
        adversary: Active attacker model
        rng: Random source

    Returns:
        RunReport with delivered_message (Alice to Bob) and delivered_message_b (Bob to Alice)
    """
    if config.mode is not ProtocolMode.QD:
        raise ConfigInvalidError("run_qd needs mode = qd")
    _check_inputs(config, id_a, id_b, m_alice, m_bob)
    run = _start(config, id_a, id_b, m_alice, m_bob, adversary, rng)
    logger.info(f"Starting QD run: n={config.n}, c={config.c}, k={config.k}, d={config.d}, "
                f"adversary={run.adversary.kind.value}")

    m_prime_a = insert_check_bits(m_alice, config.c, run.rng.substream("check-bits"))
    m_prime_b = insert_check_bits(m_bob, config.c, run.rng.substream("check-bits-b"))

    label_rng = run.rng.substream("qd-prepare")
    message_labels = [qd_prepare_bit(bit, label_rng) for bit in m_prime_b.bits]
    registry, layout = _prepare(run, id_b, message_labels)
    if _first_check(run, registry, layout) is Verdict.ABORT:
        return run.abort(AbortReason.CHSH_FIRST_FAILED)

    encode_rng = run.rng.substream("alice-encode")
    if run.adversary.kind is AdversaryKind.IMPERSONATE_ALICE:
        record = impersonate_alice_encode(registry, m_prime_a, encode_rng, dialogue=True)
    else:
        record = qd_alice_encode(registry, m_prime_a, id_a, encode_rng)
    second_transmission(registry, record.layout, run.channel_hook(Transmission.SECOND))

    reason = _authenticate_and_check(run, registry, record, id_a, id_b)
    if reason is not None:
        return run.abort(reason)

    prepared = [registry.prepared_label(pid) for pid in record.message_pairs]
    finals = measure_pairs(registry, record.message_pairs, run.rng.substream("decode"))
    run.transcript.announce(BOB, "7", "final_labels", labels=[label.value for label in finals])
    alice_bits = "".join(str(qd_decode(p, f)[0]) for p, f in zip(prepared, finals))
    bob_bits = "".join(
        str(qd_decode(None, f, record.message_ops[pid])[1]) for pid, f in zip(record.message_pairs, finals)
    )

    _announce_checks(run, ALICE, m_prime_a)
    _announce_checks(run, BOB, m_prime_b)
    delivered_a, integrity_a = verify_integrity(alice_bits, m_prime_a.check_positions, m_prime_a.check_values,
                                                config.integrity_tolerance_for(config.c))
    delivered_b, integrity_b = verify_integrity(bob_bits, m_prime_b.check_positions, m_prime_b.check_values,
                                                config.integrity_tolerance_for(config.c))
    both_pass = integrity_a.verdict is Verdict.CONTINUE and integrity_b.verdict is Verdict.CONTINUE
    run.report.integrity = IntegrityResult(
        checked=integrity_a.checked + integrity_b.checked,
        mismatches=integrity_a.mismatches + integrity_b.mismatches,
        verdict=Verdict.CONTINUE if both_pass else Verdict.ABORT,
    )
    if not both_pass:
        return run.abort(AbortReason.INTEGRITY_FAILED)

    run.report.delivered_message = delivered_a
    run.report.delivered_message_b = delivered_b
    run.report.bit_errors = _hamming(m_alice.bits, delivered_a.bits) + _hamming(m_bob.bits, delivered_b.bits)
    logger.info(f"QD run delivered 2 x {delivered_a.n} bits with {run.report.bit_errors} bit errors")
    return run.finish()


def run_protocol(config: ProtocolConfig, id_a: Identity, id_b: Identity, m: MessageBits,
                 m_b: Optional[MessageBits] = None, adversary: Optional[AdversarySpec] = None,
                 rng: Optional[RandomSource] = None) -> RunReport:
    """Dispatch to run_qsdc or run_qd by config.mode."""
    if config.mode is ProtocolMode.QD:
        if m_b is None:
            raise ConfigInvalidError("Dialogue mode needs a message for each party")
        return run_qd(config, id_a, id_b, m, m_b, adversary, rng)
    return run_qsdc(config, id_a, id_b, m, adversary, rng)
