"""
Channel-noise and attacker models for the two quantum transmissions.

Attacks act only through the hooks defined here: transit() for every qubit on
the quantum channel, and the impersonation variants of Alice's encoding and
Bob's preparation. Attack and noise compose in a fixed order (attack first).
"""

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .data_models import (
    CheckedMessage,
    Identity,
    PairRegistry,
    PairRole,
    ProtocolConfig,
    SequenceLayout,
    validate_probability,
)
from .errors import ConfigInvalidError
from .protocol import (
    EncodingRecord,
    alice_encode,
    allowed_outcomes,
    analytic_chsh,
    bell_for_id_bits,
    pauli_for_bits,
    prepare_pairs,
    qd_alice_encode,
    transition,
)
from .qcore import (
    COMPUTATIONAL_BASIS,
    COVER_OPS,
    HADAMARD_BASIS,
    BellLabel,
    PairState,
    RandomSource,
    Side,
    apply_pauli_noise,
    apply_to_side,
    bell_probabilities,
    bell_state,
    measure_single,
    measurement_branches,
)

# Set up logging
logger = logging.getLogger(__name__)

_TWO_BIT_VALUES = ("00", "01", "10", "11")


class AdversaryKind(str, Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept-resend"
    IMPERSONATE_ALICE = "impersonate-alice"
    IMPERSONATE_BOB = "impersonate-bob"


class Transmission(str, Enum):
    """Which quantum transmission (or both) an attack targets."""
    FIRST = "first"
    SECOND = "second"
    BOTH = "both"


@dataclass(frozen=True)
class AdversarySpec:
    """The single attacker model active in a run."""
    kind: AdversaryKind = AdversaryKind.NONE
    intercept_basis_mix: float = 0.5
    applies_to: Transmission = Transmission.BOTH
    knows_id_b: bool = False

    def __post_init__(self):
        """Validate and normalize the spec after initialization."""
        try:
            object.__setattr__(self, "kind", AdversaryKind(self.kind))
            object.__setattr__(self, "applies_to", Transmission(self.applies_to))
        except ValueError as e:
            raise ConfigInvalidError(f"Invalid adversary spec: {e}")
        if not validate_probability(self.intercept_basis_mix):
            raise ConfigInvalidError(f"intercept_basis_mix must be in [0, 1], got {self.intercept_basis_mix!r}")

    def intercepts(self, transmission: Transmission) -> bool:
        """True if an intercept-resend attack is active on this transmission."""
        if self.kind is not AdversaryKind.INTERCEPT_RESEND:
            return False
        return self.applies_to is Transmission.BOTH or self.applies_to is Transmission(transmission)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.value,
            'intercept_basis_mix': self.intercept_basis_mix,
            'applies_to': self.applies_to.value,
            'knows_id_b': self.knows_id_b,
        }


@dataclass(frozen=True)
class ChannelModel:
    """Depolarizing probabilities for transit and for quantum storage."""
    noise_p: float = 0.0
    storage_noise_p: float = 0.0

    def __post_init__(self):
        """Validate probabilities after initialization."""
        for name in ('noise_p', 'storage_noise_p'):
            if not validate_probability(getattr(self, name)):
                raise ConfigInvalidError(f"{name} must be in [0, 1], got {getattr(self, name)!r}")

    @classmethod
    def from_config(cls, config: ProtocolConfig) -> "ChannelModel":
        return cls(noise_p=config.noise_p, storage_noise_p=config.storage_noise_p)


def intercept_resend(state: PairState, side: Side, basis_mix: float, rng: RandomSource) -> PairState:
    """
    Measure the transiting qubit in Z (probability basis_mix) or X and resend the eigenstate.

    Returns:
        Product post-measurement state
    """
    basis = COMPUTATIONAL_BASIS if rng.random() < basis_mix else HADAMARD_BASIS
    _, collapsed = measure_single(state, side, basis, rng)
    return collapsed


def transit(state: PairState, side: Side, channel: ChannelModel, spec: AdversarySpec,
            rng: RandomSource, transmission: Transmission = Transmission.FIRST) -> PairState:
    """
    Pass one qubit through the quantum channel.

    Args:
        state: Pair whose qubit is in transit
        side: Which qubit travels
        channel: Noise model
        spec: Active adversary
        rng: Random source
        transmission: First or second transmission

    Returns:
        Pair state after attack (if active) and channel noise
    """
    if spec.intercepts(transmission):
        state = intercept_resend(state, side, spec.intercept_basis_mix, rng)
    return apply_pauli_noise(state, side, channel.noise_p, rng)


def storage_epoch(registry: PairRegistry, channel: ChannelModel, rng: RandomSource) -> None:
    """Expose both qubits of every live pair to storage noise once."""
    if channel.storage_noise_p == 0.0:
        return
    for pid in registry.pair_ids(live_only=True):
        state = registry.state(pid)
        for side in (Side.A, Side.B):
            state = apply_pauli_noise(state, side, channel.storage_noise_p, rng)
        registry.update_state(pid, state)


# Impersonation

def impersonate_alice_encode(registry: PairRegistry, m_prime: CheckedMessage, rng: RandomSource,
                             dialogue: bool = False) -> EncodingRecord:
    """
    Eve encodes in Alice's place with a uniformly random guess for Id_A.

    Message and cover behavior are honest; only the C_A Paulis are guessed.
    """
    k = len(registry.pair_ids(role=PairRole.IDENTITY_CARRIER, live_only=True))
    guess = Identity(rng.substream("guess").bits(2 * k))
    logger.debug(f"Sender impersonation with guessed identity of {k} bit pairs")
    encode = qd_alice_encode if dialogue else alice_encode
    return encode(registry, m_prime, guess, rng)


def impersonate_bob_prepare(config: ProtocolConfig, rng: RandomSource, known_id_b: Optional[Identity] = None,
                            message_labels: Optional[Sequence[BellLabel]] = None
                            ) -> Tuple[PairRegistry, SequenceLayout]:
    """
    Eve prepares in Bob's place, choosing identity pairs uniformly at random.

    Args:
        config: Protocol configuration
        rng: Random source
        known_id_b: Control case, Eve knows Id_B and prepares honestly
        message_labels: Dialogue mode message pairs

    Returns:
        (registry, layout) as bob_prepare would return
    """
    config.validate()
    if known_id_b is not None:
        identity_labels = [bell_for_id_bits(bits) for bits in known_id_b.pairs]
    else:
        guess_rng = rng.substream("guess")
        identity_labels = [guess_rng.choice(list(BellLabel)) for _ in range(config.k)]
    return prepare_pairs(config, identity_labels, rng, message_labels)


# Analytic detection rates

def sender_pass_probability() -> float:
    """
    Probability that a guessed Id_A bit pair passes Bob's check at one C_A position.

    Enumerates every prepared label, true value and guess; equals 1/4.
    """
    cases = list(itertools.product(BellLabel, _TWO_BIT_VALUES, _TWO_BIT_VALUES))
    passes = sum(
        transition(prepared, pauli_for_bits(guess)) is transition(prepared, pauli_for_bits(truth))
        for prepared, truth, guess in cases
    )
    return passes / len(cases)


def receiver_pass_probability() -> float:
    """
    Probability that a randomly prepared identity pair passes Alice's check.

    Averages over Alice's uniform cover, the true Id_B value and Eve's guess;
    equals 3/8.
    """
    total = 0.0
    cases = list(itertools.product(COVER_OPS, BellLabel, BellLabel))
    for cover, truth, guess in cases:
        observed = bell_probabilities(apply_to_side(bell_state(guess), Side.A, cover))
        accepted = allowed_outcomes(truth, cover)
        total += sum(p for label, p in observed.items() if label in accepted)
    return total / len(cases)


def intercepted_chsh(label: BellLabel, basis_mix: float = 0.5, side: Side = Side.A) -> float:
    """
    Exact frame-corrected CHSH value of a pair after one intercept-resend.

    Averages the analytic value of every collapse branch, weighted by its
    Born probability and the basis choice.
    """
    state = bell_state(label)
    value = 0.0
    for weight, basis in ((basis_mix, COMPUTATIONAL_BASIS), (1.0 - basis_mix, HADAMARD_BASIS)):
        for branch in measurement_branches(state, side, basis):
            if branch.state is not None:
                value += weight * branch.probability * analytic_chsh(branch.state, label)
    return value


def intercepted_ensemble_chsh(basis_mix: float = 0.5) -> float:
    """Mean of intercepted_chsh over uniformly prepared Bell labels (√2/2 at an even mix)."""
    return float(np.mean([intercepted_chsh(label, basis_mix) for label in BellLabel]))
