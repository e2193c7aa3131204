"""
Fast invariant suites run by the `selftest` subcommand.

Each suite is exact algebra or a small-sample statistical check and returns
(passed, detail). Suites never raise; an unexpected exception counts as a
failure with the exception text as detail.
"""

import itertools
import logging
import math
from typing import Callable, Dict, List, Tuple

import numpy as np

from .adversary import intercepted_chsh, intercepted_ensemble_chsh, receiver_pass_probability, sender_pass_probability
from .protocol import (
    analytic_chsh,
    bits_for_transition,
    chsh_estimate,
    pauli_for_bits,
    qd_decode,
    qd_table,
    transition,
    transition_table,
)
from .qcore import (
    COMPUTATIONAL_BASIS,
    HADAMARD_BASIS,
    PAULI_OPS,
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
    measurement_branches,
)

# Set up logging
logger = logging.getLogger(__name__)

SuiteResult = Tuple[bool, str]

_SQRT1_2 = 1 / np.sqrt(2)
_PLUS, _MINUS = HADAMARD_BASIS


def _random_states(count: int, seed: int = 7) -> List[PairState]:
    generator = RandomSource(seed).substream("selftest-states").generator
    raw = generator.normal(size=(count, 4)) + 1j * generator.normal(size=(count, 4))
    return [PairState.from_amplitudes(row, normalize=True) for row in raw]


def check_normalization() -> SuiteResult:
    worst = 0.0
    for state in _random_states(200):
        outputs = [apply_to_side(state, side, op) for side in Side for op in SingleQubitOp]
        for basis in (COMPUTATIONAL_BASIS, HADAMARD_BASIS, RotatedBasis(np.pi / 4).vectors):
            for branch in measurement_branches(state, Side.A, basis):
                if branch.state is not None:
                    outputs.append(branch.state)
        for output in outputs:
            worst = max(worst, abs(float(np.vdot(output.amp, output.amp).real) - 1.0))
    return worst <= TOLERANCE, f"max |norm - 1| = {worst:.2e}"


def check_unitarity_roundtrip() -> SuiteResult:
    failures = 0
    for state in _random_states(100):
        for side, op in itertools.product(Side, SingleQubitOp):
            restored = apply_to_side(apply_to_side(state, side, op), side, op.inverse)
            failures += not state.equals_up_to_phase(restored)
    return failures == 0, f"{failures} round-trip failures"


def check_probability_sums() -> SuiteResult:
    worst = 0.0
    for state in _random_states(200):
        worst = max(worst, abs(sum(bell_probabilities(state).values()) - 1.0))
        for basis in (COMPUTATIONAL_BASIS, HADAMARD_BASIS):
            plus, minus = measurement_branches(state, Side.B, basis)
            worst = max(worst, abs(plus.probability + minus.probability - 1.0))
    return worst <= TOLERANCE, f"max |sum - 1| = {worst:.2e}"


def check_pauli_composition() -> SuiteResult:
    failures = 0
    for label, first, second in itertools.product(BellLabel, PAULI_OPS, PAULI_OPS):
        sequential = transition(transition(label, first), second)
        product = second.matrix @ first.matrix
        combined = (product @ bell_state(label).amp.reshape(2, 2)).reshape(4)
        failures += bell_label_of(PairState(combined)) is not sequential
    return failures == 0, f"{failures} of 64 compositions disagree"


def check_qsdc_rules_roundtrip() -> SuiteResult:
    failures = sum(
        bits_for_transition(initial, final) != bits or pauli_for_bits(bits) is not op
        for initial, bits, op, final in transition_table()
    )
    return failures == 0 and len(transition_table()) == 16, f"{failures} of 16 rows fail"


def check_qd_rules_roundtrip() -> SuiteResult:
    failures = 0
    for alice_bit, bob_bit, prepared, op, final in qd_table():
        failures += qd_decode(prepared, final) != (alice_bit, bob_bit)
        failures += qd_decode(None, final, op) != (alice_bit, bob_bit)
    return failures == 0 and len(qd_table()) == 16, f"{failures} decode mismatches"


def check_x_basis_identities() -> SuiteResult:
    expected = {
        BellLabel.PHI_PLUS: (np.kron(_PLUS, _PLUS) + np.kron(_MINUS, _MINUS)) * _SQRT1_2,
        BellLabel.PHI_MINUS: (np.kron(_PLUS, _MINUS) + np.kron(_MINUS, _PLUS)) * _SQRT1_2,
        BellLabel.PSI_PLUS: (np.kron(_PLUS, _PLUS) - np.kron(_MINUS, _MINUS)) * _SQRT1_2,
        BellLabel.PSI_MINUS: (np.kron(_PLUS, _MINUS) - np.kron(_MINUS, _PLUS)) * _SQRT1_2,
    }
    failures = [
        label.value for label, amp in expected.items()
        if not bell_state(label).equals_up_to_phase(PairState(amp))
    ]
    return not failures, f"mismatched: {', '.join(failures)}" if failures else ""


def check_chsh_frame_correction() -> SuiteResult:
    target = 2 * math.sqrt(2)
    values = {label: analytic_chsh(bell_state(label), label) for label in BellLabel}
    worst = max(abs(value - target) for value in values.values())
    return worst <= TOLERANCE, f"max |S - 2√2| = {worst:.2e}"


def check_pauli_twirl() -> SuiteResult:
    # A uniform Pauli on one qubit averages every frame-corrected correlator to zero
    worst = 0.0
    for label in BellLabel:
        for side in Side:
            twirled = np.mean([analytic_chsh(apply_to_side(bell_state(label), side, op), label) for op in PAULI_OPS])
            for p in (0.1, 0.2, 0.3):
                noisy = (1 - p) * analytic_chsh(bell_state(label), label) + p * twirled
                worst = max(worst, abs(noisy - (1 - p) * 2 * math.sqrt(2)))
    return worst <= TOLERANCE, f"max deviation from (1-p)·2√2 = {worst:.2e}"


def check_impersonation_enumeration() -> SuiteResult:
    sender = sender_pass_probability()
    receiver = receiver_pass_probability()
    passed = abs(sender - 0.25) <= TOLERANCE and abs(receiver - 0.375) <= TOLERANCE
    return passed, f"sender {sender:.6f}, receiver {receiver:.6f}"


def check_intercept_resend_analytic() -> SuiteResult:
    z_only = max(abs(intercepted_chsh(label, 1.0)) for label in BellLabel)
    x_only = max(abs(intercepted_chsh(label, 0.0) - math.sqrt(2)) for label in BellLabel)
    mixed = intercepted_ensemble_chsh(0.5)
    passed = z_only <= TOLERANCE and x_only <= TOLERANCE and abs(mixed - math.sqrt(2) / 2) <= TOLERANCE
    return passed, f"mixed-basis S = {mixed:.6f}"


def check_chsh_sampling() -> SuiteResult:
    rng = RandomSource(2024)
    labels = list(BellLabel)
    pairs = [(bell_state(label), label) for label in (labels[i % 4] for i in range(2000))]
    estimate = chsh_estimate(pairs, rng)
    passed = abs(estimate.s_value - 2 * math.sqrt(2)) <= 0.3 and estimate.qber == 0.0
    return passed, f"S = {estimate.s_value:.4f} over {estimate.rounds_used} pairs"


SUITES: Dict[str, Callable[[], SuiteResult]] = {
    "normalization": check_normalization,
    "unitarity-roundtrip": check_unitarity_roundtrip,
    "probability-sums": check_probability_sums,
    "pauli-composition": check_pauli_composition,
    "qsdc-rules-roundtrip": check_qsdc_rules_roundtrip,
    "qd-rules-roundtrip": check_qd_rules_roundtrip,
    "x-basis-identities": check_x_basis_identities,
    "chsh-frame-correction": check_chsh_frame_correction,
    "pauli-twirl": check_pauli_twirl,
    "impersonation-enumeration": check_impersonation_enumeration,
    "intercept-resend-analytic": check_intercept_resend_analytic,
    "chsh-sampling": check_chsh_sampling,
}


def run_selftest() -> List[Tuple[str, bool, str]]:
    """
    Run every suite in order.

    Returns:
        List of (suite name, passed, detail)
    """
    results = []
    for name, suite in SUITES.items():
        try:
            passed, detail = suite()
        except Exception as e:
            logger.error(f"Self-test suite {name} raised: {e}")
            passed, detail = False, f"raised {type(e).__name__}: {e}"
        logger.info(f"Self-test {name}: {'pass' if passed else 'FAIL'}")
        results.append((name, bool(passed), detail))
    return results
