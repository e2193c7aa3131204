"""
Exact simulator core for single two-qubit systems.

This module contains the state model (PairState over |00>, |01>, |10>, |11>,
first factor held on side A, second on side B), the Bell basis, the local
unitaries used by the protocol, projective measurements in the Bell basis and
in rotated equatorial bases, a Pauli-trajectory noise channel, analytic
correlators, and the seedable RandomSource every stochastic operation draws
from.

Pairs are simulated independently: the protocol never entangles two EPR pairs
with each other, so a 4-vector per pair is exact.
"""

import functools
import logging
import zlib
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

# Set up logging
logger = logging.getLogger(__name__)

T = TypeVar("T")

# Absolute tolerance for all exact-algebra comparisons
TOLERANCE = 1e-9

_SQRT1_2 = 1 / np.sqrt(2)
_SEED_MASK = (1 << 64) - 1

# Amplitudes are Python/numpy complex numbers (re, im as doubles)
Amplitude = complex


class Side(str, Enum):
    """Which qubit of a pair an operation acts on."""
    A = "A"
    B = "B"


@functools.total_ordering
class BellLabel(Enum):
    """The four Bell states, ordered Φ⁺ < Φ⁻ < Ψ⁺ < Ψ⁻ for serialization."""
    PHI_PLUS = "PhiPlus"
    PHI_MINUS = "PhiMinus"
    PSI_PLUS = "PsiPlus"
    PSI_MINUS = "PsiMinus"

    @property
    def ordinal(self) -> int:
        return list(BellLabel).index(self)

    @property
    def symbol(self) -> str:
        return _BELL_SYMBOLS[self]

    def __lt__(self, other):
        if not isinstance(other, BellLabel):
            return NotImplemented
        return self.ordinal < other.ordinal


_BELL_SYMBOLS = {
    BellLabel.PHI_PLUS: "Φ⁺",
    BellLabel.PHI_MINUS: "Φ⁻",
    BellLabel.PSI_PLUS: "Ψ⁺",
    BellLabel.PSI_MINUS: "Ψ⁻",
}


class SingleQubitOp(Enum):
    """Local unitaries used for encoding, covering and frame correction."""
    ID = "Id"
    SIGMA_X = "SigmaX"
    I_SIGMA_Y = "ISigmaY"
    SIGMA_Z = "SigmaZ"
    HAD = "Had"
    I_SIGMA_Y_HAD = "ISigmaYHad"

    @property
    def matrix(self) -> np.ndarray:
        return _OP_MATRICES[self]

    @property
    def symbol(self) -> str:
        return _OP_SYMBOLS[self]

    @property
    def inverse(self) -> "SingleQubitOp":
        """Return the op V in the set with V·U equal to identity up to global phase."""
        for candidate in SingleQubitOp:
            product = candidate.matrix @ self.matrix
            if abs(abs(np.trace(product)) - 2.0) <= TOLERANCE:
                return candidate
        raise ValueError(f"{self.value} has no inverse in the operator set")


def _frozen(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=complex)
    matrix.setflags(write=False)
    return matrix


_IDENTITY = np.array([[1, 0], [0, 1]], dtype=complex)
_SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
_I_SIGMA_Y = np.array([[0, 1], [-1, 0]], dtype=complex)
_SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_HADAMARD = (_SIGMA_X + _SIGMA_Z) * _SQRT1_2

_OP_MATRICES = {
    SingleQubitOp.ID: _frozen(_IDENTITY),
    SingleQubitOp.SIGMA_X: _frozen(_SIGMA_X),
    SingleQubitOp.I_SIGMA_Y: _frozen(_I_SIGMA_Y),
    SingleQubitOp.SIGMA_Z: _frozen(_SIGMA_Z),
    SingleQubitOp.HAD: _frozen(_HADAMARD),
    SingleQubitOp.I_SIGMA_Y_HAD: _frozen(_I_SIGMA_Y @ _HADAMARD),
}

_OP_SYMBOLS = {
    SingleQubitOp.ID: "I",
    SingleQubitOp.SIGMA_X: "σx",
    SingleQubitOp.I_SIGMA_Y: "iσy",
    SingleQubitOp.SIGMA_Z: "σz",
    SingleQubitOp.HAD: "H",
    SingleQubitOp.I_SIGMA_Y_HAD: "iσyH",
}

# Pauli group used for message encoding and for the noise channel
PAULI_OPS: Tuple[SingleQubitOp, ...] = (
    SingleQubitOp.ID, SingleQubitOp.SIGMA_X, SingleQubitOp.I_SIGMA_Y, SingleQubitOp.SIGMA_Z,
)

# Cover operations Alice applies to identity-carrier qubits
COVER_OPS: Tuple[SingleQubitOp, ...] = (
    SingleQubitOp.ID, SingleQubitOp.I_SIGMA_Y, SingleQubitOp.HAD, SingleQubitOp.I_SIGMA_Y_HAD,
)


class Outcome(IntEnum):
    """Binary measurement outcome labeled by ±1."""
    PLUS = 1
    MINUS = -1


@dataclass(frozen=True)
class RotatedBasis:
    """Equatorial basis {(|0> + e^{iθ}|1>)/√2, (|0> - e^{iθ}|1>)/√2}."""
    theta: float

    def __post_init__(self):
        """Validate the basis angle after initialization."""
        if not np.isfinite(self.theta):
            raise ValueError(f"Basis angle must be finite, got {self.theta}")

    @property
    def vectors(self) -> Tuple[np.ndarray, np.ndarray]:
        phase = np.exp(1j * self.theta)
        v_plus = np.array([1, phase], dtype=complex) * _SQRT1_2
        v_minus = np.array([1, -phase], dtype=complex) * _SQRT1_2
        return v_plus, v_minus

    @property
    def observable(self) -> np.ndarray:
        """cos θ σx + sin θ σy, whose +1/-1 eigenvectors are the basis vectors."""
        return _observable(self.theta)


def _observable(theta: float) -> np.ndarray:
    return np.array([[0, np.exp(-1j * theta)], [np.exp(1j * theta), 0]], dtype=complex)


# Z and X bases as (outcome +1 vector, outcome -1 vector)
COMPUTATIONAL_BASIS = (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex))
HADAMARD_BASIS = RotatedBasis(0.0).vectors


@dataclass(frozen=True, eq=False)
class PairState:
    """Normalized two-qubit pure state; global phase carries no meaning."""
    amp: np.ndarray

    def __post_init__(self):
        """Validate and freeze the amplitude vector after initialization."""
        amp = np.array(self.amp, dtype=complex).reshape(-1)
        if amp.shape != (4,):
            raise ValueError(f"PairState needs exactly 4 amplitudes, got {amp.shape[0]}")
        if not np.all(np.isfinite(amp)):
            raise ValueError("PairState amplitudes must be finite")
        norm = float(np.vdot(amp, amp).real)
        if abs(norm - 1.0) > TOLERANCE:
            raise ValueError(f"PairState must be normalized, got squared norm {norm}")
        amp.setflags(write=False)
        object.__setattr__(self, "amp", amp)

    def __eq__(self, other):
        if not isinstance(other, PairState):
            return NotImplemented
        return bool(np.array_equal(self.amp, other.amp))

    __hash__ = None

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[complex], normalize: bool = False) -> "PairState":
        """
        Build a state from raw amplitudes.

        Args:
            amplitudes: Four amplitudes over |00>, |01>, |10>, |11>
            normalize: Rescale to unit norm instead of rejecting unnormalized input

        Returns:
            PairState
        """
        amp = np.array(amplitudes, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(amp)
            if norm == 0:
                raise ValueError("Cannot normalize the zero vector")
            amp = amp / norm
        return cls(amp)

    @classmethod
    def product(cls, qubit_a: Sequence[complex], qubit_b: Sequence[complex]) -> "PairState":
        """Tensor product of a side-A and a side-B single-qubit state."""
        return cls(np.kron(np.asarray(qubit_a, dtype=complex), np.asarray(qubit_b, dtype=complex)))

    def overlap(self, other: "PairState") -> float:
        """Phase-insensitive overlap |<self|other>|²."""
        return float(abs(np.vdot(self.amp, other.amp)) ** 2)

    def equals_up_to_phase(self, other: "PairState", tol: float = TOLERANCE) -> bool:
        """Amplitude-wise comparison after removing the relative global phase."""
        pivot = int(np.argmax(np.abs(self.amp)))
        if abs(other.amp[pivot]) <= tol:
            return False
        phase = other.amp[pivot] / self.amp[pivot]
        phase /= abs(phase)
        return bool(np.allclose(self.amp * phase, other.amp, rtol=0.0, atol=tol))


def _stream_key(name: Union[str, int]) -> int:
    # Stable across processes (never the builtin hash)
    if isinstance(name, int):
        if name < 0:
            raise ValueError(f"Substream index must be nonnegative, got {name}")
        return name
    return zlib.crc32(str(name).encode("utf-8")) | (1 << 32)


class RandomSource:
    """
    Seeded deterministic random stream, splittable into named substreams.

    Substreams are derived with numpy's SeedSequence spawn keys, so the draws of
    one substream never depend on how many values were drawn from another.
    """

    def __init__(self, seed: int, path: Tuple[Union[str, int], ...] = ()):
        """
        Initialize the stream.

        Args:
            seed: 64-bit seed (wrapped modulo 2^64)
            path: Substream names from the root stream to this one
        """
        self.seed = int(seed) & _SEED_MASK
        self.path = tuple(path)
        sequence = np.random.SeedSequence(
            entropy=self.seed, spawn_key=tuple(_stream_key(part) for part in self.path)
        )
        self._generator = np.random.default_rng(sequence)

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, path={self.path!r})"

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def substream(self, name: Union[str, int]) -> "RandomSource":
        """Independent stream identified by name (or nonnegative index) under this one."""
        return RandomSource(self.seed, self.path + (name,))

    def random(self) -> float:
        return float(self._generator.random())

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def index(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return int(self._generator.integers(n))

    def choice(self, options: Sequence[T]) -> T:
        """Uniform element of a non-empty sequence."""
        return options[self.index(len(options))]

    def weighted_index(self, weights: Sequence[float]) -> int:
        """Index drawn with probability proportional to weights."""
        cumulative = np.cumsum(np.asarray(weights, dtype=float))
        target = self.random() * cumulative[-1]
        position = int(np.searchsorted(cumulative, target, side="right"))
        return min(position, len(cumulative) - 1)

    def sample(self, population: Sequence[T], k: int) -> List[T]:
        """k distinct elements drawn uniformly without replacement, in draw order."""
        if k > len(population):
            raise ValueError(f"Cannot sample {k} items from a population of {len(population)}")
        picks = self._generator.choice(len(population), size=k, replace=False)
        return [population[int(i)] for i in picks]

    def permutation(self, n: int) -> List[int]:
        return [int(i) for i in self._generator.permutation(n)]

    def bits(self, n: int) -> str:
        """Uniform random bit string of length n."""
        return "".join("1" if bit else "0" for bit in self._generator.integers(0, 2, size=n))


_BELL_VECTORS = {
    BellLabel.PHI_PLUS: _frozen(np.array([1, 0, 0, 1]) * _SQRT1_2),
    BellLabel.PHI_MINUS: _frozen(np.array([1, 0, 0, -1]) * _SQRT1_2),
    BellLabel.PSI_PLUS: _frozen(np.array([0, 1, 1, 0]) * _SQRT1_2),
    BellLabel.PSI_MINUS: _frozen(np.array([0, 1, -1, 0]) * _SQRT1_2),
}


def bell_state(label: BellLabel) -> PairState:
    """
    Exact amplitude vector of a Bell state.

    Args:
        label: Which Bell state

    Returns:
        PairState, e.g. Φ⁺ = (|00> + |11>)/√2
    """
    return PairState(_BELL_VECTORS[label])


def _apply_matrix(amp: np.ndarray, side: Side, matrix: np.ndarray) -> np.ndarray:
    psi = amp.reshape(2, 2)  # psi[a, b]
    if Side(side) is Side.A:
        return (matrix @ psi).reshape(4)
    return (psi @ matrix.T).reshape(4)


def apply_to_side(state: PairState, side: Side, op: SingleQubitOp) -> PairState:
    """
    Apply a local unitary: (U⊗I)|ψ> for side A, (I⊗U)|ψ> for side B.

    Args:
        state: Input pair
        side: Qubit the operator acts on
        op: Operator from the fixed set

    Returns:
        New PairState (norm preserved)
    """
    return PairState(_apply_matrix(state.amp, side, op.matrix))


def bell_probabilities(state: PairState) -> Dict[BellLabel, float]:
    """Squared magnitudes of the Bell-basis projections of state."""
    return {
        label: float(abs(np.vdot(vector, state.amp)) ** 2)
        for label, vector in _BELL_VECTORS.items()
    }


def bell_label_of(state: PairState, tol: float = TOLERANCE) -> Optional[BellLabel]:
    """The Bell state this pair equals up to global phase, or None."""
    for label, probability in bell_probabilities(state).items():
        if probability >= 1.0 - tol:
            return label
    return None


def measure_bell(state: PairState, rng: RandomSource) -> BellLabel:
    """
    Bell-basis measurement. The pair is consumed; no post-measurement state.

    Args:
        state: Pair to measure
        rng: Random source for the Born-rule draw

    Returns:
        Observed BellLabel
    """
    probabilities = bell_probabilities(state)
    labels = list(BellLabel)
    return labels[rng.weighted_index([probabilities[label] for label in labels])]


@dataclass(frozen=True)
class MeasurementBranch:
    """One outcome of a single-qubit measurement with its Born probability."""
    outcome: Outcome
    probability: float
    state: Optional[PairState]  # None when the branch has vanishing probability


def _collapse(psi: np.ndarray, side: Side, vector: np.ndarray) -> Tuple[np.ndarray, float]:
    # Unnormalized state of the unmeasured qubit and its Born weight
    remainder = np.conj(vector) @ psi if side is Side.A else psi @ np.conj(vector)
    return remainder, float(np.vdot(remainder, remainder).real)


def _post_state(side: Side, vector: np.ndarray, remainder: np.ndarray, probability: float) -> PairState:
    remainder = remainder / np.sqrt(probability)
    if side is Side.A:
        return PairState.product(vector, remainder)
    return PairState.product(remainder, vector)


def measurement_branches(state: PairState, side: Side,
                         basis: Tuple[np.ndarray, np.ndarray]) -> Tuple[MeasurementBranch, MeasurementBranch]:
    """
    Both branches of a projective single-qubit measurement, without sampling.

    Args:
        state: Pair to measure
        side: Which qubit is measured
        basis: (vector for outcome +1, vector for outcome -1)

    Returns:
        (branch for +1, branch for -1); post-measurement states are product states
    """
    psi = state.amp.reshape(2, 2)
    side = Side(side)
    branches = []
    for outcome, vector in zip((Outcome.PLUS, Outcome.MINUS), basis):
        remainder, probability = _collapse(psi, side, vector)
        post = _post_state(side, vector, remainder, probability) if probability > TOLERANCE ** 2 else None
        branches.append(MeasurementBranch(outcome, probability, post))
    return branches[0], branches[1]


def measure_single(state: PairState, side: Side,
                   basis: Tuple[np.ndarray, np.ndarray],
                   rng: RandomSource) -> Tuple[Outcome, PairState]:
    """
    Projective measurement of one qubit in an orthonormal single-qubit basis.

    Only the sampled branch's post-measurement state is built.

    Args:
        state: Pair to measure
        side: Which qubit is measured
        basis: (vector for outcome +1, vector for outcome -1)
        rng: Random source for the Born-rule draw

    Returns:
        Outcome and the renormalized product post-measurement state
    """
    psi = state.amp.reshape(2, 2)
    side = Side(side)
    remainder, probability = _collapse(psi, side, basis[0])
    outcome, vector = Outcome.PLUS, basis[0]
    if rng.random() >= probability or probability <= TOLERANCE ** 2:
        minus_remainder, p_minus = _collapse(psi, side, basis[1])
        if p_minus > TOLERANCE ** 2:
            outcome, vector, remainder, probability = Outcome.MINUS, basis[1], minus_remainder, p_minus
        else:
            logger.debug("Measurement landed on a vanishing branch; using the complementary outcome")
    return outcome, _post_state(side, vector, remainder, probability)


def measure_rotated(state: PairState, side: Side, basis: RotatedBasis,
                    rng: RandomSource) -> Tuple[Outcome, PairState]:
    """Measure one qubit in a rotated equatorial basis (Born rule)."""
    return measure_single(state, side, basis.vectors, rng)


def correlator(state: PairState, theta_a: float, theta_b: float) -> float:
    """
    Analytic expectation of the product of ±1 outcomes.

    Args:
        state: Pair state
        theta_a: Basis angle for side A
        theta_b: Basis angle for side B

    Returns:
        <ψ| O(θa) ⊗ O(θb) |ψ> in [-1, 1]
    """
    observable = np.kron(_observable(theta_a), _observable(theta_b))
    value = float(np.vdot(state.amp, observable @ state.amp).real)
    return min(1.0, max(-1.0, value))


def apply_pauli_noise(state: PairState, side: Side, p: float, rng: RandomSource) -> PairState:
    """
    Trajectory realization of a depolarizing channel on one qubit.

    With probability p one of {I, σx, iσy, σz} is applied, chosen uniformly.

    Args:
        state: Input pair
        side: Qubit exposed to the noise
        p: Error probability in [0, 1]
        rng: Random source

    Returns:
        State after the sampled trajectory
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Noise probability must be in [0, 1], got {p}")
    if p == 0.0:
        return state
    if rng.random() < p:
        return apply_to_side(state, side, rng.choice(PAULI_OPS))
    return state
