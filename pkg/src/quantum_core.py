"""
Quantum Core Module
Dense state-vector simulator over the box modes (A, B, B', C_i) and an
optional ancilla. The physics oracle holds these states; parties never do.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

import config
from src.exceptions import (
    InternalConsistencyError,
    InvalidPreparationError,
    ParameterError,
)


class ModeKind(str, enum.Enum):
    """Kinds of box modes a particle can occupy"""

    A = "A"
    B = "B"
    BPRIME = "Bprime"
    C = "C"


@dataclass(frozen=True)
class ModeLabel:
    """A labeled box mode; only the C kind carries a meaningful index"""

    kind: ModeKind
    index: int = 0

    def __post_init__(self):
        if self.index < 0:
            raise ParameterError(f"Mode index must be >= 0, got {self.index}")
        if self.kind is not ModeKind.C and self.index != 0:
            raise ParameterError(f"Mode {self.kind.value} takes no index")

    def __str__(self) -> str:
        if self.kind is ModeKind.C:
            return f"C{self.index}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "ModeLabel":
        """Parse "A", "B", "Bprime" or "C<i>" """
        text = text.strip()
        if text.startswith("C") and text[1:].isdigit():
            return cls(ModeKind.C, int(text[1:]))
        try:
            return cls(ModeKind(text))
        except ValueError:
            raise ParameterError(f"Unknown mode label: {text!r}") from None


MODE_A = ModeLabel(ModeKind.A)
MODE_B = ModeLabel(ModeKind.B)
MODE_BPRIME = ModeLabel(ModeKind.BPRIME)


def mode_c(index: int) -> ModeLabel:
    return ModeLabel(ModeKind.C, index)


def basis_modes(num_extra_boxes: int) -> Tuple[ModeLabel, ...]:
    """Row order of every amplitude matrix: A, B, B', C_0 ... C_{k-1}"""
    if num_extra_boxes < 0:
        raise ParameterError(f"num_extra_boxes must be >= 0, got {num_extra_boxes}")
    return (MODE_A, MODE_B, MODE_BPRIME) + tuple(mode_c(i) for i in range(num_extra_boxes))


def _row(mode: ModeLabel, num_extra_boxes: int) -> int:
    if mode.kind is ModeKind.C:
        if mode.index >= num_extra_boxes:
            raise ParameterError(f"Mode {mode} is outside a basis with {num_extra_boxes} extra boxes")
        return 3 + mode.index
    return {ModeKind.A: 0, ModeKind.B: 1, ModeKind.BPRIME: 2}[mode.kind]


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Immutable amplitude matrix of shape (modes, ancilla_dim).

    ``ancilla_dim == 1`` means "no ancilla". ``split_applied`` records whether
    Bob's splitting has happened; before it the B' row must be empty.
    """

    amplitudes: np.ndarray
    split_applied: bool = False

    def __post_init__(self):
        arr = np.array(self.amplitudes, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] < 3 or arr.shape[1] < 1:
            raise ParameterError(f"Amplitude matrix must be (3 + k, d >= 1), got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "amplitudes", arr)

        norm_squared = float(np.sum(np.abs(arr) ** 2))
        if abs(norm_squared - 1.0) > config.NORMALIZATION_TOL:
            raise ParameterError(f"State is not normalized: squared norm = {norm_squared:.12f}")
        if not self.split_applied and np.any(arr[2] != 0):
            raise ParameterError("Mode Bprime cannot be populated before splitting")

    @property
    def ancilla_dim(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def num_extra_boxes(self) -> int:
        return self.amplitudes.shape[0] - 3

    @property
    def modes(self) -> Tuple[ModeLabel, ...]:
        return basis_modes(self.num_extra_boxes)

    def amplitude(self, mode: ModeLabel, k: int = 0) -> complex:
        return complex(self.amplitudes[_row(mode, self.num_extra_boxes), k])

    def mode_vector(self, mode: ModeLabel) -> np.ndarray:
        """Ancilla vector attached to one mode"""
        return self.amplitudes[_row(mode, self.num_extra_boxes)].copy()

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def flatten(self) -> np.ndarray:
        """Mode-major state vector of length modes * ancilla_dim"""
        return self.amplitudes.reshape(-1).copy()

    def isclose(self, other: "QuantumState", tol: float = None) -> bool:
        tol = config.IDENTITY_TOL if tol is None else tol
        return (
            self.amplitudes.shape == other.amplitudes.shape
            and bool(np.allclose(self.amplitudes, other.amplitudes, rtol=0.0, atol=tol))
        )


@dataclass(frozen=True)
class EpsilonPreparation:
    """Biased superposition sqrt(1/2 + eps)|a> + sqrt(1/2 - eps)|b>"""

    epsilon: float

    def __post_init__(self):
        if not -0.5 <= self.epsilon <= 0.5:
            raise InvalidPreparationError(f"epsilon must lie in [-1/2, 1/2], got {self.epsilon}")

    @property
    def is_reference(self) -> bool:
        return self.epsilon == 0.0


@dataclass(frozen=True)
class GeneralPreparation:
    """Arbitrary complex amplitudes on (mode, ancilla index) pairs.

    Attributes
    ----------
    amplitudes : mapping of (ModeLabel, int) to complex
        Sparse amplitude map; missing entries are zero. B' is not allowed.
    ancilla_dim : int
        Dimension of Alice's ancilla (1 means no ancilla).
    num_extra_boxes : int
        Number of C boxes available to Alice.
    """

    amplitudes: Mapping[Tuple[ModeLabel, int], complex] = field(default_factory=dict)
    ancilla_dim: int = 1
    num_extra_boxes: int = field(default_factory=lambda: config.DEFAULT_EXTRA_BOXES)

    def __post_init__(self):
        if self.ancilla_dim < 1:
            raise InvalidPreparationError(f"ancilla_dim must be >= 1, got {self.ancilla_dim}")
        cleaned: Dict[Tuple[ModeLabel, int], complex] = {}
        for (mode, k), value in dict(self.amplitudes).items():
            if mode.kind is ModeKind.BPRIME:
                raise InvalidPreparationError("Alice cannot prepare amplitude on Bprime")
            if mode.kind is ModeKind.C and mode.index >= self.num_extra_boxes:
                raise InvalidPreparationError(f"Mode {mode} exceeds {self.num_extra_boxes} extra boxes")
            if not 0 <= k < self.ancilla_dim:
                raise InvalidPreparationError(f"Ancilla index {k} outside [0, {self.ancilla_dim})")
            cleaned[(mode, k)] = complex(value)
        object.__setattr__(self, "amplitudes", cleaned)

        norm_squared = sum(abs(v) ** 2 for v in cleaned.values())
        if norm_squared == 0.0:
            raise InvalidPreparationError("Cannot prepare a state with all amplitudes zero")
        if abs(norm_squared - 1.0) > config.NORMALIZATION_TOL:
            raise InvalidPreparationError(f"Preparation is not normalized: squared norm = {norm_squared:.12f}")

    @classmethod
    def from_unnormalized(
        cls,
        amplitudes: Mapping[Tuple[ModeLabel, int], complex],
        ancilla_dim: int = 1,
        num_extra_boxes: Optional[int] = None,
    ) -> "GeneralPreparation":
        """Rescale a nonzero amplitude map to unit norm"""
        norm = math.sqrt(sum(abs(complex(v)) ** 2 for v in amplitudes.values()))
        if norm == 0.0:
            raise InvalidPreparationError("Cannot normalize a state with all amplitudes zero")
        extra = config.DEFAULT_EXTRA_BOXES if num_extra_boxes is None else num_extra_boxes
        return cls({key: complex(v) / norm for key, v in amplitudes.items()}, ancilla_dim, extra)

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        ancilla_dim: int = 1,
        num_extra_boxes: Optional[int] = None,
    ) -> "GeneralPreparation":
        """Haar-like random preparation over A, B and the C boxes"""
        extra = config.DEFAULT_EXTRA_BOXES if num_extra_boxes is None else num_extra_boxes
        modes = [MODE_A, MODE_B] + [mode_c(i) for i in range(extra)]
        values = rng.normal(size=(len(modes), ancilla_dim)) + 1j * rng.normal(size=(len(modes), ancilla_dim))
        amplitudes = {(mode, k): values[i, k] for i, mode in enumerate(modes) for k in range(ancilla_dim)}
        return cls.from_unnormalized(amplitudes, ancilla_dim, extra)

    @property
    def is_reference(self) -> bool:
        """True when this is exactly the equal superposition with no ancilla"""
        return bool(reference_overlap(prepare(self)) > 1.0 - config.IDENTITY_TOL)


Preparation = Union[EpsilonPreparation, GeneralPreparation]


@dataclass(frozen=True)
class MeasurementOutcome:
    found: bool
    post_state: QuantumState
    probability_used: float

    def __post_init__(self):
        if not 0.0 <= self.probability_used <= 1.0:
            raise InternalConsistencyError(f"Branch probability {self.probability_used} outside [0, 1]")


def _renormalize(amplitudes: np.ndarray, split_applied: bool) -> QuantumState:
    norm = float(np.linalg.norm(amplitudes))
    if norm == 0.0:
        raise InternalConsistencyError("Attempted to renormalize a zero vector")
    return QuantumState(amplitudes / norm, split_applied=split_applied)


def prepare(p: Preparation, num_extra_boxes: Optional[int] = None) -> QuantumState:
    """Turn Alice's preparation choice into a normalized state"""
    if isinstance(p, EpsilonPreparation):
        extra = config.DEFAULT_EXTRA_BOXES if num_extra_boxes is None else num_extra_boxes
        amplitudes = np.zeros((3 + extra, 1), dtype=complex)
        amplitudes[0, 0] = math.sqrt(0.5 + p.epsilon)
        amplitudes[1, 0] = math.sqrt(0.5 - p.epsilon)
        return QuantumState(amplitudes)

    if isinstance(p, GeneralPreparation):
        amplitudes = np.zeros((3 + p.num_extra_boxes, p.ancilla_dim), dtype=complex)
        for (mode, k), value in p.amplitudes.items():
            amplitudes[_row(mode, p.num_extra_boxes), k] = value
        # absorb the up-to-1e-9 slack admitted by validation
        return _renormalize(amplitudes, split_applied=False)

    raise InvalidPreparationError(f"Unsupported preparation type: {type(p).__name__}")


def split_b(s: QuantumState, eta: float) -> QuantumState:
    """Bob's splitting unitary |b> -> sqrt(1 - eta)|b> + sqrt(eta)|b'>"""
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"Splitting parameter eta must lie in [0, 1], got {eta}")
    if s.split_applied:
        raise ParameterError("Splitting has already been applied to this state")
    amplitudes = np.array(s.amplitudes)
    b_row = amplitudes[1].copy()
    amplitudes[1] = b_row * math.sqrt(1.0 - eta)
    amplitudes[2] = b_row * math.sqrt(eta)
    return QuantumState(amplitudes, split_applied=True)


def prob_in_mode(s: QuantumState, m: ModeLabel) -> float:
    return float(np.sum(np.abs(s.amplitudes[_row(m, s.num_extra_boxes)]) ** 2))


def _sample(probability: float, rng: np.random.Generator) -> bool:
    # one draw per measurement, even for certain branches, keeps streams aligned
    return bool(rng.random() < probability)


def project_mode(s: QuantumState, m: ModeLabel, found: bool) -> MeasurementOutcome:
    """Deterministic branch of the mode measurement (no sampling)"""
    row = _row(m, s.num_extra_boxes)
    p_found = min(max(prob_in_mode(s, m), 0.0), 1.0)

    amplitudes = np.array(s.amplitudes)
    if found:
        projected = np.zeros_like(amplitudes)
        projected[row] = amplitudes[row]
        return MeasurementOutcome(True, _renormalize(projected, s.split_applied), p_found)

    amplitudes[row] = 0.0
    return MeasurementOutcome(False, _renormalize(amplitudes, s.split_applied), 1.0 - p_found)


def measure_mode(s: QuantumState, m: ModeLabel, rng: np.random.Generator) -> MeasurementOutcome:
    """Projective measurement "is the particle in mode m?" """
    p_found = min(max(prob_in_mode(s, m), 0.0), 1.0)
    return project_mode(s, m, _sample(p_found, rng))


def _reference_coefficients(eta: float) -> Tuple[float, float]:
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"Splitting parameter eta must lie in [0, 1], got {eta}")
    return math.sqrt(1.0 / (1.0 + eta)), math.sqrt(eta / (1.0 + eta))


def reference_state(eta: float, num_extra_boxes: Optional[int] = None) -> QuantumState:
    """State left by an honest preparation after Bob fails to find |b>"""
    extra = config.DEFAULT_EXTRA_BOXES if num_extra_boxes is None else num_extra_boxes
    c_a, c_bprime = _reference_coefficients(eta)
    amplitudes = np.zeros((3 + extra, 1), dtype=complex)
    amplitudes[0, 0] = c_a
    amplitudes[2, 0] = c_bprime
    return QuantumState(amplitudes, split_applied=True)


def _reference_projection(s: QuantumState, eta: float) -> np.ndarray:
    """Partial inner product <psi_2| s> over the box modes (an ancilla vector)"""
    c_a, c_bprime = _reference_coefficients(eta)
    return c_a * s.amplitudes[0] + c_bprime * s.amplitudes[2]


def reference_overlap(s: QuantumState) -> float:
    """Squared overlap of an unsplit state with the equal superposition"""
    v = (s.amplitudes[0] + s.amplitudes[1]) / math.sqrt(2.0)
    return float(np.sum(np.abs(v) ** 2))


def prob_detect(s_after_not_found: QuantumState, eta: float) -> float:
    """Probability that Bob's projection onto the reference state fails"""
    v = _reference_projection(s_after_not_found, eta)
    return max(0.0, 1.0 - float(np.sum(np.abs(v) ** 2)))


def verify_preparation(
    s_after_not_found: QuantumState, eta: float, rng: np.random.Generator
) -> MeasurementOutcome:
    """Project onto reference_state(eta) (x) identity on the ancilla.

    ``found`` is True when the projection succeeds. A failed projection means
    the preparation provably differed from the equal superposition.
    """
    c_a, c_bprime = _reference_coefficients(eta)
    v = _reference_projection(s_after_not_found, eta)
    p_pass = min(max(float(np.sum(np.abs(v) ** 2)), 0.0), 1.0)
    passed = _sample(p_pass, rng)

    projected = np.zeros_like(s_after_not_found.amplitudes)
    projected[0] = c_a * v
    projected[2] = c_bprime * v
    if passed:
        return MeasurementOutcome(True, _renormalize(projected, True), p_pass)
    complement = np.array(s_after_not_found.amplitudes) - projected
    return MeasurementOutcome(False, _renormalize(complement, True), 1.0 - p_pass)
