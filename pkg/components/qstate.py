"""
Dense state-vector core for the singlet/triplet measurement model.

Qubit q addresses bit q of the basis-state index, so qubit 0 is the least significant bit.
In the reshaped tensor of shape (2,) * n that puts qubit q on axis n - 1 - q.

Two-qubit singlet/triplet projections are computed from a single SWAP:
    Pi_s psi = (psi - SWAP psi) / 2,   Pi_t psi = (psi + SWAP psi) / 2
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import unitary_group

from components.errors import CapacityError, NumericalError, PreconditionError, ZeroBranch
from components.rng import Rng
from config.settings import NUMERIC_FLOOR, get_max_qubits, get_zero_tolerance

logger = logging.getLogger(__name__)

SQRT_HALF = 1.0 / np.sqrt(2.0)

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

CLIFFORDS = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF,
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "SDG": np.array([[1, 0], [0, -1j]], dtype=complex),
}

# Singlet on (low, high): +1/sqrt2 on |low=1, high=0>, -1/sqrt2 on |low=0, high=1>
SINGLET_PAIR = np.array([0.0, SQRT_HALF, -SQRT_HALF, 0.0], dtype=complex)


class PairOutcome(str, Enum):
    SINGLET = "S"
    TRIPLET = "T"

    @property
    def op(self) -> str:
        return self.value.lower()


def as_outcome(value) -> PairOutcome:
    if isinstance(value, PairOutcome):
        return value
    text = str(value).upper()
    if text in ("S", "SINGLET"):
        return PairOutcome.SINGLET
    if text in ("T", "TRIPLET"):
        return PairOutcome.TRIPLET
    raise PreconditionError(f"Unknown pair outcome {value!r}")


@dataclass
class TranscriptStep:
    step_index: int
    op: str
    pair: Tuple[int, int]
    outcome: Optional[str]
    branch_weight: float
    forced: bool = False
    eps: Optional[float] = None

    def to_record(self) -> dict:
        record = {
            "i": self.step_index,
            "op": self.op,
            "pair": [int(self.pair[0]), int(self.pair[1])],
            "out": self.outcome,
            "w": float(self.branch_weight),
            "forced": bool(self.forced),
        }
        if self.eps is not None:
            record["eps"] = float(self.eps)
        return record

    @classmethod
    def from_record(cls, record: dict) -> "TranscriptStep":
        return cls(
            step_index=int(record["i"]),
            op=record["op"],
            pair=(int(record["pair"][0]), int(record["pair"][1])),
            outcome=record.get("out"),
            branch_weight=float(record["w"]),
            forced=bool(record.get("forced", False)),
            eps=record.get("eps"),
        )


@dataclass
class Transcript:
    steps: List[TranscriptStep] = field(default_factory=list)

    def record(self, op: str, pair: Tuple[int, int], outcome: Optional[str], weight: float,
               forced: bool = False, eps: Optional[float] = None) -> TranscriptStep:
        step = TranscriptStep(len(self.steps), op, (int(pair[0]), int(pair[1])), outcome, float(weight), forced, eps)
        self.steps.append(step)
        return step

    def __len__(self) -> int:
        return len(self.steps)

    def since(self, index: int) -> List[TranscriptStep]:
        return self.steps[index:]

    def weight_product(self, forced_only: bool = False) -> float:
        product = 1.0
        for step in self.steps:
            if forced_only and not step.forced:
                continue
            product *= step.branch_weight
        return product

    def to_jsonl(self) -> str:
        return "".join(json.dumps(step.to_record(), sort_keys=True) + "\n" for step in self.steps)

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        steps = [TranscriptStep.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(steps)

    def copy(self) -> "Transcript":
        return Transcript(list(self.steps))


@dataclass
class StateVector:
    n_qubits: int
    amps: np.ndarray
    norm_sq: float = 1.0
    transcript: Transcript = field(default_factory=Transcript)

    def __post_init__(self):
        check_capacity(self.n_qubits)
        self.amps = np.asarray(self.amps, dtype=np.complex128).reshape(-1)
        if self.amps.size != 2 ** self.n_qubits:
            raise PreconditionError(
                f"Amplitude length {self.amps.size} does not match {self.n_qubits} qubits"
            )

    @property
    def dim(self) -> int:
        return self.amps.size

    def norm(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def normalize(self) -> "StateVector":
        norm = self.norm()
        if norm < NUMERIC_FLOOR:
            raise NumericalError("Cannot normalize a vanishing state")
        self.amps = self.amps / np.sqrt(norm)
        return self

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amps.copy(), self.norm_sq, self.transcript.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def check_capacity(n_qubits: int):
    limit = get_max_qubits()
    if n_qubits < 0:
        raise PreconditionError(f"Negative qubit count {n_qubits}")
    if n_qubits > limit:
        raise CapacityError(f"{n_qubits} qubits exceeds the capacity of {limit}")


def zero_state(n_qubits: int) -> StateVector:
    check_capacity(n_qubits)
    amps = np.zeros(2 ** n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def basis_state(bits: str) -> StateVector:
    """
    Computational basis state; bits[k] is the value of qubit k
    """
    n = len(bits)
    check_capacity(n)
    index = sum(1 << k for k, bit in enumerate(bits) if bit == "1")
    amps = np.zeros(2 ** n, dtype=complex)
    amps[index] = 1.0
    return StateVector(n, amps)


def product_state(qubit_states: Sequence[np.ndarray]) -> StateVector:
    """
    Product of single-qubit states; entry k lands on qubit k
    """
    check_capacity(len(qubit_states))
    amps = np.ones(1, dtype=complex)
    for single in qubit_states:
        single = np.asarray(single, dtype=complex)
        amps = np.kron(single / np.linalg.norm(single), amps)
    return StateVector(len(qubit_states), amps)


def tensor(low: StateVector, high: StateVector) -> StateVector:
    """
    Joint state; low keeps its qubit indices, high is shifted above it
    """
    check_capacity(low.n_qubits + high.n_qubits)
    transcript = low.transcript.copy()
    transcript.steps.extend(high.transcript.steps)
    return StateVector(
        low.n_qubits + high.n_qubits,
        np.kron(high.amps, low.amps),
        low.norm_sq * high.norm_sq,
        transcript,
    )


def append_qubits(state: StateVector, qubit_states: Sequence[np.ndarray]) -> StateVector:
    """
    Adds fresh qubits above the current register; returns the same object
    """
    grown = tensor(state, product_state(qubit_states))
    state.n_qubits, state.amps = grown.n_qubits, grown.amps
    return state


def random_state(n_qubits: int, rng: Rng) -> StateVector:
    check_capacity(n_qubits)
    gen = rng.generator
    amps = gen.normal(size=2 ** n_qubits) + 1j * gen.normal(size=2 ** n_qubits)
    return StateVector(n_qubits, amps / np.linalg.norm(amps))


def random_qubit(rng: Rng) -> np.ndarray:
    return random_unitary1(rng)[:, 0]


def random_unitary1(rng: Rng) -> np.ndarray:
    return unitary_group.rvs(2, random_state=rng.generator)


def singlet_dimerization(n_pairs: int) -> StateVector:
    """
    Singlets on (0,1), (2,3), ..., (2k, 2k+1)
    """
    check_capacity(2 * n_pairs)
    amps = np.ones(1, dtype=complex)
    for _ in range(n_pairs):
        amps = np.kron(SINGLET_PAIR, amps)
    return StateVector(2 * n_pairs, amps)


def dimer_state(n_qubits: int, pairs: Sequence[Tuple[int, int]]) -> StateVector:
    """
    Product of singlets on the given disjoint pairs; the singlet on (i, j) has i as its low member
    """
    used = [q for pair in pairs for q in pair]
    if len(set(used)) != len(used) or len(used) != n_qubits:
        raise PreconditionError(f"Pairs {pairs} are not a perfect matching of {n_qubits} qubits")
    mapping = {}
    for k, (i, j) in enumerate(pairs):
        mapping[2 * k], mapping[2 * k + 1] = i, j
    return relabel_qubits(singlet_dimerization(len(pairs)), mapping)


def bell_state(index: int) -> np.ndarray:
    """
    Two-qubit Bell vector by outcome label 1..4, as images of the singlet under a Pauli on qubit 0:
    1 = s, 2 = Z s, 3 = Z X s (|00>+|11>), 4 = X s (|00>-|11>)
    """
    vector = SINGLET_PAIR.copy()
    if index == 2:
        vector = _apply_1q(vector, 2, 0, PAULIS["Z"])
    elif index == 3:
        vector = _apply_1q(_apply_1q(vector, 2, 0, PAULIS["X"]), 2, 0, PAULIS["Z"])
    elif index == 4:
        vector = _apply_1q(vector, 2, 0, PAULIS["X"])
    elif index != 1:
        raise PreconditionError(f"Bell label must be 1..4, got {index}")
    return vector


# ---------------------------------------------------------------------------
# Tensor helpers (accept a trailing batch axis)
# ---------------------------------------------------------------------------

def _axis(n: int, q: int) -> int:
    return n - 1 - q


def swap_amplitudes(amps: np.ndarray, n: int, i: int, j: int) -> np.ndarray:
    batch = amps.shape[1:]
    t = amps.reshape((2,) * n + batch)
    return np.swapaxes(t, _axis(n, i), _axis(n, j)).reshape(amps.shape)


def pair_projection(amps: np.ndarray, n: int, i: int, j: int, outcome: PairOutcome) -> np.ndarray:
    swapped = swap_amplitudes(amps, n, i, j)
    if outcome == PairOutcome.SINGLET:
        return (amps - swapped) / 2
    return (amps + swapped) / 2


def _apply_1q(amps: np.ndarray, n: int, q: int, gate: np.ndarray) -> np.ndarray:
    batch = amps.shape[1:]
    t = amps.reshape((2,) * n + batch)
    ax = _axis(n, q)
    t = np.tensordot(gate, t, axes=([1], [ax]))
    return np.moveaxis(t, 0, ax).reshape(amps.shape)


def _check_qubit(state: StateVector, q: int):
    if not 0 <= q < state.n_qubits:
        raise PreconditionError(f"Qubit {q} out of range for {state.n_qubits} qubits")


def _check_pair(state: StateVector, i: int, j: int):
    _check_qubit(state, i)
    _check_qubit(state, j)
    if i == j:
        raise PreconditionError(f"Pair ({i}, {j}) must name two distinct qubits")


def _weights(branches: Sequence[np.ndarray], amps: np.ndarray) -> List[float]:
    total = float(np.vdot(amps, amps).real)
    if total < NUMERIC_FLOOR:
        raise NumericalError("State norm vanished")
    return [float(np.vdot(b, b).real) / total for b in branches]


# ---------------------------------------------------------------------------
# Pair measurements
# ---------------------------------------------------------------------------

def pair_weights(state: StateVector, i: int, j: int) -> Dict[PairOutcome, float]:
    _check_pair(state, i, j)
    singlet = pair_projection(state.amps, state.n_qubits, i, j, PairOutcome.SINGLET)
    w_s, w_t = _weights([singlet, state.amps - singlet], state.amps)
    return {PairOutcome.SINGLET: w_s, PairOutcome.TRIPLET: w_t}


def project_pair(state: StateVector, i: int, j: int, outcome) -> Tuple[StateVector, float]:
    """
    Applies Pi_s or Pi_t to a copy without renormalizing.

    The returned weight is ||Pi psi||^2 / ||psi||^2 and the copy's norm_sq is scaled by it;
    the caller decides whether to renormalize.
    """
    _check_pair(state, i, j)
    outcome = as_outcome(outcome)
    projected = pair_projection(state.amps, state.n_qubits, i, j, outcome)
    (weight,) = _weights([projected], state.amps)
    branch = StateVector(state.n_qubits, projected, state.norm_sq * weight, state.transcript.copy())
    return branch, weight


def measure_pair(state: StateVector, i: int, j: int, rng: Rng) -> Tuple[StateVector, PairOutcome]:
    _check_pair(state, i, j)
    singlet = pair_projection(state.amps, state.n_qubits, i, j, PairOutcome.SINGLET)
    triplet = state.amps - singlet
    w_s, w_t = _weights([singlet, triplet], state.amps)
    if w_s + w_t < NUMERIC_FLOOR:
        raise NumericalError(f"Both branches of pair ({i}, {j}) vanished")
    if rng.random() < w_s / (w_s + w_t):
        outcome, branch, weight = PairOutcome.SINGLET, singlet, w_s
    else:
        outcome, branch, weight = PairOutcome.TRIPLET, triplet, w_t
    state.amps = branch / np.sqrt(np.vdot(branch, branch).real)
    state.norm_sq *= weight
    state.transcript.record(outcome.op, (i, j), outcome.value, weight)
    return state, outcome


def postselect_pair(state: StateVector, i: int, j: int, outcome,
                    tolerance: Optional[float] = None) -> Tuple[StateVector, float]:
    outcome = as_outcome(outcome)
    tolerance = get_zero_tolerance() if tolerance is None else tolerance
    branch, weight = project_pair(state, i, j, outcome)
    if weight <= tolerance:
        raise ZeroBranch(f"Forced {outcome.value} on ({i}, {j}) has weight {weight:.3e}")
    state.amps = branch.amps / np.sqrt(branch.norm())
    state.norm_sq *= weight
    state.transcript.record(outcome.op, (i, j), outcome.value, weight, forced=True)
    return state, weight


# ---------------------------------------------------------------------------
# Oracle gates (verification only)
# ---------------------------------------------------------------------------

def apply_pauli(state: StateVector, q: int, pauli: str) -> StateVector:
    _check_qubit(state, q)
    if pauli not in PAULIS:
        raise PreconditionError(f"Unknown Pauli {pauli!r}")
    if pauli != "I":
        state.amps = _apply_1q(state.amps, state.n_qubits, q, PAULIS[pauli])
    return state


def apply_clifford1(state: StateVector, q: int, gate: str) -> StateVector:
    _check_qubit(state, q)
    if gate not in CLIFFORDS:
        raise PreconditionError(f"Unknown single-qubit Clifford {gate!r}")
    state.amps = _apply_1q(state.amps, state.n_qubits, q, CLIFFORDS[gate])
    return state


def apply_unitary1(state: StateVector, q: int, unitary: np.ndarray) -> StateVector:
    _check_qubit(state, q)
    state.amps = _apply_1q(state.amps, state.n_qubits, q, np.asarray(unitary, dtype=complex))
    return state


def apply_unitary_all(state: StateVector, unitary: np.ndarray) -> StateVector:
    """
    U on every qubit, the global rotation that s/t measurements commute with
    """
    for q in range(state.n_qubits):
        apply_unitary1(state, q, unitary)
    return state


def apply_swap(state: StateVector, i: int, j: int) -> StateVector:
    _check_pair(state, i, j)
    state.amps = swap_amplitudes(state.amps, state.n_qubits, i, j)
    return state


def apply_cnot_oracle(state: StateVector, ctrl: int, tgt: int) -> StateVector:
    _check_pair(state, ctrl, tgt)
    n = state.n_qubits
    t = state.amps.reshape((2,) * n)
    out = t.copy()
    index = [slice(None)] * n
    index[_axis(n, ctrl)] = 1
    flip_axis = _axis(n, tgt) - (1 if _axis(n, tgt) > _axis(n, ctrl) else 0)
    out[tuple(index)] = np.flip(t[tuple(index)], axis=flip_axis)
    state.amps = out.reshape(-1)
    return state


def record_correction(state: StateVector, q: int, gate: str) -> StateVector:
    """
    Applies a Pauli or Clifford correction and notes it in the transcript
    """
    if gate in PAULIS:
        apply_pauli(state, q, gate)
    else:
        apply_clifford1(state, q, gate)
    state.transcript.record("fix", (q, q), gate, 1.0)
    return state


def pauli_weights(state: StateVector, q: int, pauli: str) -> Dict[int, float]:
    _check_qubit(state, q)
    flipped = _apply_1q(state.amps, state.n_qubits, q, PAULIS[pauli])
    w_plus, w_minus = _weights([(state.amps + flipped) / 2, (state.amps - flipped) / 2], state.amps)
    return {1: w_plus, -1: w_minus}


def _pauli_branch(state: StateVector, q: int, pauli: str, value: int) -> np.ndarray:
    flipped = _apply_1q(state.amps, state.n_qubits, q, PAULIS[pauli])
    return (state.amps + value * flipped) / 2


def measure_pauli1(state: StateVector, q: int, pauli: str, rng: Rng) -> Tuple[StateVector, int]:
    if pauli not in ("X", "Y", "Z"):
        raise PreconditionError(f"Single-qubit measurement needs X, Y or Z, got {pauli!r}")
    weights = pauli_weights(state, q, pauli)
    if weights[1] + weights[-1] < NUMERIC_FLOOR:
        raise NumericalError(f"Both {pauli} branches on qubit {q} vanished")
    value = 1 if rng.random() < weights[1] / (weights[1] + weights[-1]) else -1
    branch = _pauli_branch(state, q, pauli, value)
    state.amps = branch / np.sqrt(np.vdot(branch, branch).real)
    state.norm_sq *= weights[value]
    state.transcript.record("p" + pauli.lower(), (q, q), f"{value:+d}", weights[value])
    return state, value


def postselect_pauli1(state: StateVector, q: int, pauli: str, value: int,
                      tolerance: Optional[float] = None) -> Tuple[StateVector, float]:
    tolerance = get_zero_tolerance() if tolerance is None else tolerance
    weight = pauli_weights(state, q, pauli)[value]
    if weight <= tolerance:
        raise ZeroBranch(f"Forced {pauli}={value:+d} on qubit {q} has weight {weight:.3e}")
    branch = _pauli_branch(state, q, pauli, value)
    state.amps = branch / np.sqrt(np.vdot(branch, branch).real)
    state.norm_sq *= weight
    state.transcript.record("p" + pauli.lower(), (q, q), f"{value:+d}", weight, forced=True)
    return state, weight


# ---------------------------------------------------------------------------
# Heisenberg factors and total spin
# ---------------------------------------------------------------------------

def apply_heisenberg(state: StateVector, i: int, j: int, eps: float) -> StateVector:
    """
    Applies 1 + eps S_i.S_j = (1 - eps/4) + (eps/2) SWAP_ij and renormalizes.

    The norm ratio is folded into norm_sq and recorded as the step weight.
    """
    _check_pair(state, i, j)
    swapped = swap_amplitudes(state.amps, state.n_qubits, i, j)
    updated = (1 - eps / 4) * state.amps + (eps / 2) * swapped
    new_norm = float(np.vdot(updated, updated).real)
    if new_norm < NUMERIC_FLOOR:
        raise ZeroBranch(f"1 + {eps} S.S on ({i}, {j}) annihilated the state")
    ratio = new_norm / state.norm()
    state.amps = updated / np.sqrt(new_norm)
    state.norm_sq *= ratio
    state.transcript.record("heis", (i, j), None, ratio, eps=eps)
    return state


def _apply_spin_sq(amps: np.ndarray, n: int, subset: Sequence[int]) -> np.ndarray:
    m = len(subset)
    out = (3 * m / 4 - m * (m - 1) / 4) * amps
    for a in range(m):
        for b in range(a + 1, m):
            out = out + swap_amplitudes(amps, n, subset[a], subset[b])
    return out


def _check_subset(state: StateVector, subset: Sequence[int]):
    for q in subset:
        _check_qubit(state, q)
    if len(set(subset)) != len(subset):
        raise PreconditionError(f"Subset {list(subset)} repeats a qubit")


def total_spin_sq_expect(state: StateVector, subset: Sequence[int]) -> float:
    _check_subset(state, subset)
    applied = _apply_spin_sq(state.amps, state.n_qubits, list(subset))
    return float(np.vdot(state.amps, applied).real / state.norm())


def admissible_twice_spins(m: int) -> List[int]:
    return list(range(m % 2, m + 1, 2))


def _sector_projection(amps: np.ndarray, n: int, subset: Sequence[int], twice_s: int) -> np.ndarray:
    target = twice_s / 2 * (twice_s / 2 + 1)
    out = amps
    for other in admissible_twice_spins(len(subset)):
        if other == twice_s:
            continue
        value = other / 2 * (other / 2 + 1)
        out = (_apply_spin_sq(out, n, subset) - value * out) / (target - value)
    return out


def project_spin_sector(state: StateVector, subset: Sequence[int], twice_s: int) -> Tuple[StateVector, float]:
    """
    Projects onto total spin S of the subset (given as 2S) and renormalizes a copy
    """
    _check_subset(state, subset)
    if twice_s not in admissible_twice_spins(len(subset)):
        raise PreconditionError(f"2S={twice_s} is not admissible for {len(subset)} qubits")
    projected = _sector_projection(state.amps, state.n_qubits, list(subset), twice_s)
    (weight,) = _weights([projected], state.amps)
    if weight <= NUMERIC_FLOOR:
        raise ZeroBranch(f"Spin sector 2S={twice_s} on {list(subset)} is empty")
    branch = StateVector(state.n_qubits, projected / np.sqrt(np.vdot(projected, projected).real),
                         state.norm_sq * weight, state.transcript.copy())
    return branch, weight


def spin_sector_weights(state: StateVector, subset: Sequence[int]) -> Dict[int, float]:
    _check_subset(state, subset)
    weights = {}
    for twice_s in admissible_twice_spins(len(subset)):
        projected = _sector_projection(state.amps, state.n_qubits, list(subset), twice_s)
        weights[twice_s] = _weights([projected], state.amps)[0]
    return weights


def measure_spin_sector(state: StateVector, subset: Sequence[int], rng: Rng) -> Tuple[StateVector, int]:
    """
    Exact Born measurement of the subset's total spin; returns 2S
    """
    weights = spin_sector_weights(state, subset)
    sectors = sorted(weights)
    probs = np.array([weights[s] for s in sectors])
    pick = int(np.searchsorted(np.cumsum(probs / probs.sum()), rng.random(), side="right"))
    twice_s = sectors[min(pick, len(sectors) - 1)]
    branch, weight = project_spin_sector(state, subset, twice_s)
    state.amps, state.norm_sq = branch.amps, state.norm_sq * weight
    return state, twice_s


def _popcount_mask(n: int, subset: Sequence[int]) -> np.ndarray:
    indices = np.arange(2 ** n)
    ones = np.zeros(2 ** n, dtype=int)
    for q in subset:
        ones += (indices >> q) & 1
    return ones


def sz_sector_weights(state: StateVector, subset: Sequence[int]) -> Dict[int, float]:
    """
    Weights of 2 S_Z over the subset; qubit value 0 counts as +1/2
    """
    _check_subset(state, subset)
    twice_sz = len(subset) - 2 * _popcount_mask(state.n_qubits, subset)
    probs = state.probabilities() / state.norm()
    return {int(v): float(probs[twice_sz == v].sum()) for v in range(-len(subset), len(subset) + 1, 2)}


def project_sz_sector(state: StateVector, subset: Sequence[int], twice_sz: int) -> Tuple[StateVector, float]:
    _check_subset(state, subset)
    keep = (len(subset) - 2 * _popcount_mask(state.n_qubits, subset)) == twice_sz
    projected = np.where(keep, state.amps, 0)
    (weight,) = _weights([projected], state.amps)
    if weight <= NUMERIC_FLOOR:
        raise ZeroBranch(f"2Sz={twice_sz} sector on {list(subset)} is empty")
    return StateVector(state.n_qubits, projected / np.sqrt(np.vdot(projected, projected).real),
                       state.norm_sq * weight, state.transcript.copy()), weight


def fidelity(a: StateVector, b: StateVector) -> float:
    if a.n_qubits != b.n_qubits:
        raise PreconditionError(f"Cannot compare {a.n_qubits}- and {b.n_qubits}-qubit states")
    overlap = np.vdot(a.amps, b.amps)
    return float(abs(overlap) ** 2 / (a.norm() * b.norm()))


# ---------------------------------------------------------------------------
# Register surgery
# ---------------------------------------------------------------------------

def relabel_qubits(state: StateVector, mapping: Dict[int, int]) -> StateVector:
    """
    Moves old qubit q to new index mapping[q]; unmapped qubits keep their index
    """
    n = state.n_qubits
    full = {q: mapping.get(q, q) for q in range(n)}
    if sorted(full.values()) != list(range(n)):
        raise PreconditionError(f"Mapping {mapping} is not a permutation of {n} qubits")
    inverse = {new: old for old, new in full.items()}
    t = state.amps.reshape((2,) * n)
    order = [_axis(n, inverse[n - 1 - g]) for g in range(n)]
    return StateVector(n, np.transpose(t, order).reshape(-1), state.norm_sq, state.transcript.copy())


def extract_subsystem(state: StateVector, qubits: Sequence[int], tolerance: float = 1e-8) -> StateVector:
    """
    Pure state of the listed qubits, in the given order; fails if they are entangled with the rest
    """
    qubits = list(qubits)
    _check_subset(state, qubits)
    n = state.n_qubits
    rest = [q for q in range(n) if q not in qubits]
    mapping = {q: k for k, q in enumerate(qubits)}
    mapping.update({q: len(qubits) + k for k, q in enumerate(rest)})
    moved = relabel_qubits(state, mapping)
    matrix = moved.amps.reshape(2 ** len(rest), 2 ** len(qubits))
    u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    if s[0] ** 2 < NUMERIC_FLOOR:
        raise NumericalError("Cannot extract from a vanishing state")
    residual = float(np.sum(s[1:] ** 2) / np.sum(s ** 2))
    if residual > tolerance:
        raise PreconditionError(f"Qubits {qubits} are entangled with the rest (residual {residual:.3e})")
    # Fix the global phase so the largest amplitude is real positive
    vector = vh[0] * u[np.argmax(np.abs(u[:, 0])), 0] / abs(u[np.argmax(np.abs(u[:, 0])), 0])
    return StateVector(len(qubits), vector, state.norm_sq, state.transcript.copy())


def discard_qubits(state: StateVector, qubits: Iterable[int], tolerance: float = 1e-8) -> StateVector:
    """
    Drops qubits that are in a product state with the rest; survivors keep their relative order
    """
    dropped = set(qubits)
    keep = [q for q in range(state.n_qubits) if q not in dropped]
    return extract_subsystem(state, keep, tolerance)


def remove_singlet_pair(state: StateVector, i: int, j: int, tolerance: float = 1e-8) -> StateVector:
    """
    Contracts qubits i, j with the singlet and drops them; they must hold a singlet
    """
    _check_pair(state, i, j)
    low, high = min(i, j), max(i, j)
    n = state.n_qubits
    t = state.amps.reshape((2,) * n)
    index = [slice(None)] * n

    def part(low_bit: int, high_bit: int) -> np.ndarray:
        index[_axis(n, low)], index[_axis(n, high)] = low_bit, high_bit
        return t[tuple(index)]

    reduced = (part(1, 0) - part(0, 1)) * SQRT_HALF
    kept = float(np.vdot(reduced, reduced).real) / state.norm()
    if kept < 1 - tolerance:
        raise PreconditionError(f"Qubits ({i}, {j}) do not hold a singlet (overlap {kept:.6f})")
    return StateVector(n - 2, reduced.reshape(-1), state.norm_sq, state.transcript.copy())


# ---------------------------------------------------------------------------
# Binary state files: u32 qubit count, then little-endian complex128 amplitudes
# ---------------------------------------------------------------------------

def dump_state(state: StateVector) -> bytes:
    return struct.pack("<I", state.n_qubits) + state.amps.astype("<c16").tobytes()


def load_state(payload: bytes) -> StateVector:
    (n,) = struct.unpack("<I", payload[:4])
    amps = np.frombuffer(payload[4:], dtype="<c16")
    if amps.size != 2 ** n:
        raise PreconditionError(f"State file holds {amps.size} amplitudes, expected {2 ** n}")
    return StateVector(n, amps.astype(np.complex128))
