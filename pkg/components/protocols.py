"""
Two-qubit operations, CNOT, teleportation, magic states, injection and standards built from
singlet/triplet measurements plus single-qubit Paulis.

Pauli words are operator products, so "ZX" means X is applied first and Z second.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from components.angles import circle_distance, reduce_angle
from components.errors import EmptyPool, PreconditionError, RetryExhausted
from components.qstate import (
    PairOutcome, StateVector, TranscriptStep, append_qubits, apply_clifford1,
    apply_cnot_oracle, apply_pauli, bell_state, dimer_state, discard_qubits, extract_subsystem,
    fidelity, measure_pair, measure_pauli1, postselect_pair, product_state, random_qubit,
    record_correction, relabel_qubits,
)
from components.rng import Rng
from config.settings import get_max_attempts, is_debug

logger = logging.getLogger(__name__)

MAGIC_ANGLE = math.atan(1 / 3)
MAGIC_VECTOR = np.array([3, 1], dtype=complex) / math.sqrt(10)
Y_PLUS = np.array([1, 1j], dtype=complex) / math.sqrt(2)
DEFAULT_WALK_STEPS = 10 ** 7

# Pauli conjugating A before the second s/t measurement, and the undo applied afterwards
CONJUGATORS = {"ZZ": "Z", "XX": "X", "YY": "XZ"}
UNDO = {"ZZ": "Z", "XX": "X", "YY": "ZX"}
# Second observable revealed when the first measurement already gave the triplet
PARTNERS = {"ZZ": "XX", "XX": "ZZ", "YY": "ZZ"}
# Pauli on A anticommuting with the measured product, used by the hatted variants
HAT_CONJUGATORS = {"ZZ": "X", "XX": "Z", "YY": "X"}

# Pauli (as x, z bits) that teleportation leaves on the receiving qubit, per Bell outcome
BELL_PAULI_BITS = {1: (0, 0), 2: (0, 1), 3: (1, 1), 4: (1, 0)}
BELL_CORRECTIONS = {1: "I", 2: "Z", 3: "ZX", 4: "X"}

CnotFn = Callable[[StateVector, int, int, Rng], StateVector]


def apply_pauli_word(state: StateVector, q: int, word: str, record: bool = True) -> StateVector:
    for letter in reversed(word):
        if letter == "I":
            continue
        if record:
            record_correction(state, q, letter)
        else:
            apply_pauli(state, q, letter)
    return state


def _anticommutes(a: str, b: str) -> bool:
    return a != "I" and b != "I" and a != b


@dataclass
class TwoQubitOpReport:
    measured: Dict[str, int]
    succeeded: bool

    def __post_init__(self):
        if self.succeeded != (len(self.measured) == 1):
            raise PreconditionError(f"Inconsistent report {self.measured} (succeeded={self.succeeded})")

    def to_dict(self) -> dict:
        return {"measured": dict(sorted(self.measured.items())), "succeeded": self.succeeded}


@dataclass
class ProtocolRun:
    succeeded: bool
    steps: List[TranscriptStep] = field(default_factory=list)
    corrections: List[str] = field(default_factory=list)
    outcomes: Dict[str, int] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Bell measurement and the O / O-hat two-qubit operations
# ---------------------------------------------------------------------------

def bell_measure(state: StateVector, a: int, b: int, rng: Rng) -> int:
    """
    Four-outcome Bell measurement from at most three s/t measurements.

    Outcome k leaves the pair in bell_state(k); the Paulis applied on the way are undone
    and recorded in the transcript.
    """
    if a == b:
        raise PreconditionError("Bell measurement needs two distinct qubits")
    _, outcome = measure_pair(state, a, b, rng)
    if outcome == PairOutcome.SINGLET:
        return 1
    record_correction(state, a, "Z")
    _, outcome = measure_pair(state, a, b, rng)
    if outcome == PairOutcome.SINGLET:
        record_correction(state, a, "Z")
        return 2
    record_correction(state, a, "X")
    _, outcome = measure_pair(state, a, b, rng)
    # Undo X_A then Z_A
    apply_pauli_word(state, a, "ZX")
    return 3 if outcome == PairOutcome.SINGLET else 4


def _two_qubit_op(state: StateVector, a: int, b: int, rng: Rng, kind: str, forced: bool) -> TwoQubitOpReport:
    if a == b:
        raise PreconditionError(f"O_{kind} needs two distinct qubits")
    if forced:
        postselect_pair(state, a, b, PairOutcome.TRIPLET)
        apply_pauli_word(state, a, CONJUGATORS[kind])
        postselect_pair(state, a, b, PairOutcome.TRIPLET)
        apply_pauli_word(state, a, UNDO[kind])
        return TwoQubitOpReport({kind: 1}, True)

    _, outcome = measure_pair(state, a, b, rng)
    if outcome == PairOutcome.SINGLET:
        return TwoQubitOpReport({kind: -1, PARTNERS[kind]: -1}, False)
    apply_pauli_word(state, a, CONJUGATORS[kind])
    _, outcome = measure_pair(state, a, b, rng)
    apply_pauli_word(state, a, UNDO[kind])
    if outcome == PairOutcome.SINGLET:
        return TwoQubitOpReport({kind: -1, PARTNERS[kind]: 1}, False)
    return TwoQubitOpReport({kind: 1}, True)


def o_zz(state: StateVector, a: int, b: int, rng: Rng, forced: bool = False) -> TwoQubitOpReport:
    """
    Measures Z_A Z_B; when that is -1 it also measures X_A X_B
    """
    return _two_qubit_op(state, a, b, rng, "ZZ", forced)


def o_xx(state: StateVector, a: int, b: int, rng: Rng, forced: bool = False) -> TwoQubitOpReport:
    return _two_qubit_op(state, a, b, rng, "XX", forced)


def o_yy(state: StateVector, a: int, b: int, rng: Rng, forced: bool = False) -> TwoQubitOpReport:
    return _two_qubit_op(state, a, b, rng, "YY", forced)


def _hat_op(state: StateVector, a: int, b: int, rng: Rng, kind: str) -> TwoQubitOpReport:
    if not rng.coin():
        return _two_qubit_op(state, a, b, rng, kind, forced=False)
    conj = HAT_CONJUGATORS[kind]
    record_correction(state, a, conj)
    report = _two_qubit_op(state, a, b, rng, kind, forced=False)
    record_correction(state, a, conj)
    # Values refer to the conjugated state; translate back to the input frame
    measured = {obs: (-v if _anticommutes(obs[0], conj) else v) for obs, v in report.measured.items()}
    return TwoQubitOpReport(measured, report.succeeded)


def hat_o_zz(state: StateVector, a: int, b: int, rng: Rng) -> TwoQubitOpReport:
    """
    Always measures Z_A Z_B, and X_A X_B as well with probability 1/2 whatever the input
    """
    return _hat_op(state, a, b, rng, "ZZ")


def hat_o_xx(state: StateVector, a: int, b: int, rng: Rng) -> TwoQubitOpReport:
    return _hat_op(state, a, b, rng, "XX")


def hat_o_yy(state: StateVector, a: int, b: int, rng: Rng) -> TwoQubitOpReport:
    return _hat_op(state, a, b, rng, "YY")


HAT_OPS = {"Z": hat_o_zz, "X": hat_o_xx, "Y": hat_o_yy}


# ---------------------------------------------------------------------------
# Teleportation and CNOT
# ---------------------------------------------------------------------------

def teleport(state: StateVector, a: int, b: int, c: int, rng: Rng) -> str:
    """
    Moves the state of A onto C, using (B, C) in a singlet; returns the correction applied to C
    """
    if len({a, b, c}) != 3:
        raise PreconditionError(f"Teleport needs three distinct qubits, got {(a, b, c)}")
    if is_debug():
        pair = extract_subsystem(state, [b, c])
        if fidelity(pair, StateVector(2, bell_state(1))) < 1 - 1e-9:
            raise PreconditionError(f"Qubits ({b}, {c}) do not hold a singlet")
    outcome = bell_measure(state, a, b, rng)
    correction = BELL_CORRECTIONS[outcome]
    apply_pauli_word(state, c, correction)
    return correction


def oracle_cnot(state: StateVector, ctrl: int, tgt: int, rng: Optional[Rng] = None) -> StateVector:
    return apply_cnot_oracle(state, ctrl, tgt)


def cnot_measurement_circuit(state: StateVector, ctrl: int, tgt: int, ancilla: int, rng: Rng,
                             forced: bool = False) -> ProtocolRun:
    """
    CNOT from two-qubit measurements: ancilla to |+>, Z_c Z_a, X_a X_t, then Z on the ancilla.

    The ancilla must start in |0>. Fails (succeeded=False) when O_ZZ or O_XX reveals its partner
    observable; forced=True post-selects both successes.
    """
    start = len(state.transcript)
    run = ProtocolRun(False)
    record_correction(state, ancilla, "H")
    zz = o_zz(state, ctrl, ancilla, rng, forced=forced)
    run.outcomes["ZZ"] = zz.measured["ZZ"]
    if not zz.succeeded:
        run.steps = state.transcript.since(start)
        return run
    xx = o_xx(state, ancilla, tgt, rng, forced=forced)
    run.outcomes["XX"] = xx.measured["XX"]
    if not xx.succeeded:
        run.steps = state.transcript.since(start)
        return run
    _, z_anc = measure_pauli1(state, ancilla, "Z", rng)
    run.outcomes["Z"] = z_anc
    if (zz.measured["ZZ"] == -1) != (z_anc == -1):
        record_correction(state, tgt, "X")
        run.corrections.append(f"X{tgt}")
    if xx.measured["XX"] == -1:
        record_correction(state, ctrl, "Z")
        run.corrections.append(f"Z{ctrl}")
    run.succeeded = True
    run.steps = state.transcript.since(start)
    return run


def psi_cnot_oracle() -> StateVector:
    """
    CNOT(E -> F) applied to singlets (C, E) and (D, F), with C, D, E, F = 0, 1, 2, 3
    """
    return apply_cnot_oracle(dimer_state(4, [(0, 2), (1, 3)]), 2, 3)


def prepare_psi_cnot(rng: Rng, max_attempts: Optional[int] = None,
                     forced: bool = False) -> Tuple[StateVector, int]:
    """
    Offline, heralded preparation of the CNOT resource on qubits C, D, E, F = 0..3.

    Returns the resource and the number of attempts used.
    """
    max_attempts = get_max_attempts() if max_attempts is None else max_attempts
    for attempt in range(1, max_attempts + 1):
        state = dimer_state(4, [(0, 2), (1, 3)])
        append_qubits(state, [np.array([1, 0])])
        run = cnot_measurement_circuit(state, 2, 3, 4, rng, forced=forced)
        if run.succeeded:
            logger.debug("psi_CNOT prepared after %d attempts", attempt)
            return discard_qubits(state, [4]), attempt
    raise RetryExhausted(f"psi_CNOT preparation failed {max_attempts} times")


def cnot_via_teleport(state: StateVector, src: int, tgt: int, resource: Sequence[int],
                      rng: Rng) -> ProtocolRun:
    """
    Gate teleportation through psi_CNOT held on resource = (C, D, E, F).

    The CNOT output lands on E (control) and F (target); Pauli corrections are propagated
    through the CNOT and applied there.
    """
    c, d, e, f = resource
    start = len(state.transcript)
    k_src = bell_measure(state, src, c, rng)
    k_tgt = bell_measure(state, tgt, d, rng)
    x_c, z_c = BELL_PAULI_BITS[k_src]
    x_t, z_t = BELL_PAULI_BITS[k_tgt]
    # X_c -> X_c X_t and Z_t -> Z_c Z_t under CNOT(c -> t)
    fixes = {e: (x_c, z_c ^ z_t), f: (x_c ^ x_t, z_t)}
    run = ProtocolRun(True, outcomes={"bell_src": k_src, "bell_tgt": k_tgt})
    for q, (x, z) in fixes.items():
        if x:
            record_correction(state, q, "X")
            run.corrections.append(f"X{q}")
        if z:
            record_correction(state, q, "Z")
            run.corrections.append(f"Z{q}")
    run.steps = state.transcript.since(start)
    return run


def protocol_cnot(state: StateVector, ctrl: int, tgt: int, rng: Rng) -> StateVector:
    """
    CNOT using only s/t measurements and Paulis: prepare psi_CNOT, teleport through it,
    move the outputs back onto ctrl and tgt and drop the spent qubits
    """
    resource, _ = prepare_psi_cnot(rng)
    n = state.n_qubits
    joint = StateVector(n + 4, np.kron(resource.amps, state.amps), state.norm_sq, state.transcript)
    cnot_via_teleport(joint, ctrl, tgt, (n, n + 1, n + 2, n + 3), rng)
    joint = relabel_qubits(joint, {ctrl: n + 2, n + 2: ctrl, tgt: n + 3, n + 3: tgt})
    result = discard_qubits(joint, [n, n + 1, n + 2, n + 3])
    state.amps, state.norm_sq, state.transcript = result.amps, result.norm_sq, result.transcript
    return state


# ---------------------------------------------------------------------------
# Magic states and rotations
# ---------------------------------------------------------------------------

@dataclass
class AngleResource:
    angle: float
    state: np.ndarray
    qubit: int = 0
    step_count: int = 1
    multiple: int = 1
    attempts: int = 1
    triplets: int = 1


def prepare_magic(rng: Rng, max_attempts: Optional[int] = None) -> AngleResource:
    """
    (3|0> + |1>)/sqrt(10): triplet-project |0>|+>, then keep the X = +1 outcome on qubit 1.

    Both the singlet outcome and the X = -1 outcome (which leaves |+>) are retried.
    """
    max_attempts = get_max_attempts() if max_attempts is None else max_attempts
    triplets = 0
    for attempt in range(1, max_attempts + 1):
        state = product_state([np.array([1, 0]), np.array([1, 1])])
        _, outcome = measure_pair(state, 0, 1, rng)
        if outcome == PairOutcome.SINGLET:
            continue
        triplets += 1
        _, value = measure_pauli1(state, 1, "X", rng)
        if value == -1:
            continue
        qubit = extract_subsystem(state, [0])
        # Fix the phase so the |0> amplitude is real positive
        vector = qubit.amps * np.exp(-1j * np.angle(qubit.amps[0]))
        return AngleResource(MAGIC_ANGLE, vector, attempts=attempt, triplets=triplets)
    raise RetryExhausted(f"Magic-state preparation failed {max_attempts} times")


def resource_from_angle(angle: float) -> AngleResource:
    return AngleResource(angle, np.array([math.cos(angle), math.sin(angle)], dtype=complex))


def inject_rotation(state: StateVector, q: int, resource: AngleResource, rng: Rng,
                    cnot: Optional[CnotFn] = None) -> int:
    """
    Applies diag(1, e^{+2i angle}) or diag(1, e^{-2i angle}) to qubit q and returns the sign.

    The resource is rotated by XHS into |0> + e^{2i angle}|1>, a CNOT q -> resource follows,
    and the resource is read out in Z and dropped.
    """
    cnot = cnot or oracle_cnot
    r = state.n_qubits
    append_qubits(state, [resource.state])
    for gate in ("S", "H", "X"):
        record_correction(state, r, gate)
    cnot(state, q, r, rng)
    _, value = measure_pauli1(state, r, "Z", rng)
    transcript = state.transcript
    result = discard_qubits(state, [r])
    state.n_qubits, state.amps = result.n_qubits, result.amps
    state.transcript = transcript
    return value


def _phase_register(resource: AngleResource) -> StateVector:
    walker = StateVector(1, resource.state.copy())
    apply_clifford1(walker, 0, "S")
    apply_clifford1(walker, 0, "H")
    return apply_pauli(walker, 0, "X")


def _amplitude_form(walker: StateVector) -> np.ndarray:
    # Inverse of XHS: X, then H, then S^dagger
    out = walker.copy()
    apply_pauli(out, 0, "X")
    apply_clifford1(out, 0, "H")
    apply_clifford1(out, 0, "SDG")
    vector = out.amps / np.linalg.norm(out.amps)
    pivot = 0 if abs(vector[0]) > 1e-9 else 1
    return vector * np.exp(-1j * np.angle(vector[pivot]))


def _hit(m: int, theta: float, target: float, eps: float) -> bool:
    return circle_distance(reduce_angle(m, theta), target) <= eps


def random_walk_to_angle(target: float, eps: float, rng: Rng, max_steps: int = DEFAULT_WALK_STEPS,
                         simulate: bool = False, theta: float = MAGIC_ANGLE) -> AngleResource:
    """
    Repeated injection of the magic angle until cos(phi)|0> + sin(phi)|1> has phi within eps
    of target, where phi = m theta for an integer m that moves by +-1 per injection.

    simulate=True runs every injection on state vectors; otherwise the injection signs,
    which are uniform for every input, are drawn directly.
    """
    if eps <= 0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    walker = _phase_register(prepare_magic(rng)) if simulate else None
    m, steps = 1, 1
    if not _hit(m, theta, target, eps):
        if simulate:
            while True:
                if steps >= max_steps:
                    raise RetryExhausted(f"Angle walk did not reach {target} within {max_steps} steps")
                m += inject_rotation(walker, 0, prepare_magic(rng), rng)
                steps += 1
                if _hit(m, theta, target, eps):
                    break
        else:
            m, steps = _fast_walk(m, steps, theta, target, eps, rng, max_steps)
    vector = _amplitude_form(walker) if simulate else np.array(
        [math.cos(m * theta), math.sin(m * theta)], dtype=complex)
    angle = reduce_angle(m, theta)
    logger.info("angle walk reached m=%d (angle %.6f) after %d steps", m, angle, steps)
    return AngleResource(angle, vector, step_count=steps, multiple=m)


def _fast_walk(m: int, steps: int, theta: float, target: float, eps: float, rng: Rng,
               max_steps: int) -> Tuple[int, int]:
    chunk = 4096
    two_pi = 2 * math.pi
    while steps < max_steps:
        count = min(chunk, max_steps - steps)
        path = m + np.cumsum(rng.signs(count))
        angles = np.mod(path * theta, two_pi)
        diff = np.abs(angles - target % two_pi)
        close = np.flatnonzero(np.minimum(diff, two_pi - diff) <= eps + 1e-9)
        for k in close:
            if _hit(int(path[k]), theta, target, eps):
                return int(path[k]), steps + int(k) + 1
        m, steps = int(path[-1]), steps + count
    raise RetryExhausted(f"Angle walk did not reach {target} within {max_steps} steps")


# ---------------------------------------------------------------------------
# S and H from |Y=+1> resources
# ---------------------------------------------------------------------------

def s_gate_injection(state: StateVector, q: int, y_qubit: int, rng: Rng,
                     cnot: Optional[CnotFn] = None) -> int:
    """
    CNOT q -> y, then Z on y: +1 applies S, -1 applies S^dagger which is fixed up with Z
    """
    cnot = cnot or oracle_cnot
    cnot(state, q, y_qubit, rng)
    _, value = measure_pauli1(state, y_qubit, "Z", rng)
    if value == -1:
        record_correction(state, q, "Z")
    return value


def hsh_injection(state: StateVector, q: int, y_qubit: int, rng: Rng,
                  cnot: Optional[CnotFn] = None) -> int:
    """
    CNOT y -> q, then X on y: -1 applies HSH, +1 applies HS^daggerH which is fixed up with X
    """
    cnot = cnot or oracle_cnot
    cnot(state, y_qubit, q, rng)
    _, value = measure_pauli1(state, y_qubit, "X", rng)
    if value == 1:
        record_correction(state, q, "X")
    return value


def _with_y_resource(state: StateVector, q: int, rng: Rng, injection, cnot: Optional[CnotFn]) -> int:
    y = state.n_qubits
    append_qubits(state, [Y_PLUS])
    value = injection(state, q, y, rng, cnot)
    transcript = state.transcript
    result = discard_qubits(state, [y])
    state.n_qubits, state.amps = result.n_qubits, result.amps
    state.transcript = transcript
    return value


def derived_s(state: StateVector, q: int, rng: Rng, cnot: Optional[CnotFn] = None) -> StateVector:
    _with_y_resource(state, q, rng, s_gate_injection, cnot)
    return state


def derived_hsh(state: StateVector, q: int, rng: Rng, cnot: Optional[CnotFn] = None) -> StateVector:
    _with_y_resource(state, q, rng, hsh_injection, cnot)
    return state


def derived_hadamard(state: StateVector, q: int, rng: Rng, cnot: Optional[CnotFn] = None) -> StateVector:
    """
    H up to a global phase, as S, then HSH, then S
    """
    derived_s(state, q, rng, cnot)
    derived_hsh(state, q, rng, cnot)
    derived_s(state, q, rng, cnot)
    return state


# ---------------------------------------------------------------------------
# Standards
# ---------------------------------------------------------------------------

EIGENSTATES = {
    "Z": {1: np.array([1, 0], dtype=complex), -1: np.array([0, 1], dtype=complex)},
    "X": {1: np.array([1, 1], dtype=complex) / math.sqrt(2), -1: np.array([1, -1], dtype=complex) / math.sqrt(2)},
    "Y": {1: Y_PLUS, -1: np.array([1, -1j], dtype=complex) / math.sqrt(2)},
}
FLIPS = {"Z": "X", "X": "Z", "Y": "Z"}


@dataclass
class StandardsPool:
    """
    Qubits sharing one eigenstate of kind; the common sign (orientation) is hidden.

    The register holds exactly the members, member k on qubit k.
    """
    kind: str
    register: StateVector
    orientation: int
    size_history: List[int] = field(default_factory=list)
    operations: int = 0

    @property
    def size(self) -> int:
        return self.register.n_qubits

    @property
    def members(self) -> List[int]:
        return list(range(self.size))

    def verify(self, tolerance: float = 1e-9) -> bool:
        """
        Exact oracle check that every pair of members has double-Pauli expectation +1
        """
        for a in range(self.size):
            for b in range(a + 1, self.size):
                flipped = self.register.copy()
                apply_pauli(flipped, a, self.kind)
                apply_pauli(flipped, b, self.kind)
                value = np.vdot(self.register.amps, flipped.amps).real / self.register.norm()
                if abs(value - 1) > tolerance:
                    return False
        return True

    def pop(self) -> np.ndarray:
        """
        Removes the top member and returns its single-qubit state
        """
        if self.size == 0:
            raise EmptyPool(f"{self.kind} standards pool is empty")
        top = self.size - 1
        member = extract_subsystem(self.register, [top]).amps
        self.register = discard_qubits(self.register, [top])
        self.size_history.append(self.size)
        return member

    def push(self, member: np.ndarray):
        append_qubits(self.register, [member])
        self.size_history.append(self.size)


def _seed_pool(kind: str, orientation: int) -> StateVector:
    return product_state([EIGENSTATES[kind][1 if orientation == 0 else -1]])


def build_standards(kind: str, target_size: int, rng: Rng, variant: str = "quadratic",
                    max_operations: int = 100_000, orientation: Optional[int] = None) -> StandardsPool:
    """
    Grows a standards pool of the given Pauli kind to target_size using hatted operations
    on Haar-random fresh qubits.

    quadratic: one fresh qubit per operation, so the size does an unbiased walk.
    linear: a two-member helper set is built and merged in one operation, giving positive drift.
    """
    if kind not in FLIPS:
        raise PreconditionError(f"Standards kind must be X, Y or Z, got {kind!r}")
    if target_size < 1:
        raise PreconditionError(f"target_size must be positive, got {target_size}")
    if variant not in ("quadratic", "linear"):
        raise PreconditionError(f"Unknown standards variant {variant!r}")
    orientation = rng.integers(0, 2) if orientation is None else orientation
    pool = StandardsPool(kind, _seed_pool(kind, orientation), orientation, [1])
    grow = _grow_quadratic if variant == "quadratic" else _grow_linear
    while pool.size < target_size:
        if pool.operations >= max_operations:
            raise RetryExhausted(f"Standards pool stuck at {pool.size} after {max_operations} operations")
        grow(pool, rng)
    logger.info("%s standards pool of size %d built in %d operations (%s)",
                kind, pool.size, pool.operations, variant)
    return pool


def _reseed_if_empty(pool: StandardsPool, rng: Rng):
    if pool.size == 0:
        pool.orientation = rng.integers(0, 2)
        pool.register = _seed_pool(pool.kind, pool.orientation)
        pool.size_history.append(1)


def _grow_quadratic(pool: StandardsPool, rng: Rng):
    top = pool.size - 1
    fresh = pool.size
    append_qubits(pool.register, [random_qubit(rng)])
    report = HAT_OPS[pool.kind](pool.register, top, fresh, rng)
    pool.operations += 1
    if report.succeeded:
        if report.measured[pool.kind * 2] == -1:
            apply_pauli(pool.register, fresh, FLIPS[pool.kind])
    else:
        pool.register = discard_qubits(pool.register, [top, fresh])
    pool.size_history.append(pool.size)
    _reseed_if_empty(pool, rng)


def _grow_linear(pool: StandardsPool, rng: Rng):
    n = pool.size
    # Helper set T on qubits n, n+1
    append_qubits(pool.register, [random_qubit(rng), random_qubit(rng)])
    report = HAT_OPS[pool.kind](pool.register, n, n + 1, rng)
    pool.operations += 1
    if not report.succeeded:
        pool.register = discard_qubits(pool.register, [n, n + 1])
        pool.size_history.append(pool.size)
        return
    if report.measured[pool.kind * 2] == -1:
        apply_pauli(pool.register, n + 1, FLIPS[pool.kind])
    helpers = [n, n + 1]
    while helpers:
        top = pool.register.n_qubits - len(helpers) - 1
        t = helpers[0]
        report = HAT_OPS[pool.kind](pool.register, top, t, rng)
        pool.operations += 1
        if report.succeeded:
            if report.measured[pool.kind * 2] == -1:
                for h in helpers:
                    apply_pauli(pool.register, h, FLIPS[pool.kind])
            break
        # s and t are now a Bell pair; drop both and merge the rest of T
        pool.register = discard_qubits(pool.register, [top, t])
        helpers = [h - 2 for h in helpers[1:]]
        if pool.register.n_qubits == len(helpers):
            # Pool exhausted; the leftover helpers are reseeded below
            pool.register = discard_qubits(pool.register, helpers)
            helpers = []
    pool.size_history.append(pool.size)
    _reseed_if_empty(pool, rng)


def measure_via_standard(state: StateVector, q: int, kind: str, pool: StandardsPool,
                         rng: Rng) -> Tuple[StateVector, int]:
    """
    Measures kind on qubit q relative to the pool's hidden orientation.

    A member is moved next to q and a hatted operation is run; on success the member goes
    back to the pool, otherwise it stays behind in state as q's Bell partner.
    """
    if kind != pool.kind:
        raise PreconditionError(f"Cannot measure {kind} with a {pool.kind} pool")
    member = pool.pop()
    s = state.n_qubits
    append_qubits(state, [member])
    report = HAT_OPS[kind](state, q, s, rng)
    value = report.measured[kind * 2]
    if report.succeeded:
        returned = extract_subsystem(state, [s]).amps
        transcript = state.transcript
        result = discard_qubits(state, [s])
        state.n_qubits, state.amps, state.transcript = result.n_qubits, result.amps, transcript
        pool.push(returned)
    return state, value


# ---------------------------------------------------------------------------
# Demo summaries
# ---------------------------------------------------------------------------

def protocol_demo(protocol: str, trials: int, rng: Rng) -> Tuple[dict, List[TranscriptStep]]:
    """
    Runs a protocol repeatedly on per-trial streams and returns the summary plus the
    transcript of the first trial
    """
    successes, attempts, fidelities = 0, [], []
    first_steps: List[TranscriptStep] = []
    for trial in range(trials):
        stream = rng.spawn(trial)
        if protocol == "bell":
            label = stream.integers(1, 5)
            state = StateVector(2, bell_state(label))
            outcome = bell_measure(state, 0, 1, stream)
            successes += int(outcome == label)
            fidelities.append(fidelity(state, StateVector(2, bell_state(outcome))))
        elif protocol == "cnot":
            resource, used = prepare_psi_cnot(stream)
            attempts.append(used)
            successes += 1
            fidelities.append(fidelity(resource, psi_cnot_oracle()))
            state = resource
        elif protocol == "magic":
            resource = prepare_magic(stream)
            attempts.append(resource.attempts)
            successes += 1
            fidelities.append(float(abs(np.vdot(resource.state, MAGIC_VECTOR)) ** 2))
            state = StateVector(1, resource.state)
        elif protocol == "teleport":
            psi = random_qubit(stream)
            state = tensor_with_singlet(psi)
            teleport(state, 0, 1, 2, stream)
            out = extract_subsystem(state, [2])
            value = fidelity(out, StateVector(1, psi))
            successes += int(value >= 1 - 1e-10)
            fidelities.append(value)
        elif protocol == "standards":
            pool = build_standards("Z", 8, stream)
            attempts.append(pool.operations)
            successes += int(pool.verify())
            fidelities.append(1.0)
            state = pool.register
        else:
            raise PreconditionError(f"Unknown protocol demo {protocol!r}")
        if trial == 0:
            first_steps = list(state.transcript.steps)
    summary = {
        "protocol": protocol,
        "trials": trials,
        "success_rate": successes / trials if trials else 0.0,
        "mean_attempts": float(np.mean(attempts)) if attempts else 1.0,
        "fidelity_min": float(min(fidelities)) if fidelities else 1.0,
    }
    return summary, first_steps


def tensor_with_singlet(psi: np.ndarray) -> StateVector:
    """
    psi on qubit 0 and a singlet on qubits (1, 2)
    """
    singlet = dimer_state(2, [(0, 1)])
    return StateVector(3, np.kron(singlet.amps, psi / np.linalg.norm(psi)))
