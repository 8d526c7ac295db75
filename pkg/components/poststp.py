"""
Post-selected s/t computing: the Heisenberg resource state, the epsilon schedule, approximate
epsilon plans and imaginary-time Trotter evolution, plus the dense oracles they are checked against.

A factor 1 + eps S_A.S_B multiplies the triplet of (A, B) by 1 + eps/4 and the singlet by
1 - 3 eps/4. Two factors on (A, C) and (B, D) followed by a singlet projection of (C, D) leave
1 - (a b / 4) S_A.S_B on (A, B); pairing with eps = 4 (twice a SWAP) therefore flips the sign.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import expm_multiply

from components.errors import NumericalError, PreconditionError
from components.qstate import (
    SINGLET_PAIR, PairOutcome, StateVector, Transcript, apply_heisenberg, apply_swap, dimer_state,
    discard_qubits, fidelity, measure_pair, pair_weights, postselect_pair, relabel_qubits,
    remove_singlet_pair, singlet_dimerization,
)
from components.rng import Rng
from config.settings import get_max_coupling, get_zero_tolerance

logger = logging.getLogger(__name__)

EPS_BASE = 4.0 / 3.0
TROTTER_MODES = ("direct", "protocol")
ORACLE_MAX_QUBITS = 8
POSTSELECTION_OPS = ("s", "t")


# ---------------------------------------------------------------------------
# Register helpers
# ---------------------------------------------------------------------------

def _grow(state: StateVector, extra: np.ndarray, extra_qubits: int) -> StateVector:
    """
    Joint register with the extra qubits above the state's; shares the state's transcript
    """
    return StateVector(state.n_qubits + extra_qubits, np.kron(extra, state.amps), state.norm_sq,
                       state.transcript)


def _settle(state: StateVector, result: StateVector) -> StateVector:
    state.n_qubits, state.amps = result.n_qubits, result.amps
    state.norm_sq, state.transcript = result.norm_sq, result.transcript
    return state


# ---------------------------------------------------------------------------
# Resource state and the epsilon recursion
# ---------------------------------------------------------------------------

def resource_state(eps: float) -> StateVector:
    """
    Returns psi_resource(eps) on qubits C=0, D=1, E=2, F=3: singlets on (C, E) and (D, F),
    then 1 + eps S_E.S_F
    """
    state = dimer_state(4, [(0, 2), (1, 3)])
    apply_heisenberg(state, 2, 3, eps)
    return StateVector(4, state.amps)


def apply_heis_via_resource(state: StateVector, a: int, b: int, eps: float, rng: Optional[Rng] = None,
                            forced: bool = True, resource: Optional[StateVector] = None) -> Transcript:
    """
    Applies 1 + eps S_A.S_B by teleporting (A, B) through psi_resource(eps).

    The pairs (A, C) and (B, D) are post-selected on s, after which E and F hold the result and are
    moved back onto A and B. With forced=False both pairs are measured instead; on a triplet the
    joint register (four extra qubits) is left in place and the returned steps end with a "t".
    """
    if a == b:
        raise PreconditionError(f"Heisenberg factor needs two distinct qubits, got ({a}, {b})")
    resource = resource_state(eps) if resource is None else resource
    start = len(state.transcript)
    n = state.n_qubits
    c, d, e, f = n, n + 1, n + 2, n + 3
    joint = _grow(state, resource.amps, 4)
    for x, y in ((a, c), (b, d)):
        if forced:
            postselect_pair(joint, x, y, PairOutcome.SINGLET)
            continue
        _, outcome = measure_pair(joint, x, y, rng)
        if outcome is PairOutcome.TRIPLET:
            logger.debug("resource teleport heralded a triplet on (%d, %d)", x, y)
            _settle(state, joint)
            return Transcript(state.transcript.since(start))
    joint = relabel_qubits(joint, {a: e, e: a, b: f, f: b})
    _settle(state, discard_qubits(joint, [c, d, e, f]))
    return Transcript(state.transcript.since(start))


def mix_epsilon(eps_a: float, eps_b: float) -> float:
    """
    Returns the epsilon left on (A, B) by eps_a on (A, C), eps_b on (B, D) and a (C, D) singlet
    """
    return -eps_a * eps_b / 4


def reduce_epsilon_once(state: StateVector, a: int, b: int, eps: float, rng: Optional[Rng] = None,
                        eps_b: Optional[float] = None, via_resource: bool = False) -> Transcript:
    """
    Appends a (C, D) singlet, applies 1 + eps S_A.S_C and 1 + eps_b S_B.S_D, then post-selects
    (C, D) on s and drops it. The net factor on (A, B) has epsilon mix_epsilon(eps, eps_b).

    via_resource=True consumes two psi_resource copies for the two factors instead of applying
    them directly.
    """
    eps_b = eps if eps_b is None else eps_b
    start = len(state.transcript)
    n = state.n_qubits
    c, d = n, n + 1
    joint = _grow(state, SINGLET_PAIR, 2)
    for x, y, value in ((a, c, eps), (b, d, eps_b)):
        if via_resource:
            apply_heis_via_resource(joint, x, y, value, rng)
        else:
            apply_heisenberg(joint, x, y, value)
    postselect_pair(joint, c, d, PairOutcome.SINGLET)
    _settle(state, remove_singlet_pair(joint, c, d))
    return Transcript(state.transcript.since(start))


@dataclass
class EpsilonSchedule:
    """
    Magnitudes eps[0] = 4/3, eps[i+1] = eps[i]^2 / 4, extended on demand.

    The squaring protocol produces +eps[0] at level 0 and -eps[i] above it; the other sign of
    every level costs one SWAP pairing.
    """
    eps: List[float] = field(default_factory=lambda: [EPS_BASE])
    neg_base: float = -EPS_BASE

    @classmethod
    def build(cls, depth: int = 8) -> "EpsilonSchedule":
        schedule = cls()
        schedule.entry(depth - 1)
        return schedule

    def entry(self, level: int) -> float:
        while len(self.eps) <= level:
            self.eps.append(self.eps[-1] ** 2 / 4)
        return self.eps[level]

    @staticmethod
    def natural_sign(level: int) -> int:
        return 1 if level == 0 else -1

    def signed(self, level: int, sign: Optional[int] = None) -> float:
        sign = self.natural_sign(level) if sign is None else sign
        return sign * self.entry(level)

    def first_entry_in(self, x: float) -> int:
        """
        Returns the first level whose magnitude is at most (4/3) x; it is at least (4/9) x^2
        """
        if not 0 < x <= 1:
            raise PreconditionError(f"x must lie in (0, 1], got {x}")
        bound = EPS_BASE * x
        level = 0
        while self.entry(level) > bound:
            level += 1
        return level


DEFAULT_SCHEDULE = EpsilonSchedule.build()


def apply_schedule_level(state: StateVector, a: int, b: int, level: int,
                         sign: Optional[int] = None) -> Transcript:
    """
    Applies 1 + sign * eps[level] S_A.S_B using post-selected s/t projections only.

    Level 0 is a triplet post-selection; level i squares level i-1 through a (C, D) singlet;
    the non-natural sign pairs the level with a SWAP of B and D.
    """
    natural = DEFAULT_SCHEDULE.natural_sign(level)
    sign = natural if sign is None else sign
    if sign not in (1, -1):
        raise PreconditionError(f"sign must be +1 or -1, got {sign}")
    start = len(state.transcript)
    if level == 0 and sign == natural:
        postselect_pair(state, a, b, PairOutcome.TRIPLET)
        return Transcript(state.transcript.since(start))
    n = state.n_qubits
    c, d = n, n + 1
    joint = _grow(state, SINGLET_PAIR, 2)
    if sign == natural:
        apply_schedule_level(joint, a, c, level - 1)
        apply_schedule_level(joint, b, d, level - 1)
    else:
        apply_schedule_level(joint, a, c, level)
        apply_swap(joint, b, d)
    postselect_pair(joint, c, d, PairOutcome.SINGLET)
    _settle(state, remove_singlet_pair(joint, c, d))
    return Transcript(state.transcript.since(start))


def level_cost(level: int, flipped: bool = False) -> int:
    """
    Returns the number of post-selections apply_schedule_level spends
    """
    cost = 1
    for _ in range(level):
        cost = 2 * cost + 1
    return cost + (1 if flipped else 0)


# ---------------------------------------------------------------------------
# Exponentiated form: 1 + eps S.S is proportional to exp(y S.S)
# ---------------------------------------------------------------------------

def sector_ratio(eps: float) -> float:
    """
    Returns the singlet-to-triplet eigenvalue ratio of 1 + eps S.S
    """
    triplet, singlet = 1 + eps / 4, 1 - 3 * eps / 4
    if triplet <= 0 or singlet <= 0:
        raise PreconditionError(f"1 + {eps} S.S is not positive and has no exponentiated form")
    return singlet / triplet


def exponent_of(eps: float) -> float:
    return -math.log(sector_ratio(eps))


def eps_of_exponent(y: float) -> float:
    r = math.exp(-y)
    return 4 * (1 - r) / (3 + r)


@dataclass
class PlanEntry:
    level: int
    sign: int
    power: int

    @property
    def eps(self) -> float:
        return DEFAULT_SCHEDULE.signed(self.level, self.sign)

    @property
    def flipped(self) -> bool:
        return self.sign != DEFAULT_SCHEDULE.natural_sign(self.level)


@dataclass
class EpsilonPlan:
    target: float
    delta: float
    entries: List[PlanEntry]
    effective: float
    operations: int

    @property
    def error(self) -> float:
        return abs(self.effective - self.target)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "delta": self.delta,
            "entries": [{"level": e.level, "sign": e.sign, "power": e.power} for e in self.entries],
            "effective": self.effective,
            "operations": self.operations,
        }


def plan_effective_epsilon(entries: List[PlanEntry]) -> float:
    """
    Returns the epsilon of the composed plan from the summed exponents
    """
    return eps_of_exponent(sum(e.power * exponent_of(e.eps) for e in entries))


def _plan(target: float, delta: float, entries: List[PlanEntry]) -> EpsilonPlan:
    operations = sum(e.power * level_cost(e.level, e.flipped) for e in entries)
    return EpsilonPlan(target, delta, entries, plan_effective_epsilon(entries), operations)


def approx_epsilon_plan(target: float, delta: float) -> EpsilonPlan:
    """
    Plan realizing 1 + eps S.S with |eps - target| <= delta from schedule entries.

    A schedule entry within delta is used once. Otherwise a base entry of the target's sign, no
    larger than about delta, is raised to the power that best matches the target's exponent.
    """
    if not -1 <= target <= 1:
        raise PreconditionError(f"Target epsilon must lie in [-1, 1], got {target}")
    if delta <= 0:
        raise PreconditionError(f"delta must be positive, got {delta}")
    if abs(target) <= delta:
        return _plan(target, delta, [])
    sign = 1 if target > 0 else -1
    start = DEFAULT_SCHEDULE.first_entry_in(min(delta, 1.0))
    hits = [level for level in range(start + 1) if abs(sign * DEFAULT_SCHEDULE.entry(level) - target) <= delta]
    if hits:
        best = min(hits, key=lambda level: abs(sign * DEFAULT_SCHEDULE.entry(level) - target))
        return _plan(target, delta, [PlanEntry(best, sign, 1)])
    wanted = exponent_of(target)
    level = max(start, 1)
    while True:
        base = DEFAULT_SCHEDULE.entry(level)
        if base < 1e-300:
            raise NumericalError(f"No schedule level reaches {target} within {delta}")
        power = max(1, round(wanted / exponent_of(sign * base)))
        plan = _plan(target, delta, [PlanEntry(level, sign, power)])
        if plan.error <= delta:
            logger.debug("epsilon plan for %r: level %d, sign %+d, power %d", target, level, sign, power)
            return plan
        level += 1


@lru_cache(maxsize=1024)
def _cached_plan(target: float, delta: float) -> EpsilonPlan:
    return approx_epsilon_plan(target, delta)


def execute_plan(state: StateVector, a: int, b: int, plan: EpsilonPlan) -> Transcript:
    start = len(state.transcript)
    for entry in plan.entries:
        for _ in range(entry.power):
            apply_schedule_level(state, a, b, entry.level, entry.sign)
    return Transcript(state.transcript.since(start))


def resource_from_plan(plan: EpsilonPlan) -> StateVector:
    """
    Returns psi_resource(plan.effective) built by running the plan on (E, F)
    """
    state = dimer_state(4, [(0, 2), (1, 3)])
    execute_plan(state, 2, 3, plan)
    return StateVector(4, state.amps)


# ---------------------------------------------------------------------------
# Heisenberg schedules and Trotter evolution
# ---------------------------------------------------------------------------

Couplings = Dict[Tuple[int, int], float]


@dataclass
class HeisenbergStep:
    duration: float
    couplings: Couplings


@dataclass
class HeisenbergSchedule:
    steps: List[HeisenbergStep]

    def validate(self, n_qubits: Optional[int] = None) -> "HeisenbergSchedule":
        bound = get_max_coupling()
        for step in self.steps:
            if step.duration <= 0:
                raise PreconditionError(f"Step durations must be positive, got {step.duration}")
            for (i, j), value in step.couplings.items():
                if i == j:
                    raise PreconditionError(f"Coupling on ({i}, {j}) needs two distinct qubits")
                if n_qubits is not None and not (0 <= i < n_qubits and 0 <= j < n_qubits):
                    raise PreconditionError(f"Coupling ({i}, {j}) is outside {n_qubits} qubits")
                if abs(value) > bound:
                    raise PreconditionError(f"|J_{i}{j}| = {abs(value)} exceeds the bound {bound}")
        return self

    @property
    def total_time(self) -> float:
        return sum(step.duration for step in self.steps)

    def to_records(self) -> list:
        return [{"dt": step.duration, "J": [[i, j, value] for (i, j), value in sorted(step.couplings.items())]}
                for step in self.steps]

    def to_json(self) -> str:
        return json.dumps(self.to_records(), indent=2)

    @classmethod
    def from_records(cls, records: list) -> "HeisenbergSchedule":
        steps = []
        for record in records:
            couplings = {(int(i), int(j)): float(value) for i, j, value in record["J"]}
            steps.append(HeisenbergStep(float(record["dt"]), couplings))
        return cls(steps).validate()

    @classmethod
    def from_json(cls, text: str) -> "HeisenbergSchedule":
        return cls.from_records(json.loads(text))


def ring_schedule(n_qubits: int, coupling: float, duration: float) -> HeisenbergSchedule:
    """
    One step with coupling J on every ring edge (k, k + 1 mod n)
    """
    edges = {(k, (k + 1) % n_qubits): coupling for k in range(n_qubits)}
    return HeisenbergSchedule([HeisenbergStep(duration, edges)]).validate(n_qubits)


def _apply_factor(state: StateVector, i: int, j: int, eps: float, mode: str, rng: Optional[Rng],
                  delta: Optional[float]):
    if mode == "direct":
        apply_heisenberg(state, i, j, eps)
    elif delta is None:
        apply_heis_via_resource(state, i, j, eps, rng)
    else:
        # the plan's schedule levels are resource teleportations with eps fixed by the plan
        execute_plan(state, i, j, _cached_plan(eps, delta))


def trotter_imaginary_evolve(state: StateVector, schedule: HeisenbergSchedule, dt: float,
                             mode: str = "direct", rng: Optional[Rng] = None,
                             delta: Optional[float] = None) -> StateVector:
    """
    First-order Trotter evolution of d psi/dt = H(t) psi, i.e. psi -> exp(+tH) psi, normalized.

    Each schedule step is cut into ceil(duration / dt) equal slices and every slice applies
    1 + h J_ij S_i.S_j for each coupling. The state flows to the top of H's spectrum, so the ground
    state of sum J S.S is reached with the couplings negated.

    mode="protocol" routes every factor through psi_resource(h J) (delta=None) or through the
    post-selected schedule levels of approx_epsilon_plan(h J, delta). Returns a new state.
    """
    if dt <= 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    if mode not in TROTTER_MODES:
        raise PreconditionError(f"Unknown Trotter mode {mode!r}; expected one of {TROTTER_MODES}")
    schedule.validate(state.n_qubits)
    evolved = state.copy()
    for step in schedule.steps:
        slices = max(1, math.ceil(step.duration / dt - 1e-9))
        h = step.duration / slices
        factors = [(i, j, h * value) for (i, j), value in sorted(step.couplings.items())]
        for i, j, eps in factors:
            if abs(eps) > 1:
                raise PreconditionError(f"Trotter factor h*J = {eps} on ({i}, {j}) exceeds 1; reduce dt")
        for _ in range(slices):
            for i, j, eps in factors:
                _apply_factor(evolved, i, j, eps, mode, rng, delta)
    return evolved


@dataclass
class EvolutionReport:
    steps: int
    final_norm_product: float
    fidelity_vs_oracle: Optional[float]

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "final_norm_product": self.final_norm_product,
            "fidelity_vs_oracle": self.fidelity_vs_oracle,
        }


def evolve_with_report(state: StateVector, schedule: HeisenbergSchedule, dt: float,
                       mode: str = "direct", rng: Optional[Rng] = None,
                       delta: Optional[float] = None) -> Tuple[StateVector, EvolutionReport]:
    evolved = trotter_imaginary_evolve(state, schedule, dt, mode, rng, delta)
    factors = sum(max(1, math.ceil(step.duration / dt - 1e-9)) * len(step.couplings) for step in schedule.steps)
    oracle_fidelity = None
    if state.n_qubits <= ORACLE_MAX_QUBITS:
        oracle_fidelity = fidelity(evolved, exact_imaginary_evolution(state, schedule))
    report = EvolutionReport(factors, evolved.norm_sq / state.norm_sq, oracle_fidelity)
    return evolved, report


def trotter_error(state: StateVector, schedule: HeisenbergSchedule, dt: float) -> float:
    """
    Phase-insensitive distance sqrt(1 - F) between direct Trotter evolution and the dense oracle.
    First order in dt, so halving dt roughly halves it.
    """
    evolved = trotter_imaginary_evolve(state, schedule, dt)
    value = fidelity(evolved, exact_imaginary_evolution(state, schedule))
    return math.sqrt(max(0.0, 1.0 - value))


# ---------------------------------------------------------------------------
# Dense oracles
# ---------------------------------------------------------------------------

def swap_matrix(n_qubits: int, i: int, j: int) -> sparse.csr_matrix:
    index = np.arange(2 ** n_qubits)
    differ = ((index >> i) ^ (index >> j)) & 1
    swapped = index ^ (differ << i) ^ (differ << j)
    return sparse.csr_matrix((np.ones(index.size), (swapped, index)), shape=(index.size, index.size))


def heisenberg_matrix(n_qubits: int, couplings: Couplings) -> sparse.csr_matrix:
    """
    Returns sum J_ij S_i.S_j with S_i.S_j = SWAP_ij / 2 - 1/4
    """
    dim = 2 ** n_qubits
    total = sparse.csr_matrix((dim, dim))
    identity = sparse.identity(dim, format="csr")
    for (i, j), value in couplings.items():
        total = total + value * (swap_matrix(n_qubits, i, j) / 2 - identity / 4)
    return total.tocsr()


def exact_imaginary_evolution(state: StateVector, schedule: HeisenbergSchedule) -> StateVector:
    """
    Returns exp(+t_k H_k) ... exp(+t_1 H_1) psi, normalized
    """
    psi = state.amps.copy()
    for step in schedule.steps:
        psi = expm_multiply(step.duration * heisenberg_matrix(state.n_qubits, step.couplings), psi)
        psi = psi / np.linalg.norm(psi)
    return StateVector(state.n_qubits, psi)


def ground_state(n_qubits: int, couplings: Couplings) -> StateVector:
    """
    Returns the lowest eigenvector of sum J_ij S_i.S_j (dense eigensolver)
    """
    values, vectors = eigh(heisenberg_matrix(n_qubits, couplings).toarray())
    if values.size > 1 and abs(values[1] - values[0]) < 1e-9:
        logger.warning("Ground state of the %d-qubit Hamiltonian is degenerate", n_qubits)
    return StateVector(n_qubits, vectors[:, 0])


# ---------------------------------------------------------------------------
# Post-selection probability lower bound
# ---------------------------------------------------------------------------

def amplitude_bound(j: int, n_qubits: int) -> float:
    return 4.0 ** (-j) * 2.0 ** (-(n_qubits + 1))


@dataclass
class BoundCheck:
    """
    Outcome of the running post-selection check; j, observed and bound describe the prefix whose
    probability came closest to (or furthest below) its bound
    """
    steps: int
    j: int
    n_qubits: int
    observed: float
    bound: float
    final: float
    passed: bool

    def to_dict(self) -> dict:
        return {"steps": self.steps, "j": self.j, "N": self.n_qubits, "observed": self.observed,
                "bound": self.bound, "final": self.final, "passed": self.passed}


def verify_amplitude_bound(transcript: Transcript, n_qubits: int, p_min: Optional[float] = None) -> BoundCheck:
    """
    Recomputes the running probability p_j of the first j forced s/t outcomes and checks every
    nonzero p_j against 4^-j 2^-(N+1).

    Once p_j hits zero the later prefixes are not bounded. p_min, when given, is an extra caller
    threshold the final nonzero probability must reach.
    """
    weights = [step.branch_weight for step in transcript.steps
               if step.forced and step.op in POSTSELECTION_OPS]
    running = 1.0
    worst_j, worst_p, worst_bound = 0, running, amplitude_bound(0, n_qubits)
    first_violation = None
    for j, weight in enumerate(weights, start=1):
        running *= weight
        if running == 0.0:
            break
        bound = amplitude_bound(j, n_qubits)
        if running / bound < worst_p / worst_bound:
            worst_j, worst_p, worst_bound = j, running, bound
        if first_violation is None and running < bound * (1 - 1e-12):
            first_violation = j
    passed = first_violation is None
    if p_min is not None and running > 0.0:
        passed = passed and running >= p_min
    if first_violation is not None:
        logger.warning("Post-selection probability %.3e after %d outcomes is below %.3e (N=%d)",
                       worst_p, worst_j, worst_bound, n_qubits)
    return BoundCheck(len(weights), worst_j, n_qubits, worst_p, worst_bound, running, passed)


def random_forced_transcript(n_qubits: int, length: int, rng: Rng) -> Transcript:
    """
    Forces `length` s/t outcomes on random pairs of a dimerization, picking among the
    outcomes that have nonzero weight
    """
    if n_qubits < 2 or n_qubits % 2:
        raise PreconditionError(f"A dimerization needs an even number of qubits, got {n_qubits}")
    state = singlet_dimerization(n_qubits // 2)
    tolerance = get_zero_tolerance()
    for _ in range(length):
        i, j = rng.distinct_pair(range(n_qubits))
        options = [outcome for outcome, w in pair_weights(state, i, j).items() if w > tolerance]
        outcome = options[0] if len(options) == 1 else rng.choice(options)
        postselect_pair(state, i, j, outcome)
    return state.transcript
