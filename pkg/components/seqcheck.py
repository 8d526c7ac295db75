"""
Projector sequences acting on spin_0(2N) with singlet-paired ancillas.

Sites are named c1..c2N (computational, qubits 0..2N-1) and a1..a2M (ancillas, qubits 2N..2N+2M-1).
The ancillas start as singlets on (a1, a2), (a3, a4), ... and the operator of a sequence is read off
by contracting them with the same singlets at the end.

Covers sequence operators, equiangular and no-leakage checks, forced recovery for an equiangular
pair, the signed-permutation test and the nested-commutator numerics of the two length-8 triplet
sequences.
"""
import itertools
import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import logm
from scipy.optimize import linear_sum_assignment

from components.errors import (
    CapacityError, LogUndefinedError, PreconditionError, RetryExhausted, SingularOperatorError,
)
from components.qstate import PairOutcome, as_outcome, dimer_state, pair_projection, singlet_dimerization
from components.rng import Rng
from config.sequences import ROTATION_EIGENVALUES, get_printed_operator, get_sequence_record
from config.settings import get_distance_norm, get_sequence_order

logger = logging.getLogger(__name__)

SITE_PATTERN = re.compile(r"^([ac])(\d+)$")
# Largest spin count for the brute-force permutation search (720 permutations)
MAX_PERMUTATION_SPINS = 6
RANK_TOLERANCE = 1e-10

# A step is a product of commuting pair projectors
Step = List[Tuple[PairOutcome, int, int]]


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectorSpec:
    kind: str
    pair: Tuple[str, str]

    def __post_init__(self):
        if self.kind not in ("s", "t"):
            raise PreconditionError(f"Projector kind must be 's' or 't', got {self.kind!r}")
        if self.pair[0] == self.pair[1]:
            raise PreconditionError(f"Projector pair must be two distinct sites, got {self.pair}")

    @property
    def outcome(self) -> PairOutcome:
        return as_outcome(self.kind)

    @property
    def label(self) -> str:
        return f"{self.kind}_{self.pair[0]},{self.pair[1]}"


def site_qubit(site: str, n_comp: int, n_anc: int) -> int:
    match = SITE_PATTERN.match(site)
    if not match:
        raise PreconditionError(f"Site must look like c1 or a2, got {site!r}")
    family, number = match.group(1), int(match.group(2))
    limit = n_comp if family == "c" else n_anc
    if not 1 <= number <= limit:
        raise PreconditionError(f"Site {site} is outside {family}1..{family}{limit}")
    return number - 1 if family == "c" else n_comp + number - 1


@dataclass
class ProjectorSequence:
    """
    Items in tuple order (P_k, ..., P_1): the last item acts first unless the configured order
    is reversed. Caps are the all-ancilla singlet projector at the start and at the end.
    """
    n_comp: int
    n_anc: int
    items: List[ProjectorSpec] = field(default_factory=list)
    cap_leading: bool = True
    cap_trailing: bool = True

    def __post_init__(self):
        if self.n_comp < 2 or self.n_comp % 2:
            raise PreconditionError(f"Computational spin count must be even and positive, got {self.n_comp}")
        if self.n_anc < 0 or self.n_anc % 2:
            raise PreconditionError(f"Ancilla count must be even, got {self.n_anc}")
        for item in self.items:
            for site in item.pair:
                site_qubit(site, self.n_comp, self.n_anc)

    @property
    def n_qubits(self) -> int:
        return self.n_comp + self.n_anc

    @property
    def ancilla_pairs(self) -> List[Tuple[int, int]]:
        return [(self.n_comp + k, self.n_comp + k + 1) for k in range(0, self.n_anc, 2)]

    def _step(self, item: ProjectorSpec) -> Step:
        i, j = (site_qubit(site, self.n_comp, self.n_anc) for site in item.pair)
        return [(item.outcome, i, j)]

    def steps(self, order: Optional[str] = None) -> List[Tuple[str, Step]]:
        """
        Labelled steps in application order, caps included
        """
        order = get_sequence_order() if order is None else order
        written = self.items if order == "leftmost" else list(reversed(self.items))
        cap = [(PairOutcome.SINGLET, i, j) for i, j in self.ancilla_pairs]
        steps = [(item.label, self._step(item)) for item in written]
        if cap and self.cap_leading:
            steps.insert(0, ("cap", cap))
        if cap and self.cap_trailing:
            steps.append(("cap", cap))
        return steps

    def to_dict(self) -> dict:
        return {
            "n_comp": self.n_comp,
            "n_anc": self.n_anc,
            "items": [{"kind": item.kind, "pair": list(item.pair)} for item in self.items],
            "caps": {"leading": self.cap_leading, "trailing": self.cap_trailing},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectorSequence":
        items = [ProjectorSpec(item["kind"], (item["pair"][0], item["pair"][1])) for item in data["items"]]
        caps = data.get("caps", {})
        if isinstance(caps, bool):
            caps = {"leading": caps, "trailing": caps}
        return cls(int(data["n_comp"]), int(data["n_anc"]), items,
                   bool(caps.get("leading", True)), bool(caps.get("trailing", True)))

    @classmethod
    def from_json(cls, text: str) -> "ProjectorSequence":
        return cls.from_dict(json.loads(text))

    def describe(self) -> str:
        return " ".join(item.label for item in self.items)


def named_sequence(name: str) -> ProjectorSequence:
    record = get_sequence_record(name)
    if record is None:
        raise PreconditionError(f"Unknown sequence {name!r}")
    items = [ProjectorSpec(kind, (a, b)) for kind, a, b in record["items"]]
    return ProjectorSequence(record["n_comp"], record["n_anc"], items, record["caps"], record["caps"])


def apply_step(amps: np.ndarray, n_qubits: int, step: Step) -> np.ndarray:
    for outcome, i, j in step:
        amps = pair_projection(amps, n_qubits, i, j, outcome)
    return amps


def permute_amplitudes(amps: np.ndarray, n_qubits: int, perm: Sequence[int]) -> np.ndarray:
    """
    Moves qubit q to perm[q]; a trailing batch axis is kept
    """
    batch = amps.shape[1:]
    t = amps.reshape((2,) * n_qubits + batch)
    order = [0] * n_qubits
    for q in range(n_qubits):
        order[n_qubits - 1 - perm[q]] = n_qubits - 1 - q
    order += list(range(n_qubits, n_qubits + len(batch)))
    return np.transpose(t, order).reshape(amps.shape)


# ---------------------------------------------------------------------------
# spin_0 bases
# ---------------------------------------------------------------------------

@dataclass
class SubspaceBasis:
    vectors: np.ndarray
    n_spins: int
    construction: str = "noncrossing-gram-schmidt"

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]


def noncrossing_matchings(points: Sequence[int]) -> List[List[Tuple[int, int]]]:
    if not points:
        return [[]]
    first, matchings = points[0], []
    for k in range(1, len(points), 2):
        inside, outside = points[1:k], points[k + 1:]
        for left in noncrossing_matchings(inside):
            for right in noncrossing_matchings(outside):
                matchings.append(sorted([(first, points[k])] + left + right))
    return sorted(matchings)


def spin0_basis(twice_n: int) -> SubspaceBasis:
    """
    Orthonormal basis of spin_0(2N): Gram-Schmidt over non-crossing dimerizations in lexicographic order
    """
    if twice_n < 2 or twice_n % 2:
        raise PreconditionError(f"spin_0 needs an even positive number of spins, got {twice_n}")
    columns = [dimer_state(twice_n, matching).amps.real for matching in noncrossing_matchings(list(range(twice_n)))]
    q, r = np.linalg.qr(np.column_stack(columns))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return SubspaceBasis(q * signs, twice_n)


def rotated_basis(basis: SubspaceBasis, rng: Rng) -> SubspaceBasis:
    """
    Same subspace, mixed by a random orthogonal matrix
    """
    gaussian = rng.generator.standard_normal((basis.dimension, basis.dimension))
    mixing, _ = np.linalg.qr(gaussian)
    return SubspaceBasis(basis.vectors @ mixing, basis.n_spins, "rotated")


def _embed(basis: SubspaceBasis, n_anc: int) -> np.ndarray:
    ancillas = singlet_dimerization(n_anc // 2).amps
    return np.kron(ancillas[:, None], basis.vectors.astype(complex))


def _check_basis(seq: ProjectorSequence, basis: SubspaceBasis):
    if basis.n_spins != seq.n_comp:
        raise PreconditionError(f"Basis is for {basis.n_spins} spins, sequence has {seq.n_comp}")


# ---------------------------------------------------------------------------
# Sequence operators
# ---------------------------------------------------------------------------

@dataclass
class SequenceOperator:
    matrix: np.ndarray
    raw: np.ndarray
    det_normalized: bool

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)

    def unit_scaled(self) -> np.ndarray:
        """
        Raw operator divided by its mean singular value
        """
        singular = np.linalg.svd(self.raw, compute_uv=False)
        return self.raw / singular.mean()


def _normalize_det(matrix: np.ndarray) -> np.ndarray:
    d = matrix.shape[0]
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular.size == 0 or singular[-1] <= RANK_TOLERANCE * max(singular[0], 1e-300):
        raise SingularOperatorError("Sequence operator is rank deficient; it has no det-1 normalization")
    root = complex(np.linalg.det(matrix)) ** (1.0 / d)
    if abs(root.imag) <= 1e-14 * abs(root):
        return matrix / root.real
    return matrix / root


def sequence_to_operator(seq: ProjectorSequence, basis: Optional[SubspaceBasis] = None,
                         normalize: bool = True) -> SequenceOperator:
    """
    Matrix of <ancilla singlets| P_k ... P_1 |. ancilla singlets> on spin_0(2N)
    """
    basis = spin0_basis(seq.n_comp) if basis is None else basis
    _check_basis(seq, basis)
    embedded = _embed(basis, seq.n_anc)
    amps = embedded
    for _, step in seq.steps():
        amps = apply_step(amps, seq.n_qubits, step)
    raw = embedded.conj().T @ amps
    if np.abs(raw.imag).max(initial=0.0) < 1e-12:
        raw = raw.real
    matrix = _normalize_det(raw) if normalize else raw
    return SequenceOperator(matrix, raw, normalize)


def spectra_match(a: Sequence[complex], b: Sequence[complex], tol: float, up_to_sign: bool = True) -> bool:
    """
    True when the two eigenvalue multisets agree within tol, optionally up to an overall sign
    """
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.size != b.size:
        return False
    for sign in ((1, -1) if up_to_sign else (1,)):
        cost = np.abs(sign * a[:, None] - b[None, :])
        rows, cols = linear_sum_assignment(cost)
        if cost[rows, cols].max(initial=0.0) <= tol:
            return True
    return False


# ---------------------------------------------------------------------------
# Equiangular pairs and sequences, no-leakage
# ---------------------------------------------------------------------------

@dataclass
class PairReport:
    equiangular: bool
    alpha: Optional[float]
    complement_equiangular: bool


def is_equiangular_pair(q: np.ndarray, p: np.ndarray, tol: float = 1e-9) -> PairReport:
    """
    Tests P Q P = alpha^2 P with alpha > 0, and the same for (1 - Q, P)
    """
    rank = np.trace(p).real
    if rank < 0.5:
        raise PreconditionError("P must be a nonzero projector")
    pqp = p @ q @ p
    alpha_sq = float(np.trace(pqp).real / rank)
    residual = float(np.linalg.norm(pqp - alpha_sq * p))
    equiangular = residual <= tol and alpha_sq > tol
    complement = residual <= tol and 1 - alpha_sq > tol
    return PairReport(equiangular, math.sqrt(alpha_sq) if equiangular else None, complement)


@dataclass
class SequenceReport:
    passed: bool
    labels: List[str]
    alphas: List[Optional[float]] = field(default_factory=list)
    singular_values: List[List[float]] = field(default_factory=list)
    failed_step: Optional[int] = None

    @property
    def failed_label(self) -> Optional[str]:
        return None if self.failed_step is None else self.labels[self.failed_step]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "labels": self.labels,
            "alphas": self.alphas,
            "singular_values": self.singular_values,
            "failed_step": self.failed_step,
            "failed_label": self.failed_label,
        }


def _orthonormal_image(amps: np.ndarray) -> np.ndarray:
    u, s, _ = np.linalg.svd(amps, full_matrices=False)
    if s.size == 0 or s[0] <= RANK_TOLERANCE:
        return u[:, :0]
    return u[:, s > RANK_TOLERANCE * s[0]]


def _first_image(seq: ProjectorSequence, basis: Optional[SubspaceBasis]):
    basis = spin0_basis(seq.n_comp) if basis is None else basis
    _check_basis(seq, basis)
    steps = seq.steps()
    labels = [label for label, _ in steps]
    if not steps:
        return labels, steps, None
    return labels, steps, _orthonormal_image(apply_step(_embed(basis, seq.n_anc), seq.n_qubits, steps[0][1]))


def is_no_leakage(seq: ProjectorSequence, basis: Optional[SubspaceBasis] = None, tol: float = 1e-9) -> SequenceReport:
    """
    Each step must act on the image of the steps before it as a multiple of an isometry
    """
    labels, steps, image = _first_image(seq, basis)
    report = SequenceReport(True, labels)
    if image is not None and image.shape[1] == 0:
        report.passed, report.failed_step = False, 0
        return report
    for k in range(1, len(steps)):
        mapped = apply_step(image, seq.n_qubits, steps[k][1])
        singular = np.linalg.svd(mapped, compute_uv=False)
        report.singular_values.append(singular.tolist())
        if singular.min() <= tol or singular.max() - singular.min() > tol * singular.max():
            report.passed, report.failed_step = False, k
            logger.debug("leakage at step %d (%s): singular values %s", k, labels[k], singular)
            return report
        image = _orthonormal_image(mapped)
    return report


def is_equiangular_sequence(seq: ProjectorSequence, basis: Optional[SubspaceBasis] = None,
                            tol: float = 1e-9) -> SequenceReport:
    """
    Checks P_i P_{i+1} P_i ... P_1 = alpha_{i,i+1}^2 P_i ... P_1 on the running image
    """
    labels, steps, image = _first_image(seq, basis)
    report = SequenceReport(True, labels)
    if image is not None and image.shape[1] == 0:
        report.passed, report.failed_step = False, 0
        return report
    for k in range(1, len(steps)):
        mapped = apply_step(image, seq.n_qubits, steps[k][1])
        returned = apply_step(mapped, seq.n_qubits, steps[k - 1][1])
        alpha_sq = float(np.trace(image.conj().T @ returned).real / image.shape[1])
        residual = float(np.linalg.norm(returned - alpha_sq * image))
        if alpha_sq <= tol or residual > tol:
            report.alphas.append(None)
            report.passed, report.failed_step = False, k
            return report
        report.alphas.append(math.sqrt(alpha_sq))
        image = _orthonormal_image(mapped)
    return report


# ---------------------------------------------------------------------------
# Forced recovery on an equiangular pair
# ---------------------------------------------------------------------------

@dataclass
class RecoveryResult:
    rounds: int
    state: np.ndarray


def _born(vector: np.ndarray, projector: np.ndarray, rng: Rng) -> Tuple[bool, np.ndarray]:
    hit = projector @ vector
    p_hit = float(np.vdot(hit, hit).real / np.vdot(vector, vector).real)
    if rng.random() < p_hit:
        return True, hit / np.linalg.norm(hit)
    miss = vector - hit
    return False, miss / np.linalg.norm(miss)


def recovery_force(state: np.ndarray, q: np.ndarray, p: np.ndarray, rng: Rng, max_rounds: int = 1000) -> RecoveryResult:
    """
    Measures {Q, 1-Q} on a state in P until Q comes up, re-measuring {P, 1-P} between tries.

    A round is one Q measurement. Raises RetryExhausted after max_rounds.
    """
    vector = np.asarray(state, dtype=complex)
    for rounds in range(1, max_rounds + 1):
        hit, vector = _born(vector, q, rng)
        if hit:
            return RecoveryResult(rounds, vector)
        _, vector = _born(vector, p, rng)
    raise RetryExhausted(f"Q was not reached within {max_rounds} rounds")


def recovery_round_law(alpha: float, k: int) -> float:
    """
    Returns the probability that recovery needs exactly k rounds
    """
    a2 = alpha * alpha
    if k == 1:
        return a2
    r = 2 * a2 * (1 - a2)
    return (1 - a2) * (1 - r) ** (k - 2) * r


def expected_recovery_rounds(alpha: float) -> float:
    a2 = alpha * alpha
    if a2 >= 1:
        return 1.0
    r = 2 * a2 * (1 - a2)
    return a2 + (1 - a2) * (1 + 1 / r)


# ---------------------------------------------------------------------------
# Permutations, order and the signed-permutation test
# ---------------------------------------------------------------------------

def permutation_on_basis(basis: SubspaceBasis, perm: Sequence[int]) -> np.ndarray:
    """
    Returns the qubit permutation restricted to the basis span, as a matrix in that basis
    """
    moved = permute_amplitudes(basis.vectors, basis.n_spins, perm)
    return basis.vectors.T @ moved


@dataclass
class PermutationReport:
    found: bool
    permutation: Optional[Tuple[int, ...]] = None
    sign: Optional[int] = None


def signed_permutation_test(op: SequenceOperator, basis: SubspaceBasis, tol: float = 1e-8) -> PermutationReport:
    """
    Brute-force search for a qubit permutation R and sign with op = +-R up to a positive scale
    """
    if basis.n_spins > MAX_PERMUTATION_SPINS:
        raise CapacityError(f"Permutation search is limited to {MAX_PERMUTATION_SPINS} spins, got {basis.n_spins}")
    target = op.unit_scaled()
    for perm in itertools.permutations(range(basis.n_spins)):
        rep = permutation_on_basis(basis, perm)
        for sign in (1, -1):
            if np.linalg.norm(target - sign * rep) <= tol:
                return PermutationReport(True, tuple(perm), sign)
    return PermutationReport(False)


def order_of(op: SequenceOperator, tol: float = 1e-9, max_order: int = 1000) -> Optional[int]:
    """
    Smallest k <= max_order with ||U^k - I|| <= tol for the unit-scaled operator; None if there is none
    """
    unit = op.unit_scaled()
    identity = np.eye(unit.shape[0])
    power = np.eye(unit.shape[0], dtype=unit.dtype)
    for k in range(1, max_order + 1):
        power = power @ unit
        if np.linalg.norm(power - identity) <= tol:
            return k
    return None


def power_distances(op: SequenceOperator, k_max: int) -> List[float]:
    unit = op.unit_scaled()
    identity = np.eye(unit.shape[0])
    distances, power = [], np.eye(unit.shape[0], dtype=unit.dtype)
    for _ in range(k_max):
        power = power @ unit
        distances.append(float(np.linalg.norm(power - identity)))
    return distances


# ---------------------------------------------------------------------------
# Commutator numerics for the two length-8 triplet sequences
# ---------------------------------------------------------------------------

def distance_to_identity(matrix: np.ndarray, norm: Optional[str] = None) -> float:
    norm = get_distance_norm() if norm is None else norm
    ord_ = "fro" if norm == "fro" else 2
    return float(np.linalg.norm(matrix - np.eye(matrix.shape[0]), ord=ord_))


def matrix_log(matrix: np.ndarray) -> np.ndarray:
    """
    Principal logarithm; undefined when an eigenvalue lies on the closed negative real axis
    """
    for value in np.linalg.eigvals(matrix):
        if abs(value.imag) <= 1e-12 and value.real <= 0:
            raise LogUndefinedError(f"Eigenvalue {value} has no principal logarithm")
    log = logm(matrix)
    if np.abs(np.imag(log)).max() < 1e-10:
        log = np.real(log)
    return log


def group_commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b @ np.linalg.inv(a) @ np.linalg.inv(b)


def nested_commutator_distances(o1: np.ndarray, o2: np.ndarray, depth: int = 8,
                                norm: Optional[str] = None) -> pd.DataFrame:
    """
    Distance of [O1, [O1, ..., [O1, O2]]] (M nested commutators) to identity for M = 1..depth
    """
    rows, current = [], o2
    for m in range(1, depth + 1):
        current = group_commutator(o1, current)
        rows.append({"M": m, "distance": distance_to_identity(current, norm)})
    return pd.DataFrame(rows, columns=["M", "distance"])


def orbit_log_residual(matrix: np.ndarray, basis: SubspaceBasis) -> float:
    """
    Returns the norm of sum over all spin permutations of R log(O) R^T
    """
    log = matrix_log(matrix)
    total = np.zeros_like(log)
    for perm in itertools.permutations(range(basis.n_spins)):
        rep = permutation_on_basis(basis, perm)
        total = total + rep @ log @ rep.T
    return float(np.linalg.norm(total))


def orbit_product_residual(matrix: np.ndarray, basis: SubspaceBasis) -> float:
    """
    Distance to identity of the orbit product taken in lexicographic permutation order
    """
    product = np.eye(matrix.shape[0], dtype=matrix.dtype)
    for perm in itertools.permutations(range(basis.n_spins)):
        rep = permutation_on_basis(basis, perm)
        product = product @ (rep @ matrix @ rep.T)
    return distance_to_identity(product, "fro")


def _entrywise_gap(matrix: np.ndarray, printed: np.ndarray) -> float:
    """
    Smallest entry-wise distance over sign flips of the basis vectors
    """
    d = matrix.shape[0]
    best = math.inf
    for signs in itertools.product((1.0, -1.0), repeat=d):
        flip = np.diag(signs)
        for candidate in (matrix, matrix.T):
            best = min(best, float(np.linalg.norm(flip @ candidate @ flip - printed)))
    return best


def log_linear_slope(distances: Sequence[float]) -> float:
    m = np.arange(1, len(distances) + 1, dtype=float)
    slope, _ = np.polyfit(m, np.log(np.asarray(distances, dtype=float)), 1)
    return float(slope)


@dataclass
class CommutatorReport:
    operators: Dict[str, dict]
    distances: pd.DataFrame
    slope: float
    strictly_decreasing: bool
    eigen_tol: float = 1e-6
    log_tol: float = 1e-9

    @property
    def passed(self) -> bool:
        checks = [entry["eigen_match"] and entry["log_orbit_residual"] <= self.log_tol
                  for entry in self.operators.values()]
        values = self.distances["distance"].tolist()
        return all(checks) and self.slope < 0 and values[-1] < values[0]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "operators": self.operators,
            "distances": self.distances.to_dict(orient="records"),
            "slope": self.slope,
            "strictly_decreasing": self.strictly_decreasing,
        }


def _complex_list(values: Sequence[complex]) -> List[List[float]]:
    ordered = sorted(values, key=lambda v: (round(v.real, 12), round(v.imag, 12)))
    return [[float(v.real), float(v.imag)] for v in ordered]


def verify_commutator_pair(depth: int = 8, eigen_tol: float = 1e-6, log_tol: float = 1e-9) -> CommutatorReport:
    """
    Builds O1 and O2 from their triplet sequences on spin_0(4) and checks them against the
    reference matrices, then reports nested commutator distances.

    Eigenvalues are compared up to an overall sign; entry-wise agreement with the reference
    matrices is reported in the non-crossing basis and in the |S>,|T> split on (c1, c2).
    """
    basis = spin0_basis(4)
    operators, matrices = {}, {}
    for name in ("O1", "O2"):
        op = sequence_to_operator(named_sequence(name), basis)
        printed = np.array(get_printed_operator(name), dtype=float)
        mine = op.matrix
        entry = {
            "eigenvalues": _complex_list(op.eigenvalues),
            "printed_eigenvalues": _complex_list(np.linalg.eigvals(printed)),
            "eigen_match": spectra_match(op.eigenvalues, np.linalg.eigvals(printed), eigen_tol),
            "det": float(np.real(np.linalg.det(mine))),
            "log_orbit_residual": orbit_log_residual(mine, basis),
            "orbit_product_residual": orbit_product_residual(mine, basis),
            # |S> = (c1,c2)(c3,c4) leads the non-crossing basis, so the S/T split on (c1, c2)
            # differs from it only by the sign of |T>, which the gap allows for
            "entrywise_gap": _entrywise_gap(np.real(mine), printed),
        }
        operators[name] = entry
        matrices[name] = mine
    distances = nested_commutator_distances(matrices["O1"], matrices["O2"], depth)
    values = distances["distance"].tolist()
    strictly = all(b < a for a, b in zip(values, values[1:]))
    if not strictly:
        logger.info("Nested commutator distances are not strictly decreasing: %s", values)
    return CommutatorReport(operators, distances, log_linear_slope(values), strictly, eigen_tol, log_tol)


def rotation_spectrum_matches(op: SequenceOperator, tol: float = 1e-9) -> bool:
    """
    True when the operator's eigenvalues are (3 sqrt 3 +- i) / (2 sqrt 7) up to sign
    """
    return spectra_match(op.eigenvalues, ROTATION_EIGENVALUES, tol)


# ---------------------------------------------------------------------------
# Random search over one-ancilla-pair sequences
# ---------------------------------------------------------------------------

def random_sequence(n_comp: int, n_anc: int, length: int, rng: Rng) -> ProjectorSequence:
    sites = [f"c{k}" for k in range(1, n_comp + 1)] + [f"a{k}" for k in range(1, n_anc + 1)]
    items = []
    for _ in range(length):
        a, b = rng.distinct_pair(sites)
        items.append(ProjectorSpec("s" if rng.coin() else "t", (a, b)))
    return ProjectorSequence(n_comp, n_anc, items)


def search_sequences(n_samples: int, rng: Rng, max_length: int = 8, n_comp: int = 4,
                     n_anc: int = 2) -> pd.DataFrame:
    """
    Random s/t sequences with caps; every no-leakage hit is run through the signed-permutation test
    """
    basis = spin0_basis(n_comp)
    rows = []
    for sample in range(n_samples):
        stream = rng.spawn(sample)
        seq = random_sequence(n_comp, n_anc, stream.integers(1, max_length + 1), stream)
        no_leakage = is_no_leakage(seq, basis).passed
        signed = None
        if no_leakage:
            signed = signed_permutation_test(sequence_to_operator(seq, basis, normalize=False), basis).found
        rows.append({"sample": sample, "sequence": seq.describe(), "length": len(seq.items),
                     "no_leakage": no_leakage, "signed_permutation": signed})
    table = pd.DataFrame(rows, columns=["sample", "sequence", "length", "no_leakage", "signed_permutation"])
    counterexamples = int((table["no_leakage"] & table["signed_permutation"].eq(False)).sum())
    if counterexamples:
        logger.warning("%d no-leakage sequences are not signed permutations", counterexamples)
    return table
