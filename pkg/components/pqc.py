"""
Permutational computing with singlet/triplet measurements: spin estimation by random pairs,
tree measurement, canonical form, splitting, labelled-tree preparation, root-spin reduction
and qudit blocks.

Every spin measurement runs in one of two modes:
    exact     the Born-rule projection onto a total-spin sector (the ground truth)
    protocol  estimation from random-pair s/t statistics, as the model allows
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binom

from components.errors import PreconditionError, RetryExhausted
from components.qstate import (
    PairOutcome, StateVector, admissible_twice_spins, measure_pair, measure_pauli1,
    measure_spin_sector, project_sz_sector, relabel_qubits, singlet_dimerization,
    sz_sector_weights, total_spin_sq_expect,
)
from components.rng import Rng
from components.trees import (
    LabelledTree, TreeNode, UnlabelledTree, dicke_state, enumerate_labellings, symmetric_chain, tree_overlap_sq,
    tree_state,
)

logger = logging.getLogger(__name__)

MODES = ("exact", "protocol")


@dataclass
class Caps:
    max_singlet_search: int = 10_000
    max_restarts: int = 10_000
    max_b_repeats: int = 10_000
    step_four_factor: int = 64


DEFAULT_CAPS = Caps()


def _check_mode(mode: str):
    if mode not in MODES:
        raise PreconditionError(f"mode must be one of {MODES}, got {mode!r}")


# ---------------------------------------------------------------------------
# Spin estimation
# ---------------------------------------------------------------------------

@dataclass
class SpinEstimate:
    twice_s: int
    n_meas: int
    triplet_frequency: float


def triplet_probability(twice_s: int, m: int) -> float:
    """
    Chance that a uniformly random pair of an m-qubit set of spin S reads triplet
    """
    s_sq = twice_s / 2 * (twice_s / 2 + 1)
    return (s_sq - 0.75 * m) / (m * (m - 1)) + 0.75


def invert_triplet_frequency(frequency: float, m: int) -> float:
    """
    S(S+1) implied by a triplet frequency
    """
    return (frequency - 0.75) * m * (m - 1) + 0.75 * m


def default_n_meas(m: int) -> int:
    return max(20 * m * m, math.ceil(3.1 * m * m * (m - 1) ** 2))


@lru_cache(maxsize=64)
def decision_table(m: int, n_meas: int) -> np.ndarray:
    """
    Sector (as 2S) with the largest binomial likelihood for each triplet count 0..n_meas
    """
    sectors = admissible_twice_spins(m)
    counts = np.arange(n_meas + 1)
    loglik = np.array([binom.logpmf(counts, n_meas, min(max(triplet_probability(s, m), 0.0), 1.0))
                       for s in sectors])
    return np.array(sectors)[np.argmax(loglik, axis=0)]


def misround_probability(m: int, twice_s: int, n_meas: int) -> float:
    """
    Exact probability that the estimator reports a sector other than twice_s
    """
    table = decision_table(m, n_meas)
    pmf = binom.pmf(np.arange(n_meas + 1), n_meas, min(max(triplet_probability(twice_s, m), 0.0), 1.0))
    return float(pmf[table != twice_s].sum())


def estimate_total_spin(state: StateVector, subset: Sequence[int], rng: Rng,
                        n_meas: Optional[int] = None) -> SpinEstimate:
    """
    Random-pair s/t measurements inside the subset, then the maximum-likelihood spin sector.

    Every measurement commutes with the subset's total spin, which is left unchanged.
    """
    subset = list(subset)
    m = len(subset)
    if m < 2:
        raise PreconditionError("Spin estimation needs at least two qubits")
    n_meas = default_n_meas(m) if n_meas is None else n_meas
    triplets = 0
    for _ in range(n_meas):
        i, j = rng.distinct_pair(subset)
        _, outcome = measure_pair(state, i, j, rng)
        triplets += outcome == PairOutcome.TRIPLET
    twice_s = int(decision_table(m, n_meas)[triplets])
    return SpinEstimate(twice_s, n_meas, triplets / n_meas)


def measure_total_spin(state: StateVector, subset: Sequence[int], rng: Rng, mode: str = "exact",
                       n_meas: Optional[int] = None) -> int:
    """
    2S of the subset, by exact projection or by estimation
    """
    _check_mode(mode)
    if len(subset) == 1:
        return 1
    if mode == "exact":
        _, twice_s = measure_spin_sector(state, list(subset), rng)
        return twice_s
    return estimate_total_spin(state, subset, rng, n_meas).twice_s


# ---------------------------------------------------------------------------
# Tree measurement
# ---------------------------------------------------------------------------

def measure_tree(state: StateVector, shape: UnlabelledTree, rng: Rng, mode: str = "exact",
                 n_meas_per_vertex: Optional[int] = None) -> LabelledTree:
    """
    Measures every vertex spin from the leaves towards the root, then the root's S_Z
    """
    _check_mode(mode)
    root = shape.root.stripped()
    if sorted(root.leaves()) != list(range(state.n_qubits)):
        raise PreconditionError("Tree leaves must cover the register")
    for node in root.postorder():
        if not node.is_leaf:
            node.twice_s = measure_total_spin(state, node.leaves(), rng, mode, n_meas_per_vertex)
    twice_sz = 0
    if root.label() > 0:
        twice_sz = _measure_root_sz(state, root.leaves(), rng, mode)
    return LabelledTree(root, twice_sz)


def _measure_root_sz(state: StateVector, leaves: List[int], rng: Rng, mode: str) -> int:
    if mode == "protocol":
        return sum(measure_pauli1(state, q, "Z", rng)[1] for q in leaves)
    weights = sz_sector_weights(state, leaves)
    sectors = sorted(weights)
    probs = np.array([weights[s] for s in sectors])
    pick = min(int(np.searchsorted(np.cumsum(probs / probs.sum()), rng.random(), side="right")), len(sectors) - 1)
    branch, _ = project_sz_sector(state, leaves, sectors[pick])
    state.amps = branch.amps
    return sectors[pick]


# ---------------------------------------------------------------------------
# Canonical form and splitting
# ---------------------------------------------------------------------------

@dataclass
class CanonicalForm:
    pairs: List[Tuple[int, int]]
    symmetric: List[int]

    @property
    def twice_s(self) -> int:
        return len(self.symmetric)


def canonical_form(state: StateVector, subset: Sequence[int], rng: Rng, mode: str = "exact",
                   caps: Caps = DEFAULT_CAPS) -> CanonicalForm:
    """
    Brings the subset to explicit singlet pairs plus a totally symmetric remainder.

    The remainder's spin is measured before each search; a remainder at maximal spin is
    already symmetric and ends the recursion.
    """
    remaining = list(subset)
    if not remaining:
        raise PreconditionError("canonical_form needs a nonempty subset")
    pairs = []
    while len(remaining) >= 2:
        if measure_total_spin(state, remaining, rng, mode) == len(remaining):
            break
        for _ in range(caps.max_singlet_search):
            i, j = rng.distinct_pair(remaining)
            _, outcome = measure_pair(state, i, j, rng)
            if outcome == PairOutcome.SINGLET:
                pairs.append((i, j))
                remaining = [q for q in remaining if q not in (i, j)]
                break
        else:
            raise RetryExhausted(f"No singlet found in {remaining} after {caps.max_singlet_search} pairs")
    return CanonicalForm(pairs, remaining)


@dataclass
class SplitReport:
    first: List[int]
    second: List[int]
    restarts: int = 0
    b_increments: List[float] = field(default_factory=list)


def _check_split(subset: Sequence[int], m: int, twice_s1: int, twice_s2: int):
    n = len(subset)
    if not 0 < m < n:
        raise PreconditionError(f"Split size {m} must lie strictly between 0 and {n}")
    if twice_s1 % 2 != m % 2 or twice_s2 % 2 != (n - m) % 2:
        raise PreconditionError(f"Spins 2S'={twice_s1}, 2S''={twice_s2} do not match parities of {m}, {n - m}")
    if not (0 <= twice_s1 <= m and 0 <= twice_s2 <= n - m):
        raise PreconditionError(f"Spins 2S'={twice_s1}, 2S''={twice_s2} exceed the set sizes")


def split(state: StateVector, subset: Sequence[int], m: int, twice_s1: int, twice_s2: int, rng: Rng,
          mode: str = "exact", caps: Caps = DEFAULT_CAPS) -> SplitReport:
    """
    Leaves spin S' on the first m qubits of subset and S'' on the rest.

    Runs canonical form, assignment of symmetric qubits and singlets, the biased walk that
    symmetrizes the R sets, and the all-triplet check on each side, restarting everything
    when that check reads a singlet. The qubits found for each side are finally relabelled
    onto subset[:m] and subset[m:].
    """
    subset = list(subset)
    _check_split(subset, m, twice_s1, twice_s2)
    report = SplitReport([], [])
    for restart in range(caps.max_restarts + 1):
        form = canonical_form(state, subset, rng, mode, caps)
        twice_s = form.twice_s
        if not abs(twice_s1 - twice_s2) <= twice_s <= twice_s1 + twice_s2:
            raise PreconditionError(
                f"Cannot split spin 2S={twice_s} into 2S'={twice_s1} and 2S''={twice_s2}"
            )
        q1, q2, u1, u2, r1, r2 = _assign(form, m, twice_s, twice_s1, twice_s2)
        if r1:
            _symmetrize_r_sets(state, r1, r2, rng, mode, caps, report)
        checks = caps.step_four_factor * m
        if _all_triplet(state, u1, rng, checks) and _all_triplet(state, u2, rng, checks):
            report.restarts = restart
            report.first, report.second = subset[:m], subset[m:]
            mapping = {q: t for q, t in zip(q1 + q2, subset)}
            relabelled = relabel_qubits(state, mapping)
            state.amps = relabelled.amps
            logger.debug("split of %s into %d/%d done after %d restarts", subset, twice_s1, twice_s2, restart)
            return report
        logger.debug("split step four read a singlet; restarting")
    raise RetryExhausted(f"split of {subset} failed after {caps.max_restarts} restarts")


def _assign(form: CanonicalForm, m: int, twice_s: int, twice_s1: int, twice_s2: int):
    """
    Sorts canonical-form qubits into the two sides.

    Side one takes a1 symmetric qubits and side two the rest, so their spins differ by
    S'' - S'. Each side's R set holds k qubits drawn from singlets (one singlet is shared
    when k is odd); after symmetrization R joins the symmetric part and adds k/2 spin.
    """
    a1 = (twice_s + twice_s1 - twice_s2) // 2
    k = (twice_s1 + twice_s2 - twice_s) // 2
    sym1, sym2 = form.symmetric[:a1], form.symmetric[a1:]
    pairs = list(form.pairs)
    r1, r2 = [], []
    for _ in range(k // 2):
        r1.extend(pairs.pop())
        r2.extend(pairs.pop())
    if k % 2:
        a, b = pairs.pop()
        r1.append(a)
        r2.append(b)
    # Remaining singlets fill each side up to its size
    fill1 = (m - twice_s1) // 2
    rest1 = [q for pair in pairs[:fill1] for q in pair]
    rest2 = [q for pair in pairs[fill1:] for q in pair]
    q1 = sorted(sym1 + r1 + rest1)
    q2 = sorted(sym2 + r2 + rest2)
    return q1, q2, r1 + sym1, r2 + sym2, r1, r2


def _symmetrize_r_sets(state: StateVector, r1: List[int], r2: List[int], rng: Rng, mode: str,
                       caps: Caps, report: SplitReport):
    """
    Biased walk on the R sets until both are totally symmetric
    """
    for _ in range(caps.max_restarts):
        form1 = canonical_form(state, r1, rng, mode, caps)
        form2 = canonical_form(state, r2, rng, mode, caps)
        if not form1.pairs:
            return
        if not form2.pairs:
            raise PreconditionError("R sets lost their zero joint spin")
        before = total_spin_sq_expect(state, r1)
        s1, s2 = form1.pairs[0], form2.pairs[0]
        for _ in range(caps.max_b_repeats):
            measure_pair(state, s1[0], s2[0], rng)
            _, outcome = measure_pair(state, s1[0], s1[1], rng)
            if outcome == PairOutcome.TRIPLET:
                break
        else:
            raise RetryExhausted(f"Singlet {s1} never flipped to triplet")
        report.b_increments.append(total_spin_sq_expect(state, r1) - before)
    raise RetryExhausted("R sets did not become symmetric")


def _all_triplet(state: StateVector, group: List[int], rng: Rng, checks: int) -> bool:
    if len(group) < 2:
        return True
    for _ in range(checks):
        i, j = rng.distinct_pair(group)
        _, outcome = measure_pair(state, i, j, rng)
        if outcome == PairOutcome.SINGLET:
            return False
    return True


# ---------------------------------------------------------------------------
# Labelled-tree preparation
# ---------------------------------------------------------------------------

def prepare_labelled_tree(tree: LabelledTree, rng: Rng, mode: str = "exact",
                          caps: Caps = DEFAULT_CAPS) -> StateVector:
    """
    |lambda> for a root of spin 0: singlets on consecutive leaves, then a split at every
    internal vertex from the root towards the leaves
    """
    tree.validate()
    if tree.root_twice_s != 0:
        raise PreconditionError("prepare_labelled_tree needs root spin 0; use reduce_root_spin first")
    leaves = tree.leaves
    n = len(leaves)
    if sorted(leaves) != list(range(n)):
        raise PreconditionError(f"Tree leaves {leaves} must cover qubits 0..{n - 1}")
    state = relabel_qubits(singlet_dimerization(n // 2), {k: q for k, q in enumerate(leaves)})
    for node in tree.root.internal_nodes():
        left, right = node.left.leaves(), node.right.leaves()
        split(state, left + right, len(left), node.left.label(), node.right.label(), rng, mode, caps)
    return state


# ---------------------------------------------------------------------------
# Root-spin reduction and sampling
# ---------------------------------------------------------------------------

@dataclass
class RootReduction:
    tree: LabelledTree
    ancilla_tree: Optional[TreeNode]
    n_data: int

    def widen(self, shape: UnlabelledTree) -> UnlabelledTree:
        """
        The measured tree joined to the ancilla shape under a new root
        """
        if self.ancilla_tree is None:
            return shape
        return UnlabelledTree(TreeNode(shape.root.stripped(), self.ancilla_tree.stripped()))

    def induced(self, measured: LabelledTree, root_twice_sz: int) -> LabelledTree:
        if self.ancilla_tree is None:
            return measured
        return LabelledTree(measured.root.left.copy(), root_twice_sz)


def reduce_root_spin(tree: LabelledTree, ancilla: Optional[LabelledTree] = None) -> RootReduction:
    """
    Joins lambda to an ancilla tree of the same root spin under a spin-0 root.

    The default ancilla tree is the symmetric chain on 2S_root fresh qubits. The root's S_Z
    label is dropped.
    """
    tree.validate()
    n = len(tree.leaves)
    s = tree.root_twice_s
    if ancilla is None:
        if s == 0:
            return RootReduction(LabelledTree(tree.root.copy(), 0), None, n)
        qubits = list(range(n, n + s))
        ancilla_root = symmetric_chain(qubits) if s > 1 else TreeNode(leaf=qubits[0])
    else:
        ancilla.validate()
        ancilla_root = ancilla.root.copy()
        if ancilla.root_twice_s != s:
            raise PreconditionError(f"Ancilla root spin {ancilla.root_twice_s} does not match {s}")
    joined = TreeNode(tree.root.copy(), ancilla_root, twice_s=0)
    return RootReduction(LabelledTree(joined, 0).validate(), ancilla_root, n)


def sample_tree_labels(tree: LabelledTree, shape: UnlabelledTree, rng: Rng, mode: str = "exact",
                       prepare: str = "oracle", ancilla: Optional[LabelledTree] = None) -> LabelledTree:
    """
    One shot of the weak model: prepare |lambda>, measure the other tree, return its labels.

    Roots with spin go through reduce_root_spin; prepare="oracle" builds |lambda-hat> exactly,
    prepare="protocol" runs prepare_labelled_tree.
    """
    if tree.root_twice_s == 0:
        state = tree_state(tree) if prepare == "oracle" else prepare_labelled_tree(tree, rng, mode)
        return measure_tree(state, shape, rng, mode)
    reduction = reduce_root_spin(tree, ancilla)
    hat = reduction.tree
    state = tree_state(hat) if prepare == "oracle" else prepare_labelled_tree(hat, rng, mode)
    measured = measure_tree(state, reduction.widen(shape), rng, mode)
    if measured.root_twice_s != 0:
        raise PreconditionError("Joined root was measured with nonzero spin")
    return reduction.induced(measured, tree.root_twice_sz)


def sample_weak_model(tree: LabelledTree, shape: UnlabelledTree, shots: int, rng: Rng,
                      mode: str = "exact", prepare: str = "oracle") -> pd.DataFrame:
    """
    Counts of measured labellings over many shots; one column per internal vertex (pre-order)
    plus count
    """
    counts: Dict[Tuple[int, ...], int] = {}
    for shot in range(shots):
        labels = tuple(sample_tree_labels(tree, shape, rng.spawn(shot), mode, prepare).labels())
        counts[labels] = counts.get(labels, 0) + 1
    n_vertices = len(shape.root.internal_nodes())
    rows = [dict({f"v{k}": label for k, label in enumerate(labels)}, count=count)
            for labels, count in sorted(counts.items())]
    return pd.DataFrame(rows, columns=[f"v{k}" for k in range(n_vertices)] + ["count"])


def exact_label_table(tree: LabelledTree, shape: UnlabelledTree, counts: pd.DataFrame, shots: int) -> pd.DataFrame:
    """
    Observed counts next to shots * |<lambda|lambda'>|^2 for every labelling of the shape, with a z-score
    """
    if tree.root_twice_s == 0:
        target_shape, reference = shape, tree
    else:
        reduction = reduce_root_spin(tree)
        target_shape, reference = reduction.widen(shape), reduction.tree
    rows = []
    for labelling in enumerate_labellings(target_shape, root_twice_s=reference.root_twice_s,
                                          root_twice_sz=reference.root_twice_sz):
        p = tree_overlap_sq(reference, labelling)
        labels = labelling.labels()
        if tree.root_twice_s != 0:
            # Keep the measured tree's vertices; drop the joined root and the ancilla chain
            labels = [node.twice_s for node in labelling.root.left.internal_nodes()]
        rows.append({**{f"v{k}": label for k, label in enumerate(labels)}, "probability": p})
    exact = pd.DataFrame(rows)
    keys = [column for column in exact.columns if column.startswith("v")]
    exact = exact.groupby(keys, as_index=False)["probability"].sum()
    merged = exact.merge(counts, on=keys, how="outer").fillna({"count": 0, "probability": 0.0})
    merged["expected"] = merged["probability"] * shots
    spread = np.sqrt(shots * merged["probability"] * (1 - merged["probability"]))
    merged["z"] = np.where(spread > 0, (merged["count"] - merged["expected"]) / spread.where(spread > 0, 1.0),
                           np.where(merged["count"] == merged["expected"], 0.0, np.inf))
    return merged.sort_values(keys).reset_index(drop=True)


# ---------------------------------------------------------------------------
# Qudits as symmetric qubit blocks
# ---------------------------------------------------------------------------

def encode_qudit(twice_s: int, twice_m: Optional[int] = None) -> StateVector:
    """
    Spin-S qudit as 2S qubits in the symmetric |S, M> state (M = S by default)
    """
    if twice_s < 1:
        raise PreconditionError(f"Qudit spin must be positive, got 2S={twice_s}")
    return dicke_state(twice_s, twice_s if twice_m is None else twice_m)


def qudit_pair_spin_measure(state: StateVector, block_a: Sequence[int], block_b: Sequence[int], rng: Rng,
                            mode: str = "protocol", n_meas: Optional[int] = None) -> SpinEstimate:
    union = list(block_a) + list(block_b)
    if mode == "protocol":
        return estimate_total_spin(state, union, rng, n_meas)
    _check_mode(mode)
    _, twice_s = measure_spin_sector(state, union, rng)
    return SpinEstimate(twice_s, 0, triplet_probability(twice_s, len(union)))


def qudit_pair_resplit(state: StateVector, block_a: Sequence[int], block_b: Sequence[int], rng: Rng,
                       mode: str = "exact", caps: Caps = DEFAULT_CAPS) -> SplitReport:
    """
    Returns both blocks to totally symmetric states, keeping the joint spin
    """
    union = list(block_a) + list(block_b)
    return split(state, union, len(block_a), len(block_a), len(block_b), rng, mode, caps)
