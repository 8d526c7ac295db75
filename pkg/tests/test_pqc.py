import pytest

from components import pqc
from components.acceptance import doublet_tree
from components.errors import PreconditionError
from components.pqc import (
    Caps, canonical_form, default_n_meas, encode_qudit, estimate_total_spin, exact_label_table,
    invert_triplet_frequency, measure_tree, misround_probability, prepare_labelled_tree, qudit_pair_resplit,
    qudit_pair_spin_measure, reduce_root_spin, sample_tree_labels, sample_weak_model, split, triplet_probability,
)
from components.qstate import (
    PairOutcome, admissible_twice_spins, basis_state, fidelity, measure_pair, pair_weights, singlet_dimerization,
    spin_sector_weights, tensor, total_spin_sq_expect,
)
from components.trees import (
    LabelledTree, UnlabelledTree, balanced, caterpillar, enumerate_labellings, singlet_pairs_tree, tree_state,
)


@pytest.mark.parametrize("twice_s, m, expected", [(0, 2, 0.0), (2, 2, 1.0), (4, 4, 1.0), (0, 4, 0.5), (1, 3, 0.5)])
def test_triplet_probability(twice_s, m, expected):
    assert triplet_probability(twice_s, m) == pytest.approx(expected)


def test_triplet_frequency_inverts():
    for m, twice_s in [(4, 2), (5, 3), (6, 0)]:
        s = twice_s / 2
        assert invert_triplet_frequency(triplet_probability(twice_s, m), m) == pytest.approx(s * (s + 1))


def test_default_n_meas():
    assert default_n_meas(2) == 80
    assert default_n_meas(4) == 447


def test_misround_probability_is_small_at_default_budget():
    for twice_s in (0, 2, 4):
        assert misround_probability(4, twice_s, default_n_meas(4)) < 0.01


def test_estimate_total_spin_on_dimerization(rng):
    estimate = estimate_total_spin(singlet_dimerization(2), [0, 1, 2, 3], rng)
    assert estimate.twice_s == 0
    assert estimate.n_meas == default_n_meas(4)
    with pytest.raises(PreconditionError):
        estimate_total_spin(singlet_dimerization(1), [0], rng)


@pytest.mark.parametrize("mode", ["exact", "protocol"])
def test_measuring_a_tree_in_its_own_shape_returns_its_labels(rng, mode):
    tree = singlet_pairs_tree([0, 1, 2, 3])
    measured = measure_tree(tree_state(tree), tree.shape(), rng, mode)
    assert measured.labels() == tree.labels()


def test_measure_tree_reads_root_sz(rng):
    tree = doublet_tree()
    measured = measure_tree(tree_state(tree), tree.shape(), rng)
    assert measured.labels() == [1, 2]
    assert measured.root_twice_sz == 1


def test_measure_tree_needs_full_cover(rng):
    with pytest.raises(PreconditionError):
        measure_tree(singlet_dimerization(2), UnlabelledTree(balanced([0, 1, 2])), rng)


def test_split_sets_both_sides(rng):
    state = singlet_dimerization(2)
    split(state, [0, 1, 2, 3], 2, 2, 2, rng)
    assert spin_sector_weights(state, [0, 1])[2] == pytest.approx(1.0)
    assert spin_sector_weights(state, [2, 3])[2] == pytest.approx(1.0)
    assert total_spin_sq_expect(state, [0, 1, 2, 3]) == pytest.approx(0.0, abs=1e-9)


def test_split_rejects_impossible_spins(rng):
    with pytest.raises(PreconditionError):
        split(singlet_dimerization(2), [0, 1, 2, 3], 2, 1, 2, rng)


def test_prepare_singlet_pairs_tree(rng):
    tree = singlet_pairs_tree([0, 1, 2, 3])
    assert fidelity(prepare_labelled_tree(tree, rng), tree_state(tree)) == pytest.approx(1.0)


def test_prepare_reduced_doublet(rng):
    hat = reduce_root_spin(doublet_tree()).tree
    assert hat.root_twice_s == 0
    assert hat.leaves == [0, 1, 2, 3]
    assert fidelity(prepare_labelled_tree(hat, rng), tree_state(hat)) >= 1 - 1e-6


def test_prepare_needs_root_spin_zero(rng):
    with pytest.raises(PreconditionError):
        prepare_labelled_tree(doublet_tree(), rng)


def test_weak_model_sampling_follows_overlaps(rng):
    shots = 400
    counts = sample_weak_model(doublet_tree(), UnlabelledTree(balanced([0, 1, 2])), shots, rng)
    assert list(counts.columns) == ["v0", "v1", "count"]
    assert counts["count"].sum() == shots
    assert set(counts["v0"]) == {1}
    # The (1, 2) pair of the doublet is a singlet with probability 3/4
    singlets = int(counts.loc[counts["v1"] == 0, "count"].sum())
    assert 250 <= singlets <= 350


def test_encode_qudit():
    block = encode_qudit(2)
    assert block.n_qubits == 2
    assert total_spin_sq_expect(block, [0, 1]) == pytest.approx(2.0)
    with pytest.raises(PreconditionError):
        encode_qudit(0)


def test_labelled_tree_root_reduction_keeps_spinless_roots():
    tree = singlet_pairs_tree([0, 1])
    reduction = reduce_root_spin(tree)
    assert reduction.ancilla_tree is None
    assert isinstance(reduction.tree, LabelledTree)


def test_misround_probability_stays_below_one_in_a_thousand():
    for m in range(2, 9):
        for twice_s in admissible_twice_spins(m):
            assert misround_probability(m, twice_s, default_n_meas(m)) <= 1e-3


@pytest.mark.slow
def test_estimator_recovers_random_tree_spins(rng):
    misses = 0
    for k in range(30):
        stream = rng.spawn(k)
        m = stream.integers(2, 7)
        tree = stream.choice(enumerate_labellings(UnlabelledTree(caterpillar(list(range(m))))))
        misses += estimate_total_spin(tree_state(tree), range(m), stream).twice_s != tree.root_twice_s
    assert misses <= 1


def test_canonical_form_of_a_symmetric_pair(rng):
    form = canonical_form(basis_state("00"), [0, 1], rng)
    assert form.pairs == []
    assert form.symmetric == [0, 1]
    assert form.twice_s == 2


def test_canonical_form_finds_every_singlet(rng):
    state = singlet_dimerization(2)
    form = canonical_form(state, [0, 1, 2, 3], rng)
    assert form.twice_s == 0
    assert len(form.pairs) == 2
    for i, j in form.pairs:
        assert pair_weights(state, i, j)[PairOutcome.SINGLET] == pytest.approx(1.0)


def test_canonical_form_leaves_a_symmetric_remainder(rng):
    tree = LabelledTree(caterpillar([0, 1, 2, 3], [0, 1, 2]), 2)
    state = tree_state(tree)
    form = canonical_form(state, [0, 1, 2, 3], rng)
    assert form.twice_s == 2
    assert len(form.pairs) == 1
    assert total_spin_sq_expect(state, form.symmetric) == pytest.approx(2.0)
    assert pair_weights(state, *form.pairs[0])[PairOutcome.SINGLET] == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        canonical_form(state, [], rng)


def test_split_runs_step_four_checks_in_proportion_to_the_first_side(rng, monkeypatch):
    calls = []
    original = pqc._all_triplet

    def counting(state, group, stream, checks):
        calls.append((len(group), checks))
        return original(state, group, stream, checks)

    monkeypatch.setattr(pqc, "_all_triplet", counting)
    split(basis_state("0000"), [0, 1, 2, 3], 3, 3, 1, rng, caps=Caps(step_four_factor=3))
    assert calls == [(3, 9), (1, 9)]


def test_sample_tree_labels_for_spinless_and_spinful_roots(rng):
    pairs = singlet_pairs_tree([0, 1, 2, 3])
    assert sample_tree_labels(pairs, pairs.shape(), rng).labels() == pairs.labels()
    assert sample_tree_labels(pairs, pairs.shape(), rng, prepare="protocol").labels() == pairs.labels()
    sampled = sample_tree_labels(doublet_tree(), UnlabelledTree(balanced([0, 1, 2])), rng)
    assert sampled.root_twice_s == 1
    assert sampled.root_twice_sz == doublet_tree().root_twice_sz
    assert sampled.labels()[1] in (0, 2)


def test_exact_label_table_lines_up_counts_and_overlaps(rng):
    shots = 200
    tree, shape = doublet_tree(), UnlabelledTree(balanced([0, 1, 2]))
    table = exact_label_table(tree, shape, sample_weak_model(tree, shape, shots, rng), shots)
    assert list(table.columns) == ["v0", "v1", "probability", "count", "expected", "z"]
    assert table["probability"].sum() == pytest.approx(1.0)
    assert table["count"].sum() == shots
    assert table.loc[table["v1"] == 0, "probability"].sum() == pytest.approx(0.75)
    assert table["z"].abs().max() <= 4


def test_qudit_pair_spin_measure_exact(rng):
    state = tensor(encode_qudit(2), encode_qudit(2, -2))
    estimate = qudit_pair_spin_measure(state, [0, 1], [2, 3], rng, mode="exact")
    assert estimate.twice_s in (0, 2, 4)
    assert estimate.n_meas == 0
    assert spin_sector_weights(state, [0, 1, 2, 3])[estimate.twice_s] == pytest.approx(1.0)


def test_qudit_pair_spin_measure_by_estimation(rng):
    state = tensor(encode_qudit(2), encode_qudit(2))
    estimate = qudit_pair_spin_measure(state, [0, 1], [2, 3], rng)
    assert estimate.twice_s == 4
    assert estimate.n_meas == default_n_meas(4)
    assert estimate.triplet_frequency == pytest.approx(1.0)


def test_qudit_pair_resplit_restores_both_blocks(rng):
    state = tensor(encode_qudit(2), encode_qudit(2, -2))
    joint = qudit_pair_spin_measure(state, [0, 1], [2, 3], rng.derive("measure"), mode="exact").twice_s
    # a cross-block measurement breaks the block symmetry but keeps the joint spin
    measure_pair(state, 1, 2, rng.derive("mix"))
    qudit_pair_resplit(state, [0, 1], [2, 3], rng.derive("resplit"))
    assert spin_sector_weights(state, [0, 1])[2] == pytest.approx(1.0)
    assert spin_sector_weights(state, [2, 3])[2] == pytest.approx(1.0)
    assert spin_sector_weights(state, [0, 1, 2, 3])[joint] == pytest.approx(1.0)
