import json
import math

import numpy as np
import pytest

from components.errors import CapacityError, PreconditionError, RetryExhausted, SingularOperatorError
from components.seqcheck import (
    ProjectorSequence, ProjectorSpec, SequenceOperator, expected_recovery_rounds, is_equiangular_pair,
    is_equiangular_sequence, is_no_leakage, named_sequence, nested_commutator_distances, order_of,
    permutation_on_basis, recovery_force, recovery_round_law, rotated_basis, rotation_spectrum_matches,
    search_sequences, sequence_to_operator, signed_permutation_test, site_qubit, spectra_match, spin0_basis,
    verify_commutator_pair,
)

PLUS = np.array([[0.5, 0.5], [0.5, 0.5]])
ZERO = np.array([[1.0, 0.0], [0.0, 0.0]])


@pytest.mark.parametrize("twice_n, dimension", [(2, 1), (4, 2), (6, 5)])
def test_spin0_basis_is_orthonormal(twice_n, dimension):
    basis = spin0_basis(twice_n)
    assert basis.dimension == dimension
    assert np.allclose(basis.vectors.T @ basis.vectors, np.eye(dimension), atol=1e-10)


def test_spin0_basis_rejects_odd_counts():
    with pytest.raises(PreconditionError):
        spin0_basis(3)


def test_site_qubits():
    assert site_qubit("c1", 4, 2) == 0
    assert site_qubit("c4", 4, 2) == 3
    assert site_qubit("a1", 4, 2) == 4
    assert site_qubit("a2", 4, 2) == 5
    for site in ("b1", "c5", "a3", "c0"):
        with pytest.raises(PreconditionError):
            site_qubit(site, 4, 2)


def test_projector_spec_validation():
    with pytest.raises(PreconditionError):
        ProjectorSpec("x", ("c1", "c2"))
    with pytest.raises(PreconditionError):
        ProjectorSpec("s", ("c1", "c1"))
    with pytest.raises(PreconditionError):
        ProjectorSequence(4, 2, [ProjectorSpec("t", ("c1", "a3"))])
    with pytest.raises(PreconditionError):
        ProjectorSequence(4, 3)


def test_sequence_file_format():
    text = json.dumps({"n_comp": 4, "n_anc": 2, "items": [{"kind": "t", "pair": ["a2", "c1"]}], "caps": False})
    seq = ProjectorSequence.from_json(text)
    assert seq.describe() == "t_a2,c1"
    assert not seq.cap_leading and not seq.cap_trailing
    assert [label for label, _ in seq.steps()] == ["t_a2,c1"]
    assert ProjectorSequence.from_json(seq.to_json()).to_dict() == seq.to_dict()


def test_caps_surround_the_items():
    labels = [label for label, _ in named_sequence("relaxed_two_ancilla").steps()]
    assert labels == ["cap", "t_a2,c4", "t_a2,c1", "t_a2,c2", "cap"]
    with pytest.raises(PreconditionError):
        named_sequence("missing")


def test_empty_sequence_is_the_identity():
    seq = ProjectorSequence(4, 0)
    basis = spin0_basis(4)
    op = sequence_to_operator(seq, basis)
    assert np.allclose(op.matrix, np.eye(2))
    assert is_no_leakage(seq, basis).passed
    assert order_of(op) == 1
    report = signed_permutation_test(op, basis)
    assert report.found and report.sign == 1


def test_rank_deficient_sequence_has_no_normalization():
    seq = ProjectorSequence(4, 0, [ProjectorSpec("s", ("c1", "c2"))])
    with pytest.raises(SingularOperatorError):
        sequence_to_operator(seq)
    raw = sequence_to_operator(seq, normalize=False)
    assert np.linalg.matrix_rank(raw.raw) == 1


def test_six_ancilla_sequence_is_an_irrational_rotation():
    seq = named_sequence("six_ancilla")
    basis = spin0_basis(4)
    assert is_no_leakage(seq, basis).passed
    op = sequence_to_operator(seq, basis)
    assert rotation_spectrum_matches(op, 1e-9)
    assert order_of(op) is None


def test_four_ancilla_sequence_has_order_twelve():
    seq = named_sequence("four_ancilla_order12")
    basis = spin0_basis(4)
    assert is_no_leakage(seq, basis).passed
    op = sequence_to_operator(seq, basis)
    assert order_of(op) == 12
    assert not signed_permutation_test(op, basis).found


def test_relaxed_sequence_leaks_but_is_a_rotation():
    seq = named_sequence("relaxed_two_ancilla")
    basis = spin0_basis(4)
    report = is_no_leakage(seq, basis)
    assert not report.passed
    assert report.failed_label == "t_a2,c1"
    assert rotation_spectrum_matches(sequence_to_operator(seq, basis))


def test_singlet_teleports_give_a_signed_permutation():
    basis = spin0_basis(4)
    op = sequence_to_operator(named_sequence("singlet_swap_c1_c2"), basis)
    report = signed_permutation_test(op, basis)
    assert report.found
    rep = permutation_on_basis(basis, report.permutation)
    assert np.allclose(op.unit_scaled(), report.sign * rep, atol=1e-8)


def test_checks_do_not_depend_on_the_basis(rng):
    seq = named_sequence("six_ancilla")
    basis = rotated_basis(spin0_basis(4), rng)
    assert is_no_leakage(seq, basis).passed
    assert rotation_spectrum_matches(sequence_to_operator(seq, basis))


def test_permutation_search_is_capped():
    basis = spin0_basis(8)
    op = SequenceOperator(np.eye(basis.dimension), np.eye(basis.dimension), True)
    with pytest.raises(CapacityError):
        signed_permutation_test(op, basis)


def test_spectra_match_up_to_sign():
    assert spectra_match([1.0, 2.0], [2.0, 1.0], 1e-12)
    assert spectra_match([1.0, 2.0], [-1.0, -2.0], 1e-12)
    assert not spectra_match([1.0, 2.0], [-1.0, -2.0], 1e-12, up_to_sign=False)
    assert not spectra_match([1.0, 2.0], [1.0, 2.0, 3.0], 1e-12)


def test_equiangular_pairs():
    report = is_equiangular_pair(ZERO, PLUS)
    assert report.equiangular and report.complement_equiangular
    assert report.alpha == pytest.approx(1 / math.sqrt(2))

    same = is_equiangular_pair(PLUS, PLUS)
    assert same.alpha == pytest.approx(1.0)
    assert not same.complement_equiangular

    assert not is_equiangular_pair(np.eye(2) - PLUS, PLUS).equiangular
    with pytest.raises(PreconditionError):
        is_equiangular_pair(ZERO, np.zeros((2, 2)))


def test_singlet_only_sequence_is_equiangular():
    report = is_equiangular_sequence(named_sequence("singlet_swap_c1_c2"))
    assert report.passed
    assert all(alpha is not None and alpha > 0 for alpha in report.alphas)


def test_recovery_round_law():
    alpha = 1 / math.sqrt(3)
    probabilities = [recovery_round_law(alpha, k) for k in range(1, 400)]
    assert sum(probabilities) == pytest.approx(1.0)
    mean = sum(k * p for k, p in enumerate(probabilities, start=1))
    assert mean == pytest.approx(expected_recovery_rounds(alpha))
    assert expected_recovery_rounds(1.0) == 1.0


def test_recovery_force_lands_in_q(rng):
    start = np.array([1.0, 1.0]) / math.sqrt(2)
    rounds = []
    for k in range(200):
        result = recovery_force(start, ZERO, PLUS, rng.spawn(k))
        assert abs(result.state[1]) == pytest.approx(0.0, abs=1e-12)
        rounds.append(result.rounds)
    assert np.mean(rounds) == pytest.approx(expected_recovery_rounds(1 / math.sqrt(2)), rel=0.25)


def test_recovery_force_gives_up(rng):
    with pytest.raises(RetryExhausted):
        recovery_force(np.array([0.0, 1.0]), ZERO, np.array([[0.0, 0.0], [0.0, 1.0]]), rng, max_rounds=5)


def test_nested_commutators_of_commuting_operators_vanish():
    a = np.diag([2.0, 0.5])
    table = nested_commutator_distances(a, np.diag([3.0, 1 / 3]), depth=3)
    assert table["M"].tolist() == [1, 2, 3]
    assert np.allclose(table["distance"], 0.0)


def test_commutator_operators_match_the_reference_ones():
    report = verify_commutator_pair()
    assert report.passed
    for entry in report.operators.values():
        assert entry["eigen_match"]
        assert entry["log_orbit_residual"] <= 1e-9
    assert len(report.distances) == 8


def test_one_ancilla_pair_search_finds_no_counterexample(rng):
    table = search_sequences(60, rng, max_length=5)
    assert len(table) == 60
    hits = table[table["no_leakage"]]
    assert not hits["signed_permutation"].eq(False).any()
