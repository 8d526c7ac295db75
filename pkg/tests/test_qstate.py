import numpy as np
import pytest

from components.errors import CapacityError, PreconditionError, ZeroBranch
from components.qstate import (
    PairOutcome, SINGLET_PAIR, StateVector, Transcript, apply_cnot_oracle, apply_heisenberg, apply_unitary_all,
    basis_state, bell_state, dimer_state, discard_qubits, dump_state, extract_subsystem, fidelity, load_state,
    measure_pair, measure_pauli1, pair_projection, pair_weights, pauli_weights, postselect_pair,
    project_spin_sector, random_state, random_unitary1, relabel_qubits, remove_singlet_pair,
    singlet_dimerization, spin_sector_weights, sz_sector_weights, total_spin_sq_expect, zero_state,
)


def test_singlet_amplitudes():
    state = singlet_dimerization(1)
    assert np.allclose(state.amps, [0, 1 / np.sqrt(2), -1 / np.sqrt(2), 0])
    assert np.isclose(state.norm(), 1.0)


def test_projectors_are_complementary_and_idempotent(rng):
    psi = random_state(3, rng).amps
    s = pair_projection(psi, 3, 0, 2, PairOutcome.SINGLET)
    t = pair_projection(psi, 3, 0, 2, PairOutcome.TRIPLET)
    assert np.allclose(s + t, psi, atol=1e-12)
    assert np.allclose(pair_projection(s, 3, 0, 2, PairOutcome.SINGLET), s, atol=1e-12)
    assert np.allclose(pair_projection(t, 3, 0, 2, PairOutcome.TRIPLET), t, atol=1e-12)
    assert abs(np.vdot(s, t)) < 1e-12


def test_pair_weights_on_singlet_and_product():
    weights = pair_weights(singlet_dimerization(1), 0, 1)
    assert np.isclose(weights[PairOutcome.SINGLET], 1.0)
    assert np.isclose(weights[PairOutcome.TRIPLET], 0.0)

    weights = pair_weights(basis_state("01"), 0, 1)
    assert np.isclose(weights[PairOutcome.SINGLET], 0.5)
    assert np.isclose(weights[PairOutcome.TRIPLET], 0.5)


def test_repeated_measurement_is_stable(rng):
    state = random_state(4, rng.derive("state"))
    _, first = measure_pair(state, 1, 3, rng.derive("first"))
    _, second = measure_pair(state, 1, 3, rng.derive("second"))
    assert first == second
    assert [step.op for step in state.transcript.steps] == [first.op, first.op]


def test_postselect_records_forced_weight():
    state = basis_state("01")
    _, weight = postselect_pair(state, 0, 1, "S")
    assert np.isclose(weight, 0.5)
    assert np.isclose(state.norm_sq, 0.5)
    assert state.transcript.steps[-1].forced
    assert fidelity(state, singlet_dimerization(1)) == pytest.approx(1.0)


def test_postselect_zero_branch_raises():
    with pytest.raises(ZeroBranch):
        postselect_pair(singlet_dimerization(1), 0, 1, PairOutcome.TRIPLET)


def test_pair_must_be_distinct_and_in_range():
    state = zero_state(2)
    with pytest.raises(PreconditionError):
        pair_weights(state, 0, 0)
    with pytest.raises(PreconditionError):
        pair_weights(state, 0, 2)


def test_capacity_limit():
    with pytest.raises(CapacityError):
        zero_state(25)


def test_heisenberg_factor_on_triplet():
    state = basis_state("00")
    apply_heisenberg(state, 0, 1, 1.0)
    assert fidelity(state, basis_state("00")) == pytest.approx(1.0)
    assert state.transcript.steps[-1].op == "heis"
    assert state.transcript.steps[-1].branch_weight == pytest.approx(25 / 16)


def test_heisenberg_factor_annihilating_singlet():
    with pytest.raises(ZeroBranch):
        apply_heisenberg(singlet_dimerization(1), 0, 1, 4 / 3)


def test_total_spin_expectations():
    assert total_spin_sq_expect(singlet_dimerization(1), [0, 1]) == pytest.approx(0.0, abs=1e-12)
    assert total_spin_sq_expect(basis_state("00"), [0, 1]) == pytest.approx(2.0)
    assert total_spin_sq_expect(singlet_dimerization(2), range(4)) == pytest.approx(0.0, abs=1e-12)


def test_spin_and_sz_sector_weights():
    weights = spin_sector_weights(singlet_dimerization(2), [0, 1, 2, 3])
    assert weights[0] == pytest.approx(1.0)
    assert weights[2] == pytest.approx(0.0, abs=1e-12)
    assert weights[4] == pytest.approx(0.0, abs=1e-12)

    sz = sz_sector_weights(basis_state("00"), [0, 1])
    assert sz[2] == pytest.approx(1.0)
    assert sz[0] == pytest.approx(0.0)


def test_bell_states_are_orthonormal():
    vectors = np.array([bell_state(k) for k in range(1, 5)])
    assert np.allclose(vectors.conj() @ vectors.T, np.eye(4), atol=1e-12)
    assert np.allclose(bell_state(1), SINGLET_PAIR)
    assert np.isclose(abs(bell_state(3)[0]), 1 / np.sqrt(2))
    assert np.isclose(abs(bell_state(3)[3]), 1 / np.sqrt(2))


def test_relabel_moves_bits():
    moved = relabel_qubits(basis_state("10"), {0: 1, 1: 0})
    assert np.allclose(moved.amps, basis_state("01").amps)


def test_dimer_state_holds_singlets_on_pairs():
    state = dimer_state(4, [(0, 3), (1, 2)])
    assert pair_weights(state, 0, 3)[PairOutcome.SINGLET] == pytest.approx(1.0)
    assert pair_weights(state, 1, 2)[PairOutcome.SINGLET] == pytest.approx(1.0)
    assert pair_weights(state, 0, 1)[PairOutcome.SINGLET] == pytest.approx(0.25)


def test_cnot_oracle_flips_target():
    state = apply_cnot_oracle(basis_state("10"), 0, 1)
    assert np.allclose(state.amps, basis_state("11").amps)
    state = apply_cnot_oracle(basis_state("01"), 0, 1)
    assert np.allclose(state.amps, basis_state("01").amps)


def test_extract_and_discard():
    joint = StateVector(3, np.kron(SINGLET_PAIR, np.array([0.6, 0.8])))
    single = extract_subsystem(joint, [0])
    assert np.allclose(np.abs(single.amps), [0.6, 0.8])
    pair = discard_qubits(joint, [0])
    assert fidelity(pair, singlet_dimerization(1)) == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        extract_subsystem(singlet_dimerization(1), [0])


def test_remove_singlet_pair():
    reduced = remove_singlet_pair(singlet_dimerization(2), 0, 1)
    assert reduced.n_qubits == 2
    assert fidelity(reduced, singlet_dimerization(1)) == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        remove_singlet_pair(basis_state("0000"), 0, 1)


def test_state_file_format(rng):
    state = random_state(3, rng)
    payload = dump_state(state)
    assert payload[:4] == (3).to_bytes(4, "little")
    assert len(payload) == 4 + 16 * 8
    assert np.allclose(load_state(payload).amps, state.amps)
    with pytest.raises(PreconditionError):
        load_state(payload[:-16])


def test_transcript_weight_product():
    transcript = Transcript()
    transcript.record("s", (0, 1), "S", 0.5, forced=True)
    transcript.record("t", (1, 2), "T", 0.25)
    assert transcript.weight_product() == pytest.approx(0.125)
    assert transcript.weight_product(forced_only=True) == pytest.approx(0.5)
    restored = Transcript.from_jsonl(transcript.to_jsonl())
    assert [step.to_record() for step in restored.steps] == [step.to_record() for step in transcript.steps]


def test_measure_pauli1_on_eigenstates(rng):
    assert measure_pauli1(basis_state("0"), 0, "Z", rng)[1] == 1
    assert measure_pauli1(basis_state("1"), 0, "Z", rng)[1] == -1
    plus = StateVector(1, np.array([1, 1]) / np.sqrt(2))
    assert measure_pauli1(plus, 0, "X", rng)[1] == 1


def test_measure_pauli1_collapses_and_records(rng):
    state, value = measure_pauli1(basis_state("00"), 1, "X", rng)
    assert pauli_weights(state, 1, "X")[value] == pytest.approx(1.0)
    assert pauli_weights(state, 0, "Z")[1] == pytest.approx(1.0)
    step = state.transcript.steps[-1]
    assert step.op == "px"
    assert step.branch_weight == pytest.approx(0.5)
    assert state.norm_sq == pytest.approx(0.5)


@pytest.mark.parametrize("pauli", ["I", "H", "XX"])
def test_measure_pauli1_rejects_other_operators(rng, pauli):
    with pytest.raises(PreconditionError):
        measure_pauli1(basis_state("0"), 0, pauli, rng)


@pytest.mark.slow
def test_measure_pauli1_follows_born_weights(rng):
    angle = 0.4
    expected = np.cos(angle) ** 2
    shots = 4000
    plus = sum(measure_pauli1(StateVector(1, np.array([np.cos(angle), np.sin(angle)])), 0, "Z", rng)[1] == 1
               for _ in range(shots))
    assert plus / shots == pytest.approx(expected, abs=3 * np.sqrt(expected * (1 - expected) / shots))


def test_project_spin_sector(rng):
    state = random_state(3, rng)
    weights = spin_sector_weights(state, [0, 1, 2])
    assert weights[1] + weights[3] == pytest.approx(1.0)
    for twice_s in (1, 3):
        branch, weight = project_spin_sector(state, [0, 1, 2], twice_s)
        assert weight == pytest.approx(weights[twice_s])
        assert branch.norm() == pytest.approx(1.0)
        assert total_spin_sq_expect(branch, [0, 1, 2]) == pytest.approx(twice_s / 2 * (twice_s / 2 + 1))
    # the input is left untouched
    assert spin_sector_weights(state, [0, 1, 2])[1] == pytest.approx(weights[1])


def test_project_spin_sector_rejects_bad_sectors():
    with pytest.raises(PreconditionError):
        project_spin_sector(basis_state("00"), [0, 1], 1)
    with pytest.raises(ZeroBranch):
        project_spin_sector(basis_state("00"), [0, 1], 0)


def test_global_rotation_commutes_with_pair_projectors(rng):
    unitary = random_unitary1(rng.derive("unitary"))
    psi = random_state(3, rng.derive("state"))
    for outcome in (PairOutcome.SINGLET, PairOutcome.TRIPLET):
        rotated_after = apply_unitary_all(StateVector(3, pair_projection(psi.amps, 3, 0, 2, outcome)), unitary)
        rotated_before = pair_projection(apply_unitary_all(psi.copy(), unitary).amps, 3, 0, 2, outcome)
        assert np.allclose(rotated_after.amps, rotated_before, atol=1e-12)
    assert total_spin_sq_expect(apply_unitary_all(psi.copy(), unitary), [0, 1, 2]) == pytest.approx(
        total_spin_sq_expect(psi, [0, 1, 2]))
