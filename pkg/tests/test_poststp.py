import json

import numpy as np
import pytest

from components.errors import PreconditionError
from components.poststp import (
    DEFAULT_SCHEDULE, HeisenbergSchedule, amplitude_bound, apply_heis_via_resource, apply_schedule_level,
    approx_epsilon_plan, evolve_with_report, execute_plan, ground_state, heisenberg_matrix, level_cost,
    mix_epsilon, random_forced_transcript, reduce_epsilon_once, resource_from_plan, resource_state,
    ring_schedule, trotter_error, trotter_imaginary_evolve, verify_amplitude_bound,
)
from components.qstate import (
    Transcript, apply_heisenberg, fidelity, random_state, singlet_dimerization, total_spin_sq_expect,
)


def heisenberg_reference(psi, a, b, eps):
    return apply_heisenberg(psi.copy(), a, b, eps)


@pytest.mark.parametrize("eps", [4 / 3, 0.5, -0.5, 1.0])
def test_resource_state_is_spin_zero(eps):
    assert total_spin_sq_expect(resource_state(eps), range(4)) == pytest.approx(0.0, abs=1e-12)


def test_heisenberg_via_resource_matches_direct_factor(rng):
    psi = random_state(3, rng)
    state = psi.copy()
    steps = apply_heis_via_resource(state, 0, 2, 0.5)
    assert state.n_qubits == 3
    assert [step.op for step in steps.steps if step.forced] == ["s", "s"]
    assert fidelity(state, heisenberg_reference(psi, 0, 2, 0.5)) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("via_resource", [False, True])
@pytest.mark.parametrize("eps", [4 / 3, 0.5, -1.0])
def test_reduce_epsilon_once(rng, eps, via_resource):
    psi = random_state(2, rng)
    state = psi.copy()
    reduce_epsilon_once(state, 0, 1, eps, rng, via_resource=via_resource)
    assert state.n_qubits == 2
    assert fidelity(state, heisenberg_reference(psi, 0, 1, -eps ** 2 / 4)) == pytest.approx(1.0, abs=1e-10)


def test_schedule_entries():
    assert mix_epsilon(4 / 3, 4 / 3) == pytest.approx(-4 / 9)
    assert DEFAULT_SCHEDULE.entry(0) == pytest.approx(4 / 3)
    assert DEFAULT_SCHEDULE.entry(1) == pytest.approx(4 / 9)
    assert DEFAULT_SCHEDULE.entry(2) == pytest.approx(4 / 81)
    assert DEFAULT_SCHEDULE.signed(0) > 0
    assert DEFAULT_SCHEDULE.signed(1) < 0


@pytest.mark.parametrize("x", [1.0, 0.5, 0.1, 0.01, 1e-4])
def test_first_entry_in_bracket(x):
    entry = DEFAULT_SCHEDULE.entry(DEFAULT_SCHEDULE.first_entry_in(x))
    assert 4 / 9 * x ** 2 <= entry <= 4 / 3 * x


def test_level_cost():
    assert [level_cost(level) for level in range(4)] == [1, 3, 7, 15]
    assert level_cost(2, flipped=True) == 8


@pytest.mark.parametrize("level", [0, 1, 2])
@pytest.mark.parametrize("sign", [1, -1])
def test_schedule_levels_realize_signed_entries(rng, level, sign):
    psi = random_state(2, rng)
    state = psi.copy()
    steps = apply_schedule_level(state, 0, 1, level, sign)
    expected = heisenberg_reference(psi, 0, 1, DEFAULT_SCHEDULE.signed(level, sign))
    assert fidelity(state, expected) == pytest.approx(1.0, abs=1e-10)
    flipped = sign != DEFAULT_SCHEDULE.natural_sign(level)
    assert sum(step.forced for step in steps.steps) == level_cost(level, flipped)


@pytest.mark.parametrize("target, delta", [(0.3, 0.05), (-0.2, 0.05), (-4 / 9, 1e-3)])
def test_approx_epsilon_plan(rng, target, delta):
    plan = approx_epsilon_plan(target, delta)
    assert plan.error <= delta
    psi = random_state(2, rng)
    state = psi.copy()
    execute_plan(state, 0, 1, plan)
    assert fidelity(state, heisenberg_reference(psi, 0, 1, plan.effective)) == pytest.approx(1.0, abs=1e-9)
    assert plan.to_dict()["operations"] == plan.operations


def test_exact_schedule_entry_is_used_once():
    plan = approx_epsilon_plan(-4 / 9, 1e-3)
    assert [(e.level, e.sign, e.power) for e in plan.entries] == [(1, -1, 1)]
    assert plan.operations == 3


def test_small_target_needs_no_operations():
    plan = approx_epsilon_plan(0.001, 0.01)
    assert plan.entries == []
    assert plan.operations == 0


def test_plan_rejects_bad_inputs():
    with pytest.raises(PreconditionError):
        approx_epsilon_plan(1.5, 0.01)
    with pytest.raises(PreconditionError):
        approx_epsilon_plan(0.3, 0.0)


def test_resource_from_plan():
    plan = approx_epsilon_plan(0.3, 0.05)
    assert fidelity(resource_from_plan(plan), resource_state(plan.effective)) == pytest.approx(1.0, abs=1e-9)


def test_heisenberg_matrix_spectrum():
    values = np.linalg.eigvalsh(heisenberg_matrix(2, {(0, 1): 1.0}).toarray())
    assert np.allclose(values, [-0.75, 0.25, 0.25, 0.25])


def test_imaginary_time_reaches_ground_state():
    schedule = ring_schedule(4, -1.0, 10.0)
    evolved = trotter_imaginary_evolve(singlet_dimerization(2), schedule, 0.05)
    target = ground_state(4, {pair: 1.0 for pair in schedule.steps[0].couplings})
    assert fidelity(evolved, target) >= 0.999


def test_evolution_report_against_oracle():
    schedule = ring_schedule(4, -1.0, 1.0)
    _, report = evolve_with_report(singlet_dimerization(2), schedule, 0.01)
    assert report.steps == 100 * 4
    assert report.fidelity_vs_oracle >= 0.999


def test_protocol_mode_matches_direct_mode(rng):
    schedule = ring_schedule(4, -1.0, 0.2)
    start = singlet_dimerization(2)
    direct = trotter_imaginary_evolve(start, schedule, 0.1)
    via_resource = trotter_imaginary_evolve(start, schedule, 0.1, mode="protocol", rng=rng)
    assert fidelity(direct, via_resource) == pytest.approx(1.0, abs=1e-9)


def test_trotter_error_halves_with_dt(rng):
    schedule = ring_schedule(4, -1.0, 1.0)
    psi = random_state(4, rng)
    coarse, fine = trotter_error(psi, schedule, 0.02), trotter_error(psi, schedule, 0.01)
    assert fine < coarse
    assert 1.6 <= coarse / fine <= 2.4


def test_plan_mode_applies_the_planned_epsilon(rng):
    schedule = ring_schedule(4, -1.0, 0.2)
    start = random_state(4, rng.derive("state"))
    via_plan = trotter_imaginary_evolve(start, schedule, 0.1, mode="protocol", rng=rng, delta=0.01)
    plan = approx_epsilon_plan(-0.1, 0.01)
    assert plan.error <= 0.01
    expected = start.copy()
    for _ in range(2):
        for i, j in sorted(schedule.steps[0].couplings):
            apply_heisenberg(expected, i, j, plan.effective)
    assert fidelity(via_plan, expected) == pytest.approx(1.0, abs=1e-9)


def test_trotter_rejects_large_factors():
    with pytest.raises(PreconditionError):
        trotter_imaginary_evolve(singlet_dimerization(2), ring_schedule(4, -1.0, 2.0), 2.0)
    with pytest.raises(PreconditionError):
        trotter_imaginary_evolve(singlet_dimerization(2), ring_schedule(4, -1.0, 1.0), 0.0)


def test_schedule_file_validation():
    text = json.dumps([{"dt": 1.0, "J": [[0, 1, 0.5]]}])
    schedule = HeisenbergSchedule.from_json(text)
    assert schedule.total_time == pytest.approx(1.0)
    with pytest.raises(PreconditionError):
        HeisenbergSchedule.from_json(json.dumps([{"dt": -1.0, "J": [[0, 1, 0.5]]}]))
    with pytest.raises(PreconditionError):
        HeisenbergSchedule.from_json(json.dumps([{"dt": 1.0, "J": [[0, 1, 1e6]]}]))
    with pytest.raises(PreconditionError):
        schedule.validate(1)


def test_amplitude_bound_on_random_transcripts(rng):
    assert amplitude_bound(0, 4) == pytest.approx(1 / 32)
    for k in range(20):
        transcript = random_forced_transcript(6, 5, rng.spawn(k))
        check = verify_amplitude_bound(transcript, 6)
        assert check.passed
        assert check.steps == 5
        assert check.final <= check.observed


def test_amplitude_bound_flags_tiny_probabilities():
    transcript = Transcript()
    transcript.record("s", (0, 1), "S", 1e-9, forced=True)
    check = verify_amplitude_bound(transcript, 4)
    assert not check.passed
    assert check.to_dict()["bound"] == pytest.approx(1 / 128)


def test_amplitude_bound_checks_every_prefix():
    transcript = Transcript()
    for weight in (0.01, 1.0, 1.0):
        transcript.record("s", (0, 1), "S", weight, forced=True)
    check = verify_amplitude_bound(transcript, 2)
    # The final product 0.01 clears 4^-3 2^-3, the first prefix misses 4^-1 2^-3
    assert not check.passed
    assert check.j == 1
    assert check.observed == pytest.approx(0.01)
    assert check.bound == pytest.approx(1 / 32)
    assert check.final == pytest.approx(0.01)


def test_amplitude_bound_ignores_unforced_steps():
    transcript = Transcript()
    transcript.record("s", (0, 1), "S", 1e-9)
    transcript.record("t", (0, 1), "T", 0.5, forced=True)
    check = verify_amplitude_bound(transcript, 2)
    assert check.passed
    assert check.steps == 1


@pytest.mark.parametrize("n_qubits", [5, 3, 1])
def test_random_forced_transcript_needs_even_qubits(rng, n_qubits):
    with pytest.raises(PreconditionError):
        random_forced_transcript(n_qubits, 3, rng)
