import json

import numpy as np
import pytest

from components.errors import PreconditionError, RetryExhausted
from components.experiments import (
    ExperimentConfig, Histogram, STSampleInstance, arcsine_cdf, cos2_reference, detangle, detangle_histogram,
    random_sequence_profile, spike_check, stsample_conditional, stsample_generate, stsample_probability,
    survivor_probabilities, triplet_profile,
)
from components.qstate import basis_state, measure_pair, singlet_dimerization, total_spin_sq_expect
from components.rng import Rng


def test_histogram_bins_are_half_open():
    values = [0.0, 0.25, 0.5, 1.0]
    assert Histogram.from_samples(values, 4, closed="left").counts.tolist() == [1, 1, 1, 1]
    assert Histogram.from_samples(values, 4, closed="right").counts.tolist() == [2, 1, 0, 1]


def test_right_closed_view_mirrors_left_closed_view():
    values = np.array([0.0, 0.0, 0.25, 0.75, 0.75, 0.75, 1.0, 0.5])
    left = Histogram.from_samples(values, 4, closed="left")
    right = Histogram.from_samples(1.0 - values, 4, closed="right")
    assert right.counts.tolist() == left.counts[::-1].tolist()


def test_histogram_validation():
    with pytest.raises(PreconditionError):
        Histogram(np.array([0.0, 0.5, 0.5]), np.array([1, 1]))
    with pytest.raises(PreconditionError):
        Histogram(np.array([0.0, 1.0]), np.array([1, 1]))
    with pytest.raises(PreconditionError):
        Histogram.from_samples([0.5], 0)


def test_histogram_frame():
    frame = Histogram.from_samples([0.1, 0.9], 2).to_frame()
    assert list(frame.columns) == ["bin_lo", "bin_hi", "count"]
    assert frame["count"].tolist() == [1, 1]


def test_spike_check():
    hist = Histogram.from_samples([0.0] * 5 + [0.75] * 5 + [1.0] * 5 + [0.3], 8)
    assert spike_check(hist) == {0.0: True, 0.75: True, 1.0: True}
    flat = Histogram.from_samples(np.linspace(0.0, 1.0, 8, endpoint=False), 8)
    assert not any(spike_check(flat).values())


def test_experiment_config_validation():
    with pytest.raises(PreconditionError):
        ExperimentConfig(n_spins=5)
    with pytest.raises(PreconditionError):
        ExperimentConfig(bins=1)
    with pytest.raises(PreconditionError):
        ExperimentConfig(n_runs=0)
    assert ExperimentConfig(n_spins=6).to_dict()["n_spins"] == 6


def test_dimerization_profile():
    frame = triplet_profile(singlet_dimerization(2))
    assert len(frame) == 6
    by_pair = {(i, j): p for i, j, p in frame.itertuples(index=False)}
    assert by_pair[(0, 1)] == pytest.approx(0.0, abs=1e-12)
    assert by_pair[(2, 3)] == pytest.approx(0.0, abs=1e-12)
    assert by_pair[(0, 2)] == pytest.approx(0.75)


def test_profile_without_measurements():
    cfg = ExperimentConfig(n_spins=4, n_meas=0, n_sequences=1, n_runs=1)
    profile = random_sequence_profile(cfg, Rng(0))
    summary = profile.summary()
    assert summary["pairs"] == 6
    assert summary["extreme_pairs"] == 2
    assert summary["fraction_in_band"] == pytest.approx(4 / 6)
    assert summary["final_pair"] is None


def test_profile_after_measurements(rng):
    cfg = ExperimentConfig(n_spins=8, n_meas=20, n_sequences=1, n_runs=1)
    profile = random_sequence_profile(cfg, rng)
    values = profile.frame["p_triplet"]
    assert len(values) == 28
    assert values.between(0.0, 1.0).all()
    assert profile.summary()["extreme_pairs"] >= 1
    assert len(profile.pairs) == 20


def test_profile_spin_limit(rng):
    with pytest.raises(PreconditionError):
        random_sequence_profile(ExperimentConfig(n_spins=22, n_meas=0), rng)


def test_detangle_leaves_four_spinless_survivors(rng):
    state = singlet_dimerization(4)
    for k in range(6):
        pair_rng = rng.spawn(k)
        i, j = pair_rng.distinct_pair(range(8))
        state, _ = measure_pair(state, i, j, pair_rng)
    result = detangle(state, rng.derive("detangle"))
    assert result.state.n_qubits == 4
    assert len(result.survivors) == 4
    assert len(result.removed) == 2
    assert result.measurements >= 2
    assert total_spin_sq_expect(result.state, range(4)) == pytest.approx(0.0, abs=1e-9)
    removed = {q for pair in result.removed for q in pair}
    assert removed.isdisjoint(result.survivors)


def test_detangle_preconditions(rng):
    with pytest.raises(PreconditionError):
        detangle(singlet_dimerization(1), rng)
    with pytest.raises(RetryExhausted):
        detangle(basis_state("000000"), rng, max_measurements=20)


def test_survivor_probabilities():
    probs = survivor_probabilities(singlet_dimerization(2))
    assert probs["S"] == pytest.approx(1.0)
    assert probs["T"] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(PreconditionError):
        survivor_probabilities(singlet_dimerization(3))


def test_detangle_histograms():
    cfg = ExperimentConfig(n_spins=6, n_meas=4, n_sequences=3, n_runs=2, bins=4, master_seed=5)
    hists = detangle_histogram(cfg)
    assert hists.samples.shape == (6,)
    assert ((hists.samples >= 0.0) & (hists.samples <= 1.0)).all()
    assert hists.singlet.total == 6
    assert hists.triplet.total == 6
    assert set(hists.spikes) == {0.0, 0.75, 1.0}
    assert list(hists.to_frame().columns) == ["bin_lo", "bin_hi", "count_S", "count_T"]


def test_detangle_samples_are_reproducible():
    cfg = ExperimentConfig(n_spins=6, n_meas=3, n_sequences=2, n_runs=2, bins=4, master_seed=9)
    assert np.array_equal(detangle_histogram(cfg).samples, detangle_histogram(cfg).samples)


def test_cos2_reference_follows_the_arcsine_law(rng):
    assert arcsine_cdf(0.5) == pytest.approx(0.5)
    assert arcsine_cdf(1.0) == pytest.approx(1.0)
    hist = cos2_reference(10_000, 50, rng)
    assert hist.total == 10_000
    assert hist.ks_statistic <= 0.02
    # the density piles up at both ends
    assert hist.counts[0] > hist.counts[25]
    assert hist.counts[-1] > hist.counts[25]


def test_stsample_instance():
    instance = stsample_generate(6, 5, seed=11)
    assert instance.n == 6
    assert len(instance.pairs) == len(instance.bits)
    assert len(instance.bits) >= 5 + 1 + 1
    data = json.loads(instance.to_json())
    assert set(data) == {"n", "pairs", "bits"}
    assert STSampleInstance.from_json(instance.to_json()) == instance
    assert stsample_generate(6, 5, seed=11) == instance


def test_stsample_conditional_distribution():
    instance = stsample_generate(6, 4, seed=3)
    conditional = stsample_conditional(instance)
    assert set(conditional) == {"0", "1"}
    assert sum(conditional.values()) == pytest.approx(1.0)
    assert conditional[instance.bits[-1]] > 0
    assert stsample_probability(instance) > 0


def test_stsample_validation():
    with pytest.raises(PreconditionError):
        STSampleInstance(4, [(0, 1)], "01")
    with pytest.raises(PreconditionError):
        STSampleInstance(4, [(0, 1)], "2")
    with pytest.raises(PreconditionError):
        STSampleInstance(4, [(1, 1)], "0")
    with pytest.raises(PreconditionError):
        STSampleInstance(4, [(0, 4)], "0")
    with pytest.raises(PreconditionError):
        stsample_generate(5, 3, seed=0)
    with pytest.raises(PreconditionError):
        stsample_conditional(STSampleInstance(4, [], ""))
