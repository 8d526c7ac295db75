"""
Random s/t measurement experiments on singlet dimerizations.

Profiles report exact branch weights rather than sampled frequencies, so a profile carries no
sampling noise of its own. Every experiment draws from streams derived from the config's master
seed and is bit-reproducible from (master_seed, config).
"""
import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import kstest

from components.errors import PreconditionError, RetryExhausted
from components.qstate import (
    PairOutcome, StateVector, Transcript, measure_pair, pair_weights, postselect_pair,
    remove_singlet_pair, singlet_dimerization, total_spin_sq_expect,
)
from components.rng import Rng

logger = logging.getLogger(__name__)

MAX_PROFILE_SPINS = 20
SURVIVOR_SPINS = 4
DEFAULT_MAX_MEASUREMENTS = 10 ** 6
SURVIVOR_SPIN_TOLERANCE = 1e-9
# Probabilities where the detangled |S> view shows discrete spikes
SPIKE_POINTS = (0.0, 0.75, 1.0)
BIT_OF = {PairOutcome.SINGLET: "0", PairOutcome.TRIPLET: "1"}
OUTCOME_OF = {"0": PairOutcome.SINGLET, "1": PairOutcome.TRIPLET}


@dataclass
class ExperimentConfig:
    n_spins: int = 18
    n_meas: int = 1000
    n_sequences: int = 1000
    n_runs: int = 10
    bins: int = 100
    master_seed: int = 0

    def __post_init__(self):
        if self.n_spins < 2 or self.n_spins % 2:
            raise PreconditionError(f"n_spins must be a positive even number, got {self.n_spins}")
        if self.bins < 2:
            raise PreconditionError(f"bins must be at least 2, got {self.bins}")
        if self.n_meas < 0 or self.n_sequences < 1 or self.n_runs < 1:
            raise PreconditionError("n_meas must be >= 0 and n_sequences, n_runs >= 1")

    def to_dict(self) -> dict:
        return {
            "n_spins": self.n_spins,
            "n_meas": self.n_meas,
            "n_sequences": self.n_sequences,
            "n_runs": self.n_runs,
            "bins": self.bins,
            "master_seed": self.master_seed,
        }


# ---------------------------------------------------------------------------
# Histograms on [0, 1]
# ---------------------------------------------------------------------------

def _bin_indices(values: np.ndarray, bins: int, closed: str = "left") -> np.ndarray:
    """
    Uniform bins on [0, 1]; "left" bins are [a, b) and "right" bins are (a, b], outer edges included
    """
    scaled = np.clip(np.asarray(values, dtype=float), 0.0, 1.0) * bins
    if closed == "left":
        index = np.floor(scaled)
    else:
        index = np.ceil(scaled) - 1
    return np.clip(index, 0, bins - 1).astype(int)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    ks_statistic: Optional[float] = None

    def __post_init__(self):
        if np.any(np.diff(self.edges) <= 0):
            raise PreconditionError("Histogram edges must be strictly increasing")
        if len(self.counts) != len(self.edges) - 1:
            raise PreconditionError("Histogram needs one count per bin")

    @classmethod
    def from_samples(cls, values: Sequence[float], bins: int, closed: str = "left") -> "Histogram":
        if bins < 1:
            raise PreconditionError(f"bins must be positive, got {bins}")
        counts = np.bincount(_bin_indices(np.asarray(values), bins, closed), minlength=bins)
        return cls(np.linspace(0.0, 1.0, bins + 1), counts)

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def uniform_baseline(self) -> float:
        return self.total / self.bins

    def bin_of(self, value: float, closed: str = "left") -> int:
        return int(_bin_indices(np.array([value]), self.bins, closed)[0])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "bin_lo": self.edges[:-1],
            "bin_hi": self.edges[1:],
            "count": self.counts.astype(int),
        })


def spike_check(hist: Histogram, points: Sequence[float] = SPIKE_POINTS, closed: str = "left") -> Dict[float, bool]:
    """
    Returns, per probability value, whether its bin holds more than the uniform baseline
    """
    return {float(p): bool(hist.counts[hist.bin_of(p, closed)] > hist.uniform_baseline) for p in points}


# ---------------------------------------------------------------------------
# Random-sequence profiles
# ---------------------------------------------------------------------------

def _random_pair(n: int, rng: Rng) -> Tuple[int, int]:
    i, j = rng.distinct_pair(range(n))
    return (min(i, j), max(i, j))


def random_pairs(n: int, count: int, rng: Rng) -> List[Tuple[int, int]]:
    return [_random_pair(n, rng) for _ in range(count)]


@dataclass
class Profile:
    frame: pd.DataFrame
    pairs: List[Tuple[int, int]]
    outcomes: List[PairOutcome]

    @property
    def final_pair(self) -> Optional[Tuple[int, int]]:
        return self.pairs[-1] if self.pairs else None

    def summary(self, band: Tuple[float, float] = (0.7, 0.8), tol: float = 1e-9) -> dict:
        p = self.frame["p_triplet"]
        return {
            "pairs": int(len(p)),
            "fraction_in_band": float(p.between(*band).mean()),
            "extreme_pairs": int(((p <= tol) | (p >= 1 - tol)).sum()),
            "final_pair": None if self.final_pair is None else list(self.final_pair),
            "final_outcome": self.outcomes[-1].value if self.outcomes else None,
        }


def triplet_profile(state: StateVector) -> pd.DataFrame:
    """
    Exact P(t) for every unordered pair of the register
    """
    rows = [(i, j, pair_weights(state, i, j)[PairOutcome.TRIPLET])
            for i, j in itertools.combinations(range(state.n_qubits), 2)]
    frame = pd.DataFrame(rows, columns=["pair_i", "pair_j", "p_triplet"])
    frame["p_triplet"] = frame["p_triplet"].clip(0.0, 1.0)
    return frame


def random_sequence_profile(cfg: ExperimentConfig, rng: Rng) -> Profile:
    """
    Runs n_meas unconditioned measurements on random pairs of a dimerization, then profiles every pair
    """
    if cfg.n_spins > MAX_PROFILE_SPINS:
        raise PreconditionError(f"Profiles support at most {MAX_PROFILE_SPINS} spins, got {cfg.n_spins}")
    state = singlet_dimerization(cfg.n_spins // 2)
    pairs, outcomes = [], []
    for _ in range(cfg.n_meas):
        pair = _random_pair(cfg.n_spins, rng)
        state, outcome = measure_pair(state, pair[0], pair[1], rng)
        pairs.append(pair)
        outcomes.append(outcome)
    profile = Profile(triplet_profile(state), pairs, outcomes)
    logger.info("Profiled %d pairs after %d measurements", len(profile.frame), cfg.n_meas)
    return profile


# ---------------------------------------------------------------------------
# Detangling
# ---------------------------------------------------------------------------

@dataclass
class DetangleResult:
    state: StateVector
    transcript: Transcript
    survivors: List[int]
    measurements: int

    @property
    def removed(self) -> List[Tuple[int, int]]:
        return [step.pair for step in self.transcript.steps if step.op == "s"]


def detangle(state: StateVector, rng: Rng, max_measurements: int = DEFAULT_MAX_MEASUREMENTS,
             labels: Optional[Sequence[int]] = None) -> DetangleResult:
    """
    Measures random pairs and drops every pair found in a singlet until four spins remain.

    The returned transcript names qubits by their labels in the input register (or by labels, when
    given), and the survivors keep their relative order.
    """
    if state.n_qubits < SURVIVOR_SPINS or state.n_qubits % 2:
        raise PreconditionError(f"Detangling needs an even register of at least {SURVIVOR_SPINS} spins")
    current = state.copy()
    names = list(range(state.n_qubits)) if labels is None else list(labels)
    transcript = Transcript()
    count = 0
    while current.n_qubits > SURVIVOR_SPINS:
        if count >= max_measurements:
            raise RetryExhausted(f"Detangling did not finish within {max_measurements} measurements")
        i, j = _random_pair(current.n_qubits, rng)
        current, outcome = measure_pair(current, i, j, rng)
        weight = current.transcript.steps[-1].branch_weight
        transcript.record(outcome.op, (names[i], names[j]), outcome.value, weight)
        count += 1
        if outcome is PairOutcome.SINGLET:
            current = remove_singlet_pair(current, i, j)
            names = [name for k, name in enumerate(names) if k not in (i, j)]
    spin_sq = total_spin_sq_expect(current, range(SURVIVOR_SPINS))
    if abs(spin_sq) > SURVIVOR_SPIN_TOLERANCE:
        raise PreconditionError(f"Survivors carry total spin (S^2 = {spin_sq:.3e}); the input was not a singlet")
    logger.debug("Detangled to %s after %d measurements", names, count)
    return DetangleResult(current, transcript, names, count)


def survivor_probabilities(state4: StateVector) -> Dict[str, float]:
    """
    Returns P(S) and P(T) of the four-spin survivors in the {|S>, |T>} split on their first pair
    """
    if state4.n_qubits != SURVIVOR_SPINS:
        raise PreconditionError(f"Expected {SURVIVOR_SPINS} survivors, got {state4.n_qubits}")
    p_s = min(max(pair_weights(state4, 0, 1)[PairOutcome.SINGLET], 0.0), 1.0)
    return {"S": p_s, "T": 1.0 - p_s}


@dataclass
class DetangleHistograms:
    singlet: Histogram
    triplet: Histogram
    samples: np.ndarray
    spikes: Dict[float, bool] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        frame = self.singlet.to_frame().rename(columns={"count": "count_S"})
        frame["count_T"] = self.triplet.counts.astype(int)
        return frame


def detangle_samples(cfg: ExperimentConfig) -> np.ndarray:
    """
    P(S) of the survivors for every (sequence, run); runs of a sequence share its pairs
    """
    root = Rng(cfg.master_seed).derive("exp/detangle")
    samples = []
    for seq in range(cfg.n_sequences):
        seq_rng = root.spawn(seq)
        pairs = random_pairs(cfg.n_spins, cfg.n_meas, seq_rng.derive("pairs"))
        for run in range(cfg.n_runs):
            run_rng = seq_rng.spawn(run)
            state = singlet_dimerization(cfg.n_spins // 2)
            for i, j in pairs:
                state, _ = measure_pair(state, i, j, run_rng)
            result = detangle(state, run_rng)
            samples.append(survivor_probabilities(result.state)["S"])
    return np.array(samples)


def detangle_histogram(cfg: ExperimentConfig) -> DetangleHistograms:
    """
    Histograms of P(S) and P(T) over sequences and runs.

    The P(T) view uses right-closed bins so that it mirrors the P(S) view bin by bin.
    """
    samples = detangle_samples(cfg)
    singlet = Histogram.from_samples(samples, cfg.bins, closed="left")
    triplet = Histogram.from_samples(1.0 - samples, cfg.bins, closed="right")
    spikes = spike_check(singlet)
    if not all(spikes.values()):
        logger.warning("Detangle |S> view lacks spikes at %s", [p for p, ok in spikes.items() if not ok])
    return DetangleHistograms(singlet, triplet, samples, spikes)


# ---------------------------------------------------------------------------
# cos^2 reference
# ---------------------------------------------------------------------------

def arcsine_cdf(x):
    """
    CDF of cos^2(theta) for theta uniform on the circle
    """
    return 2.0 / np.pi * np.arcsin(np.sqrt(np.clip(x, 0.0, 1.0)))


def cos2_samples(n_samples: int, rng: Rng) -> np.ndarray:
    theta = rng.generator.uniform(0.0, 2.0 * np.pi, size=n_samples)
    return np.cos(theta) ** 2


def cos2_reference(n_samples: int, bins: int, rng: Rng) -> Histogram:
    samples = cos2_samples(n_samples, rng)
    hist = Histogram.from_samples(samples, bins)
    hist.ks_statistic = float(kstest(samples, arcsine_cdf).statistic)
    return hist


# ---------------------------------------------------------------------------
# STSample instances
# ---------------------------------------------------------------------------

@dataclass
class STSampleInstance:
    n: int
    pairs: List[Tuple[int, int]]
    bits: str

    def __post_init__(self):
        if len(self.pairs) != len(self.bits):
            raise PreconditionError(f"{len(self.pairs)} pairs but {len(self.bits)} bits")
        if set(self.bits) - set(OUTCOME_OF):
            raise PreconditionError(f"Bits must be '0' (s) or '1' (t), got {self.bits!r}")
        for i, j in self.pairs:
            if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                raise PreconditionError(f"Invalid pair ({i}, {j}) for {self.n} spins")

    def to_dict(self) -> dict:
        return {"n": self.n, "pairs": [[int(i), int(j)] for i, j in self.pairs], "bits": self.bits}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "STSampleInstance":
        return cls(int(data["n"]), [(int(i), int(j)) for i, j in data["pairs"]], str(data["bits"]))

    @classmethod
    def from_json(cls, text: str) -> "STSampleInstance":
        return cls.from_dict(json.loads(text))


def stsample_generate(n: int, rounds: int, seed: int) -> STSampleInstance:
    """
    Random rounds on a dimerization, detangling down to four spins, then one last measurement
    """
    if n < SURVIVOR_SPINS or n % 2:
        raise PreconditionError(f"STSample needs an even number of at least {SURVIVOR_SPINS} spins, got {n}")
    rng = Rng(seed).derive("exp/stsample")
    state = singlet_dimerization(n // 2)
    pairs, bits = [], []
    for _ in range(rounds):
        i, j = _random_pair(n, rng)
        state, outcome = measure_pair(state, i, j, rng)
        pairs.append((i, j))
        bits.append(BIT_OF[outcome])
    result = detangle(state, rng)
    for step in result.transcript.steps:
        pairs.append(step.pair)
        bits.append(BIT_OF[PairOutcome(step.outcome)])
    a, b = _random_pair(SURVIVOR_SPINS, rng)
    _, outcome = measure_pair(result.state, a, b, rng)
    pairs.append((result.survivors[a], result.survivors[b]))
    bits.append(BIT_OF[outcome])
    return STSampleInstance(n, pairs, "".join(bits))


def replay_prefix(instance: STSampleInstance, upto: Optional[int] = None) -> StateVector:
    """
    Post-selects the first `upto` recorded outcomes (all but the last by default) on a fresh dimerization.

    Pairs removed by detangling hold a product singlet that nothing touches again, so replaying on
    the full register gives the same conditional state.
    """
    upto = len(instance.bits) - 1 if upto is None else upto
    state = singlet_dimerization(instance.n // 2)
    for (i, j), bit in zip(instance.pairs[:upto], instance.bits[:upto]):
        state, _ = postselect_pair(state, i, j, OUTCOME_OF[bit])
    return state


def stsample_conditional(instance: STSampleInstance) -> Dict[str, float]:
    """
    Returns the exact distribution of the last bit given every earlier bit
    """
    if not instance.bits:
        raise PreconditionError("STSample instance has no measurements")
    state = replay_prefix(instance)
    i, j = instance.pairs[-1]
    weights = pair_weights(state, i, j)
    return {BIT_OF[outcome]: float(w) for outcome, w in weights.items()}


def stsample_probability(instance: STSampleInstance) -> float:
    """
    Returns the probability of the whole recorded bit string for its pairs
    """
    state = replay_prefix(instance, len(instance.bits))
    return float(state.transcript.weight_product())

