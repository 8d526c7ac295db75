from typing import Optional, Union

# Experiment presets organized by experiment; "full" is the full-size run,
# "desk" finishes in seconds
EXPERIMENT_PRESETS = {
    "profile": {
        "full": {"n_spins": 18, "n_meas": 1000, "n_sequences": 1, "n_runs": 1, "bins": 100},
        "desk": {"n_spins": 12, "n_meas": 200, "n_sequences": 1, "n_runs": 1, "bins": 100},
    },
    "detangle": {
        "full": {"n_spins": 14, "n_meas": 1000, "n_sequences": 1000, "n_runs": 10, "bins": 100},
        "full_16": {"n_spins": 16, "n_meas": 1000, "n_sequences": 1000, "n_runs": 10, "bins": 100},
        "full_18": {"n_spins": 18, "n_meas": 1000, "n_sequences": 1000, "n_runs": 10, "bins": 100},
        "desk": {"n_spins": 8, "n_meas": 40, "n_sequences": 40, "n_runs": 4, "bins": 4},
    },
    "cos2": {
        "full": {"n_samples": 10000, "bins": 100},
        "desk": {"n_samples": 10000, "bins": 100},
    },
    "stsample": {
        "full": {"n_spins": 14, "rounds": 1000},
        "desk": {"n_spins": 8, "rounds": 40},
    },
}

# Acceptance thresholds checked by verify-all
ACCEPTANCE = {
    "profile_band": [0.7, 0.8],
    "profile_band_fraction": 0.5,
    "profile_seeds": 3,
    "sigma": 3.0,
    "max_abs_z": 4.0,
    "misround": 1e-3,
    "estimator_accuracy": 0.999,
    "split_tolerance": 1e-6,
    "trotter_ratio": [1.6, 2.4],
    "cos2_ks": 0.02,
    "sum_tolerance": 1e-12,
    "survivor_spin_sq": 1e-9,
}


def get_preset(experiment: str, name: str = "desk") -> Optional[dict]:
    """
    Returns a copy of the preset parameters for an experiment
    """
    preset = EXPERIMENT_PRESETS.get(experiment, {}).get(name)
    return dict(preset) if preset is not None else None


def get_preset_names(experiment: Optional[str] = None) -> Union[dict, list]:
    """
    Returns the preset names of one experiment or of all experiments
    """
    if experiment:
        return sorted(EXPERIMENT_PRESETS.get(experiment, {}))
    return {key: sorted(value) for key, value in EXPERIMENT_PRESETS.items()}


def get_acceptance(key: str) -> Optional[Union[float, list]]:
    return ACCEPTANCE.get(key)
