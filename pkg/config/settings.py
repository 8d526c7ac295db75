import os
from dotenv import load_dotenv

# Load environment variables from .env
load_dotenv()

# Defaults, overridable through the environment
DEFAULT_MAX_QUBITS = 24
DEFAULT_ZERO_TOLERANCE = 1e-12
DEFAULT_MAX_ATTEMPTS = 1000
DEFAULT_LOG_LEVEL = "WARNING"
DEFAULT_SEQUENCE_ORDER = "rightmost"
DEFAULT_DISTANCE_NORM = "fro"
DEFAULT_MAX_COUPLING = 100.0

# Fixed numerical floor below which a branch counts as corrupt
NUMERIC_FLOOR = 1e-14

SEQUENCE_ORDERS = ("rightmost", "leftmost")
DISTANCE_NORMS = ("fro", "op")


def get_max_qubits() -> int:
    """
    Returns the largest register the simulator will allocate
    """
    return int(os.getenv("STPLAB_MAX_QUBITS", DEFAULT_MAX_QUBITS))


def get_zero_tolerance() -> float:
    """
    Returns the weight at or below which a forced branch is treated as zero
    """
    return float(os.getenv("STPLAB_ZERO_TOL", DEFAULT_ZERO_TOLERANCE))


def get_max_attempts() -> int:
    """
    Returns the retry cap for heralded preparations
    """
    return int(os.getenv("STPLAB_MAX_ATTEMPTS", DEFAULT_MAX_ATTEMPTS))


def get_max_coupling() -> float:
    """
    Returns the largest |J_ij| a Heisenberg schedule may carry
    """
    return float(os.getenv("STPLAB_MAX_COUPLING", DEFAULT_MAX_COUPLING))


def get_log_level() -> str:
    return os.getenv("STPLAB_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()


def is_debug() -> bool:
    """
    Returns True when oracle precondition checks are enabled
    """
    return os.getenv("STPLAB_DEBUG", "").lower() in ("1", "true", "yes", "on")


def get_sequence_order() -> str:
    """
    Returns which end of a projector tuple is applied first
    """
    order = os.getenv("STPLAB_SEQUENCE_ORDER", DEFAULT_SEQUENCE_ORDER).lower()
    if order not in SEQUENCE_ORDERS:
        raise ValueError(f"STPLAB_SEQUENCE_ORDER must be one of {SEQUENCE_ORDERS}, got {order!r}")
    return order


def get_distance_norm() -> str:
    norm = os.getenv("STPLAB_DISTANCE_NORM", DEFAULT_DISTANCE_NORM).lower()
    if norm not in DISTANCE_NORMS:
        raise ValueError(f"STPLAB_DISTANCE_NORM must be one of {DISTANCE_NORMS}, got {norm!r}")
    return norm


def get_settings() -> dict:
    """
    Returns every resolved setting, used for run manifests
    """
    return {
        "max_qubits": get_max_qubits(),
        "zero_tolerance": get_zero_tolerance(),
        "max_attempts": get_max_attempts(),
        "max_coupling": get_max_coupling(),
        "log_level": get_log_level(),
        "debug": is_debug(),
        "sequence_order": get_sequence_order(),
        "distance_norm": get_distance_norm(),
        "numeric_floor": NUMERIC_FLOOR,
    }
