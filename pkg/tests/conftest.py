import pytest

from components.rng import Rng


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch):
    # Keep a developer's .env from changing tolerances under test
    for name in ("STPLAB_MAX_QUBITS", "STPLAB_ZERO_TOL", "STPLAB_MAX_ATTEMPTS", "STPLAB_SEQUENCE_ORDER",
                 "STPLAB_DISTANCE_NORM", "STPLAB_MAX_COUPLING", "STPLAB_LOG_LEVEL", "STPLAB_DEBUG"):
        monkeypatch.delenv(name, raising=False)
