"""
Shared pytest fixtures for fasris tests.
"""
import json
import os
from pathlib import Path
from typing import Any, Dict

import pytest

from fasris.config import SystemConfig
from fasris.corr import PortGeometry
from fasris.moments import LinkBudget
from fasris.outage import RadioParams

# Reference operating point: 200 m links, path-loss exponent 2
REFERENCE_GAIN = 200.0**-2


@pytest.fixture(scope="session")
def vectors_dir() -> Path:
    """Path to test vectors directory."""
    return Path(__file__).parent / "vectors"


@pytest.fixture(scope="session")
def goldens_dir(vectors_dir: Path) -> Path:
    return vectors_dir / "goldens"


@pytest.fixture(scope="session")
def experiments_dir() -> Path:
    return Path(__file__).resolve().parents[1] / "experiments"


@pytest.fixture(scope="session")
def canonical_vectors(vectors_dir: Path) -> Dict[str, Any]:
    with open(vectors_dir / "canonical_vectors.json", "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture(scope="session")
def slow_tests() -> bool:
    """True when full-size acceptance runs are enabled (FASRIS_SLOW_TESTS=1)."""
    return os.environ.get("FASRIS_SLOW_TESTS") == "1"


@pytest.fixture
def reference_radio() -> RadioParams:
    return RadioParams(transmit_power=0.1, noise_power=1e-8, target_rate=3.0)


@pytest.fixture
def reference_budget() -> LinkBudget:
    return LinkBudget(num_elements=40, gain_bs_ris=REFERENCE_GAIN, gain_ris_user=REFERENCE_GAIN)


@pytest.fixture
def reference_system(reference_budget: LinkBudget, reference_radio: RadioParams) -> SystemConfig:
    """M=40, N=20, W=1, R=3, P_S=0.1 W, sigma2=1e-8 W."""
    return SystemConfig(PortGeometry(20, 1.0), reference_budget, reference_radio)
