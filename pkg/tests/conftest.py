import numpy as np
import pytest

from src.physics_oracle import PhysicsOracle
from src.strategy_analysis import eta_tilde


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def oracle():
    return PhysicsOracle()


@pytest.fixture
def eta_100():
    return eta_tilde(100.0)


def within_sigma(mean: float, reference: float, stderr: float, sigmas: float = 4.0) -> bool:
    return abs(mean - reference) <= sigmas * stderr
