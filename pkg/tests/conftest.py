import numpy as np
import pytest

from nvdeer import FieldConfiguration


@pytest.fixture
def field():
    """Working-point field: 37.2 mT tilted 0.1 deg, 2 MHz drive."""
    return FieldConfiguration(37.2, 0.1, 2.0, 1042.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
