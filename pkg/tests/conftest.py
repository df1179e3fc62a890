import pytest

from reductionlab.constants import CONSTANTS, PhysicalConstants
from reductionlab.massdist import QuadratureConfig


@pytest.fixture
def consts() -> PhysicalConstants:
    return CONSTANTS


@pytest.fixture
def cfg() -> QuadratureConfig:
    return QuadratureConfig(rel_tolerance=1e-3)
