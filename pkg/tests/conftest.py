import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glimmer.network import ArchConfig

# Tiny architecture used by the gradient checks: 12x6 input, conv filters
# 4/3/2 with kernel 3, LSTM 3, 12 outputs.
TINY_ARCH = ArchConfig(
    conv_layers=((4, 3), (3, 3), (2, 3)),
    lstm_units=3,
    input_len=12,
    input_features=6,
    output_len=12,
)


@pytest.fixture
def tiny_arch() -> ArchConfig:
    return TINY_ARCH


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
