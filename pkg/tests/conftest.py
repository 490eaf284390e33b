import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from troikit.tensor import set_precision


@pytest.fixture(autouse=True)
def _reset_precision():
    set_precision("f32")
    yield
    set_precision("f32")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
