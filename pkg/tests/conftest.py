import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

np.seterr(all="ignore")


@pytest.fixture
def rng():
    from quadgauss.numerics import Rng

    return Rng(0)
