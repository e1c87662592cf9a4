import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, m, psd=False):
    a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    if psd:
        return a @ a.conj().T
    return 0.5 * (a + a.conj().T)
