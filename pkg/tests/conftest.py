import numpy as np
import pytest

from advprec.matkernel import sym_from_eig


def random_pd(rng, d, lo=0.5, hi=3.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return sym_from_eig(rng.uniform(lo, hi, d), Q)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
