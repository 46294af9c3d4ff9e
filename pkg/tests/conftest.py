import numpy as np
import pytest

from sdeident import presets


@pytest.fixture
def additive_id():
    return presets.additive_identifiable()


@pytest.fixture
def additive_un():
    return presets.additive_unidentifiable()


@pytest.fixture
def mult_id():
    return presets.multiplicative_identifiable()


@pytest.fixture
def mult_un_a1():
    return presets.multiplicative_unid_a1()


@pytest.fixture
def mult_un_a2():
    return presets.multiplicative_unid_a2()


def random_orthogonal(rng, n):
    """Haar-ish orthogonal matrix from a QR factorization."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
