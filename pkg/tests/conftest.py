import numpy as np
import pytest

from hybridsim import build_cstr_2d, build_linear_1d
from hybridsim.systems import Q1, Q2

IDENTITY = ((1.0, 0.0), (0.0, 1.0))


@pytest.fixture(scope="session")
def linear():
    return build_linear_1d(Q1, 1.0)


@pytest.fixture(scope="session")
def linear_identity():
    return build_linear_1d(IDENTITY, 1.0)


@pytest.fixture(scope="session")
def linear_q2():
    return build_linear_1d(Q2, 1.0)


@pytest.fixture(scope="session")
def cstr():
    return build_cstr_2d()


def stationary_oracle(q):
    """pi (Q - I) = 0 with sum(pi) = 1, solved by least squares."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    a = np.vstack([(q - np.eye(n)).T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(a, b, rcond=None)[0]
