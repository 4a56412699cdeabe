import numpy as np
import pytest

from hypgraph.barriers import sphere_problem
from hypgraph.geometry import CurvatureParams
from hypgraph.series import TangentialPoly

SIGMA = 0.6
ALPHA = 0.8


@pytest.fixture(params=[0, 1], ids=["l0", "l1"])
def params2(request):
    return CurvatureParams(2, request.param, SIGMA)


@pytest.fixture
def sphere2():
    return sphere_problem(2, SIGMA, ALPHA)


def quartic_phi(n, base=None, degree=None):
    """A generic quartic boundary datum in ``n - 1`` variables."""
    nv = n - 1
    base = (0.1,) * nv if base is None else base
    degree = n + 3 if degree is None else degree
    X = TangentialPoly.variables(base, degree)
    out = 0.2 + 0.3 * X[0] + 0.5 * X[0] ** 2 - 0.4 * X[0] ** 3 + (1.0 / 7.0) * X[0] ** 4
    if nv > 1:
        out = out + 0.1 * X[0] * X[1] - 0.25 * X[1] ** 2 + 0.05 * X[1] ** 4
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
