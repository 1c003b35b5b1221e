import numpy as np
import pytest

from otlab import density as dens
from otlab import geometry as geo
from otlab.sdot import integrate, sample_target, solve_dual

ONE = dens.Constant(1.0)
SQUARE = geo.build_domain(geo.Square(1.0))
RECT = geo.build_domain(geo.Rectangle((0.0, 4.0), (-2.0, 2.0)))


def solve(X, f, Y, g, N, tol=1e-6):
    nu = sample_target(Y, g, N).rescaled(integrate(X, f))
    return solve_dual(X, f, nu, tol=tol)


@pytest.fixture(scope="session")
def identity_2500():
    return solve(SQUARE, ONE, SQUARE, ONE, 2500)


@pytest.fixture(scope="session")
def identity_10000():
    return solve(SQUARE, ONE, SQUARE, ONE, 10000)


@pytest.fixture(scope="session")
def affine_square_4096():
    return solve(SQUARE, dens.AffineProduct(1.0), SQUARE, dens.Constant(1.25), 4096)


@pytest.fixture(scope="session")
def notch_5000():
    Y = geo.build_domain(geo.NotchedRectangle(0.2))
    return solve(RECT, ONE, Y, ONE, 5000)


@pytest.fixture(scope="session")
def dumbbell_runs():
    X = geo.build_domain(geo.Disc(1.0, 256))
    out = {}
    for eps in (0.2, 0.1, 0.05):
        out[eps] = solve(X, ONE, geo.build_domain(geo.Dumbbell(eps, 256)), ONE, 2000)
    return out


@pytest.fixture(scope="session")
def smoothed_notch_5000():
    Y = geo.build_domain(geo.SmoothedNotch(0.01, 0.5))
    return solve(RECT, ONE, Y, ONE, 5000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
