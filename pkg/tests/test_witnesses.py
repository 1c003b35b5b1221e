import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otlab.plt import ScalarGrid
from otlab.witnesses import (
    PolyApprox,
    approximating_poly,
    barrier_difference,
    barrier_eval,
    barrier_sign_threshold,
    discrete_laplacian,
    fit_approx_poly,
    node_radius,
    regularity_exponent,
    residual_table,
)

# 30-digit mpmath evaluations
B_02_HALF = 7.65587287996946968
P_STAR = {0.1: 7.07769254004469e-110, 0.2: 2.66039330551794e-55, 0.4: 5.15790006254284e-28}
ZERO_GRAD = [[0.0, 0.0], [0.0, 0.0]]


def grid(n, fun):
    x = np.linspace(0.0, 1.0, n)
    p, x2 = np.meshgrid(x, x, indexing="ij")
    return ScalarGrid(fun(p, x2))


# barrier


def test_barrier_at_origin():
    assert barrier_eval(0.2, 0.0, 0.0) == 0.2


def test_barrier_value():
    assert barrier_eval(0.2, 0.5, 0.0) == pytest.approx(B_02_HALF, rel=1e-14)


def test_barrier_principal_branch():
    # on the imaginary axis Re(z log z) = -x2 arg z = -|x2| pi / 2
    for x2 in (0.3, -0.3):
        expected = 0.2 * (2 / math.pi) * (-abs(x2) * math.pi / 2) + 0.2 + 2 * x2**2
        assert barrier_eval(0.2, 0.0, x2) == pytest.approx(expected, abs=1e-15)


def test_barrier_rejects_left_half_plane():
    with pytest.raises(ValueError):
        barrier_eval(0.2, -1e-3, 0.0)
    with pytest.raises(ValueError):
        barrier_eval(0.0, 0.1, 0.0)


def test_barrier_harmonic_at_point():
    lap = discrete_laplacian(lambda p, x2: barrier_eval(0.2, p, x2), 0.3, 0.4, 1e-3)
    assert abs(lap) <= 1e-6


def test_barrier_harmonic_random_points():
    rng = np.random.default_rng(11)
    # compact [0.25, 2] x [-2, 2]; the truncation error grows like eps h^2 / |z|^3 toward the origin
    p = rng.uniform(0.25, 2.0, 100)
    x2 = rng.uniform(-2.0, 2.0, 100)
    for eps in (0.1, 0.2, 0.4):
        lap = discrete_laplacian(lambda a, b: barrier_eval(eps, a, b), p, x2, 1e-3)
        assert np.abs(lap).max() <= 1e-5


@pytest.mark.parametrize("eps", [0.1, 0.2, 0.4])
def test_sign_threshold_matches_oracle(eps):
    ps = barrier_sign_threshold(eps)
    assert ps == pytest.approx(P_STAR[eps], rel=1e-3)
    # the closed-form balance puts the root near exp(-8 pi / eps)
    assert 0.1 < math.log(ps) / (-8 * math.pi / eps) < 1.1


def test_sign_threshold_monotone():
    assert barrier_sign_threshold(0.4) > barrier_sign_threshold(0.2) > barrier_sign_threshold(0.1)


@pytest.mark.parametrize("eps", [0.1, 0.2, 0.4])
def test_sign_below_and_above_threshold(eps):
    ps = barrier_sign_threshold(eps)
    assert barrier_difference(eps, ps / 10) < 0
    assert barrier_difference(eps, ps * 10) > 0


@pytest.mark.parametrize("eps", [0.1, 0.2, 0.4])
def test_single_sign_change_on_interval(eps):
    # scan in log p below 1 and linearly above, where the quadratic term takes over
    t = np.concatenate([np.exp(np.linspace(math.log(P_STAR[0.1]) - 50, 0, 4000)), np.linspace(1, 8, 4000)[1:]])
    sgn = np.sign(barrier_difference(eps, t))
    changes = np.flatnonzero(np.diff(sgn) != 0)
    assert len(changes) == 1
    assert t[changes[0]] <= barrier_sign_threshold(eps) <= t[changes[0] + 1]


@pytest.mark.parametrize("eps", [0.0, 1.0, 1.5])
def test_sign_threshold_range(eps):
    with pytest.raises(ValueError):
        barrier_sign_threshold(eps)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 0.95))
def test_sign_threshold_is_root(eps):
    ps = barrier_sign_threshold(eps)
    t = math.log(ps)
    assert abs((2 * eps / math.pi) * t + 16 - 2 * ps) <= 1e-9


# approximating polynomials


def test_poly_norm_and_eval():
    P = PolyApprox(1.0, -2.5, 0.5, 0.25, -3.0)
    assert P.norm == 3.0
    assert P(1.0, 1.0) == pytest.approx(-3.75)
    assert P.to_dict() == {"p0": 1.0, "p21": -2.5, "p22": 0.5, "p31": 0.25, "p32": -3.0}


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.tuples(st.floats(0.2, 3), st.floats(0.2, 3)))
def test_constraints_hold_by_construction(p21, g, a0):
    grad = [[g[0], g[1]], [g[2], g[3]]]
    P = approximating_poly(p21, grad, a0)
    assert max(abs(d) for d in P.linear_image(grad, a0)) <= 1e-12 * max(1.0, P.norm)
    assert P.is_approximating(grad, a0)


def test_not_approximating():
    assert not PolyApprox(0.0, 1.0, 1.0, 0.0, 0.0).is_approximating(ZERO_GRAD)


def test_fit_quadratic_exact():
    v = grid(41, lambda p, x2: (p**2 - x2**2) / 2)
    P, res = fit_approx_poly(v, ZERO_GRAD, 0.5, p21=0.5)
    assert res <= 1e-12
    assert (P.p0, P.p21, P.p22, P.p31, P.p32) == pytest.approx((0, 0.5, -0.5, 0, 0), abs=1e-12)
    # the default p21 reads the same value off the grid
    _, res_default = fit_approx_poly(v, ZERO_GRAD, 0.5)
    assert res_default <= 1e-12


def test_fit_harmonic_cubic():
    # zero gradients force p31 = p32 = 0; the best constant leaves half the range of v on [0, r]^2
    v = grid(81, lambda p, x2: p**3 - 3 * p * x2**2)
    P, res = fit_approx_poly(v, ZERO_GRAD, 0.2)
    assert P.p21 == pytest.approx(0.0, abs=1e-12)
    assert res == pytest.approx(1.5 * 0.2**3, abs=1e-12)
    assert P.is_approximating(ZERO_GRAD)


def test_fit_constraints_with_gradients(rng):
    v = grid(65, lambda p, x2: np.sin(p) * np.cos(2 * x2))
    grad = rng.normal(size=(2, 2))
    P, _ = fit_approx_poly(v, grad, 0.25, a_at_0=(1.0, 1.3))
    assert max(abs(d) for d in P.linear_image(grad, (1.0, 1.3))) <= 1e-12


def test_fit_underresolved():
    v = grid(33, lambda p, x2: p * 0)
    with pytest.raises(ValueError):
        fit_approx_poly(v, ZERO_GRAD, 0.2)
    with pytest.raises(ValueError):
        fit_approx_poly(v, ZERO_GRAD, 1.5)


def test_node_radius():
    v = grid(321, lambda p, x2: p * 0)
    assert [node_radius(v, r) for r in (0.2, 0.1, 0.05)] == pytest.approx([0.2, 0.1, 0.05], abs=1e-15)
    assert node_radius(grid(33, lambda p, x2: p * 0), 0.2) == pytest.approx(6 / 32)


# regularity exponent


def test_power_law_table():
    fit = regularity_exponent([(r, r**3.5) for r in (0.2, 0.1, 0.05)])
    assert fit.alpha == pytest.approx(0.5, abs=1e-10)
    assert not fit.polynomial


def test_polynomial_flag():
    v = grid(321, lambda p, x2: (p**2 - x2**2) / 2)
    fit = regularity_exponent(residual_table(v, ZERO_GRAD, (0.2, 0.1, 0.05)))
    assert fit.polynomial and fit.alpha == math.inf


@pytest.mark.parametrize("alpha0", [0.25, 0.5, 0.75])
def test_synthetic_recovery(alpha0):
    v = grid(321, lambda p, x2: (p**2 - x2**2) / 2 + np.hypot(p, x2) ** (3 + alpha0))
    fit = regularity_exponent(residual_table(v, ZERO_GRAD, (0.2, 0.1, 0.05)))
    assert fit.alpha == pytest.approx(alpha0, abs=0.1)


@pytest.mark.parametrize("table", [
    [(0.2, 1e-3), (0.1, 1e-4)],
    [(0.1, 1e-3), (0.2, 1e-4), (0.05, 1e-5)],
    [(0.2, 1e-3), (0.2, 1e-4), (0.05, 1e-5)],
    [(0.2, -1e-3), (0.1, 1e-4), (0.05, 1e-5)],
])
def test_regularity_bad_tables(table):
    with pytest.raises(ValueError):
        regularity_exponent(table)
