import numpy as np
import pytest
from scipy.interpolate import griddata

from otlab import density as dens
from otlab.plt import (
    CONVEXITY_FLOOR,
    ConvexityError,
    ScalarGrid,
    corner_d11,
    corner_obstruction_report,
    edge_report,
    invert_plt,
    min_convexity,
    mixed_fourth,
    solve_plt,
)
from otlab.sdot import ConvergenceError, eval_map

ONE = dens.Constant(1.0)


def quadratic(n):
    x = np.linspace(0.0, 1.0, n)
    p, x2 = np.meshgrid(x, x, indexing="ij")
    return (p**2 - x2**2) / 2


@pytest.fixture(scope="module")
def affine_129():
    return solve_plt(dens.AffineProduct(1.0), dens.Constant(1.25), 129)


@pytest.mark.parametrize("n", [9, 65, 257])
def test_quadratic_exact(n):
    us = solve_plt(ONE, ONE, n)
    assert us.residual <= 1e-12
    assert np.abs(us.values - quadratic(n)).max() <= 1e-12
    assert us.values[0, 0] == 0.0


def test_affine_converges_convex(affine_129):
    us = affine_129
    assert us.residual <= 1e-8
    assert us.values[0, 0] == 0.0
    assert min_convexity(us.values) >= us.h**2 * CONVEXITY_FLOOR
    assert us.history[-1] == us.residual and len(us.history) == us.iterations + 1


def test_affine_edges_preserved(affine_129):
    rep = edge_report(affine_129)
    h = affine_129.h
    for edge in ("left", "right", "bottom", "top"):
        assert rep[edge]["image"] <= 2 * h
        assert rep[edge]["source"] <= 2 * h
    assert rep["corner"] <= 2 * h


def test_affine_initial_guess_irrelevant(affine_129):
    n = 129
    x = np.linspace(0.0, 1.0, n)
    p, x2 = np.meshgrid(x, x, indexing="ij")
    start = quadratic(n) + 0.01 * p**2 * np.cos(np.pi * x2)
    us = solve_plt(dens.AffineProduct(1.0), dens.Constant(1.25), n, initial=start)
    assert np.abs(us.values - affine_129.values).max() <= 1e-7


def test_small_data_close_to_identity():
    us = solve_plt(dens.AffineProduct(0.1), dens.Constant(1.025), 129)
    S = invert_plt(us)
    assert np.abs(S.images - S.sources).max() <= 0.05


def test_identity_inversion():
    S = invert_plt(ScalarGrid(quadratic(33)))
    np.testing.assert_allclose(S.images, S.sources, atol=1e-12)
    np.testing.assert_allclose(S.sources.min(0), [0, 0], atol=1e-12)
    np.testing.assert_allclose(S.sources.max(0), [1, 1], atol=1e-12)


def test_swap_symmetry(affine_129):
    # f(x1, x2) = f(x2, x1) and g is constant, so T commutes with the swap
    S = invert_plt(affine_129)
    rng = np.random.default_rng(0)
    pick = rng.choice(len(S), 2000, replace=False)
    sw = S.sources[pick][:, ::-1]
    inner = np.all((sw > 0.02) & (sw < 0.98), axis=1)
    T_sw = griddata(S.sources, S.images, sw[inner], method="linear")
    err = np.linalg.norm(T_sw - S.images[pick][inner][:, ::-1], axis=1)
    assert err.max() <= 2 * affine_129.h


def test_cross_solver(affine_square_4096):
    us = solve_plt(dens.AffineProduct(1.0), dens.Constant(1.25), 65)
    S = invert_plt(us)
    inside = np.all((S.sources >= 0) & (S.sources <= 1), axis=1)
    err = np.linalg.norm(eval_map(affine_square_4096, S.sources[inside]) - S.images[inside], axis=1)
    assert err.max() <= 5 * max(us.h, affine_square_4096.mean_spacing)


def test_mass_imbalance_rejected():
    with pytest.raises(ValueError):
        solve_plt(dens.AffineProduct(1.0), ONE, 17)


def test_nonpositive_density_rejected():
    with pytest.raises(ValueError):
        solve_plt(dens.AffineProduct(-1.0), dens.Constant(0.75), 17)


def test_nonconvergence_history():
    with pytest.raises(ConvergenceError) as info:
        solve_plt(dens.AffineProduct(1.0), dens.Constant(1.25), 33, tol=1e-14, max_iterations=3)
    assert len(info.value.history) == 4
    assert info.value.residual == info.value.history[-1]


def test_loss_of_convexity():
    # relaxing halfway from the reflected quadratic lands on zero curvature in p
    with pytest.raises(ConvexityError):
        solve_plt(ONE, ONE, 17, initial=-quadratic(17))


def test_invert_rejects_nonconvex():
    with pytest.raises(ConvergenceError):
        invert_plt(ScalarGrid(-quadratic(17)))


@pytest.mark.parametrize("bad", [np.zeros((8, 8)), np.zeros((9, 10)), np.full((9, 9), np.nan)])
def test_scalar_grid_validation(bad):
    with pytest.raises(ValueError):
        ScalarGrid(bad)


def test_grid_size_and_initial_shape():
    with pytest.raises(ValueError):
        solve_plt(ONE, ONE, 5)
    with pytest.raises(ValueError):
        solve_plt(ONE, ONE, 17, initial=np.zeros((9, 9)))


def test_meta(affine_129):
    m = affine_129.meta()
    assert m["n"] == 129 and m["h"] == 1 / 128 and m["gauge"] == 0.0
    assert dens.from_dict(m["f"]) == dens.AffineProduct(1.0)


# corner stencils


def test_corner_d11_exact_on_cubics():
    n = 33
    h = 1 / (n - 1)
    x = np.linspace(0, 1, n)
    p, x2 = np.meshgrid(x, x, indexing="ij")
    v = 0.7 * p**2 + 0.3 * p**3 + x2
    # the stencil uses d1 u(0) = 0, so only the p^2 and p^3 terms enter
    assert corner_d11(v, h) == pytest.approx(1.4, abs=1e-9)


def test_mixed_fourth_on_polynomial():
    n = 41
    h = 1 / (n - 1)
    x = np.linspace(0, 1, n)
    p, x2 = np.meshgrid(x, x, indexing="ij")
    v = p**3 * x2 + 2 * p * x2**3 + p**2 * x2**2
    # d1112 = 6, d2221 = 12
    for k in (2, 3, 4):
        assert mixed_fourth(v, h, k, 0.5) == pytest.approx(6 + 0.5 * 12, abs=1e-6)
    with pytest.raises(ValueError):
        mixed_fourth(v, h, 1, 1.0)


def test_corner_report_a0():
    rep = corner_obstruction_report(0.0, grids=(33, 65), tol=1e-12)
    for n in (33, 65):
        assert max(abs(x) for x in rep.interior[n]) <= 1e-8
        assert max(rep.mismatch[n]) <= 1e-8
    assert rep.d11 == pytest.approx([1.0, 1.0], abs=1e-9)
    assert rep.boundary_trace == 0.0


def test_corner_report_coarse_a1():
    rep = corner_obstruction_report(1.0, grids=(33, 65), tol=1e-10)
    assert min(rep.d11) >= 0.2
    assert abs(rep.d11[0] - rep.d11[1]) <= 0.1 * rep.d11[1]
    assert rep.predicted[-1] == pytest.approx(-rep.d11[-1] ** 2)
    d = rep.to_dict()
    assert d["grids"] == [33, 65] and set(d["interior"]) == {"33", "65"}


def test_corner_report_rejects_negative():
    with pytest.raises(ValueError):
        corner_obstruction_report(-0.5)
