import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otlab import density as dens
from otlab import geometry as geo
from otlab import probes
from otlab.probes import (
    ProbeError,
    TransportSamples,
    boundary_preservation,
    displacement_jump,
    estimate_split_point,
    holder_fit,
    sample_transport,
    subdiff_measure,
)
from otlab.sdot import DiscreteMeasure, solve_dual

from .conftest import ONE, SQUARE, solve

def straddles_neck(x, xp):
    return np.sign(x[:, 0]) != np.sign(xp[:, 0])


# displacement_jump


def test_identity_jump_small(identity_2500):
    D = identity_2500
    delta = probes.default_delta(D)
    for seg in [((0.1, 0.5), (0.9, 0.5)), ((0.3, 0.1), (0.7, 0.9)), ((0.5, 0.05), (0.5, 0.95))]:
        prof = displacement_jump(D, seg, delta)
        assert not prof.skipped.any()
        assert prof.max_jump <= 2 * D.mean_spacing + 2 * delta


def test_dumbbell_neck_jump(dumbbell_runs):
    prof = displacement_jump(dumbbell_runs[0.05], ((0.0, -0.9), (0.0, 0.9)), delta=0.01)
    assert prof.max_jump >= 1.5
    # the limit jump is 2 and images stay in the target
    assert prof.max_jump <= 2 * (1 + geo.dumbbell_radius(0.05)) + 1e-12


def test_notch_jump_along_axis(notch_5000):
    # default offset; at delta = 0.02, below the site spacing, the jump is about 0.12
    prof = displacement_jump(notch_5000, ((0.02, 0.0), (0.5, 0.0)))
    assert prof.max_jump >= 0.3


def test_jump_profile_shape(identity_2500):
    prof = displacement_jump(identity_2500, ((0.2, 0.2), (0.8, 0.2)), 0.01, n_samples=37)
    assert len(prof.s) == len(prof.jumps) == 37
    assert prof.s[0] == 0.0 and prof.s[-1] == pytest.approx(0.6)
    assert prof.delta == 0.01
    assert np.all(prof.jumps >= 0)
    assert prof.rows()[0][:2] == (0.0, prof.jumps[0])


def test_jump_skips_outside_pairs(identity_2500):
    prof = displacement_jump(identity_2500, ((0.5, -0.5), (0.5, 0.5)), 0.01, n_samples=101)
    assert prof.skipped[:50].all() and not prof.skipped[-40:].any()
    assert np.all(prof.jumps[prof.skipped] == 0)


def test_jump_all_skipped(identity_2500):
    with pytest.raises(ProbeError):
        displacement_jump(identity_2500, ((2.0, 2.0), (3.0, 2.0)), 0.01)


@pytest.mark.parametrize("kwargs", [{"n_samples": 1}, {"delta": 0.0}, {"delta": -0.1}])
def test_jump_bad_parameters(identity_2500, kwargs):
    with pytest.raises(ValueError):
        displacement_jump(identity_2500, ((0.2, 0.5), (0.8, 0.5)), **kwargs)


def test_jump_zero_length_segment(identity_2500):
    with pytest.raises(ValueError):
        displacement_jump(identity_2500, ((0.2, 0.5), (0.2, 0.5)))


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6)), st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6)),
       st.floats(1e-3, 0.04))
def test_jump_bounded_by_target_diameter(dumbbell_runs, a, b, delta):
    if np.hypot(a[0] - b[0], a[1] - b[1]) < 1e-6:
        return
    D = dumbbell_runs[0.1]
    prof = displacement_jump(D, (a, b), delta, n_samples=50)
    assert np.all(prof.jumps >= 0)
    assert prof.max_jump <= probes.cloud_diameter(D.sites) + 1e-12


def test_identity_jump_decreases_under_refinement(identity_2500, identity_10000):
    seg = ((0.1, 0.37), (0.9, 0.37))
    j1 = displacement_jump(identity_2500, seg).max_jump
    j4 = displacement_jump(identity_10000, seg).max_jump
    assert j4 < j1


# subdiff_measure


def test_identity_subdiff_decreases_under_refinement(identity_2500, identity_10000):
    seg = ((0.5, 0.1), (0.5, 0.9))
    m1 = subdiff_measure(identity_2500, seg)
    m4 = subdiff_measure(identity_10000, seg)
    assert m4 < m1
    # on a grid cloud each power vertex carries area spacing^2, and a tube of half-width
    # 2 spacing holds at most 5 columns of (L + 5 spacing) / spacing vertices
    for m, D in ((m1, identity_2500), (m4, identity_10000)):
        s = D.mean_spacing
        assert m <= 5 * s * (0.8 + 5 * s)


def test_dumbbell_subdiff(dumbbell_runs):
    seg = ((0.0, -1.0), (0.0, 1.0))
    vals = [subdiff_measure(dumbbell_runs[eps], seg) for eps in (0.2, 0.1, 0.05)]
    assert 3.0 <= vals[-1] <= 4.2
    assert vals[0] < vals[1] < vals[2]


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 0.3), st.floats(1e-3, 0.3), st.floats(-0.5, 0.5))
def test_subdiff_monotone_in_width(dumbbell_runs, w1, w2, x):
    D = dumbbell_runs[0.1]
    seg = ((x, -1.0), (x, 1.0))
    lo, hi = sorted((w1, w2))
    assert subdiff_measure(D, seg, lo) <= subdiff_measure(D, seg, hi)


def test_subdiff_single_site_is_zero():
    D = solve_dual(SQUARE, ONE, DiscreteMeasure(np.array([[0.5, 0.5]]), np.array([1.0])))
    assert subdiff_measure(D, ((0.0, 0.5), (1.0, 0.5)), 0.1) == 0.0


def test_subdiff_empty_tube(identity_2500):
    assert subdiff_measure(identity_2500, ((3.0, 3.0), (4.0, 3.0)), 0.01) == 0.0


def test_subdiff_bad_width(identity_2500):
    with pytest.raises(ValueError):
        subdiff_measure(identity_2500, ((0.2, 0.2), (0.8, 0.8)), 0.0)


def test_subdiff_whole_domain_is_target_hull(rng):
    # a tube covering X captures every interior power vertex: the image is the hull of the sites
    nu = DiscreteMeasure(rng.random((60, 2)), np.full(60, 1 / 60))
    D = solve_dual(SQUARE, ONE, nu)
    from scipy.spatial import ConvexHull

    total = subdiff_measure(D, ((0.5, 0.5), (0.5, 0.5 + 1e-9)), 10.0)
    assert total <= ConvexHull(nu.sites).volume + 1e-12
    assert total > 0.5 * ConvexHull(nu.sites).volume


# estimate_split_point


def test_identity_no_split(identity_2500):
    est = estimate_split_point(identity_2500, line=((0.0, 0.5), (1.0, 0.5)))
    assert not est.split and est.t_hat == 0.0
    assert est.threshold == pytest.approx(10 * identity_2500.mean_spacing)


def test_notch_sides_symmetric(notch_5000):
    D = notch_5000
    up = estimate_split_point(D, delta=0.02, side="upper")
    lo = estimate_split_point(D, delta=0.02, side="lower")
    assert abs(up.t_hat - lo.t_hat) <= 2 * D.mean_spacing
    assert abs(up.profile.max_jump - lo.profile.max_jump) <= 2 * D.mean_spacing


def test_split_detected_on_planted_jump():
    # two columns of sites; the map sends the left half of X to one and the right half to the other
    g = (np.arange(10) + 0.5) / 10
    sites = np.vstack([np.column_stack([np.full(10, -3.0), g]), np.column_stack([np.full(10, 4.0), g])])
    D = solve_dual(SQUARE, ONE, DiscreteMeasure(sites, np.full(20, 0.05)))
    est = estimate_split_point(D, delta=0.02, threshold=1.0, line=((0.5, 0.0), (0.5, 1.0)))
    assert est.split
    assert est.t_hat == pytest.approx(1.0, abs=0.01)


def test_split_bad_side(notch_5000):
    with pytest.raises(ValueError):
        estimate_split_point(notch_5000, side="left")


# holder_fit


def test_identity_holder(identity_2500):
    fit = holder_fit(sample_transport(identity_2500, 2000, seed=0))
    assert 0.9 <= fit.exponent <= 1.1
    assert fit.window[0] == pytest.approx(4 * identity_2500.mean_spacing)
    assert fit.n_pairs > 1000


def test_smoothed_notch_holder(smoothed_notch_5000):
    fit = holder_fit(sample_transport(smoothed_notch_5000, 4000, seed=0))
    assert fit.exponent >= 0.5


@pytest.mark.xfail(reason="fitted exponent is about 0.25-0.3 at desk scale; see the decisions ledger", strict=False)
def test_dumbbell_straddling_holder_bound(dumbbell_runs):
    fit = holder_fit(sample_transport(dumbbell_runs[0.05], 4000, seed=0), pair_mask=straddles_neck)
    assert fit.exponent <= 0.2


def test_dumbbell_straddling_holder_relative(dumbbell_runs, identity_2500):
    straddle = holder_fit(sample_transport(dumbbell_runs[0.05], 4000, seed=0), pair_mask=straddles_neck)
    ident = holder_fit(sample_transport(identity_2500, 2000, seed=0))
    assert straddle.exponent < 0.5 * ident.exponent


def test_holder_fit_deterministic(identity_2500):
    S = sample_transport(identity_2500, 500, seed=4)
    a, b = holder_fit(S, seed=9), holder_fit(S, seed=9)
    assert a.exponent == b.exponent and a.seed == 9


def test_holder_recovers_planted_dilation(rng):
    x = rng.uniform(-1, 1, (3000, 2))
    fit = holder_fit(TransportSamples(x, 3.0 * x, 1e-3, 0))
    assert fit.exponent == pytest.approx(1.0, abs=1e-12)
    assert fit.constant == pytest.approx(3.0, rel=1e-12)


def test_holder_degenerate_images():
    x = np.random.default_rng(0).random((200, 2))
    S = TransportSamples(x, np.tile([0.5, 0.5], (200, 1)), 0.01, 0)
    with pytest.raises(ProbeError):
        holder_fit(S)


def test_holder_too_few_samples():
    x = np.random.default_rng(0).random((50, 2))
    with pytest.raises(ValueError):
        holder_fit(TransportSamples(x, x, 0.01, 0))


def test_transport_samples_roundtrip(identity_2500):
    S = sample_transport(identity_2500, 120, seed=2)
    back = TransportSamples.from_dict(S.to_dict())
    assert np.array_equal(back.sources, S.sources) and np.array_equal(back.images, S.images)
    assert back.seed == 2
    assert np.all(identity_2500.source.contains(S.sources))
    site_set = {tuple(p) for p in identity_2500.sites}
    assert all(tuple(p) in site_set for p in S.images)


# boundary_preservation


def test_identity_boundary(identity_2500):
    rep = boundary_preservation(identity_2500)
    s = identity_2500.mean_spacing
    assert set(rep.edge_distance) == {"bottom", "top", "left", "right"}
    assert rep.max_edge_distance <= 2 * s
    assert rep.corner_displacement <= 2 * s


def test_affine_boundary(affine_square_4096):
    rep = boundary_preservation(affine_square_4096)
    s = affine_square_4096.mean_spacing
    assert rep.max_edge_distance <= 2 * s
    assert rep.corner_displacement <= 2 * s


@pytest.mark.parametrize("eps", [0.1, 0.5])
def test_affine_family_boundary(eps):
    D = solve(SQUARE, dens.AffineProduct(eps), SQUARE, dens.Constant(1 + eps / 4), 2500)
    rep = boundary_preservation(D)
    assert rep.max_edge_distance <= 2 * D.mean_spacing
    assert rep.corner_displacement <= 2 * D.mean_spacing
    assert rep.to_dict()["spacing"] == D.mean_spacing
