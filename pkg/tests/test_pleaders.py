import math

import numpy as np
import pytest

from src.analysis.cwt_engine import cwt
from src.analysis.pexponent import estimate_p_exponent
from src.analysis.errors import CoverageError, ParameterError
from src.analysis.pleaders import (
    continuous_leader,
    continuous_p_leader,
    discrete_leader_proxy,
    discrete_p_leader_proxy,
    leader_field,
    lp_norm_proxy,
)
from src.analysis.tf_dataclasses import ScaleGrid
from src.data.signal_battery import SignalName, get_test_signal
from tests.conftest import CUSP_ANCHORS, make_cusp_plane

ANCHORS = [2.0**-3, 0.1, 2.0**-5]


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0, math.inf])
def test_leader_field_agrees_with_pointwise_leaders(cusp_plane, p):
    positions = [0.0, 0.25, -0.125]
    leaders = leader_field(cusp_plane, p, anchors=ANCHORS, positions=positions)
    assert leaders.valid.all()
    for i, a in enumerate(ANCHORS):
        for j, b in enumerate(positions):
            assert leaders.values[i, j] == pytest.approx(continuous_p_leader(cusp_plane, p, a, b), rel=1e-11)


def test_sup_leader_grows_with_the_anchor(cusp_plane):
    leaders = leader_field(cusp_plane, math.inf, positions=[0.0])
    assert leaders.s_min == cusp_plane.scales[-1]
    column = leaders.values[:, 0]
    assert np.all(np.diff(column) <= 0.0)
    assert column[0] == continuous_leader(cusp_plane, cusp_plane.scales[0], 0.0)


@pytest.mark.parametrize("p", [1.5, 2.0])
def test_p_leader_is_bounded_by_the_sup_leader(cusp_plane, p):
    sup = leader_field(cusp_plane, math.inf, positions=[0.0]).values[:, 0]
    pl = leader_field(cusp_plane, p, positions=[0.0]).values[:, 0]
    log_step = cusp_plane.scale_grid.log_step
    s_min = cusp_plane.scales[-1]
    bound = 2.0 ** (1.0 / p) * np.sqrt(np.log(cusp_plane.scales / s_min) + log_step) * sup
    assert np.all(pl <= bound * (1.0 + 1e-12))


def test_threads_do_not_change_leaders(cusp_plane):
    single = leader_field(cusp_plane, 2.0, positions=cusp_plane.positions[1024:3072:64])
    threaded = leader_field(cusp_plane, 2.0, positions=cusp_plane.positions[1024:3072:64], threads=3)
    np.testing.assert_array_equal(single.values, threaded.values)


@pytest.mark.parametrize(
    "a,b,match",
    [
        (2.0**-9, 0.0, "below the finest"),
        (0.5, 0.0, "above the coarsest"),
        (0.25, 0.9, "leaves the plane"),
        (0.25, 0.7, "cone of influence"),
    ],
)
def test_uncovered_regions_raise(cusp_plane, a, b, match):
    with pytest.raises(CoverageError, match=match):
        continuous_leader(cusp_plane, a, b)


def test_leader_field_marks_uncovered_windows(cusp_plane):
    leaders = leader_field(cusp_plane, 2.0, anchors=[0.25], positions=[0.0, 0.75])
    np.testing.assert_array_equal(leaders.valid, [[True, False]])
    assert leaders.values[0, 1] == 0.0
    with pytest.raises(CoverageError, match="position grid"):
        leader_field(cusp_plane, 2.0, positions=[0.1 + 2.0**-14])


def test_p_must_exceed_one(cusp_plane):
    with pytest.raises(ParameterError, match="p must be > 1"):
        continuous_p_leader(cusp_plane, 1.0, 0.1, 0.0)
    with pytest.raises(ParameterError, match="p must be > 1"):
        leader_field(cusp_plane, 0.5)
    with pytest.raises(ParameterError, match="finite"):
        lp_norm_proxy(cusp_plane, math.inf)


def test_norm_proxy_is_homogeneous(cusp_plane):
    assert lp_norm_proxy(cusp_plane * 2.0, 2.0) == pytest.approx(2.0 * lp_norm_proxy(cusp_plane, 2.0), rel=1e-12)
    assert lp_norm_proxy(cusp_plane, 3.0) > 0.0


def test_norm_proxy_needs_six_octaves(psi):
    signal = get_test_signal(SignalName.BUMP, 0.0, 1.0, 2.0**-10)
    plane = cwt(signal, psi, ScaleGrid.dyadic(2.0**-2, 2.0**-5, 4))
    with pytest.raises(CoverageError, match="octaves"):
        lp_norm_proxy(plane, 2.0)


def test_discrete_proxies_scale_like_the_cusp(cusp_plane):
    js = np.arange(2, 6)
    sup = [discrete_leader_proxy(cusp_plane, int(j), 0) for j in js]
    pl = [discrete_p_leader_proxy(cusp_plane, 2.0, int(j), 0) for j in js]
    assert np.polyfit(js, np.log2(sup), 1)[0] == pytest.approx(-0.5, abs=0.05)
    assert np.polyfit(js, np.log2(pl), 1)[0] == pytest.approx(-0.5, abs=0.07)


@pytest.mark.parametrize("j", [8, 9])
def test_discrete_proxy_needs_two_dyadic_levels(cusp_plane, j):
    with pytest.raises(CoverageError, match="dyadic proxy"):
        discrete_leader_proxy(cusp_plane, j, 0)


def test_large_p_leader_tracks_the_sup_leader(cusp_plane):
    scales = cusp_plane.scales
    anchors = scales[(scales >= CUSP_ANCHORS[0] * (1 - 1e-9)) & (scales <= CUSP_ANCHORS[1] * (1 + 1e-9))]
    big = leader_field(cusp_plane, 64.0, anchors=anchors, positions=[0.0])
    sup = leader_field(cusp_plane, math.inf, anchors=anchors, positions=[0.0])
    log_ratio = np.log(big.values[:, 0]) - np.log(sup.values[:, 0])
    assert np.ptp(log_ratio) < 0.2
    slope_big = estimate_p_exponent(big, 0.0).slope
    slope_sup = estimate_p_exponent(sup, 0.0).slope
    assert slope_big == pytest.approx(slope_sup, abs=0.05)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
def test_discrete_proxy_slope_matches_the_continuous_slope(psi, alpha):
    plane = make_cusp_plane(psi, alpha)
    js = np.arange(2, 6)
    discrete = [discrete_p_leader_proxy(plane, 2.0, int(j), 0) for j in js]
    continuous = [continuous_p_leader(plane, 2.0, 2.0 ** -int(j), 0.0) for j in js]
    discrete_slope = -np.polyfit(js, np.log2(discrete), 1)[0]
    continuous_slope = -np.polyfit(js, np.log2(continuous), 1)[0]
    assert continuous_slope == pytest.approx(alpha, abs=0.05)
    assert discrete_slope == pytest.approx(continuous_slope, abs=0.1)


def test_extra_mass_enters_before_normalization(cusp_plane):
    anchors = [2.0**-3, 2.0**-5]
    positions = [0.0, 0.25]
    base = leader_field(cusp_plane, 2.0, anchors=anchors, positions=positions)
    extra = np.array([[0.0, 1e-3], [2e-4, 0.0]])
    shifted = leader_field(cusp_plane, 2.0, anchors=anchors, positions=positions, extra_mass=extra)
    expected = np.sqrt(base.values**2 + extra / np.array(anchors)[:, None])
    np.testing.assert_allclose(shifted.values, expected, rtol=1e-12)


def test_extra_mass_validation(cusp_plane):
    with pytest.raises(ParameterError, match="finite p"):
        leader_field(cusp_plane, math.inf, anchors=[0.125], positions=[0.0], extra_mass=np.zeros((1, 1)))
    with pytest.raises(ParameterError, match="shape"):
        leader_field(cusp_plane, 2.0, anchors=[0.125], positions=[0.0], extra_mass=np.zeros((2, 1)))
