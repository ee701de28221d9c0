import math

import numpy as np
import pytest

from src.analysis.cwt_engine import (
    IsolatedPulseMass,
    cwt,
    cwt_pulse_analytic,
    isolated_pulse_mass,
    padded_unit_grid,
    pulse_leader_field,
    pulse_plane,
    reconstruct,
    subgrid_pulse_mass,
    truncated_tail_density,
)
from src.analysis.errors import CoverageError, ParameterError, ResolutionError
from src.analysis.pexponent import default_pulse_scale_range, estimate_p_exponent, exponent_field
from src.analysis.pleaders import leader_field
from src.analysis.tf_dataclasses import SampledSignal, ScaleGrid
from src.analysis.wavelet_kit import admissibility_constant, build_reconstruction_wavelet
from src.data.signal_battery import SignalName, cusp_transform, get_test_signal
from src.simulation.pulse_config import get_pulse_shape
from src.simulation.pulse_dataclasses import PulseProcessParams, PulseSet
from src.simulation.pulse_sim import sample_path, sample_process


def test_polynomials_below_the_vanishing_order_are_annihilated(psi):
    signal = get_test_signal(SignalName.POLYNOMIAL, -1.0, 1.0, 2.0**-10, coeffs=(1.0, 0.5))
    plane = cwt(signal, psi, ScaleGrid.dyadic(2.0**-3, 2.0**-5, 2))
    assert plane.valid.any()
    assert np.max(np.abs(plane.w[plane.valid])) < 1e-6 * plane.reference_amplitude


def test_cusp_transform_matches_closed_form(psi, cusp_plane):
    row = cusp_plane.scale_grid.index_of(2.0**-4)
    cols = np.flatnonzero(np.abs(cusp_plane.positions) <= 0.5)[::256]
    expected = np.array([cusp_transform(psi, 0.5, 2.0**-4, b) for b in cusp_plane.positions[cols]])
    np.testing.assert_allclose(cusp_plane.w[row, cols], expected, atol=1e-2 * np.max(np.abs(expected)))


def test_off_lattice_positions(psi):
    signal = get_test_signal(SignalName.CUSP, -1.0, 1.0, 2.0**-12, alpha=0.5)
    grid = ScaleGrid.dyadic(2.0**-3, 2.0**-5, 1)
    positions = np.array([-0.3, 0.1234, 0.2718])
    plane = cwt(signal, psi, grid, positions=positions)
    for i, a in enumerate(grid.scales):
        expected = np.array([cusp_transform(psi, 0.5, a, b) for b in positions])
        np.testing.assert_allclose(plane.w[i], expected, rtol=1e-2, atol=1e-3 * a**0.5)


def test_general_path_agrees_with_aligned_path(psi):
    signal = get_test_signal(SignalName.TWO_BUMPS, 0.0, 1.0, 2.0**-10)
    grid = ScaleGrid.dyadic(2.0**-3, 2.0**-6, 2)
    lattice = signal.x[300:700:25]
    aligned = cwt(signal, psi, grid, positions=lattice)
    shifted = cwt(signal, psi, grid, positions=lattice + 1e-9)
    np.testing.assert_allclose(shifted.w, aligned.w, atol=1e-6 * np.max(np.abs(aligned.w)))


def test_scale_below_resolution_raises(psi):
    signal = get_test_signal(SignalName.BUMP, 0.0, 1.0, 2.0**-12)
    with pytest.raises(ResolutionError, match="below") as excinfo:
        cwt(signal, psi, ScaleGrid.dyadic(2.0**-8, 2.0**-12, 1))
    assert excinfo.value.scale == 2.0**-12


def test_cone_of_influence_mask(cusp_plane):
    np.testing.assert_array_equal(cusp_plane.valid[0], np.abs(cusp_plane.positions) <= 0.75)
    assert cusp_plane.valid[-1].sum() > cusp_plane.valid[0].sum()


def test_cwt_is_linear(psi):
    grid = ScaleGrid.dyadic(2.0**-3, 2.0**-6, 4)
    f = get_test_signal(SignalName.BUMP, 0.0, 1.0, 2.0**-10)
    g = get_test_signal(SignalName.CHIRP, 0.0, 1.0, 2.0**-10)
    combined = SampledSignal(f.origin, f.step, 2.0 * f.values - g.values)
    lhs = cwt(combined, psi, grid)
    rhs = 2.0 * cwt(f, psi, grid) - cwt(g, psi, grid)
    np.testing.assert_allclose(lhs.w, rhs.w, atol=1e-12)


def test_threads_do_not_change_the_result(psi):
    signal = get_test_signal(SignalName.CHIRP, 0.0, 1.0, 2.0**-10)
    grid = ScaleGrid.dyadic(2.0**-2, 2.0**-7, 4)
    np.testing.assert_array_equal(cwt(signal, psi, grid, threads=4).w, cwt(signal, psi, grid).w)


def single_pulse():
    params = PulseProcessParams(0.5, 0.5, get_pulse_shape("even_bump"), j_max=4)
    return params, PulseSet([2.0], [3.0], [0.5])


@pytest.mark.parametrize("offset", [0.0, 0.05, -0.1])
def test_single_pulse_transform_is_exact(psi, offset):
    params, pulses = single_pulse()
    a = 1.0 / 9.0
    value = cwt_pulse_analytic(params, pulses, psi, a, 0.5 + offset)
    # u = 9 (x - 0.5) turns the integral into <pulse, psi(. - 9 offset)>
    expected = 2.0**-0.5 * params.pulse.inner(psi.shape.affine(9.0 * offset, 1.0))
    assert value == pytest.approx(expected, rel=1e-10, abs=1e-14)


def test_pulse_far_from_the_window_contributes_nothing(psi):
    params, pulses = single_pulse()
    assert cwt_pulse_analytic(params, pulses, psi, 0.05, 0.9) == 0.0
    with pytest.raises(ParameterError, match="positive"):
        cwt_pulse_analytic(params, pulses, psi, 0.0, 0.5)


def test_pulse_transform_matches_sampled_path(psi):
    params = PulseProcessParams(0.5, 0.9, get_pulse_shape("odd_bump"), j_max=8, seed=3)
    pulses = sample_process(params)
    path = sample_path(params, pulses, num_points=2**14 + 1)
    grid = ScaleGrid.dyadic(2.0**-2, 2.0**-5, 2)
    positions = path.x[::64]
    sampled = cwt(path, psi, grid, positions=positions)
    exact = pulse_plane(params, pulses, psi, grid, positions, oversample=64)
    mask = sampled.valid
    scale = np.max(np.abs(exact.w[mask]))
    np.testing.assert_allclose(sampled.w[mask], exact.w[mask], atol=1e-3 * scale)


def test_pulse_plane_is_exact_on_its_sub_lattice(psi):
    params = PulseProcessParams(0.5, 0.9, get_pulse_shape("odd_bump"), j_max=8, seed=5)
    pulses = sample_process(params)
    positions, _ = padded_unit_grid(10, 0.25)
    grid = ScaleGrid.dyadic(2.0**-2, 2.0**-3, 1)
    plane = pulse_plane(params, pulses, psi, grid, positions, threads=2)
    stride = int(0.25 / (16 * 2.0**-10))
    for j in range(0, len(positions), 7 * stride):
        expected = cwt_pulse_analytic(params, pulses, psi, 0.25, positions[j])
        assert plane.w[0, j] == pytest.approx(expected, rel=1e-10, abs=1e-13)
    assert plane.valid.all()


def test_padded_unit_grid():
    positions, targets = padded_unit_grid(4, 0.2)
    assert len(targets) == 16
    assert targets[0] == 0.0 and targets[-1] == 15 / 16
    assert positions[0] == -0.25 and positions[-1] == 1.1875
    np.testing.assert_array_equal(positions[4:20], targets)
    with pytest.raises(ParameterError, match="J must be >= 1"):
        padded_unit_grid(0, 0.1)


def test_reconstruction_recovers_a_smooth_signal(psi):
    signal = get_test_signal(SignalName.MODULATED_BUMP, -0.5, 1.5, 2.0**-10)
    plane = cwt(signal, psi, ScaleGrid.dyadic(2.0**-1, 2.0**-8, 8))
    phi = build_reconstruction_wavelet(psi)
    c = admissibility_constant(psi, phi)
    inside = (signal.x >= 0.25) & (signal.x <= 0.75)
    rebuilt = reconstruct(plane, phi, c, signal.x[inside])
    error = np.linalg.norm(rebuilt.values - signal.values[inside]) / np.linalg.norm(signal.values[inside])
    assert error < 0.05


def test_reconstruction_needs_six_octaves(psi, cusp_plane):
    phi = build_reconstruction_wavelet(psi)
    c = admissibility_constant(psi, phi)
    signal = get_test_signal(SignalName.BUMP, 0.0, 1.0, 2.0**-10)
    short = cwt(signal, psi, ScaleGrid.dyadic(2.0**-2, 2.0**-6, 4))
    with pytest.raises(CoverageError, match="octaves"):
        reconstruct(short, phi, c, signal.x)
    with pytest.raises(ParameterError, match="at least 2 points"):
        reconstruct(cusp_plane, phi, c, [0.0])


@pytest.mark.parametrize("shift", [1, 37, -150])
def test_transform_commutes_with_translation(psi, shift):
    signal = get_test_signal(SignalName.TWO_BUMPS, 0.0, 1.0, 2.0**-10)
    moved = SampledSignal(signal.origin + shift * signal.step, signal.step, signal.values)
    grid = ScaleGrid.dyadic(2.0**-3, 2.0**-6, 2)
    positions = signal.x[200:800:20]
    plane = cwt(signal, psi, grid, positions=positions)
    moved_plane = cwt(moved, psi, grid, positions=positions + shift * signal.step)
    np.testing.assert_allclose(moved_plane.w, plane.w, atol=1e-12 * np.max(np.abs(plane.w)))
    np.testing.assert_array_equal(moved_plane.valid, plane.valid)


@pytest.fixture(scope="module")
def negative_params():
    return PulseProcessParams(-0.7, 0.5, get_pulse_shape("odd_bump"), j_max=32)


def test_isolated_pulse_mass_profile(psi, negative_params):
    profile = isolated_pulse_mass(negative_params, psi, 1.2)
    assert profile.p == 1.2
    assert np.all(np.diff(profile.masses) >= 0.0)
    assert profile.total > 0.0
    assert float(profile(1e-6)) == 0.0
    assert float(profile(1e6)) == profile.total
    assert float(profile(profile.ratios[40])) == pytest.approx(profile.masses[40])
    with pytest.raises(ParameterError, match="finite p"):
        isolated_pulse_mass(negative_params, psi, math.inf)


def test_truncated_tail_density(negative_params):
    # gamma = 1 + 0.84 - 2 = -0.16, M = 2^16
    assert truncated_tail_density(negative_params, 1.2) == pytest.approx(2.0 ** (16 * -0.16) / 0.16)
    with pytest.raises(ParameterError, match="diverges"):
        truncated_tail_density(negative_params, 2.0)


def test_subgrid_mass_counts_pulses_inside_each_window():
    params = PulseProcessParams(-0.7, 0.5, get_pulse_shape("odd_bump"), j_max=20)
    pulses = PulseSet([1.0, 2.0], [100.0, 400.0], [0.3, 0.7])
    profile = IsolatedPulseMass(1.2, np.array([1.0, 2.0]), np.array([1.0, 3.0]))
    mass = subgrid_pulse_mass(params, pulses, profile, [0.05], [0.3, 0.5, 0.98])
    tail = 3.0 * truncated_tail_density(params, 1.2)
    expected = [3.0 * 100.0**-2 + 0.1 * tail, 0.1 * tail, 0.07 * tail]
    np.testing.assert_allclose(mass[0], expected, rtol=1e-12)
    second = subgrid_pulse_mass(params, pulses, profile, [0.5], [0.5])
    weights = 3.0 * np.array([1.0, 2.0**0.84 * 400.0**-2 / 100.0**-2]) * 100.0**-2
    assert second[0, 0] == pytest.approx(weights.sum() + 1.0 * tail, rel=1e-12)


def test_subgrid_mass_matches_a_resolved_plane(psi):
    # p = 2 makes the leader mass additive over well separated pulses
    params = PulseProcessParams(0.5, 0.9, get_pulse_shape("odd_bump"), j_max=8, seed=4)
    pulses = sample_process(params)
    narrow = pulses.subset(np.flatnonzero(pulses.B ** (-1.0 / params.eta) < 2.0**-5))
    anchors = np.array([2.0**-2, 2.0**-3, 2.0**-4])
    positions, targets = padded_unit_grid(14, 2.0**-2)
    targets = targets[::16]
    plane = pulse_plane(params, narrow, psi, ScaleGrid.dyadic(2.0**-2, 2.0**-14, 4), positions)
    resolved = leader_field(plane, 2.0, anchors=anchors, positions=targets)
    assert resolved.valid.all()
    profile = isolated_pulse_mass(params, psi, 2.0)
    closure = subgrid_pulse_mass(params, narrow, profile, anchors, targets)
    closure -= profile.total * truncated_tail_density(params, 2.0) * 2.0 * anchors[:, None]
    direct = resolved.values**2 * anchors[:, None]
    np.testing.assert_allclose(closure.sum(axis=1), direct.sum(axis=1), rtol=0.1)


def test_pulse_leader_field_finds_the_deepest_exponent(psi):
    # nested pulses of half-width 2^-k and amplitude 2^(0.35 k) accumulate at 0.5
    params = PulseProcessParams(-0.7, 0.5, get_pulse_shape("odd_bump"), j_max=200)
    k = np.arange(1, 41)
    pulses = PulseSet(2.0 ** (k / 2.0), 2.0 ** (k / 2.0), 0.5 + 2.0 ** -(k + 1.0))
    grid = ScaleGrid.dyadic(2.0**-2, 2.0**-8, 4)
    plane, leaders = pulse_leader_field(params, pulses, psi, 1.2, 10, grid, 2.0**-6, stride=512)
    assert plane.scales[-1] == 2.0**-8
    np.testing.assert_array_equal(leaders.positions, [0.0, 0.5])
    estimate = estimate_p_exponent(leaders, 0.5, scale_range=(2.0**-6, 2.0**-2))
    assert estimate.slope == pytest.approx(-0.7 * 0.5, abs=0.1)
    with pytest.raises(ParameterError, match="finite p"):
        pulse_leader_field(params, pulses, psi, math.inf, 10, grid, 2.0**-6)
    with pytest.raises(ResolutionError, match="below the smallest scale"):
        pulse_leader_field(params, pulses, psi, 1.2, 10, grid, 2.0**-9)


def test_holder_exponents_of_a_pulse_sum_lie_in_the_support(psi):
    alpha, eta = 0.5, 0.9
    params = PulseProcessParams(alpha, eta, get_pulse_shape("odd_bump"), j_max=12, seed=1)
    pulses = sample_process(params)
    a_min, a_max = default_pulse_scale_range(params.j_max)
    positions, targets = padded_unit_grid(10, a_max)
    plane = pulse_plane(params, pulses, psi, ScaleGrid.dyadic(a_max, a_min, 4), positions)
    field = exponent_field(leader_field(plane, math.inf, positions=targets))
    slopes = field.finite_slopes()
    inside = (slopes >= alpha * eta - 0.1) & (slopes <= alpha + 0.1)
    assert alpha * eta - 0.1 <= np.median(slopes) <= alpha + 0.1
    assert inside.mean() >= 0.5


def test_nested_pulses_reach_the_lowest_holder_exponent(psi):
    # half-width 2^-k and amplitude 2^(-k/4) accumulate at 0.5, h = alpha eta there
    params = PulseProcessParams(0.5, 0.5, get_pulse_shape("odd_bump"), j_max=40)
    k = np.arange(1, 21)
    pulses = PulseSet(2.0 ** (k / 2.0), 2.0 ** (k / 2.0), 0.5 + 2.0 ** -(k + 1.0))
    positions, _ = padded_unit_grid(10, 2.0**-2)
    plane = pulse_plane(params, pulses, psi, ScaleGrid.dyadic(2.0**-2, 2.0**-8, 4), positions)
    leaders = leader_field(plane, math.inf, positions=[0.5])
    estimate = estimate_p_exponent(leaders, 0.5, scale_range=(2.0**-6, 2.0**-2))
    assert estimate.slope == pytest.approx(0.25, abs=0.1)
