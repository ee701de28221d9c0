import numpy as np
import pytest
from scipy.integrate import quad

from src.analysis.errors import ParameterError
from src.data.signal_battery import (
    SignalName,
    TEST_SIGNAL_BUILDERS,
    cusp_profile,
    cusp_transform,
    get_test_signal,
    lp_battery,
)


def test_every_signal_has_a_builder():
    assert set(TEST_SIGNAL_BUILDERS) == set(SignalName)


def test_lookup_by_name(caplog):
    signal = get_test_signal("CUSP", -1.0, 1.0, 0.25, alpha=0.5)
    np.testing.assert_allclose(signal.values, np.abs(signal.x) ** 0.5)
    with pytest.raises(ParameterError, match="unknown test signal 'sawtooth'"):
        get_test_signal("sawtooth")
    assert "Invalid test signal: sawtooth" in caplog.text


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
@pytest.mark.parametrize("tau", [0.0, 0.3, -0.8, 1.5])
def test_cusp_profile_matches_adaptive_quadrature(psi, alpha, tau):
    apex = [-tau] if abs(tau) < 1.0 else None
    expected, _ = quad(
        lambda u: abs(u + tau) ** alpha * float(psi(u)), -1.0, 1.0, points=apex, epsabs=1e-13, limit=200
    )
    assert cusp_profile(psi, alpha, tau) == pytest.approx(expected, rel=1e-7, abs=1e-12)


def test_cusp_transform_is_the_rescaled_integral(psi):
    a, b, center = 0.1, 0.03, 0.05
    expected, _ = quad(
        lambda x: abs(x - center) ** 0.5 * float(psi((x - b) / a)) / a,
        b - a,
        b + a,
        points=[center],
        epsabs=1e-13,
        limit=200,
    )
    assert cusp_transform(psi, 0.5, a, b, center) == pytest.approx(expected, rel=1e-7)


def test_constant_profile_vanishes(psi):
    assert cusp_profile(psi, 0.0, 0.4) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ParameterError, match="alpha must be > -1"):
        cusp_profile(psi, -1.0, 0.0)


def test_battery_is_supported_in_the_unit_interval():
    battery = lp_battery(step=2.0**-8)
    assert set(battery) == {"bump", "cusp", "chirp", "modulated_bump", "two_bumps", "pulse_sum"}
    for name, signal in battery.items():
        outside = (signal.x < 0.0) | (signal.x > 1.0)
        assert np.max(np.abs(signal.values[outside])) < 1e-12, name
        assert np.max(np.abs(signal.values)) > 0.0, name


def test_pulse_sum_signal_is_reproducible():
    first = get_test_signal(SignalName.PULSE_SUM, 0.0, 1.0, 2.0**-8, j_max=8)
    second = get_test_signal(SignalName.PULSE_SUM, 0.0, 1.0, 2.0**-8, j_max=8)
    np.testing.assert_array_equal(first.values, second.values)
