import pytest

from src.analysis.cwt_engine import cwt
from src.analysis.tf_dataclasses import ScaleGrid
from src.analysis.wavelet_kit import build_even_wavelet
from src.data.signal_battery import SignalName, get_test_signal

CUSP_STEP = 2.0**-12
CUSP_GRID = (2.0**-2, 2.0**-8, 8)
CUSP_ANCHORS = (2.0**-5, 2.0**-2)


def make_cusp_plane(psi, alpha: float):
    signal = get_test_signal(SignalName.CUSP, -1.0, 1.0, CUSP_STEP, alpha=alpha)
    return cwt(signal, psi, ScaleGrid.dyadic(*CUSP_GRID))


@pytest.fixture(scope="module")
def psi():
    return build_even_wavelet(2, 3)


@pytest.fixture(scope="module")
def cusp_plane(psi):
    """Transform of |x|^0.5 on [-1, 1] over scales 2^-2 .. 2^-8."""
    return make_cusp_plane(psi, 0.5)
