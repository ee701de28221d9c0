import logging
from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum

import numpy as np
from scipy.special import roots_jacobi

from src.analysis.errors import ParameterError
from src.analysis.tf_dataclasses import SampledSignal
from src.analysis.wavelet_kit import AnalyzingWavelet
from src.simulation.pulse_config import PULSE_SHAPE_MAP
from src.simulation.pulse_dataclasses import PulseProcessParams, PulseShape
from src.simulation.pulse_sim import evaluate, sample_process

logger = logging.getLogger(__name__)

PROFILE_NODES = 32


class SignalName(StrEnum):
    CUSP = auto()
    BUMP = auto()
    CHIRP = auto()
    MODULATED_BUMP = auto()
    TWO_BUMPS = auto()
    PULSE_SUM = auto()
    POLYNOMIAL = auto()
    ZERO = auto()


def _window(x: np.ndarray, center: float, radius: float) -> np.ndarray:
    u = (x - center) / radius
    return np.where(np.abs(u) < 1.0, (1.0 - u**2) ** 4, 0.0)


def cusp(x: np.ndarray, alpha: float = 0.5, center: float = 0.0, radius: float | None = None) -> np.ndarray:
    """|x - center|^alpha, optionally tapered to zero outside |x - center| < radius."""
    values = np.abs(x - center) ** alpha
    return values if radius is None else values * _window(x, center, radius)


def bump(x: np.ndarray, center: float = 0.5, radius: float = 0.25) -> np.ndarray:
    return _window(x, center, radius)


def chirp(x: np.ndarray, center: float = 0.5, radius: float = 0.25, h: float = 0.5, beta: float = 0.5) -> np.ndarray:
    """|x - c|^h sin(|x - c|^-beta), tapered."""
    r = np.abs(x - center)
    with np.errstate(divide="ignore"):
        values = np.where(r > 0, r**h * np.sin(np.where(r > 0, r, 1.0) ** (-beta)), 0.0)
    return values * _window(x, center, radius)


def modulated_bump(x: np.ndarray, center: float = 0.5, sigma: float = 0.04, omega: float = 120.0) -> np.ndarray:
    """Gaussian envelope times a cosine carrier, a smooth band-limited test signal."""
    u = x - center
    return np.exp(-(u**2) / (2.0 * sigma**2)) * np.cos(omega * u)


def two_bumps(x: np.ndarray) -> np.ndarray:
    return bump(x, 0.3, 0.15) - 0.5 * bump(x, 0.7, 0.2)


def polynomial(x: np.ndarray, coeffs=(1.0, -2.0, 0.5)) -> np.ndarray:
    return np.polynomial.polynomial.polyval(x, coeffs)


def pulse_sum(x: np.ndarray, alpha: float = 0.5, eta: float = 0.9, j_max: int = 12, seed: int = 7) -> np.ndarray:
    """Pulse process path on [0, 1], extended by zero."""
    params = PulseProcessParams(alpha, eta, PULSE_SHAPE_MAP[PulseShape.ODD_BUMP], j_max=j_max, seed=seed)
    pulses = sample_process(params)
    inside = (x >= 0.0) & (x <= 1.0)
    values = np.zeros_like(x, dtype=float)
    values[inside] = evaluate(params, pulses, x[inside])
    return values


TEST_SIGNAL_BUILDERS = {
    SignalName.CUSP: cusp,
    SignalName.BUMP: bump,
    SignalName.CHIRP: chirp,
    SignalName.MODULATED_BUMP: modulated_bump,
    SignalName.TWO_BUMPS: two_bumps,
    SignalName.PULSE_SUM: pulse_sum,
    SignalName.POLYNOMIAL: polynomial,
    SignalName.ZERO: lambda x: np.zeros_like(x, dtype=float),
}


def get_test_signal(
    name: SignalName | str,
    start: float = -1.0,
    stop: float = 1.0,
    step: float = 2.0**-12,
    **kwargs,
) -> SampledSignal:
    """
    Sample a named test signal on a uniform grid.

    Args:
        name: SignalName member or its name
        start: First sample
        stop: Last sample
        step: Sampling step
        **kwargs: Shape parameters passed to the builder

    Returns:
        SampledSignal
    """
    if isinstance(name, str):
        try:
            name = SignalName(name.lower())
        except ValueError:
            logger.warning(f"Invalid test signal: {name}")
            raise ParameterError(
                f"unknown test signal '{name}', expected one of {[s.value for s in SignalName]}"
            ) from None

    builder = TEST_SIGNAL_BUILDERS[name]
    return SampledSignal.from_function(lambda x: builder(x, **kwargs), start, stop, step)


def lp_battery(start: float = -1.0, stop: float = 2.0, step: float = 2.0**-10) -> dict[str, SampledSignal]:
    """Six signals supported inside [0, 1] on a common grid."""
    return {
        "bump": get_test_signal(SignalName.BUMP, start, stop, step),
        "cusp": get_test_signal(SignalName.CUSP, start, stop, step, alpha=0.5, center=0.5, radius=0.3),
        "chirp": get_test_signal(SignalName.CHIRP, start, stop, step),
        "modulated_bump": get_test_signal(SignalName.MODULATED_BUMP, start, stop, step, omega=60.0),
        "two_bumps": get_test_signal(SignalName.TWO_BUMPS, start, stop, step),
        "pulse_sum": get_test_signal(SignalName.PULSE_SUM, start, stop, step),
    }


def _singular_piece(psi: AnalyzingWavelet, alpha: float, apex: float, length: float, direction: float, nodes, weights) -> float:
    # int_0^length v^alpha psi(apex + direction * v) dv by Gauss-Jacobi
    v = 0.5 * length * (1.0 + nodes)
    return float((0.5 * length) ** (alpha + 1.0) * np.dot(weights, psi(apex + direction * v)))


def cusp_profile(psi: AnalyzingWavelet, alpha: float, tau: float) -> float:
    """
    w(tau) = int |u + tau|^alpha psi(u) du, the profile of the cusp transform.

    W(a, b) of |x - c|^alpha equals a^alpha w((b - c) / a). The |.|^alpha
    singularity is absorbed by Gauss-Jacobi nodes on the pieces next to
    u = -tau; other pieces use Gauss-Legendre.
    """
    if not alpha > -1:
        raise ParameterError(f"alpha must be > -1, got {alpha}")
    lo, hi = psi.shape.support
    apex = -tau
    cuts = sorted({lo, hi, *psi.shape.breakpoints} | ({apex} if lo < apex < hi else set()))
    jac_nodes, jac_weights = roots_jacobi(PROFILE_NODES, 0.0, alpha)
    leg_nodes, leg_weights = np.polynomial.legendre.leggauss(PROFILE_NODES * 2)

    total = 0.0
    for u0, u1 in zip(cuts, cuts[1:]):
        if u0 == apex:
            total += _singular_piece(psi, alpha, apex, u1 - u0, 1.0, jac_nodes, jac_weights)
        elif u1 == apex:
            total += _singular_piece(psi, alpha, apex, u1 - u0, -1.0, jac_nodes, jac_weights)
        else:
            u = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * leg_nodes
            total += float(0.5 * (u1 - u0) * np.dot(leg_weights, np.abs(u + tau) ** alpha * psi(u)))
    return total


def cusp_transform(psi: AnalyzingWavelet, alpha: float, a: float, b: float, center: float = 0.0) -> float:
    """Closed-form W(a, b) of |x - center|^alpha."""
    return a**alpha * cusp_profile(psi, alpha, (b - center) / a)


if __name__ == "__main__":
    from src.analysis.wavelet_kit import build_even_wavelet

    psi = build_even_wavelet(2, 3)
    for alpha in (0.3, 0.5, 0.7):
        print(f"w(0) for alpha={alpha}: {cusp_profile(psi, alpha, 0.0):.6f}")
    print(f"signals: {[s.value for s in SignalName]}")
