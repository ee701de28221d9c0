import logging
import math
from dataclasses import dataclass
from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum

import numpy as np

from src.analysis.errors import ParameterError, SpectrumHypothesisError
from src.analysis.tf_dataclasses import ExponentField, SpectrumEstimate

logger = logging.getLogger(__name__)

EMPTY_DIMENSION = -math.inf
SUPPORT_TOLERANCE = 1e-12
MIN_BIN_COUNT = 32


class SpectrumKind(StrEnum):
    HOLDER = auto()
    P = auto()


def _check_eta(eta: float) -> None:
    if not 0.0 < eta < 1.0:
        raise SpectrumHypothesisError(f"eta must lie in (0, 1), got {eta}")


def holder_spectrum_support(alpha: float, eta: float) -> tuple[float, float]:
    if not alpha > 0:
        raise SpectrumHypothesisError(f"the Hölder spectrum needs alpha > 0, got {alpha}")
    _check_eta(eta)
    return alpha * eta, alpha


def admissible_p_range(alpha: float, eta: float) -> tuple[float, float]:
    """
    Open interval (1, -1/(alpha eta) + 1/alpha) of admissible p.

    Nonempty exactly when eta - 1 < alpha * eta.
    """
    if not alpha < 0:
        raise SpectrumHypothesisError(f"the p-spectrum needs alpha < 0, got {alpha}")
    _check_eta(eta)
    if not eta - 1.0 < alpha * eta:
        raise SpectrumHypothesisError(
            f"hypothesis eta - 1 < alpha * eta fails: {eta - 1.0:.4g} >= {alpha * eta:.4g}"
        )
    return 1.0, -1.0 / (alpha * eta) + 1.0 / alpha


def validate_p(alpha: float, eta: float, p: float, allow_one: bool = False) -> tuple[float, float]:
    """Raise SpectrumHypothesisError unless p is admissible; returns the range."""
    lo, hi = admissible_p_range(alpha, eta)
    inside = (lo <= p if allow_one else lo < p) and p < hi
    if not inside:
        raise SpectrumHypothesisError(f"p outside ({lo:g}, {hi:.4f})")
    return lo, hi


def p_spectrum_support(alpha: float, eta: float, p: float) -> tuple[float, float]:
    validate_p(alpha, eta, p, allow_one=True)
    return alpha * eta, alpha + (1.0 - eta) / (eta * p)


def _on_support(h, lo: float, hi: float) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    return (h >= lo - SUPPORT_TOLERANCE) & (h <= hi + SUPPORT_TOLERANCE)


def theoretical_holder_spectrum(alpha: float, eta: float, h):
    """D(h) = h / alpha on [alpha eta, alpha], EMPTY_DIMENSION elsewhere."""
    lo, hi = holder_spectrum_support(alpha, eta)
    h_arr = np.asarray(h, dtype=float)
    out = np.where(_on_support(h_arr, lo, hi), h_arr / alpha, EMPTY_DIMENSION)
    return float(out) if out.ndim == 0 else out


def theoretical_p_spectrum(alpha: float, eta: float, p: float, H):
    """
    D(H) = (H eta p + eta) / (alpha eta p + 1) on [alpha eta, alpha + (1 - eta)/(eta p)].

    Accepts p in [1, -1/(alpha eta) + 1/alpha); EMPTY_DIMENSION off the support.
    """
    lo, hi = p_spectrum_support(alpha, eta, p)
    h_arr = np.asarray(H, dtype=float)
    value = (h_arr * eta * p + eta) / (alpha * eta * p + 1.0)
    out = np.where(_on_support(h_arr, lo, hi), value, EMPTY_DIMENSION)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TheoreticalSpectrum:
    kind: SpectrumKind
    alpha: float
    eta: float
    p: float = math.inf

    def __post_init__(self):
        # validates the parameter domain
        _ = self.support

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == SpectrumKind.HOLDER:
            return holder_spectrum_support(self.alpha, self.eta)
        return p_spectrum_support(self.alpha, self.eta, self.p)

    def __call__(self, h):
        if self.kind == SpectrumKind.HOLDER:
            return theoretical_holder_spectrum(self.alpha, self.eta, h)
        return theoretical_p_spectrum(self.alpha, self.eta, self.p, h)

    def curve(self, num_points: int = 201) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.support
        h = np.linspace(lo, hi, num_points)
        return h, np.asarray(self(h), dtype=float)


def theoretical_spectrum(alpha: float, eta: float, p: float = math.inf) -> TheoreticalSpectrum:
    """The Hölder spectrum for p = inf, the p-spectrum otherwise."""
    if math.isinf(p):
        return TheoreticalSpectrum(SpectrumKind.HOLDER, alpha, eta)
    return TheoreticalSpectrum(SpectrumKind.P, alpha, eta, p)


def coarse_grained_spectrum(field: ExponentField, bin_width: float, J: int, origin: float = 0.0) -> SpectrumEstimate:
    """
    Box-counting spectrum proxy over a 2^J-point exponent field.

    Exponents are binned with width bin_width on the lattice origin + k bin_width;
    dims = log2(count) / J on nonempty bins. Sentinel estimates are left out.
    This is an upper-bound flavored proxy of the Hausdorff spectrum, not the
    dimension itself.

    Args:
        field: ExponentField on 2^J points of [0, 1]
        bin_width: Histogram bin width
        J: Grid scale, log2 of the number of points
        origin: One bin edge, e.g. an endpoint of the theoretical support

    Returns:
        SpectrumEstimate
    """
    if not bin_width > 0:
        raise ParameterError(f"bin_width must be positive, got {bin_width}")
    if J < 1:
        raise ParameterError(f"J must be >= 1, got {J}")
    if len(field.positions) == 0:
        raise ParameterError("exponent field is empty")
    if len(field.positions) != 2**J:
        raise ParameterError(f"field has {len(field.positions)} positions, expected 2^{J} = {2**J}")
    if field.positions[0] < 0.0 or field.positions[-1] > 1.0:
        raise ParameterError("field positions must lie in [0, 1]")

    h = field.finite_slopes()
    if len(h) == 0:
        raise ParameterError("exponent field holds no finite estimates")
    first = math.floor((h.min() - origin) / bin_width)
    start = origin + first * bin_width
    num_bins = int(math.floor((h.max() - start) / bin_width)) + 1
    edges = origin + bin_width * np.arange(first, first + num_bins + 1)
    index = np.clip(np.floor((h - start) / bin_width).astype(np.int64), 0, num_bins - 1)
    counts = np.bincount(index, minlength=num_bins)
    with np.errstate(divide="ignore"):
        dims = np.where(counts > 0, np.log2(np.maximum(counts, 1)) / J, EMPTY_DIMENSION)
    logger.debug(f"coarse-grained spectrum: {num_bins} bins over [{edges[0]:.3f}, {edges[-1]:.3f}]")
    return SpectrumEstimate(edges, counts, dims, J, int(len(h)))


def spectrum_peak(estimate: SpectrumEstimate) -> tuple[float, float]:
    """Center and dimension of the most populated bin."""
    i = int(np.argmax(estimate.counts))
    return float(estimate.centers[i]), float(estimate.dims[i])


def estimated_support(estimate: SpectrumEstimate, min_count: int = 1) -> tuple[float, float]:
    """Centers of the outermost bins holding at least min_count points."""
    populated = np.flatnonzero(estimate.counts >= min_count)
    if len(populated) == 0:
        raise ParameterError(f"no bin holds {min_count} points")
    centers = estimate.centers
    return float(centers[populated[0]]), float(centers[populated[-1]])


def theory_on_bins(estimate: SpectrumEstimate, theory: TheoreticalSpectrum) -> np.ndarray:
    """Theoretical dimension at each bin center, clamped into the support for bins meeting it."""
    lo, hi = theory.support
    left, right = estimate.bin_edges[:-1], estimate.bin_edges[1:]
    meets = (right >= lo - SUPPORT_TOLERANCE) & (left <= hi + SUPPORT_TOLERANCE)
    h = np.clip(estimate.centers, lo, hi)
    return np.where(meets, np.asarray(theory(h), dtype=float), EMPTY_DIMENSION)


def max_theory_deviation(
    estimate: SpectrumEstimate, theory: TheoreticalSpectrum, min_count: int = MIN_BIN_COUNT
) -> float:
    """Largest |dim - theory| over bins with at least min_count points."""
    expected = theory_on_bins(estimate, theory)
    mask = estimate.counts >= min_count
    if not mask.any():
        return math.inf
    diff = np.abs(estimate.dims[mask] - expected[mask])
    return float(np.max(np.where(np.isfinite(diff), diff, math.inf)))
