import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum
from typing import Any

import numpy as np
from scipy.integrate import trapezoid
from scipy.stats import linregress

from src.analysis.cwt_engine import cwt, padded_unit_grid, pulse_leader_field, pulse_plane, reconstruct
from src.analysis.errors import ParameterError
from src.analysis.pexponent import (
    default_pulse_p_scale_range,
    default_pulse_scale_range,
    estimate_p_exponent,
    exponent_field,
)
from src.analysis.pleaders import leader_field, lp_norm_proxy
from src.analysis.spectrum import (
    MIN_BIN_COUNT,
    coarse_grained_spectrum,
    estimated_support,
    max_theory_deviation,
    spectrum_peak,
    theoretical_p_spectrum,
    theoretical_spectrum,
)
from src.analysis.tf_dataclasses import ScaleGrid
from src.analysis.wavelet_kit import (
    AnalyzingWavelet,
    admissibility_constant,
    build_even_wavelet,
    build_reconstruction_wavelet,
    moment,
)
from src.data.signal_battery import SignalName, get_test_signal, lp_battery
from src.simulation.pulse_config import PULSE_SHAPE_MAP
from src.simulation.pulse_dataclasses import PulseProcessParams, PulseShape
from src.simulation.pulse_sim import (
    band_census,
    band_envelope,
    expected_band_count,
    lp_partial_sum_norms,
    sample_process,
)

logger = logging.getLogger(__name__)

DEFAULT_WAVELET = (2, 3)
CUSP_ALPHAS = (0.3, 0.5, 0.7)
CUSP_PS = (1.5, 2.0, 4.0)
CUSP_STEP = 2.0**-12
CUSP_ANCHORS = (2.0**-5, 2.0**-2)
ANNIHILATION_WAVELETS = ((2, 3), (4, 3), (6, 5))
CENSUS_SEEDS = 200
CENSUS_BANDS = (5, 15)
ENVELOPE_MIN_BAND = 10
SPECTRUM_J = 14
SPECTRUM_SEEDS = 3
P_SPECTRUM_J_MAX = 32


class CriterionKind(StrEnum):
    DETERMINISTIC = auto()  # same verdict for every seed
    SEEDED = auto()  # verdict depends on the base seed


@dataclass
class CriterionResult:
    name: str
    target: str
    measured: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target": self.target,
            "measured": _json_float(self.measured),
            "tolerance": _json_float(self.tolerance),
            "pass": self.passed,
            "details": {k: _json_value(v) for k, v in self.details.items()},
            "runtime_seconds": round(self.runtime_seconds, 3),
        }


def _json_float(value: float) -> float | str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _json_value(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return _json_float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_json_value(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _json_value(v) for k, v in value.items()}
    return value


class Criterion:
    func: Callable[..., CriterionResult]
    kind: CriterionKind
    tolerance: float  # default, overridable per run

    def __init__(self, func: Callable[..., CriterionResult], kind: CriterionKind, tolerance: float):
        self.func = func
        self.kind = kind
        self.tolerance = tolerance

    def __call__(self, tolerance: float | None = None, seed: int = 0, threads: int | None = None) -> CriterionResult:
        start = time.perf_counter()
        result = self.func(self.tolerance if tolerance is None else tolerance, seed, threads)
        result.runtime_seconds = time.perf_counter() - start
        logger.info(f"{result.name}: {'pass' if result.passed else 'FAIL'} (measured {result.measured:.4g})")
        return result


def _wavelet() -> AnalyzingWavelet:
    return build_even_wavelet(*DEFAULT_WAVELET)


def _cusp_plane(psi: AnalyzingWavelet, alpha: float, threads: int | None):
    signal = get_test_signal(SignalName.CUSP, -1.0, 1.0, CUSP_STEP, alpha=alpha)
    grid = ScaleGrid.dyadic(2.0**-2, 2.0**-8, 8)
    return cwt(signal, psi, grid, threads=threads)


def _cusp_leaders(plane, p: float):
    scales = plane.scales
    anchors = scales[(scales >= CUSP_ANCHORS[0] * (1 - 1e-9)) & (scales <= CUSP_ANCHORS[1] * (1 + 1e-9))]
    return leader_field(plane, p, anchors=anchors, positions=[0.0])


# Cusp |x|^alpha: log-log slope of L(a, 0) over three octaves recovers alpha for every p
def _cusp_power_law(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    psi = _wavelet()
    slopes = {}
    worst = 0.0
    for alpha in CUSP_ALPHAS:
        plane = _cusp_plane(psi, alpha, threads)
        for p in CUSP_PS:
            slope = estimate_p_exponent(_cusp_leaders(plane, p), 0.0).slope
            slopes[f"alpha={alpha},p={p}"] = slope
            worst = max(worst, abs(slope - alpha))
    return CriterionResult("A1", "slope = alpha", worst, tolerance, worst <= tolerance, {"slopes": slopes})


# Moments vanish, support and evenness hold, polynomials of degree < N are annihilated
def _wavelet_certification(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    worst_moment = 0.0
    worst_annihilation = 0.0
    step = 2.0**-10
    for nv, s in ANNIHILATION_WAVELETS:
        psi = build_even_wavelet(nv, s)
        worst_moment = max(worst_moment, max(abs(moment(psi, m)) for m in range(nv)))
        coeffs = tuple(1.0 for _ in range(nv))
        signal = get_test_signal(SignalName.POLYNOMIAL, -1.0, 1.0, step, coeffs=coeffs)
        plane = cwt(signal, psi, ScaleGrid.dyadic(32 * step * 2, 32 * step, 1), threads=threads)
        relative = float(np.max(np.abs(plane.w[plane.valid]))) / plane.reference_amplitude
        worst_annihilation = max(worst_annihilation, relative)
    passed = worst_moment < 1e-8 and worst_annihilation < tolerance
    return CriterionResult(
        "A2",
        "moments < 1e-8, polynomial transform < tolerance relative",
        worst_annihilation,
        tolerance,
        passed,
        {"max_moment": worst_moment, "wavelets": [list(w) for w in ANNIHILATION_WAVELETS]},
    )


# Smooth bump recomposed from its transform over seven octaves
def _reconstruction(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    psi = _wavelet()
    phi = build_reconstruction_wavelet(psi)
    c = admissibility_constant(psi, phi)
    signal = get_test_signal(SignalName.MODULATED_BUMP, -0.5, 1.5, 2.0**-10)
    plane = cwt(signal, psi, ScaleGrid.dyadic(2.0**-1, 2.0**-8, 8), threads=threads)
    rebuilt = reconstruct(plane, phi, c, signal.x)
    interior = (signal.x >= 0.25) & (signal.x <= 0.75)
    x = signal.x[interior]
    err = math.sqrt(trapezoid((rebuilt.values[interior] - signal.values[interior]) ** 2, x))
    ref = math.sqrt(trapezoid(signal.values[interior] ** 2, x))
    relative = err / ref
    return CriterionResult("A3", "relative L2 error", relative, tolerance, relative < tolerance, {"c_psi": c.c_psi})


# ||f||_2 / N_f stays within a bounded band over a battery of signals
def _norm_equivalence(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    psi = _wavelet()
    grid = ScaleGrid.dyadic(2.0**-1, 2.0**-8, 8)
    ratios = {}
    for name, signal in lp_battery().items():
        plane = cwt(signal, psi, grid, threads=threads)
        norm = math.sqrt(trapezoid(signal.values**2, signal.x))
        ratios[name] = norm / lp_norm_proxy(plane, 2.0)
    spread = max(ratios.values()) / min(ratios.values())
    return CriterionResult("A4", "max/min of ||f||_2 / N_f", spread, tolerance, spread < tolerance, {"ratios": ratios})


# Cusps: L(a, 0) a^-alpha stays bounded across the anchor range
def _cusp_boundedness(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    psi = _wavelet()
    spreads = {}
    for alpha in CUSP_ALPHAS:
        leaders = _cusp_leaders(_cusp_plane(psi, alpha, threads), 2.0)
        normalized = leaders.values[:, 0] * leaders.anchors ** (-alpha)
        spreads[f"alpha={alpha}"] = float(normalized.max() / normalized.min())
    worst = max(spreads.values())
    return CriterionResult("A5", "max/min of L(a, 0) a^-alpha", worst, tolerance, worst < tolerance, {"spreads": spreads})


# Card(A_j) over many seeds: mean matches the Poisson intensity, envelope holds
def _band_census(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    alpha, eta = 0.5, 0.9
    j_lo, j_hi = CENSUS_BANDS
    pulse = PULSE_SHAPE_MAP[PulseShape.ODD_BUMP]
    counts = np.array(
        [
            band_census(sample_process(PulseProcessParams(alpha, eta, pulse, j_max=j_hi, seed=seed + k)), eta, j_hi)
            for k in range(CENSUS_SEEDS)
        ]
    )
    bands = np.arange(j_lo, j_hi + 1)
    mean = counts[:, bands].mean(axis=0)
    stderr = counts[:, bands].std(axis=0, ddof=1) / math.sqrt(CENSUS_SEEDS)
    expected = np.array([expected_band_count(int(j), eta) for j in bands])
    z = np.abs(mean - expected) / stderr
    inside = []
    for j in range(ENVELOPE_MIN_BAND, j_hi + 1):
        lo, hi = band_envelope(j, eta)
        inside.extend((counts[:, j] >= lo) & (counts[:, j] <= hi))
    envelope_rate = float(np.mean(inside))
    worst_z = float(z.max())
    return CriterionResult(
        "A6",
        "|mean - expected| / stderr",
        worst_z,
        tolerance,
        worst_z <= tolerance and envelope_rate >= 0.95,
        {"z_scores": z.tolist(), "envelope_rate": envelope_rate},
    )


def _pulse_exponent_field(alpha: float, eta: float, p: float, seed: int, threads: int | None):
    params = PulseProcessParams(alpha, eta, PULSE_SHAPE_MAP[PulseShape.ODD_BUMP], j_max=SPECTRUM_J + 2, seed=seed)
    pulses = sample_process(params)
    a_min, a_max = default_pulse_scale_range(params.j_max)
    grid = ScaleGrid.dyadic(a_max, a_min, 4)
    # padded past [0, 1] so every leader window over the 2^J points stays on the plane
    positions, targets = padded_unit_grid(SPECTRUM_J, a_max)
    plane = pulse_plane(params, pulses, _wavelet(), grid, positions, threads=threads)
    leaders = leader_field(plane, p, positions=targets, threads=threads)
    return exponent_field(leaders)


# Hölder spectrum of the pulse sum: peak at alpha with height 1, nothing below alpha eta
def _holder_spectrum(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    alpha, eta = 0.5, 0.9
    runs = []
    for k in range(SPECTRUM_SEEDS):
        estimate = coarse_grained_spectrum(_pulse_exponent_field(alpha, eta, math.inf, seed + k, threads), 0.1, SPECTRUM_J)
        h_peak, d_peak = spectrum_peak(estimate)
        populated = estimate.counts >= MIN_BIN_COUNT
        below = bool(np.any(populated & (estimate.bin_edges[1:] <= alpha * eta - 0.1)))
        ok = abs(h_peak - alpha) <= tolerance and abs(d_peak - 1.0) <= tolerance and not below
        runs.append({"seed": seed + k, "peak_h": h_peak, "peak_dim": d_peak, "mass_below": below, "pass": ok})
    worst = max(max(abs(r["peak_h"] - alpha), abs(r["peak_dim"] - 1.0)) for r in runs)
    passed = sum(r["pass"] for r in runs) == SPECTRUM_SEEDS
    return CriterionResult("A7", "peak within tolerance of (alpha, 1)", worst, tolerance, passed, {"runs": runs})


def p_spectrum_run(alpha: float, eta: float, p: float, seed: int, tolerance: float, threads: int | None = None) -> dict:
    """
    One realization of the p-spectrum check.

    Pulses at least as wide as the finest regression anchor enter an exact
    plane, the rest enter as isolated-pulse mass; bins are aligned to the
    right end of the support.
    """
    theory = theoretical_spectrum(alpha, eta, p)
    lo, hi = theory.support
    params = PulseProcessParams(alpha, eta, PULSE_SHAPE_MAP[PulseShape.ODD_BUMP], j_max=P_SPECTRUM_J_MAX, seed=seed)
    pulses = sample_process(params)
    anchors = default_pulse_p_scale_range(SPECTRUM_J)
    grid = ScaleGrid.dyadic(anchors[1], 2.0 ** -(SPECTRUM_J - 2), 4)
    _, leaders = pulse_leader_field(params, pulses, _wavelet(), p, SPECTRUM_J, grid, anchors[0], threads=threads)
    field = exponent_field(leaders, scale_range=anchors)
    estimate = coarse_grained_spectrum(field, 0.05, SPECTRUM_J, origin=hi)
    deviation = max_theory_deviation(estimate, theory)
    try:
        est_lo, est_hi = estimated_support(estimate, MIN_BIN_COUNT)
    except ParameterError:
        est_lo, est_hi = math.nan, math.nan
    ok = deviation <= tolerance and abs(est_lo - lo) <= 0.1 and abs(est_hi - hi) <= 0.1
    return {
        "seed": seed,
        "max_deviation": deviation,
        "support": [est_lo, est_hi],
        "median_exponent": float(np.median(field.finite_slopes())),
        "pass": ok,
    }


# p-spectrum of the pulse sum against (H eta p + eta) / (alpha eta p + 1)
def _p_spectrum(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    alpha, eta, p = -0.7, 0.5, 1.2
    lo, hi = theoretical_spectrum(alpha, eta, p).support
    runs = [p_spectrum_run(alpha, eta, p, seed + k, tolerance, threads) for k in range(SPECTRUM_SEEDS)]
    passed = sum(r["pass"] for r in runs) >= SPECTRUM_SEEDS - 1
    worst = max(r["max_deviation"] for r in runs)
    return CriterionResult(
        "A8", "|dim - theory| on bins with >= 32 points", worst, tolerance, passed, {"runs": runs, "support": [lo, hi]}
    )


# Per-band L^p norms decay geometrically at the predicted rate
def _lp_membership(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    alpha, eta, p = -0.7, 0.5, 1.3
    params = PulseProcessParams(alpha, eta, PULSE_SHAPE_MAP[PulseShape.ODD_BUMP], j_max=16, seed=seed)
    norms = np.array(lp_partial_sum_norms(params, sample_process(params), p))
    bands = np.arange(len(norms))
    fit_bands = (bands >= 6) & (norms > 0)
    slope = float(linregress(bands[fit_bands], np.log2(norms[fit_bands])).slope)
    bound = -alpha * eta + eta / p - 1.0 / p
    tail_fraction = float(norms[-1] / norms.sum())
    return CriterionResult(
        "A9",
        f"log2 slope <= {bound:.4f} + tolerance",
        slope,
        tolerance,
        slope <= bound + tolerance,
        {"bound": bound, "tail_fraction": tail_fraction, "norms": norms.tolist()},
    )


# Closed-form p-spectrum: D = eta at H = alpha eta and D = 1 at the right endpoint
def _spectrum_identities(tolerance: float, seed: int, threads: int | None) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        eta = rng.uniform(0.05, 0.95)
        alpha = rng.uniform((eta - 1.0) / eta, 0.0) * 0.999
        hi = (1.0 - eta) / (-alpha * eta)
        p = rng.uniform(1.0, hi)
        left = theoretical_p_spectrum(alpha, eta, p, alpha * eta)
        right = theoretical_p_spectrum(alpha, eta, p, alpha + (1.0 - eta) / (eta * p))
        worst = max(worst, abs(left - eta), abs(right - 1.0))
    return CriterionResult("A10", "endpoint identities", worst, tolerance, worst <= tolerance)


CRITERIA_MAPPING = {
    "A1": Criterion(_cusp_power_law, CriterionKind.DETERMINISTIC, 0.05),  # cusp slope = alpha
    "A2": Criterion(_wavelet_certification, CriterionKind.DETERMINISTIC, 1e-6),  # exact moments, annihilation
    "A3": Criterion(_reconstruction, CriterionKind.DETERMINISTIC, 0.05),  # relative L2 error
    "A4": Criterion(_norm_equivalence, CriterionKind.DETERMINISTIC, 50.0),  # ratio spread
    "A5": Criterion(_cusp_boundedness, CriterionKind.DETERMINISTIC, 3.0),  # max/min of normalized leader
    "A6": Criterion(_band_census, CriterionKind.SEEDED, 3.0),  # standard errors
    "A7": Criterion(_holder_spectrum, CriterionKind.SEEDED, 0.1),  # peak location and height
    "A8": Criterion(_p_spectrum, CriterionKind.SEEDED, 0.15),  # dimension deviation
    "A9": Criterion(_lp_membership, CriterionKind.SEEDED, 0.1),  # slope slack
    "A10": Criterion(_spectrum_identities, CriterionKind.DETERMINISTIC, 1e-12),  # absolute error
}


def run_criteria(
    names=None,
    tolerances: dict[str, float] | None = None,
    seed: int = 0,
    seed_sweep: int = 0,
    threads: int | None = None,
) -> list[dict]:
    """
    Run acceptance criteria and collect their report entries.

    Args:
        names: Criterion names (default: all, in registry order)
        tolerances: Per-criterion tolerance overrides
        seed: Base seed
        seed_sweep: When > 0, seeded criteria also run for seeds seed..seed+N-1
            and report their pass rate
        threads: Worker threads handed to the criteria

    Returns:
        One dict per criterion, as in CriterionResult.to_dict
    """
    tolerances = tolerances or {}
    names = list(CRITERIA_MAPPING) if names is None else list(names)
    report = []
    for name in names:
        criterion = CRITERIA_MAPPING[name]
        tolerance = tolerances.get(name)
        entry = criterion(tolerance, seed, threads).to_dict()
        if seed_sweep > 0 and criterion.kind == CriterionKind.SEEDED:
            verdicts = [criterion(tolerance, seed + k, threads).passed for k in range(seed_sweep)]
            entry["seed_sweep"] = {"seeds": seed_sweep, "pass_rate": sum(verdicts) / seed_sweep}
        report.append(entry)
    return report
