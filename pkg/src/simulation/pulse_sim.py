import logging
import math
from pathlib import Path

import numpy as np
import orjson
from scipy.integrate import trapezoid

from src.analysis.errors import ConfigError, ParameterError, SpectrumHypothesisError
from src.analysis.spectrum import admissible_p_range
from src.analysis.tf_dataclasses import SampledSignal
from src.analysis.wavelet_kit import PiecewisePolynomial
from src.simulation.pulse_dataclasses import BandIndex, PulseProcessParams, PulseSet

logger = logging.getLogger(__name__)

DRAW_BLOCK = 4096
PAIR_CHUNK = 65536
POINTS_PER_WIDTH = 64


def _streams(params: PulseProcessParams, rng: np.random.Generator | None) -> list[np.random.Generator]:
    if rng is None:
        children = np.random.SeedSequence(params.seed).spawn(3)
    else:
        children = [np.random.SeedSequence(int(s)) for s in rng.integers(0, 2**63, size=3)]
    return [np.random.default_rng(child) for child in children]


def _arrivals(stream: np.random.Generator, bound: float | None = None, count: int | None = None) -> np.ndarray:
    """Unit-rate Poisson arrivals, drawn in fixed blocks so prefixes do not depend on the stopping rule."""
    blocks = []
    last = 0.0
    drawn = 0
    while True:
        block = last + np.cumsum(stream.exponential(1.0, size=DRAW_BLOCK))
        blocks.append(block)
        last = float(block[-1])
        drawn += DRAW_BLOCK
        if (bound is not None and last >= bound) or (count is not None and drawn >= count):
            break
    arrivals = np.concatenate(blocks)
    if bound is not None:
        return arrivals[arrivals < bound]
    return arrivals[:count]


def _uniforms(stream: np.random.Generator, count: int) -> np.ndarray:
    num_blocks = max(1, math.ceil(count / DRAW_BLOCK))
    return np.concatenate([stream.random(DRAW_BLOCK) for _ in range(num_blocks)])[:count]


def sample_process(params: PulseProcessParams, rng: np.random.Generator | None = None) -> PulseSet:
    """
    Draw one realization of the pulse process.

    C_n and B_n are arrival times of independent unit-rate Poisson processes,
    X_n are i.i.d. uniform on [0, 1]. Pulses are kept while
    B_n^(1/eta) < 2^j_max. Each sequence has its own stream spawned from the
    seed (or from rng when given), so the result is reproducible.

    Args:
        params: Process parameters
        rng: Optional generator used to derive the three streams

    Returns:
        PulseSet ordered by B_n
    """
    c_stream, b_stream, x_stream = _streams(params, rng)
    bound = 2.0 ** (params.eta * params.j_max)
    B = _arrivals(b_stream, bound=bound)
    C = _arrivals(c_stream, count=len(B))
    X = _uniforms(x_stream, len(B))
    pulses = PulseSet(C, B, X, seed=params.seed if rng is None else None)
    logger.info(f"sampled {pulses.count} pulses (alpha={params.alpha}, eta={params.eta}, j_max={params.j_max})")
    return pulses


def iter_pulse_pairs(centers: np.ndarray, half_widths: np.ndarray, sorted_points: np.ndarray, margin: float = 0.0):
    """
    Yield (pulse indices, point indices) with |point - center| <= half_width + margin.

    Pulses are grouped by octave of half width so each search window stays
    narrow. Point indices refer to sorted_points.
    """
    if len(centers) == 0 or len(sorted_points) == 0:
        return
    groups = np.floor(np.log2(half_widths)).astype(np.int64)
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        reach = margin + half_widths[members].max()
        lo = np.searchsorted(sorted_points, centers[members] - reach, side="left")
        hi = np.searchsorted(sorted_points, centers[members] + reach, side="right")
        counts = hi - lo
        offsets = np.concatenate([[0], np.cumsum(counts)])
        total = int(offsets[-1])
        for start in range(0, total, PAIR_CHUNK):
            k = np.arange(start, min(start + PAIR_CHUNK, total))
            owner = np.searchsorted(offsets, k, side="right") - 1
            n_idx = members[owner]
            p_idx = lo[owner] + (k - offsets[owner])
            keep = np.abs(sorted_points[p_idx] - centers[n_idx]) <= half_widths[n_idx] + margin
            if keep.any():
                yield n_idx[keep], p_idx[keep]


def evaluate(params: PulseProcessParams, pulses: PulseSet, x):
    """
    Sample path sum_n C_n^-alpha pulse(B_n^(1/eta)(x - X_n)).

    Only pulses with |x - X_n| <= B_n^(-1/eta) are summed.

    Args:
        params: Process parameters
        pulses: Realization
        x: Point or array of points in [0, 1]

    Returns:
        float for scalar x, array otherwise
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = params.domain
    if np.any((x_arr < lo) | (x_arr > hi)):
        raise ParameterError(f"evaluation points must lie in [{lo:g}, {hi:g}]")

    out = np.zeros(len(x_arr))
    if pulses.count:
        order = np.argsort(x_arr, kind="stable")
        sorted_x = x_arr[order]
        inv_width = pulses.B ** (1.0 / params.eta)
        amplitude = pulses.C ** (-params.alpha)
        for n_idx, p_idx in iter_pulse_pairs(pulses.X, 1.0 / inv_width, sorted_x):
            values = amplitude[n_idx] * params.pulse(inv_width[n_idx] * (sorted_x[p_idx] - pulses.X[n_idx]))
            out += np.bincount(order[p_idx], weights=values, minlength=len(x_arr))
    return float(out[0]) if np.ndim(x) == 0 else out


def sample_path(params: PulseProcessParams, pulses: PulseSet, num_points: int = 10_001) -> SampledSignal:
    """Path on a uniform grid of [0, 1]."""
    if num_points < 2:
        raise ParameterError("a sampled path needs at least 2 points")
    x = np.linspace(0.0, 1.0, num_points)
    return SampledSignal(0.0, 1.0 / (num_points - 1), evaluate(params, pulses, x))


def band_partition(pulses: PulseSet, eta: float) -> list[BandIndex]:
    """
    Split pulse indices into bands A_j: 2^(j-1) <= B_n^(1/eta) < 2^j, A_0: B_n^(1/eta) < 1.

    The result is indexed by j and holds every band up to the largest one
    present, empty ones included.
    """
    if not 0.0 < eta < 1.0:
        raise ParameterError(f"eta must lie in (0, 1), got {eta}")
    if pulses.count == 0:
        return []
    _, exponent = np.frexp(pulses.B ** (1.0 / eta))
    j = np.maximum(exponent, 0)
    order = np.argsort(j, kind="stable")
    bounds = np.searchsorted(j[order], np.arange(int(j.max()) + 2))
    return [BandIndex(band, order[bounds[band]:bounds[band + 1]]) for band in range(int(j.max()) + 1)]


def band_census(pulses: PulseSet, eta: float, j_max: int) -> np.ndarray:
    """Card(A_j) for j = 0..j_max."""
    counts = np.zeros(j_max + 1, dtype=np.int64)
    for band in band_partition(pulses, eta):
        if band.j <= j_max:
            counts[band.j] = band.count
    return counts


def band_epsilon(j: int, eta: float) -> float:
    """epsilon_j = log2(j) / (eta j)."""
    if j < 1:
        raise ParameterError(f"band epsilon needs j >= 1, got {j}")
    return math.log2(j) / (eta * j)


def band_envelope(j: int, eta: float) -> tuple[float, float]:
    """(2^(eta j (1 - eps_j)), 2^(eta j (1 + eps_j)))."""
    eps = band_epsilon(j, eta)
    return 2.0 ** (eta * j * (1.0 - eps)), 2.0 ** (eta * j * (1.0 + eps))


def expected_band_count(j: int, eta: float) -> float:
    """Lebesgue measure of [2^(eta(j-1)), 2^(eta j)); 1 for j = 0."""
    if j == 0:
        return 1.0
    return 2.0 ** (eta * j) * (1.0 - 2.0 ** (-eta))


def overlap_counts(params: PulseProcessParams, pulses: PulseSet, j: int, x) -> np.ndarray:
    """Number of pulses of band j whose support [X_n - B_n^(-1/eta), X_n + B_n^(-1/eta)] holds x."""
    x = np.asarray(x, dtype=float)
    bands = band_partition(pulses, params.eta)
    counts = np.zeros(len(x), dtype=np.int64)
    if j >= len(bands) or bands[j].count == 0:
        return counts
    members = bands[j].members
    order = np.argsort(x, kind="stable")
    half_widths = pulses.B[members] ** (-1.0 / params.eta)
    for n_idx, p_idx in iter_pulse_pairs(pulses.X[members], half_widths, x[order]):
        counts += np.bincount(order[p_idx], minlength=len(x))
    return counts


def fit_overlap_constant(max_counts: dict[int, int], j_min: int = 2) -> float:
    """Smallest K with max overlap count <= K j^2 for every j >= j_min."""
    ratios = [count / j**2 for j, count in max_counts.items() if j >= j_min]
    if not ratios:
        raise ParameterError(f"no bands with j >= {j_min} to fit the overlap constant")
    return float(max(ratios))


def _merged_supports(centers: np.ndarray, half_widths: np.ndarray) -> list[tuple[float, float]]:
    order = np.argsort(centers - half_widths)
    merged = []
    for left, right in zip((centers - half_widths)[order], (centers + half_widths)[order]):
        if merged and left <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], right)
        else:
            merged.append([left, right])
    clipped = [(max(lo, 0.0), min(hi, 1.0)) for lo, hi in merged]
    return [(lo, hi) for lo, hi in clipped if hi > lo]


def lp_partial_sum_norms(params: PulseProcessParams, pulses: PulseSet, p: float) -> list[float]:
    """
    ||F_j||_{L^p[0,1]} for every band j, F_j being the sum over A_j.

    Each merged cluster of pulse supports is integrated by the trapezoid rule
    with POINTS_PER_WIDTH points per narrowest pulse half width.

    Args:
        params: Process parameters with alpha < 0
        pulses: Realization
        p: Exponent in [1, -1/(alpha eta) + 1/alpha)

    Returns:
        Norms indexed by j = 0..j_max
    """
    if not params.alpha < 0:
        raise ParameterError(f"partial-sum norms are defined here for alpha < 0, got {params.alpha}")
    lo, hi = admissible_p_range(params.alpha, params.eta)
    if not lo <= p < hi:
        raise SpectrumHypothesisError(f"p outside [{lo:g}, {hi:.4f})")

    norms = [0.0] * (params.j_max + 1)
    for band in band_partition(pulses, params.eta):
        if band.count == 0 or band.j > params.j_max:
            continue
        subset = pulses.subset(band.members)
        half_widths = subset.B ** (-1.0 / params.eta)
        step = half_widths.min() / POINTS_PER_WIDTH
        total = 0.0
        for left, right in _merged_supports(subset.X, half_widths):
            x = np.linspace(left, right, max(3, int(math.ceil((right - left) / step)) + 1))
            total += float(trapezoid(np.abs(evaluate(params, subset, x)) ** p, x))
        norms[band.j] = total ** (1.0 / p)
        logger.debug(f"band {band.j}: {band.count} pulses, ||F_j||_{p:g} = {norms[band.j]:.4g}")
    return norms


def pulse_set_to_dict(params: PulseProcessParams, pulses: PulseSet, config_hash: str | None = None) -> dict:
    data = {
        "seed": params.seed,
        "alpha": params.alpha,
        "eta": params.eta,
        "j_max": params.j_max,
        "pulse": params.pulse.to_dict(),
        "triples": pulses.triples.tolist(),
    }
    if config_hash is not None:
        data["config_sha256"] = config_hash
    return data


def write_pulse_set(path, params: PulseProcessParams, pulses: PulseSet, config_hash: str | None = None) -> Path:
    path = Path(path)
    path.write_bytes(orjson.dumps(pulse_set_to_dict(params, pulses, config_hash), option=orjson.OPT_INDENT_2))
    return path


def read_pulse_set(path) -> tuple[PulseProcessParams, PulseSet]:
    """Load a pulse set written by write_pulse_set for exact replay."""
    try:
        with open(path, "rb") as f:
            data = orjson.loads(f.read())
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    try:
        params = PulseProcessParams(
            alpha=float(data["alpha"]),
            eta=float(data["eta"]),
            pulse=PiecewisePolynomial.from_dict(data["pulse"]),
            j_max=int(data["j_max"]),
            seed=int(data["seed"]),
        )
        triples = np.asarray(data["triples"], dtype=float).reshape(-1, 3)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{path} is not a pulse-set file: missing or malformed {e}") from e
    pulses = PulseSet(triples[:, 0], triples[:, 1], triples[:, 2], seed=params.seed)
    pulses.check_truncation(params.eta, params.j_max)
    return params, pulses
