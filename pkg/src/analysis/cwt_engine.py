import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from src.analysis.errors import CoverageError, ParameterError, ResolutionError
from src.analysis.pleaders import leader_field
from src.analysis.tf_dataclasses import LeaderField, SampledSignal, ScaleGrid, TimeScalePlane
from src.analysis.wavelet_kit import (
    AdmissibilityConstant,
    AnalyzingWavelet,
    ReconstructionWavelet,
)
from src.simulation.pulse_dataclasses import PulseProcessParams, PulseSet
from src.simulation.pulse_sim import iter_pulse_pairs

logger = logging.getLogger(__name__)

MIN_SAMPLES_PER_SCALE = 2
MIN_RECONSTRUCTION_OCTAVES = 6
MATRIX_CHUNK = 2_000_000


def _resolve_workers(threads: int | None) -> int:
    return max(1, int(threads or 1))


def _map_rows(func, items, threads: int | None) -> list:
    workers = _resolve_workers(threads)
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _grid_offsets(f: SampledSignal, positions: np.ndarray) -> np.ndarray | None:
    """Sample indices of positions when they all sit on the signal lattice."""
    raw = (positions - f.origin) / f.step
    idx = np.rint(raw)
    if np.all(np.abs(raw - idx) <= 1e-9 * np.maximum(1.0, np.abs(raw))):
        return idx.astype(np.int64)
    return None


def _trapezoid_weights(f: SampledSignal) -> np.ndarray:
    fw = np.asarray(f.values, dtype=float) * f.step
    fw[0] *= 0.5
    fw[-1] *= 0.5
    return fw


def _cwt_row_aligned(fw: np.ndarray, step: float, psi: AnalyzingWavelet, a: float, idx: np.ndarray) -> np.ndarray:
    half = int(math.floor(a / step))
    kernel = psi(np.arange(-half, half + 1) * step / a)
    pad_left = half + max(0, -int(idx.min()))
    pad_right = half + max(0, int(idx.max()) - (len(fw) - 1))
    padded = np.concatenate([np.zeros(pad_left), fw, np.zeros(pad_right)])
    row = np.correlate(padded, kernel, mode="valid")
    return row[idx + pad_left - half] / a


def _cwt_row_general(fw: np.ndarray, f: SampledSignal, psi: AnalyzingWavelet, a: float, positions: np.ndarray) -> np.ndarray:
    n = len(fw)
    width = int(math.ceil(2.0 * a / f.step)) + 2
    out = np.empty(len(positions))
    chunk = max(1, MATRIX_CHUNK // width)
    offsets = np.arange(width)
    for start in range(0, len(positions), chunk):
        b = positions[start:start + chunk]
        first = np.ceil((b - a - f.origin) / f.step).astype(np.int64)
        idx = first[:, None] + offsets[None, :]
        inside = (idx >= 0) & (idx < n)
        x = f.origin + idx * f.step
        vals = np.where(inside, fw[np.clip(idx, 0, n - 1)], 0.0) * psi((x - b[:, None]) / a)
        out[start:start + chunk] = vals.sum(axis=1) / a
    return out


def cwt(
    f: SampledSignal,
    psi: AnalyzingWavelet,
    grid: ScaleGrid,
    positions=None,
    threads: int | None = None,
) -> TimeScalePlane:
    """
    Continuous wavelet transform W(a, b) = (1/a) int f(x) psi((x - b) / a) dx.

    The integral is the trapezoid rule on the signal's own samples with the
    signal extended by zero. Positions whose wavelet support leaves the
    signal domain are marked invalid.

    Args:
        f: Sampled signal
        psi: Analyzing wavelet
        grid: Scale grid
        positions: Positions b (defaults to the sample grid)
        threads: Worker threads for the scale rows

    Returns:
        TimeScalePlane
    """
    positions = f.x if positions is None else np.asarray(positions, dtype=float)
    for a in grid.scales:
        if a < MIN_SAMPLES_PER_SCALE * f.step:
            raise ResolutionError(
                f"scale {a:g} is below {MIN_SAMPLES_PER_SCALE} * step = {MIN_SAMPLES_PER_SCALE * f.step:g}",
                float(a),
            )

    fw = _trapezoid_weights(f)
    idx = _grid_offsets(f, positions)
    if idx is not None:
        rows = _map_rows(lambda a: _cwt_row_aligned(fw, f.step, psi, a, idx), list(grid.scales), threads)
    else:
        rows = _map_rows(lambda a: _cwt_row_general(fw, f, psi, a, positions), list(grid.scales), threads)

    lo, hi = f.domain
    tol = 1e-9 * f.step
    scales = grid.scales[:, None]
    valid = (positions[None, :] - scales >= lo - tol) & (positions[None, :] + scales <= hi + tol)
    reference = float(np.max(np.abs(f.values)))
    logger.debug(f"cwt: {len(grid.scales)} scales x {len(positions)} positions")
    return TimeScalePlane(grid, positions, np.vstack(rows), valid, reference)


def _pulse_row(params: PulseProcessParams, pulses: PulseSet, psi: AnalyzingWavelet, a: float, positions: np.ndarray) -> np.ndarray:
    """Exact W(a, b) of the pulse sum at every b in positions."""
    out = np.zeros(len(positions))
    if pulses.count == 0 or len(positions) == 0:
        return out

    pulse = params.pulse
    amplitude = pulses.C ** (-params.alpha)
    inv_width = pulses.B ** (1.0 / params.eta)
    half_width = 1.0 / inv_width

    deg = pulse.degree + psi.shape.degree
    nodes, weights = np.polynomial.legendre.leggauss(deg // 2 + 1)
    pulse_cuts = np.asarray(pulse.breakpoints[1:-1])
    psi_cuts = np.asarray(psi.shape.breakpoints[1:-1])

    order = np.argsort(positions, kind="stable")
    sorted_b = positions[order]

    for n_idx, b_idx in iter_pulse_pairs(pulses.X, half_width, sorted_b, margin=a):
        b = sorted_b[b_idx]
        x_n = pulses.X[n_idx]
        w_n = half_width[n_idx]

        left = np.maximum(x_n - w_n, b - a)
        right = np.minimum(x_n + w_n, b + a)
        cuts = [left, right]
        cuts += [np.clip(x_n + w_n * c, left, right) for c in pulse_cuts]
        cuts += [np.clip(b + a * c, left, right) for c in psi_cuts]
        cuts = np.sort(np.stack(cuts, axis=1), axis=1)

        mid = 0.5 * (cuts[:, 1:] + cuts[:, :-1])
        half = 0.5 * (cuts[:, 1:] - cuts[:, :-1])
        x = mid[:, :, None] + half[:, :, None] * nodes[None, None, :]
        integrand = (
            pulse(inv_width[n_idx][:, None, None] * (x - x_n[:, None, None]))
            * psi((x - b[:, None, None]) / a)
        )
        integral = np.einsum("pkg,g,pk->p", integrand, weights, half)
        out += np.bincount(order[b_idx], weights=amplitude[n_idx] * integral / a, minlength=len(positions))
    return out


def cwt_pulse_analytic(params: PulseProcessParams, pulses: PulseSet, psi: AnalyzingWavelet, a: float, b: float) -> float:
    """
    W(a, b) of the pulse sum, sum_n C_n^-alpha (1/a) int pulse(B_n^(1/eta)(x - X_n)) psi((x - b)/a) dx.

    Each overlap integral is Gauss-Legendre exact for the polynomial pieces;
    pulses whose support misses [b - a, b + a] are skipped.
    """
    if not a > 0:
        raise ParameterError(f"scale must be positive, got {a}")
    return float(_pulse_row(params, pulses, psi, float(a), np.array([float(b)]))[0])


def padded_unit_grid(J: int, margin: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Plane positions on [0, 1] at step 2^-J, padded by margin on both sides.

    Returns:
        (positions, targets): the padded grid and its 2^J points k 2^-J in [0, 1)
    """
    if J < 1:
        raise ParameterError(f"J must be >= 1, got {J}")
    step = 2.0**-J
    pad = int(math.ceil(margin / step - 1e-9)) if margin > 0 else 0
    positions = step * np.arange(-pad, 2**J + pad)
    return positions, step * np.arange(2**J)


def pulse_plane(
    params: PulseProcessParams,
    pulses: PulseSet,
    psi: AnalyzingWavelet,
    grid: ScaleGrid,
    positions,
    threads: int | None = None,
    oversample: int = 16,
) -> TimeScalePlane:
    """
    Time-scale plane of the pulse sum on a uniform position grid.

    Row a is evaluated exactly on a sub-lattice of spacing at most a / oversample
    and linearly interpolated in between.
    """
    positions = np.asarray(positions, dtype=float)
    if oversample < 1:
        raise ParameterError(f"oversample must be >= 1, got {oversample}")
    step = float(positions[1] - positions[0]) if len(positions) > 1 else math.inf

    def row(a: float) -> np.ndarray:
        stride = max(1, int(a / (oversample * step))) if math.isfinite(step) else 1
        lattice = np.arange(0, len(positions), stride)
        if lattice[-1] != len(positions) - 1:
            lattice = np.append(lattice, len(positions) - 1)
        exact = _pulse_row(params, pulses, psi, float(a), positions[lattice])
        if stride == 1:
            return exact
        logger.debug(f"pulse row a={a:.3g}: {len(lattice)} exact points, stride {stride}")
        return np.interp(positions, positions[lattice], exact)

    rows = _map_rows(row, list(grid.scales), threads)
    w = np.vstack(rows)
    reference = float(np.max(np.abs(w))) if w.size else 0.0
    logger.info(f"pulse plane: {len(grid.scales)} scales x {len(positions)} positions, {pulses.count} pulses")
    return TimeScalePlane(grid, positions, w, np.ones(w.shape, dtype=bool), reference)


def reconstruct(
    plane: TimeScalePlane,
    phi: ReconstructionWavelet,
    c: AdmissibilityConstant,
    x_grid,
) -> SampledSignal:
    """
    Recompose f from its transform.

    f(x) = (2 / c) sum_i dlog (1 / a_i) sum_j W(a_i, b_j) phi((x - b_j) / a_i) db,
    the discrete form of the double integral with measure a^-2 db da.

    Args:
        plane: Transform of f on at least six octaves
        phi: Reconstruction wavelet
        c: Admissibility constant of the (psi, phi) pair
        x_grid: Uniform output grid

    Returns:
        SampledSignal on x_grid
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if len(x_grid) < 2:
        raise ParameterError("reconstruction grid needs at least 2 points")
    octaves = plane.scale_grid.num_octaves
    if octaves < MIN_RECONSTRUCTION_OCTAVES:
        raise CoverageError(
            f"plane spans {octaves:.2f} octaves, reconstruction needs {MIN_RECONSTRUCTION_OCTAVES}"
        )
    db = plane.position_step
    if db <= 0:
        raise CoverageError("reconstruction needs at least two positions")

    weight = 2.0 / c.c_psi * plane.scale_grid.log_step * db
    raw = (x_grid - plane.positions[0]) / db
    idx = np.rint(raw)
    aligned = np.all(np.abs(raw - idx) <= 1e-9 * np.maximum(1.0, np.abs(raw)))
    idx = idx.astype(np.int64)
    values = np.zeros(len(x_grid))

    for a, w_row in zip(plane.scales, plane.w):
        if aligned:
            half = int(math.floor(a / db))
            kernel = phi(np.arange(-half, half + 1) * db / a)
            padded = np.concatenate([np.zeros(half), w_row, np.zeros(half)])
            full = np.convolve(padded, kernel, mode="valid")
            inside = (idx >= 0) & (idx < len(full))
            values[inside] += weight / a * full[idx[inside]]
            if not inside.all():
                values[~inside] += weight / a * _reconstruct_dense(plane.positions, w_row, phi, a, x_grid[~inside])
        else:
            values += weight / a * _reconstruct_dense(plane.positions, w_row, phi, a, x_grid)

    return SampledSignal(float(x_grid[0]), float(x_grid[1] - x_grid[0]), values)


def _reconstruct_dense(positions, w_row, phi, a, x) -> np.ndarray:
    out = np.empty(len(x))
    chunk = max(1, MATRIX_CHUNK // max(1, len(positions)))
    for start in range(0, len(x), chunk):
        xs = x[start:start + chunk]
        out[start:start + chunk] = phi((xs[:, None] - positions[None, :]) / a) @ w_row
    return out


@dataclass(frozen=True)
class IsolatedPulseMass:
    """
    Leader mass of one unit pulse (C = B = 1) against the scale ceiling.

    masses[k] = int (int_{sigma <= ratios[k]} |W(sigma, tau)|^2 dsigma / sigma)^(p/2) dtau.
    A pulse of amplitude A and half-width w seen up to scale a carries
    A^p w mass(a / w).
    """

    p: float
    ratios: np.ndarray
    masses: np.ndarray

    def __call__(self, ratio) -> np.ndarray:
        log_r = np.log2(np.maximum(np.asarray(ratio, dtype=float), self.ratios[0] * 0.5))
        return np.interp(log_r, np.log2(self.ratios), self.masses, left=0.0)

    @property
    def total(self) -> float:
        return float(self.masses[-1])


def isolated_pulse_mass(
    params: PulseProcessParams,
    psi: AnalyzingWavelet,
    p: float,
    ratio_range: tuple[float, float] = (2.0**-6, 2.0**6),
    scales_per_octave: int = 8,
    step: float = 2.0**-9,
) -> IsolatedPulseMass:
    """
    Tabulate IsolatedPulseMass for params.pulse.

    The transform of the unit pulse is exact (see _pulse_row) on scales
    ratio_range and on positions with spacing step over [-3, 3], continued
    geometrically out to the largest scale plus one.
    """
    if not 1.0 < p < math.inf:
        raise ParameterError(f"isolated pulse mass needs a finite p > 1, got {p}")
    grid = ScaleGrid.dyadic(ratio_range[1], ratio_range[0], scales_per_octave)
    reach = ratio_range[1] + 1.0
    inner = np.arange(-3.0, 3.0 + 0.5 * step, step)
    outer = np.geomspace(3.0, reach, 8 * int(math.ceil(math.log2(reach / 3.0)) + 1))[1:]
    tau = np.concatenate([-outer[::-1], inner, outer])
    unit = PulseSet(np.ones(1), np.ones(1), np.zeros(1))

    ascending = grid.scales[::-1]
    rows = np.vstack([_pulse_row(params, unit, psi, float(s), tau) for s in ascending])
    energy = np.cumsum(rows**2, axis=0) * grid.log_step
    masses = np.array([trapezoid(e ** (p / 2.0), tau) for e in energy])
    logger.debug(f"isolated pulse mass p={p}: {masses[-1]:.4g} over {len(ascending)} scales")
    return IsolatedPulseMass(p, ascending.copy(), masses)


def truncated_tail_density(params: PulseProcessParams, p: float) -> float:
    """
    Expected sum of C_n^(-alpha p) B_n^(-1/eta) over the pulses beyond the truncation.

    C_n and B_n both grow like n, so the sum is int_M^inf x^gamma dx / x with
    M = 2^(eta j_max) and gamma = 1 - alpha p - 1/eta, finite when gamma < 0.
    """
    gamma = 1.0 - params.alpha * p - 1.0 / params.eta
    if gamma >= 0:
        raise ParameterError(f"pulse mass diverges beyond the truncation for p={p} (exponent {gamma:.4g} >= 0)")
    return float(2.0 ** (params.eta * params.j_max * gamma) / -gamma)


def subgrid_pulse_mass(
    params: PulseProcessParams,
    pulses: PulseSet,
    profile: IsolatedPulseMass,
    anchors,
    positions,
) -> np.ndarray:
    """
    Leader mass of pulses left out of a plane, per (anchor, position).

    Every pulse centered in [b - a, b + a] adds C_n^(-alpha p) w_n mass(a / w_n);
    the pulses beyond the truncation add their expected density over the part
    of the window inside [0, 1]. The result feeds leader_field's extra_mass.
    """
    anchors = np.asarray(anchors, dtype=float)
    positions = np.asarray(positions, dtype=float)
    order = np.argsort(pulses.X, kind="stable")
    x = pulses.X[order]
    widths = pulses.B[order] ** (-1.0 / params.eta)
    amplitude = pulses.C[order] ** (-params.alpha * profile.p) * widths
    tail = profile.total * truncated_tail_density(params, profile.p)
    lo_domain, hi_domain = params.domain

    out = np.empty((len(anchors), len(positions)))
    for i, a in enumerate(anchors):
        cum = np.concatenate([[0.0], np.cumsum(amplitude * profile(a / widths))])
        lo = np.searchsorted(x, positions - a, side="left")
        hi = np.searchsorted(x, positions + a, side="right")
        overlap = np.clip(np.minimum(positions + a, hi_domain) - np.maximum(positions - a, lo_domain), 0.0, None)
        out[i] = cum[hi] - cum[lo] + tail * overlap
    return out


def pulse_leader_field(
    params: PulseProcessParams,
    pulses: PulseSet,
    psi: AnalyzingWavelet,
    p: float,
    J: int,
    grid: ScaleGrid,
    resolved_width: float,
    threads: int | None = None,
    stride: int = 1,
    oversample: int = 16,
) -> tuple[TimeScalePlane, LeaderField]:
    """
    p-leaders of a pulse realization at every stride-th of the 2^J points k 2^-J of [0, 1).

    Pulses of half-width at least resolved_width enter an exact plane on grid;
    the narrower ones and those beyond the truncation enter as isolated-pulse
    mass. Anchors are the plane scales.

    Returns:
        (plane, leaders): the plane of the resolved pulses and the leader field
    """
    if not 1.0 < p < math.inf:
        raise ParameterError(f"pulse leader fields need a finite p > 1, got {p}")
    if resolved_width < grid.scales[-1]:
        raise ResolutionError(
            f"resolved width {resolved_width:g} is below the smallest scale {grid.scales[-1]:g}", float(resolved_width)
        )
    widths = pulses.B ** (-1.0 / params.eta)
    wide = np.flatnonzero(widths >= resolved_width)
    narrow = np.flatnonzero(widths < resolved_width)
    positions, targets = padded_unit_grid(J, float(grid.scales[0]))
    targets = targets[::stride]
    plane = pulse_plane(params, pulses.subset(wide), psi, grid, positions, threads=threads, oversample=oversample)
    profile = isolated_pulse_mass(params, psi, p)
    extra = subgrid_pulse_mass(params, pulses.subset(narrow), profile, plane.scales, targets)
    logger.info(f"pulse leaders p={p}: {len(wide)} pulses in the plane, {len(narrow)} below width {resolved_width:g}")
    return plane, leader_field(plane, p, positions=targets, threads=threads, extra_mass=extra)
