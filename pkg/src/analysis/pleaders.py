import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.integrate import trapezoid
from scipy.ndimage import correlate1d, maximum_filter1d, minimum_filter1d

from src.analysis.errors import CoverageError, ParameterError
from src.analysis.tf_dataclasses import LeaderField, TimeScalePlane

logger = logging.getLogger(__name__)

ZERO_FLOOR_RATIO = 1e-6
MIN_NORM_OCTAVES = 6
MIN_DYADIC_LEVELS = 2
_REL_TOL = 1e-9


def _check_p(p: float, allow_inf: bool = False) -> None:
    if math.isnan(p) or p <= 1.0:
        raise ParameterError(f"p must be > 1, got {p}")
    if math.isinf(p) and not allow_inf:
        raise ParameterError("p must be finite here")


def _anchor_row(plane: TimeScalePlane, a: float) -> int:
    """First row whose scale is <= a."""
    scales = plane.scales
    if a < scales[-1] * (1.0 - _REL_TOL):
        raise CoverageError(f"scale {a:g} is below the finest resolved scale {scales[-1]:g}")
    if a > scales[0] * (1.0 + _REL_TOL):
        raise CoverageError(f"scale {a:g} is above the coarsest plane scale {scales[0]:g}")
    return int(np.flatnonzero(scales <= a * (1.0 + _REL_TOL))[0])


def _window(plane: TimeScalePlane, a: float, b: float) -> slice:
    positions = plane.positions
    tol = _REL_TOL * max(1.0, abs(b) + a)
    if b - a < positions[0] - tol or b + a > positions[-1] + tol:
        raise CoverageError(
            f"region [{b - a:g}, {b + a:g}] leaves the plane positions [{positions[0]:g}, {positions[-1]:g}]"
        )
    lo = int(np.searchsorted(positions, b - a - tol, side="left"))
    hi = int(np.searchsorted(positions, b + a + tol, side="right"))
    return slice(lo, hi)


def _region(plane: TimeScalePlane, a: float, b: float) -> tuple[np.ndarray, slice]:
    row = _anchor_row(plane, a)
    cols = _window(plane, a, b)
    if not plane.valid[row, cols].all():
        raise CoverageError(f"region around (a={a:g}, b={b:g}) meets the cone of influence")
    return plane.w[row:, cols], cols


def continuous_leader(plane: TimeScalePlane, a: float, b: float) -> float:
    """
    Continuous leader: max |W(s, t)| over s in [s_min, a], |t - b| <= a.

    s_min is the finest scale of the plane.
    """
    block, _ = _region(plane, a, b)
    value = float(np.max(np.abs(block))) if block.size else 0.0
    logger.debug(f"leader at (a={a:g}, b={b:g}) = {value:.4g}, s_min={plane.scales[-1]:g}")
    return value


def continuous_p_leader(plane: TimeScalePlane, p: float, a: float, b: float) -> float:
    """
    Continuous p-leader of the plane at (a, b).

    ((1/a) int_{|t-b|<=a} (int_{s_min}^{a} |W(s, t)|^2 ds/s)^(p/2) dt)^(1/p), the inner
    integral being a sum over the log-scale grid and the outer one a trapezoid in t.

    Args:
        plane: Time-scale plane
        p: Exponent in (1, inf); inf gives the sup-based leader
        a: Anchor scale
        b: Position

    Returns:
        Non-negative leader value
    """
    _check_p(p, allow_inf=True)
    if math.isinf(p):
        return continuous_leader(plane, a, b)
    block, cols = _region(plane, a, b)
    inner = np.sum(block ** 2, axis=0) * plane.scale_grid.log_step
    t = plane.positions[cols]
    if len(t) < 2:
        raise CoverageError(f"window at (a={a:g}, b={b:g}) holds fewer than 2 positions")
    outer = trapezoid(inner ** (p / 2.0), t)
    return float((outer / a) ** (1.0 / p))


def lp_norm_proxy(plane: TimeScalePlane, p: float) -> float:
    """N_f = (int (int |W(s, t)|^2 ds/s)^(p/2) dt)^(1/p) over the whole plane."""
    _check_p(p)
    octaves = plane.scale_grid.num_octaves
    if octaves < MIN_NORM_OCTAVES:
        raise CoverageError(f"plane spans {octaves:.2f} octaves, the norm proxy needs {MIN_NORM_OCTAVES}")
    if len(plane.positions) < 2:
        raise CoverageError("norm proxy needs at least 2 positions")
    inner = np.sum(plane.w ** 2, axis=0) * plane.scale_grid.log_step
    return float(trapezoid(inner ** (p / 2.0), plane.positions) ** (1.0 / p))


def _position_columns(plane: TimeScalePlane, positions: np.ndarray) -> np.ndarray:
    step = plane.position_step
    if step <= 0:
        raise CoverageError("leader fields need a uniform grid of at least 2 positions")
    raw = (positions - plane.positions[0]) / step
    cols = np.rint(raw)
    if np.any(np.abs(raw - cols) > 1e-6) or np.any(cols < 0) or np.any(cols >= len(plane.positions)):
        raise CoverageError("leader positions must lie on the plane position grid")
    return cols.astype(np.int64)


def leader_field(
    plane: TimeScalePlane,
    p: float,
    anchors=None,
    positions=None,
    threads: int | None = None,
    extra_mass=None,
) -> LeaderField:
    """
    Leaders at every (anchor, position) pair in one pass.

    Uses cumulative maxima or sums over scales and running window maxima or
    windowed trapezoid sums over positions; the values agree with
    continuous_leader and continuous_p_leader. Windows that leave the plane or
    meet the cone of influence are marked invalid with value 0.

    Args:
        plane: Time-scale plane
        p: Exponent in (1, inf]
        anchors: Anchor scales (defaults to the plane scales)
        positions: Positions on the plane grid (defaults to all)
        threads: Worker threads over anchors
        extra_mass: Optional (anchors, positions) array added to each window
            integral of S^(p/2) before the 1/a normalization, for content the
            plane does not resolve

    Returns:
        LeaderField
    """
    _check_p(p, allow_inf=True)
    anchors = plane.scales.copy() if anchors is None else np.asarray(anchors, dtype=float)
    positions = plane.positions.copy() if positions is None else np.asarray(positions, dtype=float)
    cols = _position_columns(plane, positions)
    rows = [_anchor_row(plane, a) for a in anchors]
    if extra_mass is not None:
        if math.isinf(p):
            raise ParameterError("extra_mass needs a finite p")
        extra_mass = np.asarray(extra_mass, dtype=float)
        if extra_mass.shape != (len(anchors), len(positions)):
            raise ParameterError(f"extra_mass shape {extra_mass.shape} does not match {(len(anchors), len(positions))}")

    step = plane.position_step
    n = len(plane.positions)
    masked = np.where(plane.valid, np.abs(plane.w), 0.0)
    if math.isinf(p):
        stacked = np.maximum.accumulate(masked[::-1], axis=0)[::-1]
    else:
        stacked = np.cumsum((masked ** 2)[::-1], axis=0)[::-1] * plane.scale_grid.log_step

    def one_anchor(item: tuple[int, float, int]) -> tuple[np.ndarray, np.ndarray]:
        index, a, row = item
        half = int(math.floor(a / step * (1.0 + _REL_TOL)))
        inside = (cols - half >= 0) & (cols + half <= n - 1)
        valid_row = minimum_filter1d(plane.valid[row].astype(np.int8), size=2 * half + 1, mode="constant", cval=0)
        ok = inside & (valid_row[cols] == 1)
        if math.isinf(p):
            window = maximum_filter1d(stacked[row], size=2 * half + 1, mode="constant", cval=0.0)
            values = window[cols]
        else:
            power = stacked[row] ** (p / 2.0)
            # each window summed on its own
            box = correlate1d(power, np.ones(2 * half + 1), mode="constant", cval=0.0)
            hi = np.clip(cols + half, 0, n - 1)
            lo = np.clip(cols - half, 0, n - 1)
            mass = step * (box[cols] - 0.5 * (power[lo] + power[hi]))
            if extra_mass is not None:
                mass = mass + extra_mass[index]
            values = mass / a
            values = values ** (1.0 / p)
        return np.where(ok, values, 0.0), ok

    workers = max(1, int(threads or 1))
    items = list(zip(range(len(anchors)), anchors, rows))
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_anchor, items))
    else:
        results = [one_anchor(item) for item in items]

    values = np.vstack([r[0] for r in results]) if results else np.zeros((0, len(positions)))
    valid = np.vstack([r[1] for r in results]) if results else np.zeros((0, len(positions)), dtype=bool)
    logger.debug(f"leader field p={p}: {len(anchors)} anchors x {len(positions)} positions")
    return LeaderField(
        p=p,
        anchors=anchors,
        positions=positions,
        values=values,
        valid=valid,
        s_min=float(plane.scales[-1]),
        zero_floor=ZERO_FLOOR_RATIO * plane.reference_amplitude,
    )


def _dyadic_blocks(plane: TimeScalePlane, j: int, k: int):
    """Yield (level offset, |W| values) over the dyadic cubes inside 3 lambda_{j,k}."""
    step = plane.position_step
    levels = []
    jp = j
    while True:
        row = plane.scale_grid.index_of(2.0 ** (-jp))
        if row is None:
            break
        levels.append((jp, row))
        jp += 1
    if len(levels) < MIN_DYADIC_LEVELS:
        raise CoverageError(
            f"dyadic proxy at j={j} needs scales 2^-{j} and 2^-{j + 1} in the grid, found {len(levels)} level(s)"
        )
    for jp, row in levels:
        factor = 2 ** (jp - j)
        kp = np.arange((k - 1) * factor, (k + 2) * factor)
        x = kp * 2.0 ** (-jp)
        raw = (x - plane.positions[0]) / step if step > 0 else np.full(len(x), np.nan)
        idx = np.rint(raw)
        if (
            not np.all(np.abs(raw - idx) <= 1e-6)
            or idx.min() < 0
            or idx.max() >= len(plane.positions)
        ):
            raise CoverageError(f"dyadic points of level {jp} around k={k} are not plane positions")
        idx = idx.astype(np.int64)
        if not plane.valid[row, idx].all():
            raise CoverageError(f"dyadic points of level {jp} around k={k} meet the cone of influence")
        yield jp - j, np.abs(plane.w[row, idx])


def discrete_p_leader_proxy(plane: TimeScalePlane, p: float, j: int, k: int) -> float:
    """
    Dyadic p-leader proxy at lambda_{j,k}.

    (sum over lambda' in 3 lambda, j' >= j of |W(2^-j', k' 2^-j')|^p 2^-(j'-j))^(1/p),
    with CWT samples at dyadic points standing in for orthonormal wavelet
    coefficients. A cross-check of scaling slopes, not the basis quantity.
    """
    _check_p(p)
    total = 0.0
    for offset, values in _dyadic_blocks(plane, j, k):
        total += float(np.sum(values ** p)) * 2.0 ** (-offset)
    return total ** (1.0 / p)


def discrete_leader_proxy(plane: TimeScalePlane, j: int, k: int) -> float:
    """Sup of |W(2^-j', k' 2^-j')| over the dyadic cubes inside 3 lambda_{j,k}."""
    return max(float(values.max()) for _, values in _dyadic_blocks(plane, j, k))
