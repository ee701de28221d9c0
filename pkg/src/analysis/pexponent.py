import logging

import numpy as np
from scipy.stats import linregress

from src.analysis.errors import InsufficientScalesError, ParameterError, PLeaderError
from src.analysis.tf_dataclasses import (
    ExponentEstimate,
    ExponentField,
    ExponentStatus,
    LeaderField,
    TimeScalePlane,
)
from src.analysis.pleaders import leader_field

logger = logging.getLogger(__name__)

MIN_SCALES = 4
_REL_TOL = 1e-9


def default_pulse_scale_range(j_max: int) -> tuple[float, float]:
    """Scale range [2^-(j_max-2), 2^-2] that avoids truncation effects at both ends."""
    return 2.0 ** (-(j_max - 2)), 2.0 ** -2


def default_pulse_p_scale_range(J: int) -> tuple[float, float]:
    """
    p-leader regression range [2^-(J-4), 2^-max(2, J-10)] for pulse sums on 2^J points.

    The finest anchor spans 16 grid steps; it is also the width below which
    pulses are handled as isolated mass by pulse_leader_field.
    """
    a_min, a_max = 2.0 ** (-(J - 4)), 2.0 ** -max(2, J - 10)
    if not a_min < a_max:
        raise ParameterError(f"J={J} leaves no p-leader scale range, need J >= 7")
    return a_min, a_max


def _anchors_in_range(leaders: LeaderField, scale_range) -> np.ndarray:
    if scale_range is None:
        return np.ones(len(leaders.anchors), dtype=bool)
    a_min, a_max = scale_range
    if not a_min < a_max:
        raise ParameterError(f"scale range ({a_min:g}, {a_max:g}) is empty")
    return (leaders.anchors >= a_min * (1 - _REL_TOL)) & (leaders.anchors <= a_max * (1 + _REL_TOL))


def estimate_p_exponent(leaders: LeaderField, x0: float, scale_range=None) -> ExponentEstimate:
    """
    Estimate the p-exponent at x0 as the log-log slope of leader decay.

    The liminf of log L(a, x0) / log a is approximated by the least-squares
    slope of log L against log a over scale_range. Leaders at or below the
    field's zero floor are dropped and counted.

    Args:
        leaders: LeaderField holding x0 among its positions
        x0: Position
        scale_range: (a_min, a_max); defaults to all anchors

    Returns:
        ExponentEstimate; slope +inf with status LOCALLY_POLYNOMIAL when every
        leader in range vanishes
    """
    col = leaders.column(x0)
    in_range = _anchors_in_range(leaders, scale_range) & leaders.valid[:, col]
    anchors = leaders.anchors[in_range]
    values = leaders.values[in_range, col]
    if len(anchors) < MIN_SCALES:
        raise InsufficientScalesError(
            f"{len(anchors)} usable anchor scales at x0={x0:g}, need {MIN_SCALES}"
        )
    used_range = (float(anchors.min()), float(anchors.max()))

    nonzero = values > leaders.zero_floor
    num_zeros = int((~nonzero).sum())
    if not nonzero.any():
        return ExponentEstimate.locally_polynomial(x0, leaders.p, used_range, num_zeros)
    if nonzero.sum() < MIN_SCALES:
        raise InsufficientScalesError(
            f"only {int(nonzero.sum())} non-zero leaders at x0={x0:g}, need {MIN_SCALES}"
        )

    log_a = np.log(anchors[nonzero])
    log_l = np.log(values[nonzero])
    fit = linregress(log_a, log_l)
    residual = float(np.sqrt(np.mean((log_l - (fit.intercept + fit.slope * log_a)) ** 2)))
    return ExponentEstimate(
        x0=float(x0),
        p=leaders.p,
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        scale_range=used_range,
        residual=residual,
        num_scales=int(nonzero.sum()),
        num_zeros=num_zeros,
    )


def estimate_holder_exponent(leaders: LeaderField, x0: float, scale_range=None) -> ExponentEstimate:
    """Hölder exponent estimate from sup-based leaders."""
    if not leaders.is_sup:
        raise ParameterError(f"Hölder exponents need p = inf leaders, got p={leaders.p}")
    return estimate_p_exponent(leaders, x0, scale_range)


def exponent_field(
    source: TimeScalePlane | LeaderField,
    p: float | None = None,
    positions=None,
    scale_range=None,
    threads: int | None = None,
) -> ExponentField:
    """
    Exponent estimates at every requested position.

    Args:
        source: A plane (leaders are computed here) or a ready LeaderField
        p: Leader exponent, required for a plane source
        positions: Positions to estimate at (default: all)
        scale_range: Regression range (a_min, a_max)
        threads: Worker threads for the leader computation

    Returns:
        ExponentField; per-position failures become INSUFFICIENT_SCALES
        sentinels and the batch continues
    """
    if isinstance(source, LeaderField):
        leaders = source
    else:
        if p is None:
            raise ParameterError("p is required to estimate exponents from a plane")
        scales = source.scales
        keep = np.ones(len(scales), dtype=bool)
        if scale_range is not None:
            keep = (scales >= scale_range[0] * (1 - _REL_TOL)) & (scales <= scale_range[1] * (1 + _REL_TOL))
        leaders = leader_field(source, p, anchors=scales[keep], positions=positions, threads=threads)
    positions = leaders.positions if positions is None else np.asarray(positions, dtype=float)
    estimates = []
    failures = 0
    fallback_range = scale_range or (float(leaders.anchors.min()), float(leaders.anchors.max()))
    if not fallback_range[0] < fallback_range[1]:
        fallback_range = (fallback_range[0], fallback_range[0] * 2.0)
    for x0 in positions:
        try:
            estimates.append(estimate_p_exponent(leaders, float(x0), scale_range))
        except PLeaderError as e:
            failures += 1
            logger.debug(f"exponent at x0={x0:g} failed: {e}")
            estimates.append(ExponentEstimate.failed(float(x0), leaders.p, fallback_range))
    if failures:
        logger.warning(f"{failures} of {len(positions)} positions fell back to sentinels")

    counts = {status: 0 for status in ExponentStatus}
    for estimate in estimates:
        counts[estimate.status] += 1
    logger.info(f"exponent field p={leaders.p}: {dict(counts)}")
    return ExponentField(positions, tuple(estimates), leaders.p)
