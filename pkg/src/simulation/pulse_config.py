import logging

from src.analysis.errors import ParameterError
from src.analysis.wavelet_kit import PiecewisePolynomial
from src.simulation.pulse_dataclasses import PulseShape

logger = logging.getLogger(__name__)


def initialize_pulse_shapes() -> dict[PulseShape, PiecewisePolynomial]:
    """Initialize the pulse shapes, all Lipschitz with support [-1, 1]."""
    shapes = {}

    # (breakpoints, monomial coefficients per segment, smoothness)
    pulse_pieces = {
        PulseShape.ODD_BUMP: ((-1.0, 1.0), ((0.0, 1.0, 0.0, -2.0, 0.0, 1.0),), 1),
        PulseShape.EVEN_BUMP: ((-1.0, 1.0), ((1.0, 0.0, -2.0, 0.0, 1.0),), 1),
        PulseShape.HAT: ((-1.0, 0.0, 1.0), ((1.0, 1.0), (1.0, -1.0)), 0),
    }

    for shape, (breakpoints, segments, smoothness) in pulse_pieces.items():
        shapes[shape] = PiecewisePolynomial.from_monomials(breakpoints, segments, smoothness)

    return shapes


PULSE_SHAPE_MAP = initialize_pulse_shapes()


def get_pulse_shape(name: str) -> PiecewisePolynomial:
    """
    Look up a pulse shape by name.

    Args:
        name: One of the PulseShape values

    Returns:
        The pulse as a PiecewisePolynomial
    """
    try:
        shape = PulseShape(name)
    except ValueError:
        logger.warning(f"Invalid pulse shape: {name}")
        raise ParameterError(
            f"unknown pulse shape '{name}', expected one of {[s.value for s in PulseShape]}"
        ) from None
    return PULSE_SHAPE_MAP[shape]
