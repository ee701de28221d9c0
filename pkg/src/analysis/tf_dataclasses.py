import copy
import math
from dataclasses import dataclass, fields
from enum import auto
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum
from typing import ClassVar, TypeVar

import numpy as np

from src.analysis.errors import ParameterError

Self = TypeVar("Self", bound="_SupportsMath")

RATIO_TOLERANCE = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class _SupportsMath:
    """Base class for dataclasses that combine linearly in their value arrays."""

    _linear_fields: ClassVar[tuple[str, ...]] = ()

    def __add__(self: Self, other: Self) -> Self:
        """
        Add two instances defined on the same grids.

        Linear fields are summed; every other field goes through _combine_field,
        which by default requires both sides to agree.

        Args:
            other: Another instance of the same type

        Returns:
            New instance with combined values
        """
        if not isinstance(other, type(self)):
            return NotImplemented

        combined_values = self._add_fields(other)
        return type(self)(**combined_values)

    def __sub__(self: Self, other: Self) -> Self:
        if not isinstance(other, type(self)):
            return NotImplemented
        return self + other * -1.0

    def __mul__(self: Self, other: int | float) -> Self:
        """
        Multiply the linear fields by a scalar.

        Args:
            other: Scalar multiplier

        Returns:
            New instance with scaled values
        """
        if not isinstance(other, (int, float)):
            return NotImplemented

        new_values = {
            f.name: self._scale_field(f.name, getattr(self, f.name), float(other))
            for f in fields(self)
            if f.init
        }
        return type(self)(**new_values)

    __rmul__ = __mul__

    def _add_fields(self, other) -> dict:
        combined_values = {}
        for f in fields(self):
            if not f.init:
                continue
            self_value = getattr(self, f.name)
            other_value = getattr(other, f.name)
            if f.name in self._linear_fields:
                combined_values[f.name] = self_value + other_value
            else:
                combined_values[f.name] = self._combine_field(f.name, self_value, other_value)
        return combined_values

    def _combine_field(self, name: str, self_value, other_value):
        """
        Combine a non-linear field of self and other.

        Override this method to customize how specific fields are combined.
        """
        same = (
            np.array_equal(self_value, other_value)
            if isinstance(self_value, np.ndarray)
            else self_value == other_value
        )
        if not same:
            raise ParameterError(f"cannot combine instances with different '{name}'")
        return copy.copy(self_value)

    def _scale_field(self, name: str, value, factor: float):
        if name in self._linear_fields:
            return value * factor
        return copy.copy(value)


@dataclass(frozen=True)
class SampledSignal:
    """Uniformly sampled real function: values[i] = f(origin + i * step)."""

    origin: float
    step: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        if not self.step > 0:
            raise ParameterError(f"step must be positive, got {self.step}")
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ParameterError("a sampled signal needs at least 2 samples")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("sampled signal values must be finite")

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.step * np.arange(len(self.values))

    @property
    def domain(self) -> tuple[float, float]:
        return self.origin, self.origin + self.step * (len(self.values) - 1)

    @classmethod
    def from_function(cls, func, start: float, stop: float, step: float) -> "SampledSignal":
        num = int(round((stop - start) / step)) + 1
        x = start + step * np.arange(num)
        return cls(start, step, func(x))

    def __mul__(self, other: int | float) -> "SampledSignal":
        return SampledSignal(self.origin, self.step, self.values * other)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ScaleGrid:
    """Log-spaced, strictly decreasing scales."""

    scales: np.ndarray
    scales_per_octave: int = 8

    def __post_init__(self):
        object.__setattr__(self, "scales", _frozen_array(self.scales))
        if self.scales.ndim != 1 or len(self.scales) == 0:
            raise ParameterError("scale grid is empty")
        if self.scales_per_octave < 1:
            raise ParameterError(f"scales_per_octave must be >= 1, got {self.scales_per_octave}")
        if np.any(self.scales <= 0):
            raise ParameterError("scales must be positive")
        if len(self.scales) > 1:
            ratios = self.scales[:-1] / self.scales[1:]
            if np.any(ratios <= 1.0):
                raise ParameterError("scales must be strictly decreasing")
            if np.max(np.abs(ratios / ratios[0] - 1.0)) > RATIO_TOLERANCE:
                raise ParameterError("scales are not log-spaced")

    @classmethod
    def dyadic(cls, a_max: float, a_min: float, scales_per_octave: int = 8) -> "ScaleGrid":
        """Scales a_max * 2^(-i / scales_per_octave) down to a_min."""
        if not 0 < a_min <= a_max:
            raise ParameterError(f"need 0 < a_min <= a_max, got ({a_min}, {a_max})")
        count = int(round(math.log2(a_max / a_min) * scales_per_octave)) + 1
        exponents = np.arange(count) / scales_per_octave
        return cls(a_max * np.exp2(-exponents), scales_per_octave)

    @property
    def log_step(self) -> float:
        """ln of the ratio between consecutive scales."""
        if len(self.scales) > 1:
            return float(math.log(self.scales[0] / self.scales[1]))
        return math.log(2.0) / self.scales_per_octave

    @property
    def num_octaves(self) -> float:
        return float(math.log2(self.scales[0] / self.scales[-1]))

    def index_of(self, a: float, rtol: float = 1e-9) -> int | None:
        hits = np.flatnonzero(np.abs(self.scales - a) <= rtol * a)
        return int(hits[0]) if len(hits) else None


def _uniform_step(positions: np.ndarray) -> float:
    if len(positions) < 2:
        return 0.0
    diffs = np.diff(positions)
    step = float(diffs.mean())
    if step <= 0 or np.max(np.abs(diffs - step)) > 1e-9 * max(step, abs(positions).max()):
        raise ParameterError("positions must form a uniform increasing grid")
    return step


@dataclass(frozen=True)
class TimeScalePlane(_SupportsMath):
    """CWT values w[i, j] = W(scales[i], positions[j]) with a cone-of-influence mask."""

    _linear_fields: ClassVar[tuple[str, ...]] = ("w",)

    scale_grid: ScaleGrid
    positions: np.ndarray
    w: np.ndarray
    valid: np.ndarray = None
    reference_amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen_array(self.positions))
        object.__setattr__(self, "w", _frozen_array(self.w))
        if self.valid is None:
            object.__setattr__(self, "valid", np.ones(self.w.shape, dtype=bool))
        object.__setattr__(self, "valid", _frozen_array(self.valid, dtype=bool))

        shape = (len(self.scale_grid.scales), len(self.positions))
        if self.w.shape != shape or self.valid.shape != shape:
            raise ParameterError(f"plane shape {self.w.shape} does not match grids {shape}")
        if not np.all(np.isfinite(self.w)):
            raise ParameterError("plane contains non-finite values")

    @property
    def scales(self) -> np.ndarray:
        return self.scale_grid.scales

    @property
    def position_step(self) -> float:
        """Step of the position grid; only leader and reconstruction integrals need it uniform."""
        return _uniform_step(self.positions)

    def _combine_field(self, name: str, self_value, other_value):
        if name == "valid":
            return self_value & other_value
        if name == "reference_amplitude":
            return self_value + other_value
        if name == "scale_grid":
            if not np.array_equal(self_value.scales, other_value.scales):
                raise ParameterError("cannot combine planes on different scale grids")
            return self_value
        return super()._combine_field(name, self_value, other_value)

    def _scale_field(self, name: str, value, factor: float):
        if name == "reference_amplitude":
            return value * abs(factor)
        return super()._scale_field(name, value, factor)


@dataclass(frozen=True)
class LeaderField:
    """Leaders L^(p)(anchors[i], positions[j]); p = inf for sup-based leaders."""

    p: float
    anchors: np.ndarray
    positions: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    s_min: float
    zero_floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "anchors", _frozen_array(self.anchors))
        object.__setattr__(self, "positions", _frozen_array(self.positions))
        object.__setattr__(self, "values", _frozen_array(self.values))
        object.__setattr__(self, "valid", _frozen_array(self.valid, dtype=bool))
        if not self.p > 1:
            raise ParameterError(f"leader exponent p must be > 1, got {self.p}")
        shape = (len(self.anchors), len(self.positions))
        if self.values.shape != shape or self.valid.shape != shape:
            raise ParameterError(f"leader values {self.values.shape} do not match grids {shape}")
        if np.any(self.values < 0):
            raise ParameterError("leader values must be non-negative")

    @property
    def is_sup(self) -> bool:
        return math.isinf(self.p)

    def column(self, x0: float) -> int:
        j = int(np.argmin(np.abs(self.positions - x0)))
        tol = 1e-9 * max(1.0, abs(x0))
        if len(self.positions) > 1:
            tol = max(tol, 1e-6 * float(np.min(np.diff(self.positions))))
        if abs(self.positions[j] - x0) > tol:
            raise ParameterError(f"x0={x0:g} is not a position of the leader field")
        return j


class ExponentStatus(StrEnum):
    OK = auto()
    LOCALLY_POLYNOMIAL = auto()
    INSUFFICIENT_SCALES = auto()


@dataclass(frozen=True)
class ExponentEstimate:
    x0: float
    p: float
    slope: float
    intercept: float
    scale_range: tuple[float, float]
    residual: float
    num_scales: int
    num_zeros: int = 0
    status: ExponentStatus = ExponentStatus.OK

    def __post_init__(self):
        a_min, a_max = self.scale_range
        if not a_min < a_max:
            raise ParameterError(f"scale range ({a_min:g}, {a_max:g}) is empty")
        if self.status == ExponentStatus.OK:
            if self.num_scales < 4:
                raise ParameterError(f"an estimate needs >= 4 scales, got {self.num_scales}")
            if not math.isfinite(self.slope):
                raise ParameterError("estimated slope is not finite")

    @property
    def is_sentinel(self) -> bool:
        return self.status != ExponentStatus.OK

    @classmethod
    def locally_polynomial(cls, x0: float, p: float, scale_range, num_zeros: int) -> "ExponentEstimate":
        return cls(x0, p, math.inf, math.nan, scale_range, 0.0, 0, num_zeros,
                   ExponentStatus.LOCALLY_POLYNOMIAL)

    @classmethod
    def failed(cls, x0: float, p: float, scale_range, num_scales: int = 0, num_zeros: int = 0) -> "ExponentEstimate":
        return cls(x0, p, math.nan, math.nan, scale_range, math.nan, num_scales, num_zeros,
                   ExponentStatus.INSUFFICIENT_SCALES)


@dataclass(frozen=True)
class ExponentField:
    positions: np.ndarray
    estimates: tuple[ExponentEstimate, ...]
    p: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen_array(self.positions))
        object.__setattr__(self, "estimates", tuple(self.estimates))
        if len(self.positions) != len(self.estimates):
            raise ParameterError("one estimate per position is required")
        if len(self.positions) > 1 and np.any(np.diff(self.positions) <= 0):
            raise ParameterError("exponent field positions must be strictly increasing")

    @property
    def slopes(self) -> np.ndarray:
        return np.array([e.slope for e in self.estimates], dtype=float)

    def finite_slopes(self) -> np.ndarray:
        slopes = self.slopes
        return slopes[np.isfinite(slopes)]


@dataclass(frozen=True)
class SpectrumEstimate:
    bin_edges: np.ndarray
    counts: np.ndarray
    dims: np.ndarray
    grid_scale_J: int
    num_points: int

    def __post_init__(self):
        object.__setattr__(self, "bin_edges", _frozen_array(self.bin_edges))
        object.__setattr__(self, "counts", _frozen_array(self.counts, dtype=np.int64))
        object.__setattr__(self, "dims", _frozen_array(self.dims))
        if len(self.bin_edges) != len(self.counts) + 1 or len(self.dims) != len(self.counts):
            raise ParameterError("spectrum bins, counts and dims are inconsistent")
        if int(self.counts.sum()) != self.num_points:
            raise ParameterError("spectrum counts do not sum to num_points")
        if np.any(self.dims > 1.0 + 1.0 / self.grid_scale_J + 1e-12):
            raise ParameterError("coarse-grained dimension above 1 + 1/J")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def nonempty(self) -> np.ndarray:
        return self.counts > 0
