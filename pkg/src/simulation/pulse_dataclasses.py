import math
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from backports.strenum import StrEnum

import numpy as np

from src.analysis.errors import ParameterError
from src.analysis.wavelet_kit import PiecewisePolynomial

MAX_SEED = 2**64


class PulseShape(StrEnum):
    """Lipschitz pulse shapes supported on [-1, 1]."""
    ODD_BUMP = "odd_bump"  # t(1 - t^2)^2
    EVEN_BUMP = "even_bump"  # (1 - t^2)^2
    HAT = "hat"  # 1 - |t|


@dataclass(frozen=True)
class PulseProcessParams:
    """Parameters of the sum of random pulses F_{alpha, eta} on [0, 1]."""
    alpha: float
    eta: float
    pulse: PiecewisePolynomial
    j_max: int = 16
    seed: int = 0
    domain: tuple[float, float] = (0.0, 1.0)
    lipschitz_constant: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.alpha == 0 or not math.isfinite(self.alpha):
            raise ParameterError(f"alpha must be finite and non-zero, got {self.alpha}")
        if not 0.0 < self.eta < 1.0:
            raise ParameterError(f"eta must lie in (0, 1), got {self.eta}")
        if self.alpha < 0 and not self.eta - 1.0 < self.alpha * self.eta:
            raise ParameterError(
                f"alpha < 0 requires eta - 1 < alpha * eta, got {self.eta - 1:.4g} >= {self.alpha * self.eta:.4g}"
            )
        if self.j_max < 1:
            raise ParameterError(f"j_max must be >= 1, got {self.j_max}")
        if not 0 <= self.seed < MAX_SEED:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if tuple(self.domain) != (0.0, 1.0):
            raise ParameterError(f"the pulse process lives on [0, 1], got {self.domain}")

        lo, hi = self.pulse.support
        if lo < -1.0 - 1e-12 or hi > 1.0 + 1e-12:
            raise ParameterError(f"pulse support [{lo:g}, {hi:g}] is not inside [-1, 1]")
        if self.pulse.sup_norm() == 0.0:
            raise ParameterError("pulse is identically zero")
        lipschitz = self.pulse.derivative().sup_norm()
        if not math.isfinite(lipschitz):
            raise ParameterError("pulse is not Lipschitz")
        object.__setattr__(self, "lipschitz_constant", lipschitz)

    @property
    def truncation_width(self) -> float:
        """Pulses are kept while B_n^(1/eta) < 2^j_max."""
        return 2.0 ** self.j_max


@dataclass(frozen=True)
class PulseSet:
    """Realization {(C_n, B_n, X_n)} ordered by B_n."""
    C: np.ndarray
    B: np.ndarray
    X: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        for name in ("C", "B", "X"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not len(self.C) == len(self.B) == len(self.X):
            raise ParameterError("C, B and X must have the same length")
        if np.any(self.C <= 0):
            raise ParameterError("C_n must be positive")
        if np.any(self.B <= 0) or np.any(np.diff(self.B) <= 0):
            raise ParameterError("B_n must be positive and strictly increasing")
        if np.any((self.X < 0) | (self.X > 1)):
            raise ParameterError("X_n must lie in [0, 1]")

    @property
    def count(self) -> int:
        return len(self.B)

    @property
    def triples(self) -> np.ndarray:
        return np.column_stack([self.C, self.B, self.X])

    def check_truncation(self, eta: float, j_max: int) -> None:
        if self.count and self.B[-1] ** (1.0 / eta) >= 2.0 ** j_max:
            raise ParameterError(f"pulse set exceeds the truncation 2^{j_max}")

    def subset(self, indices) -> "PulseSet":
        indices = np.sort(np.asarray(indices, dtype=np.int64))
        return PulseSet(self.C[indices], self.B[indices], self.X[indices], self.seed)


@dataclass(frozen=True)
class BandIndex:
    """Pulses with 2^(j-1) <= B_n^(1/eta) < 2^j (j = 0: B_n^(1/eta) < 1)."""
    j: int
    members: np.ndarray

    def __post_init__(self):
        if self.j < 0:
            raise ParameterError(f"band index must be >= 0, got {self.j}")
        object.__setattr__(self, "members", np.asarray(self.members, dtype=np.int64))

    @property
    def count(self) -> int:
        return len(self.members)
