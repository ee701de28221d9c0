import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from numpy.polynomial import legendre as nleg
from scipy.integrate import trapezoid
from scipy.special import eval_gegenbauer

from src.analysis.errors import (
    DegenerateMomentSystemError,
    NonConvergentQuadratureError,
    ParameterError,
)

logger = logging.getLogger(__name__)

MOMENT_TOLERANCE = 1e-8
CROSS_CORRELATION_FLOOR = 1e-6
CONTINUITY_TOLERANCE = 1e-9
FOURIER_SWITCH = 32.0
GAUSS_NODES_PER_SEGMENT = 64
XI_MIN = 1e-6
XI_MAX = 1e6
ENDPOINT_DECAY = 1e-8


def _trim(coeffs) -> tuple[float, ...]:
    coeffs = [float(c) for c in coeffs]
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()
    return tuple(coeffs)


def _gauss_nodes(degree: int) -> tuple[np.ndarray, np.ndarray]:
    # exact for polynomials up to the given degree
    return nleg.leggauss(degree // 2 + 1)


@dataclass(frozen=True)
class PiecewisePolynomial:
    """
    Compactly supported piecewise polynomial.

    Segment i covers [breakpoints[i], breakpoints[i + 1]] and stores Legendre
    coefficients in the local variable t = (2x - x0 - x1) / (x1 - x0), lowest
    degree first. The function is zero outside (breakpoints[0], breakpoints[-1]).
    """

    breakpoints: tuple[float, ...]
    segments: tuple[tuple[float, ...], ...]
    smoothness: int = 0  # -1: pieces may jump at the breakpoints

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "segments", tuple(_trim(s) for s in self.segments))

        if len(self.breakpoints) < 2:
            raise ParameterError("a piecewise polynomial needs at least two breakpoints")
        if len(self.segments) != len(self.breakpoints) - 1:
            raise ParameterError(
                f"{len(self.segments)} segments do not match {len(self.breakpoints)} breakpoints"
            )
        if any(b1 <= b0 for b0, b1 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ParameterError("breakpoints must be strictly increasing")
        if self.smoothness < -1:
            raise ParameterError(f"smoothness must be >= -1, got {self.smoothness}")
        pieces = tuple(
            Legendre(coeffs, domain=[x0, x1])
            for (x0, x1), coeffs in zip(zip(self.breakpoints, self.breakpoints[1:]), self.segments)
        )
        object.__setattr__(self, "_pieces", pieces)
        self._check_continuity()

    @classmethod
    def from_monomials(cls, breakpoints, segments, smoothness: int = 0) -> "PiecewisePolynomial":
        """Build from monomial coefficients in absolute x, lowest degree first."""
        breakpoints = tuple(float(b) for b in breakpoints)
        if len(segments) != len(breakpoints) - 1:
            raise ParameterError(f"{len(segments)} segments do not match {len(breakpoints)} breakpoints")
        converted = tuple(
            tuple(Polynomial(coeffs).convert(domain=[x0, x1], kind=Legendre).coef)
            for (x0, x1), coeffs in zip(zip(breakpoints, breakpoints[1:]), segments)
        )
        return cls(breakpoints, converted, smoothness)

    @property
    def pieces(self) -> tuple[Legendre, ...]:
        return self._pieces

    @property
    def support(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    @property
    def degree(self) -> int:
        return max(len(s) for s in self.segments) - 1

    def _one_sided(self, i: int, order: int) -> tuple[float, float, float, float]:
        # values and round-off sensitivities of the order-th derivative left and right of breakpoint i
        x = self.breakpoints[i]
        out = []
        for j in (i - 1, i):
            if 0 <= j < len(self._pieces):
                piece = self._pieces[j]
                magnitude = Legendre(np.abs(piece.coef), domain=piece.domain)
                edge = piece.domain[1]
                out += [float(piece.deriv(order)(x)), float(magnitude.deriv(order)(edge))]
            else:
                out += [0.0, 0.0]
        return out[0], out[1], out[2], out[3]

    def _check_continuity(self) -> None:
        if all(c == 0.0 for s in self.segments for c in s):
            return
        for order in range(self.smoothness + 1):
            for i, x in enumerate(self.breakpoints):
                left, left_scale, right, right_scale = self._one_sided(i, order)
                jump = abs(left - right)
                if jump > CONTINUITY_TOLERANCE * max(left_scale, right_scale):
                    raise ParameterError(f"derivative of order {order} jumps by {jump:.3e} at x={x:g}")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        lo, hi = self.support
        inside = (x > lo) & (x < hi)
        if not inside.any():
            return out
        if len(self._pieces) == 1:
            out[inside] = self._pieces[0](x[inside])
            return out
        xs = x[inside]
        idx = np.clip(np.searchsorted(self.breakpoints, xs, side="right") - 1, 0, len(self._pieces) - 1)
        values = np.empty_like(xs)
        for i, piece in enumerate(self._pieces):
            sel = idx == i
            if sel.any():
                values[sel] = piece(xs[sel])
        out[inside] = values
        return out

    def scaled(self, factor: float) -> "PiecewisePolynomial":
        return PiecewisePolynomial(
            self.breakpoints,
            tuple(tuple(c * factor for c in s) for s in self.segments),
            self.smoothness,
        )

    def derivative(self) -> "PiecewisePolynomial":
        return PiecewisePolynomial(
            self.breakpoints,
            tuple(tuple(p.deriv().coef) if len(p.coef) > 1 else (0.0,) for p in self._pieces),
            self.smoothness - 1,
        )

    def affine(self, shift: float, dilation: float) -> "PiecewisePolynomial":
        """Return x -> self((x - shift) / dilation)."""
        if dilation <= 0:
            raise ParameterError(f"dilation must be positive, got {dilation}")
        # local coordinates are invariant, only the breakpoints move
        breakpoints = tuple(shift + dilation * b for b in self.breakpoints)
        return PiecewisePolynomial(breakpoints, self.segments, self.smoothness)

    def integral(self, weight=(1.0,)) -> float:
        """Integral of weight(x) * self(x), weight given as monomial coefficients in x."""
        nodes, weights = _gauss_nodes(self.degree + len(weight) - 1)
        total = 0.0
        for (x0, x1), piece in zip(zip(self.breakpoints, self.breakpoints[1:]), self._pieces):
            half = 0.5 * (x1 - x0)
            x = x0 + half * (nodes + 1.0)
            total += half * float(np.dot(weights, piece(x) * Polynomial(weight)(x)))
        return total

    def moment(self, m: int) -> float:
        weight = (0.0,) * m + (1.0,)
        return self.integral(weight)

    def inner(self, other: "PiecewisePolynomial") -> float:
        """L2 inner product by Gauss-Legendre quadrature over the merged breakpoints."""
        lo = max(self.support[0], other.support[0])
        hi = min(self.support[1], other.support[1])
        if hi <= lo:
            return 0.0
        cuts = sorted({b for b in self.breakpoints + other.breakpoints if lo <= b <= hi} | {lo, hi})
        nodes, weights = _gauss_nodes(self.degree + other.degree)
        total = 0.0
        for x0, x1 in zip(cuts, cuts[1:]):
            half = 0.5 * (x1 - x0)
            x = x0 + half * (nodes + 1.0)
            total += half * float(np.dot(weights, self(x) * other(x)))
        return total

    def l2_norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def sup_norm(self, num_points: int = 4001) -> float:
        lo, hi = self.support
        x = np.concatenate([np.linspace(lo, hi, num_points), np.asarray(self.breakpoints)])
        x = np.clip(x, np.nextafter(lo, hi), np.nextafter(hi, lo))
        return float(np.max(np.abs(self(x))))

    def to_dict(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "segments": [list(s) for s in self.segments],
            "basis": "legendre",
            "smoothness": self.smoothness,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PiecewisePolynomial":
        breakpoints = tuple(data["breakpoints"])
        segments = tuple(tuple(s) for s in data["segments"])
        smoothness = int(data.get("smoothness", 0))
        basis = data.get("basis", "legendre")
        if basis == "monomial":
            return cls.from_monomials(breakpoints, segments, smoothness)
        if basis != "legendre":
            raise ParameterError(f"unknown polynomial basis {basis!r}")
        return cls(breakpoints, segments, smoothness)


def _certify_support(shape: PiecewisePolynomial, name: str) -> None:
    lo, hi = shape.support
    if lo < -1.0 - 1e-12 or hi > 1.0 + 1e-12:
        raise ParameterError(f"{name} support [{lo:g}, {hi:g}] is not inside [-1, 1]")


def _is_even(shape: PiecewisePolynomial) -> bool:
    x = np.linspace(0.0, 1.0, 1001)
    scale = max(shape.sup_norm(), 1e-300)
    return bool(np.max(np.abs(shape(x) - shape(-x))) <= 1e-12 * scale)


@dataclass(frozen=True)
class AnalyzingWavelet:
    """Even, compactly supported analyzing wavelet with certified vanishing moments."""

    shape: PiecewisePolynomial
    vanishing_moments: int
    smoothness: int
    is_even: bool = True

    def __post_init__(self):
        _certify_support(self.shape, "wavelet")
        if self.vanishing_moments < 2:
            raise ParameterError(f"vanishing_moments must be >= 2, got {self.vanishing_moments}")
        if self.smoothness < self.vanishing_moments - 1:
            raise ParameterError(
                f"smoothness {self.smoothness} < vanishing_moments - 1 = {self.vanishing_moments - 1}"
            )
        norm = self.shape.l2_norm()
        if norm <= 0.0:
            raise ParameterError("wavelet is identically zero")
        tol = MOMENT_TOLERANCE * max(1.0, norm)
        for m in range(self.vanishing_moments):
            value = self.shape.moment(m)
            if abs(value) >= tol:
                raise ParameterError(f"moment {m} = {value:.3e} does not vanish")
        if self.is_even and not _is_even(self.shape):
            raise ParameterError("wavelet is flagged even but psi(-x) != psi(x)")

    def __call__(self, x) -> np.ndarray:
        return self.shape(x)

    def scaled(self, factor: float) -> "AnalyzingWavelet":
        return AnalyzingWavelet(
            self.shape.scaled(factor), self.vanishing_moments, self.smoothness, self.is_even
        )

    def to_dict(self) -> dict:
        return {
            **self.shape.to_dict(),
            "vanishing_moments": self.vanishing_moments,
            "smoothness": self.smoothness,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnalyzingWavelet":
        shape = PiecewisePolynomial.from_dict(data)
        return cls(shape, int(data["vanishing_moments"]), int(data["smoothness"]))


@dataclass(frozen=True)
class ReconstructionWavelet:
    shape: PiecewisePolynomial
    smoothness: int
    vanishing_moments: int = 1

    def __post_init__(self):
        _certify_support(self.shape, "reconstruction wavelet")
        if self.vanishing_moments < 1:
            raise ParameterError("reconstruction wavelet needs at least one vanishing moment")
        tol = MOMENT_TOLERANCE * max(1.0, self.shape.l2_norm())
        for m in range(self.vanishing_moments):
            if abs(self.shape.moment(m)) >= tol:
                raise ParameterError(f"reconstruction wavelet moment {m} does not vanish")

    def __call__(self, x) -> np.ndarray:
        return self.shape(x)


@dataclass(frozen=True)
class AdmissibilityConstant:
    c_psi: float
    quadrature_error_estimate: float = 0.0
    num_points: int = field(default=0, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.c_psi) or self.c_psi <= 0.0:
            raise ParameterError(f"admissibility constant must be positive and finite, got {self.c_psi}")


def _gegenbauer_bump(num_constraints: int, smoothness: int) -> np.ndarray:
    """
    Legendre coefficients of (1 - x^2)^(smoothness + 1) * C_{2n}^(smoothness + 3/2)(x) on [-1, 1].

    This is the combination of the bump powers (1 - x^2)^k, k = smoothness + 1 ...
    smoothness + 1 + n, whose even moments 0 .. 2n - 2 vanish: the Gegenbauer
    polynomial of order smoothness + 3/2 is orthogonal to every polynomial of lower
    degree under the weight (1 - x^2)^(smoothness + 1).
    """
    order = 2 * num_constraints
    degree = 2 * (smoothness + 1) + order
    nodes, weights = nleg.leggauss(degree + 1)
    values = (1.0 - nodes**2) ** (smoothness + 1) * eval_gegenbauer(order, smoothness + 1.5, nodes)
    vander = nleg.legvander(nodes, degree)
    coeffs = (vander.T @ (weights * values)) * (2.0 * np.arange(degree + 1) + 1.0) / 2.0
    # exact even polynomial: drop odd-degree round-off
    coeffs[1::2] = 0.0
    return coeffs


def build_even_wavelet(num_vanishing: int, smoothness: int) -> AnalyzingWavelet:
    """
    Build an even wavelet on [-1, 1] as a combination of bump powers (1 - x^2)^k.

    Odd moments vanish by symmetry, so only the even moments below num_vanishing
    constrain the combination. Powers start at smoothness + 1 so the result is
    C^smoothness at the support ends and no smoother; the solution of the moment
    system is taken in its Gegenbauer closed form and stored in the Legendre basis.

    Args:
        num_vanishing: Number of vanishing moments (moments 0..num_vanishing-1 vanish)
        smoothness: Required smoothness order

    Returns:
        Unit L2-norm AnalyzingWavelet
    """
    if num_vanishing < 2:
        raise ParameterError(f"num_vanishing must be >= 2, got {num_vanishing}")
    if smoothness < num_vanishing - 1:
        raise ParameterError(
            f"smoothness must be >= num_vanishing - 1 = {num_vanishing - 1}, got {smoothness}"
        )

    num_constraints = (num_vanishing + 1) // 2
    coeffs = _gegenbauer_bump(num_constraints, smoothness)
    # Legendre Parseval on [-1, 1]
    norm = math.sqrt(float(np.sum(coeffs**2 * 2.0 / (2.0 * np.arange(len(coeffs)) + 1.0))))
    if not np.all(np.isfinite(coeffs)) or not math.isfinite(norm) or norm == 0.0:
        raise DegenerateMomentSystemError(
            f"bump combination for num_vanishing={num_vanishing}, smoothness={smoothness} is not finite"
        )
    shape = PiecewisePolynomial((-1.0, 1.0), (tuple(coeffs / norm),), smoothness)
    logger.debug(f"built even wavelet of degree {shape.degree}, raw norm {norm:.4g}")
    return AnalyzingWavelet(shape, num_vanishing, smoothness, is_even=True)


def moment(w: AnalyzingWavelet | ReconstructionWavelet, m: int) -> float:
    """m-th moment of a wavelet by per-segment Gauss-Legendre quadrature, exact for polynomials."""
    if m < 0:
        raise ParameterError(f"moment order must be >= 0, got {m}")
    return w.shape.moment(m)


def _fourier_gauss(shape: PiecewisePolynomial, xi: np.ndarray) -> np.ndarray:
    nodes, weights = nleg.leggauss(GAUSS_NODES_PER_SEGMENT)
    out = np.zeros(xi.shape, dtype=complex)
    for (x0, x1), piece in zip(zip(shape.breakpoints, shape.breakpoints[1:]), shape.pieces):
        half = 0.5 * (x1 - x0)
        x = x0 + half * (nodes + 1.0)
        fx = piece(x) * weights * half
        out += np.exp(-1j * np.outer(xi, x)) @ fx
    return out


def _fourier_by_parts(shape: PiecewisePolynomial, xi: np.ndarray) -> np.ndarray:
    # int p(x) e^{-i xi x} dx = sum over breakpoints b of e^{-i xi b} sum_m [p^(m)](b) / (i xi)^(m+1),
    # [.] the jump right minus left; orders up to the smoothness do not jump
    out = np.zeros(xi.shape, dtype=complex)
    ixi = 1j * xi
    pieces = shape.pieces
    for i, b in enumerate(shape.breakpoints):
        left = pieces[i - 1] if i > 0 else None
        right = pieces[i] if i < len(pieces) else None
        series = np.zeros(xi.shape, dtype=complex)
        for m in range(max(shape.smoothness + 1, 0), shape.degree + 1):
            jump = (float(right.deriv(m)(b)) if right is not None else 0.0) - (
                float(left.deriv(m)(b)) if left is not None else 0.0
            )
            if jump != 0.0:
                series += jump / ixi ** (m + 1)
        out += np.exp(-1j * xi * b) * series
    return out


def fourier_transform(shape: PiecewisePolynomial, xi) -> np.ndarray:
    """Fourier transform int shape(x) e^{-i xi x} dx at the frequencies xi."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    out = np.empty(xi.shape, dtype=complex)
    low = np.abs(xi) <= FOURIER_SWITCH
    if low.any():
        out[low] = _fourier_gauss(shape, xi[low])
    if (~low).any():
        out[~low] = _fourier_by_parts(shape, xi[~low])
    return out


def admissibility_constant(
    w: AnalyzingWavelet,
    partner: AnalyzingWavelet | ReconstructionWavelet | None = None,
    num_points: int = 4097,
) -> AdmissibilityConstant:
    """
    Admissibility constant int psi_hat(xi) conj(phi_hat(xi)) / |xi| dxi.

    With no partner this is c_psi. The integral runs over a log-spaced grid on
    [1e-6, 1e6] in u = ln(xi), doubled for the negative half-line. The error
    estimate is the change under halving the grid.

    Args:
        w: Analyzing wavelet
        partner: Optional second wavelet for the cross constant
        num_points: Odd number of grid points

    Returns:
        AdmissibilityConstant
    """
    if w.vanishing_moments < 1:
        raise ParameterError("admissibility needs at least one vanishing moment")
    if num_points < 5 or num_points % 2 == 0:
        raise ParameterError(f"num_points must be odd and >= 5, got {num_points}")

    u = np.linspace(math.log(XI_MIN), math.log(XI_MAX), num_points)
    xi = np.exp(u)
    psi_hat = fourier_transform(w.shape, xi)
    phi_hat = psi_hat if partner is None else fourier_transform(partner.shape, xi)
    integrand = 2.0 * np.real(psi_hat * np.conj(phi_hat))

    peak = float(np.max(np.abs(integrand)))
    if peak == 0.0 or not np.isfinite(peak):
        raise NonConvergentQuadratureError("admissibility integrand vanishes or is not finite")
    if abs(integrand[0]) > ENDPOINT_DECAY * peak or abs(integrand[-1]) > ENDPOINT_DECAY * peak:
        raise NonConvergentQuadratureError(
            f"admissibility integrand does not decay at the grid ends "
            f"({abs(integrand[0]) / peak:.2e}, {abs(integrand[-1]) / peak:.2e} of peak)"
        )

    fine = float(trapezoid(integrand, u))
    coarse = float(trapezoid(integrand[::2], u[::2]))
    if fine <= 0.0:
        raise NonConvergentQuadratureError(f"admissibility integral is not positive: {fine:.3e}")
    logger.debug(f"admissibility constant {fine:.8g} (halving change {abs(fine - coarse):.2e})")
    return AdmissibilityConstant(fine, abs(fine - coarse), num_points)


def build_reconstruction_wavelet(psi: AnalyzingWavelet) -> ReconstructionWavelet:
    """Reconstruction wavelet phi = psi / ||psi||_2."""
    norm = psi.shape.l2_norm()
    shape = psi.shape.scaled(1.0 / norm)
    phi = ReconstructionWavelet(shape, psi.smoothness, psi.vanishing_moments)
    overlap = phi.shape.inner(psi.shape)
    if abs(overlap) <= CROSS_CORRELATION_FLOOR:
        raise ParameterError(f"reconstruction wavelet is orthogonal to psi ({overlap:.3e})")
    return phi


def cross_correlation(
    psi: AnalyzingWavelet,
    phi: ReconstructionWavelet | AnalyzingWavelet,
    shift: float = 0.0,
    dilation: float = 1.0,
) -> float:
    """Exact int phi((u - shift) / dilation) psi(u) du."""
    return phi.shape.affine(shift, dilation).inner(psi.shape)


if __name__ == "__main__":
    psi = build_even_wavelet(2, 3)
    print(f"segments: {psi.shape.segments}")
    for m in range(4):
        print(f"moment {m}: {moment(psi, m):.3e}")
    print(f"c_psi: {admissibility_constant(psi)}")
