"""Periodic grids, Fourier fields and the norms built on them.

Convention: a real periodic function on [0, M) is stored by its complex
Fourier coefficients ``f_k`` with

    f(x) = sum_k f_k exp(i k (2 pi / M) x),

so ``f_0`` is the mean of the node values.  Coefficient arrays use numpy FFT
ordering; the Nyquist slot is treated as wavenumber ``+n/2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigurationError, InsufficientDataError

AMPLITUDE_FLOOR = 1e-14
RESOLUTION_TOL = 1e-12


class ResolutionWarning(UserWarning):
    """Emitted when a weighted norm is dominated by the last resolved mode."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on one period ``[0, period)``."""

    n_points: int
    period: float = 2 * np.pi

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 8 or self.n_points % 2:
            raise ConfigurationError(
                f"n_points must be an even integer >= 8, got {self.n_points}"
            )
        if not self.period > 0:
            raise ConfigurationError(f"period must be positive, got {self.period}")

    @property
    def dx(self) -> float:
        return self.period / self.n_points

    @property
    def nyquist(self) -> int:
        return self.n_points // 2

    @property
    def scale(self) -> float:
        """Physical wavenumber of integer mode 1."""
        return 2 * np.pi / self.period

    @property
    def dealias_cutoff(self) -> int:
        return self.n_points // 3

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_points) * self.dx

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavenumbers in FFT order, Nyquist reported as +n/2."""
        k = np.fft.fftfreq(self.n_points, d=1.0 / self.n_points)
        k[self.nyquist] = self.nyquist
        return k.astype(np.int64)

    @cached_property
    def abs_k(self) -> np.ndarray:
        return np.abs(self.k)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return self.abs_k <= self.dealias_cutoff

    @cached_property
    def _symbols(self) -> dict:
        out = {}
        for order in range(0, 7):
            sym = (1j * self.scale * self.k) ** order
            if order % 2:
                sym[self.nyquist] = 0.0
            sym.flags.writeable = False
            out[order] = sym
        return out

    def symbol(self, order: int) -> np.ndarray:
        """Fourier multiplier of d^order/dx^order, Nyquist zeroed for odd orders."""
        return self._symbols[order]

    def index(self, k: int) -> int:
        if abs(k) > self.nyquist:
            raise ConfigurationError(f"wavenumber {k} not resolved on {self.n_points} nodes")
        return k % self.n_points


class SpectralField:
    """A real periodic function held as Fourier coefficients on a grid.

    Instances are treated as immutable; arithmetic returns new fields.
    Multiplication of two fields is the pointwise (aliased) product; use
    :func:`product` for the dealiased version.
    """

    __slots__ = ("grid", "coeffs")
    __array_priority__ = 100

    def __init__(self, grid: PeriodicGrid, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (grid.n_points,):
            raise ConfigurationError(
                f"expected {grid.n_points} coefficients, got shape {coeffs.shape}"
            )
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "coeffs", coeffs)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    # construction -----------------------------------------------------
    @classmethod
    def from_values(cls, grid: PeriodicGrid, values) -> "SpectralField":
        values = np.asarray(values)
        if values.shape != (grid.n_points,):
            raise ConfigurationError(
                f"expected {grid.n_points} node values, got shape {values.shape}"
            )
        if np.iscomplexobj(values):
            if np.max(np.abs(values.imag), initial=0.0) > 1e-12 * (1 + np.max(np.abs(values))):
                raise ConfigurationError("node values must be real")
            values = values.real
        return cls(grid, np.fft.fft(values) / grid.n_points)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, func: Callable) -> "SpectralField":
        return cls.from_values(grid, func(grid.nodes))

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> "SpectralField":
        c = np.zeros(grid.n_points, dtype=complex)
        c[0] = value
        return cls(grid, c)

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.n_points, dtype=complex))

    @classmethod
    def from_modes(cls, grid: PeriodicGrid, modes: Mapping[int, complex]) -> "SpectralField":
        """Build from positive-side coefficients; the negative side is mirrored."""
        c = np.zeros(grid.n_points, dtype=complex)
        for k, value in modes.items():
            if k < 0:
                raise ConfigurationError("give non-negative wavenumbers only")
            if k == 0 or k == grid.nyquist:
                c[grid.index(k)] += complex(value).real
            else:
                c[grid.index(k)] += value
                c[grid.index(-k)] += np.conj(value)
        return cls(grid, c)

    @classmethod
    def cosine_series(cls, grid: PeriodicGrid, amplitudes) -> "SpectralField":
        """sum_{k>=1} amplitudes[k-1] cos(k x) in physical wavenumbers 2 pi k / M."""
        return cls.from_modes(grid, {k + 1: a / 2 for k, a in enumerate(amplitudes)})

    # access -----------------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        return np.fft.ifft(self.coeffs * self.grid.n_points).real

    def coeff(self, k: int) -> complex:
        return self.coeffs[self.grid.index(k)]

    @property
    def mean(self) -> float:
        return self.coeffs[0].real

    def cosine_coefficients(self, n: int) -> np.ndarray:
        """Amplitudes a_k of cos(kx), k = 1..n."""
        return 2 * self.coeffs[1 : n + 1].real

    def sine_coefficients(self, n: int) -> np.ndarray:
        """Amplitudes b_k of sin(kx), k = 1..n."""
        return -2 * self.coeffs[1 : n + 1].imag

    def bandwidth(self, tol: float = 0.0) -> int:
        nz = np.nonzero(np.abs(self.coeffs) > tol)[0]
        return int(self.grid.abs_k[nz].max()) if nz.size else 0

    def is_constant(self, rtol: float = 1e-13) -> bool:
        rest = np.abs(self.coeffs[1:]).max(initial=0.0)
        return rest <= rtol * max(abs(self.coeffs[0]), 1.0)

    # arithmetic -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise ConfigurationError("fields live on different grids")
            return other
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is not None:
            return SpectralField(self.grid, self.coeffs + o.coeffs)
        c = self.coeffs.copy()
        c[0] += other
        return SpectralField(self.grid, c)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is not None:
            return SpectralField.from_values(self.grid, self.values * o.values)
        return SpectralField(self.grid, self.coeffs * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, SpectralField):
            return SpectralField.from_values(self.grid, self.values / self._coerce(other).values)
        return SpectralField(self.grid, self.coeffs / other)

    def __repr__(self):
        return f"SpectralField(n={self.grid.n_points}, M={self.grid.period:g}, band={self.bandwidth(1e-14)})"


def to_spectral(grid: PeriodicGrid, values) -> SpectralField:
    return SpectralField.from_values(grid, values)


def to_physical(f: SpectralField) -> np.ndarray:
    return f.values


def derivative(f: SpectralField, order: int = 1) -> SpectralField:
    """Spectral derivative of order 1..3."""
    if order not in (1, 2, 3):
        raise ConfigurationError(f"derivative order must be 1, 2 or 3, got {order}")
    return SpectralField(f.grid, f.coeffs * f.grid.symbol(order))


def dealias(f: SpectralField) -> SpectralField:
    """Zero every mode with |k| > n/3 (two-thirds rule)."""
    return SpectralField(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0))


def product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product followed by dealiasing."""
    return dealias(f * g)


def mollify(f: SpectralField, epsilon: float) -> SpectralField:
    """Fourier truncation: keep modes with |k| <= 1/epsilon."""
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    keep = f.grid.abs_k <= 1.0 / epsilon
    return SpectralField(f.grid, np.where(keep, f.coeffs, 0.0))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """Trapezoid-rule L2 inner product over one period."""
    return float(np.dot(f.values, g.values) * f.grid.dx)


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(f.grid.period * np.sum(np.abs(f.coeffs) ** 2)))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """||f||_{H^s} with weight (1 + xi^2)^s, xi the physical wavenumber."""
    xi2 = (f.grid.scale * f.grid.k) ** 2
    return float(np.sqrt(f.grid.period * np.sum((1 + xi2) ** s * np.abs(f.coeffs) ** 2)))


def wiener_norm(f: SpectralField, rho: float = 0.0) -> float:
    """Exponentially weighted Wiener norm sum_k e^{rho |k|} |f_k| over resolved modes."""
    if rho < 0:
        raise ConfigurationError(f"rho must be nonnegative, got {rho}")
    grid = f.grid
    weights = np.exp(rho * grid.abs_k)
    tail = abs(f.coeffs[grid.nyquist]) * weights[grid.nyquist]
    if tail > RESOLUTION_TOL:
        warnings.warn(
            f"Wiener norm at rho={rho} not resolved: Nyquist term {tail:.3e}",
            ResolutionWarning,
            stacklevel=2,
        )
    return float(np.sum(weights * np.abs(f.coeffs)))


def fit_analyticity_radius(f: SpectralField, k_min: int, k_max: int) -> float:
    """Estimate the strip width rho from log-linear decay of |f_k|, k in [k_min, k_max]."""
    if not (0 <= k_min < k_max <= f.grid.nyquist):
        raise ConfigurationError(
            f"need 0 <= k_min < k_max <= {f.grid.nyquist}, got [{k_min}, {k_max}]"
        )
    ks = np.arange(k_min, k_max + 1)
    amps = np.abs(f.coeffs[ks])
    keep = amps > AMPLITUDE_FLOOR
    if keep.sum() < 4:
        raise InsufficientDataError("insufficient spectral decay data")
    slope, _ = np.polyfit(ks[keep], np.log(amps[keep]), 1)
    return float(-slope)


def random_bandlimited(grid: PeriodicGrid, bandwidth: int, rng: np.random.Generator) -> SpectralField:
    """Real field with standard normal coefficients on 0 < |k| <= bandwidth plus a random mean."""
    if not 1 <= bandwidth < grid.nyquist:
        raise ConfigurationError(f"bandwidth must lie in [1, {grid.nyquist - 1}], got {bandwidth}")
    modes = {0: rng.normal()}
    for k in range(1, bandwidth + 1):
        modes[k] = complex(rng.normal(), rng.normal())
    return SpectralField.from_modes(grid, modes)
