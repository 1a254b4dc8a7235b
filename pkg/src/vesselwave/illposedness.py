"""Growth rates of the simplified ill-posed system and spectra of truncated generators.

The simplified system keeps only the highest-derivative terms of the
variable-radius model.  Per Fourier mode it reads

    eta_t = i xi u,    u_t = -xi^2 eta / (1 + xi^2),

so lambda^2 = -i xi^3 / (1 + xi^2) and the growing branch has
Re lambda = xi^{3/2} / (sqrt 2 sqrt(1 + xi^2)), unbounded in xi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .evolve import _map, rk4_step
from .model import InverseOperatorConfig, ModelParams, NeumannInverse, State, rhs_general
from .spectral import PeriodicGrid, SpectralField

OVERFLOW_LEVEL = 1e150


def exact_growth_rate(k: float) -> float:
    """Real part of the growing eigenvalue at wavenumber k >= 1."""
    if not k >= 1:
        raise ConfigurationError(f"wavenumber must be >= 1, got {k}")
    return k**1.5 / math.sqrt(2.0 * (1.0 + k * k))


def simplified_symbol(xi: float) -> np.ndarray:
    """2x2 generator of (eta_hat, u_hat) at physical wavenumber xi."""
    return np.array([[0.0, 1j * xi], [-(xi**2) / (1 + xi**2), 0.0]], dtype=complex)


def simplified_eigenvalue(xi: float, growing: bool = True) -> complex:
    lam = np.sqrt(complex(-1j * xi**3 / (1 + xi**2)))
    if lam.real < 0:
        lam = -lam
    return lam if growing else -lam


def simplified_eigenvector(xi: float, growing: bool = True) -> np.ndarray:
    """(eta_hat, u_hat) = (i xi, lambda), unnormalised."""
    return np.array([1j * xi, simplified_eigenvalue(xi, growing)])


def simplified_system_rhs(state: State) -> State:
    grid = state.grid
    xi = grid.scale * grid.k
    d1 = grid.symbol(1)
    eta_t = SpectralField(grid, d1 * state.u.coeffs)
    u_t = SpectralField(grid, -(xi**2) / (1 + xi**2) * state.eta.coeffs)
    return State(eta_t, u_t)


@dataclass
class GrowthReport:
    k: int
    predicted_rate: float
    measured_rate: float
    relative_error: float
    t_used: float
    shortened: bool = False


def mode_amplitude(state: State, k: int) -> float:
    i = state.grid.index(k)
    return math.hypot(abs(state.eta.coeffs[i]), abs(state.u.coeffs[i]))


def measured_growth_rate(k: int, t_final: float = 8.0, dt: float = 1e-2, *,
                         growing: bool = True, grid: PeriodicGrid | None = None,
                         amplitude: float = 1e-6) -> GrowthReport:
    """Integrate single-mode eigenvector data and fit d log|mode| / dt.

    The slope is fitted over the second half of the integration window.  If
    the mode amplitude would overflow, the run stops early and the fit uses
    the second half of the window actually integrated.
    """
    if not k >= 1:
        raise ConfigurationError(f"wavenumber must be >= 1, got {k}")
    grid = grid or PeriodicGrid(256)
    if k >= grid.nyquist:
        raise ConfigurationError(f"mode {k} not resolved on {grid.n_points} nodes")
    xi = grid.scale * k
    vec = amplitude * simplified_eigenvector(xi, growing) / abs(simplified_eigenvector(xi, growing)[0])
    state = State(SpectralField.from_modes(grid, {k: vec[0]}), SpectralField.from_modes(grid, {k: vec[1]}))
    n_steps = int(round(t_final / dt))
    times, logs = [0.0], [math.log(mode_amplitude(state, k))]
    shortened = False
    for step in range(1, n_steps + 1):
        state = rk4_step(simplified_system_rhs, state, dt)
        amp = mode_amplitude(state, k)
        if not np.isfinite(amp) or amp > OVERFLOW_LEVEL or amp <= 0:
            shortened = True
            break
        times.append(step * dt)
        logs.append(math.log(amp))
    times, logs = np.array(times), np.array(logs)
    t_end = times[-1]
    window = times >= 0.5 * t_end
    if window.sum() < 2:
        raise ConfigurationError("integration window too short to fit a rate")
    slope = float(np.polyfit(times[window], logs[window], 1)[0])
    predicted = exact_growth_rate(xi) if growing else -exact_growth_rate(xi)
    rel = abs(slope - predicted) / abs(predicted)
    return GrowthReport(k, predicted, slope, rel, float(t_end), shortened)


# ---------------------------------------------------------------------------
# truncated generators of the general linearisation


def _real_basis_field(grid: PeriodicGrid, j: int) -> SpectralField:
    """Basis ordering [1, cos x, sin x, cos 2x, sin 2x, ...]."""
    if j == 0:
        return SpectralField.constant(grid, 1.0)
    k = (j + 1) // 2
    x = grid.scale * grid.nodes
    return SpectralField.from_values(grid, np.cos(k * x) if j % 2 else np.sin(k * x))


def _real_coordinates(f: SpectralField, n: int) -> np.ndarray:
    c = f.coeffs
    out = np.empty(2 * n + 1)
    out[0] = c[0].real
    out[1::2] = 2 * c[1 : n + 1].real
    out[2::2] = -2 * c[1 : n + 1].imag
    return out


def general_generator_matrix(params: ModelParams, cfg: InverseOperatorConfig | None = None,
                             n: int = 32, method: str = "exact",
                             fd_step: float = 1e-7) -> np.ndarray:
    """Linear generator of the general system about (0, 0) on modes |k| <= n.

    Coordinates are [eta-block, u-block], each in the real basis
    [1, cos kx, sin kx]_{k=1..n}, so the matrix is 2(2n+1) square.  With
    ``method="exact"`` columns come from the linear part of the right-hand
    side; ``method="fd"`` uses forward differences of the full nonlinear
    right-hand side at amplitude ``fd_step``.
    """
    grid = params.grid
    if not 1 <= n < grid.nyquist:
        raise ConfigurationError(f"truncation n must lie in [1, {grid.nyquist - 1}], got {n}")
    if method not in ("exact", "fd"):
        raise ConfigurationError(f"unknown assembly method {method!r}")
    inv = NeumannInverse(params, cfg)
    dim = 2 * n + 1
    zero = SpectralField.zeros(grid)
    if method == "fd":
        base = rhs_general(State(zero, zero), params, inverse=inv)

    def column(j):
        f = _real_basis_field(grid, j % dim)
        st = State(f, zero) if j < dim else State(zero, f)
        if method == "exact":
            r = rhs_general(st, params, inverse=inv, nonlinear=False)
        else:
            r = (rhs_general(st * fd_step, params, inverse=inv) - base) * (1.0 / fd_step)
        return np.concatenate([_real_coordinates(r.eta, n), _real_coordinates(r.u, n)])

    cols = _map(column, range(2 * dim))
    return np.column_stack(cols)


@dataclass
class GeneratorSpectrum:
    truncation: int
    eigenvalues: np.ndarray = field(repr=False)
    max_real_part: float

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)


def generator_spectrum(params: ModelParams, n: int, cfg: InverseOperatorConfig | None = None,
                       method: str = "exact") -> GeneratorSpectrum:
    ev = np.linalg.eigvals(general_generator_matrix(params, cfg, n, method))
    return GeneratorSpectrum(n, ev, float(ev.real.max()))


@dataclass
class ContrastReport:
    truncations: list
    constant: list
    variable: list
    constant_tol: float = 1e-7

    @property
    def constant_max(self) -> list:
        return [s.max_real_part for s in self.constant]

    @property
    def variable_max(self) -> list:
        return [s.max_real_part for s in self.variable]

    @property
    def constant_flat(self) -> bool:
        return all(abs(v) < self.constant_tol for v in self.constant_max)

    @property
    def variable_nondecreasing(self) -> bool:
        v = self.variable_max
        return all(b >= a for a, b in zip(v, v[1:]))

    @property
    def growth_factor(self) -> float:
        v = self.variable_max
        return v[-1] / v[0] if v[0] > 0 else math.inf

    def rows(self) -> list:
        """CSV-ready rows: n, max Re lambda (constant), max Re lambda (variable)."""
        return [(n, a, b) for n, a, b in zip(self.truncations, self.constant_max, self.variable_max)]


def illposedness_contrast_report(params_constant: ModelParams, params_variable: ModelParams,
                                 truncations: Sequence[int] = (32, 64, 128),
                                 cfg: InverseOperatorConfig | None = None) -> ContrastReport:
    truncations = sorted(truncations)
    const = [generator_spectrum(params_constant, n, cfg) for n in truncations]
    var = [generator_spectrum(params_variable, n, cfg) for n in truncations]
    return ContrastReport(list(truncations), const, var)
