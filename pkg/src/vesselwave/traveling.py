"""Periodic traveling waves of the constant-radius system without damping.

A wave eta(x - ct), u(x - ct) satisfies

    R1 = -c eta' + (r0/2) u' + (1/2) eta u' + eta' u = 0,
    R2 = -c u' + beta eta' + u u' + c g1 u''' = 0,      g1 = (4 alpha + r0) r0 / 8.

Even, zero-mean profiles map to odd residuals, so the unknowns are cosine
coefficients and the equations are sine coefficients.  Branches bifurcate
from the trivial family at the speeds where the linearisation has the
kernel h' = (r0/(2 c0) cos k0 x, cos k0 x).

Two forms of the linear operator are available.  ``"residual"`` is the
Frechet derivative of (R1, R2) at zero.  ``"reduced"`` is the scaled form

    [ d_x   -(r0/2c) d_x      ]
    [ 0      d_x^3 + B^2 d_x  ]

obtained by left-multiplying with an invertible constant matrix; its mode
symbols are triangular and invert explicitly (the Gamma preconditioner).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AssemblyError,
    BranchPointError,
    ConfigurationError,
    ConvergenceError,
    RegimeError,
    SubspaceError,
)
from .evolve import advance, make_rhs
from .model import ModelParams, State
from .spectral import PeriodicGrid, SpectralField, derivative, product


class NoPeriodicKernelWarning(UserWarning):
    """B^2 < 0: the linearisation has no periodic kernel at this speed."""


# ---------------------------------------------------------------------------
# problem definition


def _constants(params: ModelParams) -> tuple[float, float, float]:
    if not params.is_constant:
        raise RegimeError("traveling waves are computed for constant r0 and beta_bar only")
    return params.r0.mean, params.alpha_bar, params.beta_bar.mean


@dataclass(frozen=True, eq=False)
class TravelingWaveProblem:
    """Constant-radius, undamped traveling-wave problem on the params' grid.

    The period M is the grid period; ``n_modes`` cosine modes are solved for.
    """

    params: ModelParams
    k0: int = 1
    n_modes: int = 64

    def __post_init__(self):
        _constants(self.params)
        if self.params.kappa != 0 or self.params.gamma != 0:
            raise RegimeError("traveling waves require kappa = gamma = 0")
        if int(self.k0) != self.k0 or self.k0 < 1:
            raise ConfigurationError(f"k0 must be a positive integer, got {self.k0}")
        if not 2 <= self.n_modes <= self.grid.dealias_cutoff:
            raise ConfigurationError(
                f"n_modes must lie in [2, {self.grid.dealias_cutoff}] on {self.grid.n_points} nodes"
            )
        if self.k0 > self.n_modes:
            raise ConfigurationError("k0 exceeds the number of solved modes")

    @classmethod
    def create(cls, r0=1.0, alpha_bar=1.0, beta_bar=1.0, period=2 * np.pi, k0=1,
               n_modes=64, n_points=256) -> "TravelingWaveProblem":
        grid = PeriodicGrid(n_points, period)
        return cls(ModelParams.create(grid, r0, alpha_bar, beta_bar), k0, n_modes)

    @property
    def grid(self) -> PeriodicGrid:
        return self.params.grid

    @property
    def period(self) -> float:
        return self.grid.period

    @property
    def r0(self) -> float:
        return self.params.r0.mean

    @property
    def alpha_bar(self) -> float:
        return self.params.alpha_bar

    @property
    def beta_bar(self) -> float:
        return self.params.beta_bar.mean

    @property
    def g1(self) -> float:
        return (4 * self.alpha_bar + self.r0) * self.r0 / 8

    @property
    def xi0(self) -> float:
        """Physical wavenumber of the bifurcating mode."""
        return self.grid.scale * self.k0

    @property
    def c0(self) -> float:
        return bifurcation_speed(self.k0, self.period, self.params)

    def on_grid(self, n_points: int) -> "TravelingWaveProblem":
        grid = PeriodicGrid(n_points, self.period)
        params = ModelParams.create(grid, self.r0, self.alpha_bar, self.beta_bar)
        return TravelingWaveProblem(params, self.k0, min(self.n_modes, grid.dealias_cutoff))


@dataclass
class TravelingWave:
    state: State
    speed: float
    amplitude: float
    residual_norm: float = 0.0
    iterations: int = 0
    history: list = field(default_factory=list)

    def parity_error(self) -> float:
        """Largest sine coefficient of eta or u (zero for even profiles)."""
        n = self.state.grid.nyquist - 1
        return float(max(np.abs(self.state.eta.sine_coefficients(n)).max(),
                         np.abs(self.state.u.sine_coefficients(n)).max()))

    def mean_error(self) -> float:
        return float(max(abs(self.state.eta.coeffs[0]), abs(self.state.u.coeffs[0])))


@dataclass
class WaveBranch:
    waves: list
    c0: float
    fit_exponent: float = math.nan
    fit_prefactor: float = math.nan
    truncated: bool = False
    message: str = ""

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([w.amplitude for w in self.waves])

    @property
    def speeds(self) -> np.ndarray:
        return np.array([w.speed for w in self.waves])


# ---------------------------------------------------------------------------
# dispersion


def dispersion_B2(c, params: ModelParams, warn: bool = True):
    """B^2 = 8 beta / (2 c^2 (4 alpha + r0)) - 8 / ((4 alpha + r0) r0).

    Accepts complex ``c`` (used for complex-step differentiation).  A
    negative real result signals that no periodic kernel exists.
    """
    r0, alpha, beta = _constants(params)
    if c == 0:
        raise ConfigurationError("dispersion relation undefined at c = 0")
    b2 = 8 * beta / (2 * c**2 * (4 * alpha + r0)) - 8 / ((4 * alpha + r0) * r0)
    if warn and np.isreal(b2) and np.real(b2) < 0:
        warnings.warn(f"B^2 = {np.real(b2):.6g} < 0 at c = {c}: no periodic kernel",
                      NoPeriodicKernelWarning, stacklevel=2)
    return b2


def has_periodic_kernel(c: float, params: ModelParams) -> bool:
    return dispersion_B2(c, params, warn=False) > 0


def bifurcation_speed(k: int, period: float, params: ModelParams) -> float:
    """Positive root of c^2 = 8 beta r0 M^2 / (16 M^2 + 8 pi^2 k^2 (4 alpha + r0) r0)."""
    if not k >= 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    r0, alpha, beta = _constants(params)
    M = period
    return math.sqrt(8 * beta * r0 * M**2 / (16 * M**2 + 8 * math.pi**2 * k**2 * (4 * alpha + r0) * r0))


def kernel_function(problem: TravelingWaveProblem) -> State:
    grid = problem.grid
    k0 = problem.k0
    a = problem.r0 / (2 * problem.c0)
    return State(SpectralField.from_modes(grid, {k0: a / 2}), SpectralField.from_modes(grid, {k0: 0.5}))


def adjoint_kernel_function(problem: TravelingWaveProblem) -> State:
    """h* = (0, sin k0 x)."""
    grid = problem.grid
    return State(SpectralField.zeros(grid), SpectralField.from_modes(grid, {problem.k0: -0.5j}))


# ---------------------------------------------------------------------------
# residual and its linearisation


def residual(state: State, c: float, problem: TravelingWaveProblem) -> State:
    eta, u = state.eta, state.u
    r0, beta, g1 = problem.r0, problem.beta_bar, problem.g1
    ex, ux = derivative(eta, 1), derivative(u, 1)
    r1 = -c * ex + (r0 / 2) * ux + 0.5 * product(eta, ux) + product(ex, u)
    r2 = -c * ux + beta * ex + product(u, ux) + (c * g1) * derivative(u, 3)
    return State(r1, r2)


def _reduction(c: float, problem: TravelingWaveProblem) -> np.ndarray:
    """Constant matrix T with reduced operator = T @ residual linearisation."""
    g1, beta = problem.g1, problem.beta_bar
    return np.array([[-1.0 / c, 0.0], [beta / (c * c * g1), 1.0 / (c * g1)]])


def linearized_residual(direction: State, c: float, problem: TravelingWaveProblem,
                        form: str = "reduced") -> State:
    """Linearisation of the residual at the zero state, in residual or reduced form."""
    eta, u = direction.eta, direction.u
    r0, beta, g1 = problem.r0, problem.beta_bar, problem.g1
    ex, ux = derivative(eta, 1), derivative(u, 1)
    if form == "residual":
        return State(-c * ex + (r0 / 2) * ux, -c * ux + beta * ex + (c * g1) * derivative(u, 3))
    if form == "reduced":
        b2 = dispersion_B2(c, problem.params, warn=False)
        return State(ex - (r0 / (2 * c)) * ux, derivative(u, 3) + b2 * ux)
    raise ConfigurationError(f"unknown form {form!r}; expected 'residual' or 'reduced'")


def reduce_residual(r: State, c: float, problem: TravelingWaveProblem) -> State:
    """Apply the reduction matrix to a residual-form result."""
    T = _reduction(c, problem)
    return State(T[0, 0] * r.eta + T[0, 1] * r.u, T[1, 0] * r.eta + T[1, 1] * r.u)


def gamma_symbols(k: np.ndarray, c0: float, problem: TravelingWaveProblem):
    """Entries (G11, G12, G22) of the inverse reduced symbol at signed integer modes k.

    G11 = 1/(i xi), G12 = i a / (xi (xi^2 - xi0^2)), G22 = i / (xi (xi^2 - xi0^2)),
    with a = r0/(2 c0) and xi the physical wavenumber; G21 = 0.
    """
    xi = problem.grid.scale * np.asarray(k, dtype=float)
    a = problem.r0 / (2 * c0)
    d = xi * (xi**2 - problem.xi0**2)
    return 1.0 / (1j * xi), 1j * a / d, 1j / d


def listed_gamma_symbols(k: np.ndarray, c0: float, problem: TravelingWaveProblem):
    """Commonly listed closed forms: 1/(i|k|), -i a/(|k|^3 - |k| k0^2), -i/(|k|^3 - |k| k0^2)."""
    xi = np.abs(problem.grid.scale * np.asarray(k, dtype=float))
    a = problem.r0 / (2 * c0)
    d = xi**3 - xi * problem.xi0**2
    return 1.0 / (1j * xi), -1j * a / d, -1j / d


def gamma_entry_report(problem: TravelingWaveProblem, k_max: int = 8) -> dict:
    """Compare the listed entries with the true inverse on k = +-2..k_max (k != k0)."""
    ks = np.array([k for k in range(-k_max, k_max + 1) if k not in (0, problem.k0, -problem.k0)])
    mine = gamma_symbols(ks, problem.c0, problem)
    listed = listed_gamma_symbols(ks, problem.c0, problem)
    report = {}
    for name, m, p in zip(("G11", "G12", "G22"), mine, listed):
        agree = np.isclose(m, p, rtol=1e-12, atol=0.0)
        report[name] = {
            "agrees_positive_k": bool(np.all(agree[ks > 0])),
            "agrees_negative_k": bool(np.all(agree[ks < 0])),
        }
    return report


def gamma_preconditioner(rhs: State, c0: float, problem: TravelingWaveProblem,
                         tol: float = 1e-13) -> State:
    """Inverse of the reduced operator at c0 on modes k not in {0, +-k0}."""
    grid = problem.grid
    k = grid.k
    blocked = (k == 0) | (np.abs(k) == problem.k0)
    scale = max(1.0, np.abs(rhs.eta.coeffs).max(), np.abs(rhs.u.coeffs).max())
    bad = max(np.abs(rhs.eta.coeffs[blocked]).max(), np.abs(rhs.u.coeffs[blocked]).max())
    if bad > tol * scale:
        raise SubspaceError(f"input has content {bad:.3e} on modes 0 or +-{problem.k0}")
    ok = ~blocked
    ok[grid.nyquist] = False
    g11, g12, g22 = gamma_symbols(k[ok], c0, problem)
    f1, f2 = rhs.eta.coeffs, rhs.u.coeffs
    e = np.zeros(grid.n_points, dtype=complex)
    w = np.zeros(grid.n_points, dtype=complex)
    e[ok] = g11 * f1[ok] + g12 * f2[ok]
    w[ok] = g22 * f2[ok]
    return State(SpectralField(grid, e), SpectralField(grid, w))


# ---------------------------------------------------------------------------
# Newton solve in the even zero-mean cosine subspace


def _cos_field(grid: PeriodicGrid, amps: np.ndarray) -> SpectralField:
    c = np.zeros(grid.n_points, dtype=complex)
    n = len(amps)
    c[1 : n + 1] = amps / 2
    c[grid.n_points - n :] = (amps / 2)[::-1]
    return SpectralField(grid, c)


class _Layout:
    """Packing of (eta cos coeffs, u cos coeffs without k0, c) into one vector."""

    def __init__(self, problem: TravelingWaveProblem):
        self.problem = problem
        self.N = problem.n_modes
        self.u_modes = np.array([k for k in range(1, self.N + 1) if k != problem.k0])

    @property
    def size(self) -> int:
        return 2 * self.N

    def pack(self, state: State, c: float) -> np.ndarray:
        a_eta = state.eta.cosine_coefficients(self.N)
        a_u = state.u.cosine_coefficients(self.N)
        return np.concatenate([a_eta, a_u[self.u_modes - 1], [c]])

    def unpack(self, x: np.ndarray, amplitude: float) -> tuple[State, float]:
        grid = self.problem.grid
        N = self.N
        a_u = np.zeros(N)
        a_u[self.u_modes - 1] = x[N : 2 * N - 1]
        a_u[self.problem.k0 - 1] = amplitude
        return State(_cos_field(grid, x[:N]), _cos_field(grid, a_u)), float(x[-1])

    def equations(self, r: State) -> np.ndarray:
        return np.concatenate([r.eta.sine_coefficients(self.N), r.u.sine_coefficients(self.N)])


def _frechet(state: State, c: float, d: State, dc: float, problem: TravelingWaveProblem) -> State:
    """Exact directional derivative of the residual at (state, c)."""
    eta, u = state.eta, state.u
    r0, beta, g1 = problem.r0, problem.beta_bar, problem.g1
    ex, ux = derivative(eta, 1), derivative(u, 1)
    dex, dux = derivative(d.eta, 1), derivative(d.u, 1)
    r1 = (-c * dex + (r0 / 2) * dux + 0.5 * (product(d.eta, ux) + product(eta, dux))
          + product(dex, u) + product(ex, d.u) - dc * ex)
    r2 = (-c * dux + beta * dex + product(d.u, ux) + product(u, dux)
          + (c * g1) * derivative(d.u, 3) - dc * ux + (dc * g1) * derivative(u, 3))
    return State(r1, r2)


def _jacobian(x, amplitude, layout: _Layout, method: str, fd_step: float) -> np.ndarray:
    problem, grid, N = layout.problem, layout.problem.grid, layout.N
    state, c = layout.unpack(x, amplitude)
    J = np.empty((layout.size, layout.size))
    if method == "fd":
        f0 = layout.equations(residual(state, c, problem))
        for j in range(layout.size):
            xp = x.copy()
            xp[j] += fd_step
            sp, cp = layout.unpack(xp, amplitude)
            J[:, j] = (layout.equations(residual(sp, cp, problem)) - f0) / fd_step
        return J
    zero = SpectralField.zeros(grid)
    unit = np.zeros(N)
    for j in range(layout.size):
        if j == layout.size - 1:
            d, dc = State(zero, zero), 1.0
        else:
            unit[:] = 0.0
            if j < N:
                unit[j] = 1.0
                d = State(_cos_field(grid, unit), zero)
            else:
                unit[layout.u_modes[j - N] - 1] = 1.0
                d = State(zero, _cos_field(grid, unit))
            dc = 0.0
        J[:, j] = layout.equations(_frechet(state, c, d, dc, problem))
    return J


def initial_guess(problem: TravelingWaveProblem, amplitude: float) -> TravelingWave:
    """Kernel direction scaled to the requested cos(k0 x) amplitude of u, at c0."""
    h = kernel_function(problem)
    return TravelingWave(h * (2 * amplitude), problem.c0, amplitude)


def newton_solve(guess: TravelingWave | None, problem: TravelingWaveProblem, amplitude: float,
                 *, tol: float = 1e-10, max_iter: int = 50, jacobian: str = "exact",
                 fd_step: float = 1e-7, max_halvings: int = 8,
                 singular_cond: float = 1e13) -> TravelingWave:
    """Damped Newton for a wave whose u has cos(k0 x) coefficient ``amplitude``.

    Unknowns are the cosine coefficients of eta and u (except the pinned
    k0 mode of u) and the speed; equations are the sine coefficients of the
    residual.  Convergence means the l2 norm of those coefficients is below
    ``tol``; one further step is then taken to polish to rounding level.
    """
    if amplitude < 0:
        raise ConfigurationError(f"amplitude must be nonnegative, got {amplitude}")
    if jacobian not in ("exact", "fd"):
        raise ConfigurationError(f"unknown jacobian method {jacobian!r}")
    if amplitude == 0:
        return TravelingWave(State.zeros(problem.grid), problem.c0, 0.0)
    guess = guess or initial_guess(problem, amplitude)
    layout = _Layout(problem)
    x = layout.pack(guess.state, guess.speed)

    def F(x):
        s, c = layout.unpack(x, amplitude)
        return layout.equations(residual(s, c, problem))

    f = F(x)
    res = float(np.linalg.norm(f))
    history = [res]
    polish_left = 1
    for it in range(1, max_iter + 1):
        if res < tol:
            if polish_left == 0:
                break
            polish_left -= 1
        J = _jacobian(x, amplitude, layout, jacobian, fd_step)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > singular_cond:
            raise BranchPointError(
                f"Jacobian numerically singular (cond {cond:.3e}) at amplitude {amplitude:g}",
                residual=res, iteration=it, cond=cond,
            )
        step = np.linalg.solve(J, -f)
        t = 1.0
        for _ in range(max_halvings + 1):
            x_new = x + t * step
            f_new = F(x_new)
            res_new = float(np.linalg.norm(f_new))
            if res_new < res:
                break
            t *= 0.5
        if res < tol and not res_new < res:
            break
        x, f, res = x_new, f_new, res_new
        history.append(res)
    if not res < tol:
        raise ConvergenceError(
            f"Newton did not converge in {max_iter} iterations at amplitude {amplitude:g}; "
            f"final residual {res:.3e}",
            residual=res, iterations=max_iter, history=history,
        )
    state, c = layout.unpack(x, amplitude)
    return TravelingWave(state, c, amplitude, res, len(history) - 1, history)


def truncation_tail(wave: TravelingWave, problem: TravelingWaveProblem, factor: int = 2) -> float:
    """Largest residual coefficient beyond the solved modes on a finer grid."""
    fine = problem.on_grid(factor * problem.grid.n_points)
    N = problem.n_modes
    st = State(_cos_field(fine.grid, wave.state.eta.cosine_coefficients(N)),
               _cos_field(fine.grid, wave.state.u.cosine_coefficients(N)))
    r = residual(st, wave.speed, fine)
    tail = fine.grid.abs_k > N
    return float(max(np.abs(r.eta.coeffs[tail]).max(), np.abs(r.u.coeffs[tail]).max()))


def continue_branch(problem: TravelingWaveProblem, amplitudes: Sequence[float], **newton_kw) -> WaveBranch:
    """Sequential Newton solves along increasing amplitudes.

    Each solve starts from the previous wave rescaled to the new amplitude
    with a quadratic speed predictor.  The branch is truncated at the first
    failed solve.  The exponent of |c(a) - c0| against a is fitted on the
    four smallest nonzero amplitudes.
    """
    amps = [float(a) for a in amplitudes]
    if any(b <= a for a, b in zip(amps, amps[1:])) or (amps and amps[0] < 0):
        raise ConfigurationError("amplitudes must be nonnegative and strictly increasing")
    c0 = problem.c0
    waves: list[TravelingWave] = []
    truncated, message = False, ""
    prev = None
    for a in amps:
        guess = None
        if prev is not None and prev.amplitude > 0:
            r = a / prev.amplitude
            guess = TravelingWave(prev.state * r, c0 + (prev.speed - c0) * r * r, a)
        try:
            wave = newton_solve(guess, problem, a, **newton_kw)
        except ConvergenceError as exc:
            truncated, message = True, f"branch truncated at a={a:g}: {exc}"
            break
        waves.append(wave)
        prev = wave
    branch = WaveBranch(waves, c0, truncated=truncated, message=message)
    fit = [(w.amplitude, abs(w.speed - c0)) for w in waves if w.amplitude > 0][:4]
    if len(fit) >= 2 and all(d > 0 for _, d in fit):
        a_arr, d_arr = np.log([p[0] for p in fit]), np.log([p[1] for p in fit])
        slope, icpt = np.polyfit(a_arr, d_arr, 1)
        branch.fit_exponent, branch.fit_prefactor = float(slope), float(math.exp(icpt))
    return branch


# ---------------------------------------------------------------------------
# transversality and the time-dependent check


def transversality_closed_form(problem: TravelingWaveProblem) -> float:
    """(8 beta xi0 / ((4 alpha + r0) c0^3)) * int_0^M sin^2(k0 x) dx."""
    c0 = problem.c0
    return 8 * problem.beta_bar * problem.xi0 / ((4 * problem.alpha_bar + problem.r0) * c0**3) * (problem.period / 2)


def transversality_quadrature(problem: TravelingWaveProblem, h: float = 1e-20) -> float:
    """<h*, d/dc L(c0) h'> from the reduced operator, d/dc by complex step."""
    c0 = problem.c0
    db2 = (dispersion_B2(complex(c0, h), problem.params, warn=False)).imag / h
    dcoup = (-(problem.r0 / (2 * complex(c0, h)))).imag / h
    hk = kernel_function(problem)
    first = dcoup * derivative(hk.u, 1)
    second = db2 * derivative(hk.u, 1)
    hs = adjoint_kernel_function(problem)
    dx = problem.grid.dx
    return float(np.dot(hs.eta.values, first.values) * dx + np.dot(hs.u.values, second.values) * dx)


def transversality_check(problem: TravelingWaveProblem, tol: float = 1e-10) -> float:
    closed = transversality_closed_form(problem)
    quad = transversality_quadrature(problem)
    if not abs(closed - quad) <= tol:
        raise AssemblyError(f"transversality mismatch: closed form {closed!r}, quadrature {quad!r}")
    return closed


def translation_check(wave: TravelingWave, problem: TravelingWaveProblem, dt: float = 1e-2,
                      t_final: float | None = None) -> float:
    """Sup-norm distance between the evolved wave and its rigid translate.

    Integrates the constant-radius system with RK4 for ``t_final`` (default:
    one crossing time M / c) and compares with the profile shifted by c t.
    """
    T = problem.period / wave.speed if t_final is None else t_final
    n = max(1, int(math.ceil(T / dt)))
    dt_used = T / n
    rhs = make_rhs(problem.params, "constant")
    final = advance(rhs, wave.state, dt_used, n)
    grid = problem.grid
    phase = np.exp(-1j * grid.scale * grid.k * wave.speed * T)
    phase[grid.nyquist] = 0.0
    shifted = State(SpectralField(grid, wave.state.eta.coeffs * phase),
                    SpectralField(grid, wave.state.u.coeffs * phase))
    d = final - shifted
    return float(max(np.abs(d.eta.values).max(), np.abs(d.u.values).max()))
