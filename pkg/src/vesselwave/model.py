"""Model parameters, the operator A and its inverses, and evolution right-hand sides.

Two systems are covered:

* the constant-radius system, where A = 1 - g1 d_xx has constant coefficients
  and is inverted diagonally in Fourier space;
* the general system with a variable undisturbed radius r0(x), where
  A = g1 (g2 - d_xx) is inverted with a Neumann series around c0 - d_xx.

All nonlinear products are formed pointwise on the grid and dealiased.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .errors import (
    ConfigurationError,
    ConvergenceError,
    HypothesisFailure,
    ModelValidityError,
    RegimeError,
)
from .spectral import (
    PeriodicGrid,
    ResolutionWarning,
    SpectralField,
    dealias,
    derivative,
    l2_norm,
    mollify,
    product,
    wiener_norm,
)

VISCOUS_FORMS = ("eq2", "f2")
FieldLike = Union[SpectralField, float, Callable]


def _as_field(grid: PeriodicGrid, value: FieldLike) -> SpectralField:
    if isinstance(value, SpectralField):
        if value.grid != grid:
            raise ConfigurationError("coefficient field lives on a different grid")
        return value
    if callable(value):
        return SpectralField.from_function(grid, value)
    return SpectralField.constant(grid, float(value))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Physical constants and coefficient profiles.

    Attributes:
        r0: undisturbed vessel radius (positive at every node)
        alpha_bar: wall/fluid density ratio rho_w h / rho
        beta_bar: wall stiffness profile E h / (rho r0^2)
        kappa: Rayleigh damping of the fluid
        gamma: wall viscosity
        viscous_form: which wall-viscosity term the general system uses;
            "eq2" differentiates the flux (and reduces to the constant system),
            "f2" uses the undifferentiated listing.
    """

    r0: SpectralField
    alpha_bar: float
    beta_bar: SpectralField
    kappa: float = 0.0
    gamma: float = 0.0
    viscous_form: str = "eq2"
    physical: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.beta_bar.grid != self.r0.grid:
            raise ConfigurationError("r0 and beta_bar must share a grid")
        if not self.alpha_bar > 0:
            raise ConfigurationError(f"alpha_bar must be positive, got {self.alpha_bar}")
        if self.kappa < 0:
            raise ConfigurationError(f"kappa must be nonnegative, got {self.kappa}")
        if self.gamma < 0:
            raise ConfigurationError(f"gamma must be nonnegative, got {self.gamma}")
        if self.viscous_form not in VISCOUS_FORMS:
            raise ConfigurationError(f"viscous_form must be one of {VISCOUS_FORMS}")
        if np.min(self.r0.values) <= 0:
            raise ModelValidityError("r0 must be positive at every node")

    @property
    def grid(self) -> PeriodicGrid:
        return self.r0.grid

    @cached_property
    def is_constant(self) -> bool:
        return self.r0.is_constant() and self.beta_bar.is_constant()

    @classmethod
    def create(cls, grid, r0: FieldLike = 1.0, alpha_bar=1.0, beta_bar: FieldLike = 1.0,
               kappa=0.0, gamma=0.0, viscous_form="eq2") -> "ModelParams":
        r0f = _as_field(grid, r0)
        if np.min(r0f.values) <= 0:
            raise ModelValidityError("r0 must be positive at every node")
        return cls(r0f, float(alpha_bar), _as_field(grid, beta_bar), float(kappa),
                   float(gamma), viscous_form)

    @classmethod
    def sine_family(cls, grid, R0=1.0, eps=0.0, alpha_bar=1.0, stiffness=1.0,
                    kappa=0.0, gamma=0.0, viscous_form="eq2") -> "ModelParams":
        """r0 = R0 + eps sin(x); beta_bar = stiffness (R0 / r0)^2 so it equals
        ``stiffness`` when eps = 0."""
        q = grid.scale
        r0 = SpectralField.from_function(grid, lambda x: R0 + eps * np.sin(q * x))
        if np.min(r0.values) <= 0:
            raise ModelValidityError("r0 must be positive at every node")
        beta = SpectralField.from_values(grid, stiffness * R0**2 / r0.values**2)
        return cls(r0, float(alpha_bar), beta, float(kappa), float(gamma), viscous_form)

    @classmethod
    def from_physical(cls, grid, r0: FieldLike, rho, rho_w, h, E, kappa=0.0, gamma=0.0,
                      viscous_form="eq2") -> "ModelParams":
        """Derive alpha_bar = rho_w h / rho and beta_bar = E h / (rho r0^2)."""
        for name, v in (("rho", rho), ("rho_w", rho_w), ("h", h), ("E", E)):
            if not v > 0:
                raise ConfigurationError(f"{name} must be positive, got {v}")
        r0f = _as_field(grid, r0)
        if np.min(r0f.values) <= 0:
            raise ModelValidityError("r0 must be positive at every node")
        beta = SpectralField.from_values(grid, E * h / (rho * r0f.values**2))
        return cls(r0f, rho_w * h / rho, beta, float(kappa), float(gamma), viscous_form,
                   physical=dict(rho=rho, rho_w=rho_w, h=h, E=E))


@dataclass(frozen=True, eq=False)
class State:
    """Wall displacement eta and axial velocity u at one instant."""

    eta: SpectralField
    u: SpectralField

    def __post_init__(self):
        if self.eta.grid != self.u.grid:
            raise ConfigurationError("eta and u must share a grid")

    @property
    def grid(self) -> PeriodicGrid:
        return self.eta.grid

    @classmethod
    def zeros(cls, grid) -> "State":
        return cls(SpectralField.zeros(grid), SpectralField.zeros(grid))

    @classmethod
    def from_functions(cls, grid, eta: Callable, u: Callable) -> "State":
        return cls(SpectralField.from_function(grid, eta), SpectralField.from_function(grid, u))

    def __add__(self, other: "State") -> "State":
        return State(self.eta + other.eta, self.u + other.u)

    def __sub__(self, other: "State") -> "State":
        return State(self.eta - other.eta, self.u - other.u)

    def __mul__(self, scalar) -> "State":
        return State(self.eta * scalar, self.u * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "State":
        return State(-self.eta, -self.u)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.eta.coeffs)) and np.all(np.isfinite(self.u.coeffs)))


@dataclass(frozen=True)
class InverseOperatorConfig:
    """Neumann-series settings; ``c0=None`` picks the midpoint of the range of g2."""

    c0: float | None = None
    rho0: float = 0.1
    max_terms: int = 200
    tolerance: float = 1e-13

    def __post_init__(self):
        if self.c0 is not None and not self.c0 > 0:
            raise ConfigurationError(f"c0 must be positive, got {self.c0}")
        if self.rho0 < 0:
            raise ConfigurationError(f"rho0 must be nonnegative, got {self.rho0}")
        if self.max_terms < 1:
            raise ConfigurationError("max_terms must be positive")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive")


# ---------------------------------------------------------------------------
# coefficients and the operator A


def derive_coefficients(params: ModelParams) -> tuple[SpectralField, SpectralField]:
    """g1 = (4 alpha + r0) r0 / 8 and g2 = 8 (1 - alpha r0_xx) / ((4 alpha + r0) r0)."""
    grid = params.grid
    r0 = params.r0.values
    r0xx = derivative(params.r0, 2).values
    g1 = (4 * params.alpha_bar + r0) * r0 / 8
    if np.min(g1) <= 0:
        raise ModelValidityError(f"g1 must be positive; min g1 = {np.min(g1):.3e}")
    g2 = (1 - params.alpha_bar * r0xx) / g1
    return SpectralField.from_values(grid, g1), SpectralField.from_values(grid, g2)


def resolve_c0(g2: SpectralField, cfg: InverseOperatorConfig) -> float:
    if cfg.c0 is not None:
        return cfg.c0
    v = g2.values
    c0 = 0.5 * (v.min() + v.max())
    if not c0 > 0:
        raise HypothesisFailure(f"midpoint c0 = {c0:.3e} is not positive", q=np.inf)
    return float(c0)


def _weighted_q(g2: SpectralField, c0: float, rho0: float) -> float:
    # Roundoff in the highest modes is amplified by e^{rho0 |k|}; that is a
    # property of the grid, not of g2, so the resolution warning is muted here.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        return wiener_norm((g2 - c0) / c0, rho0)


def contraction_factor(params: ModelParams, cfg: InverseOperatorConfig) -> tuple[float, float]:
    """Return (q, c0) without raising."""
    _, g2 = derive_coefficients(params)
    c0 = resolve_c0(g2, cfg)
    return _weighted_q(g2, c0, cfg.rho0), c0


def check_H4(params: ModelParams, cfg: InverseOperatorConfig) -> float:
    """Contraction factor q = ||(g2 - c0)/c0||_{rho0}; raises if q >= 1."""
    q, c0 = contraction_factor(params, cfg)
    if not q < 1:
        raise HypothesisFailure(
            f"||(g2 - c0)/c0||_rho0 = {q:.6g} >= 1 (c0={c0:.6g}, rho0={cfg.rho0})", q=q
        )
    return q


def apply_A(f: SpectralField, params: ModelParams) -> SpectralField:
    """A f = (1 - alpha r0_xx) f - g1 f_xx, with pointwise products."""
    g1, g2 = derive_coefficients(params)
    return g1 * (g2 * f - derivative(f, 2))


def _constant_coefficient(params: ModelParams) -> float:
    if not params.is_constant and not params.r0.is_constant():
        raise RegimeError("r0 is not constant; use inverse_A_general")
    r0 = params.r0.mean
    return (4 * params.alpha_bar + r0) * r0 / 8


def inverse_A_constant(f: SpectralField, params: ModelParams) -> SpectralField:
    C = _constant_coefficient(params)
    xi2 = (f.grid.scale * f.grid.k) ** 2
    return SpectralField(f.grid, f.coeffs / (1 + C * xi2))


@dataclass
class NeumannResult:
    solution: SpectralField
    term_norms: list
    q: float
    c0: float
    residual: float


class NeumannInverse:
    """Precomputed pieces of A^{-1} = (g2 - d_xx)^{-1} g1^{-1} for repeated use.

    The series sum_n A2^{-1} (-A1 A2^{-1})^n uses A1 = multiplication by
    g2 - c0 and A2 = c0 - d_xx (diagonal).  Term norms are measured in the
    unweighted Wiener norm, where each term is at most q times the previous.
    """

    def __init__(self, params: ModelParams, cfg: InverseOperatorConfig | None = None,
                 check: bool = True):
        cfg = cfg or InverseOperatorConfig()
        self.params, self.cfg = params, cfg
        g1, g2 = derive_coefficients(params)
        self.grid = params.grid
        self.c0 = resolve_c0(g2, cfg)
        self.q = _weighted_q(g2, self.c0, cfg.rho0)
        if check and not self.q < 1:
            raise HypothesisFailure(
                f"||(g2 - c0)/c0||_rho0 = {self.q:.6g} >= 1 (c0={self.c0:.6g})", q=self.q
            )
        self._g1 = g1.values
        self._g2 = g2.values
        self._shift = g2.values - self.c0
        self._a2 = self.c0 + (self.grid.scale * self.grid.k) ** 2

    def solve(self, f: SpectralField, check_residual: bool = True) -> NeumannResult:
        n = self.grid.n_points
        h = np.fft.fft(f.values / self._g1) / n
        total = h.copy()
        term = h
        norms = [float(np.sum(np.abs(term)))]
        scale = max(norms[0], 1e-300)
        converged = norms[0] == 0.0
        for _ in range(self.cfg.max_terms - 1):
            if converged:
                break
            w = np.fft.ifft(term / self._a2 * n).real
            term = -np.fft.fft(self._shift * w) / n
            total += term
            norms.append(float(np.sum(np.abs(term))))
            if norms[-1] < self.cfg.tolerance * scale:
                converged = True
        if not converged:
            raise ConvergenceError(
                f"Neumann series not converged in {self.cfg.max_terms} terms "
                f"(q={self.q:.4g}, last term {norms[-1]:.3e})",
                q=self.q, last_term=norms[-1],
            )
        out = SpectralField(self.grid, total / self._a2)
        residual = 0.0
        if check_residual:
            fn = l2_norm(f)
            if fn > 0:
                Au = self._g1 * (self._g2 * out.values - derivative(out, 2).values)
                residual = float(np.linalg.norm(Au - f.values) / np.linalg.norm(f.values))
                if residual > 1e-10:
                    raise ConvergenceError(
                        f"Neumann inverse residual {residual:.3e} exceeds 1e-10",
                        q=self.q, residual=residual,
                    )
        return NeumannResult(out, norms, self.q, self.c0, residual)

    def __call__(self, f: SpectralField) -> SpectralField:
        return self.solve(f, check_residual=False).solution


def inverse_A_general(f: SpectralField, params: ModelParams,
                      cfg: InverseOperatorConfig | None = None) -> SpectralField:
    return NeumannInverse(params, cfg).solve(f).solution


# ---------------------------------------------------------------------------
# right-hand sides


def _zero_nyquist(f: SpectralField) -> SpectralField:
    c = f.coeffs.copy()
    c[f.grid.nyquist] = 0.0
    return SpectralField(f.grid, c)


def _finish(eta_t: SpectralField, u_t: SpectralField) -> State:
    return State(_zero_nyquist(eta_t), _zero_nyquist(u_t))


def _constant_u_forcing(state: State, params: ModelParams, r0: float, beta: float):
    u = state.u
    ux = derivative(u, 1)
    forcing = -beta * derivative(state.eta, 1) - product(u, ux) - params.kappa * u
    if params.gamma:
        forcing = forcing + (params.gamma * beta * r0 / 2) * derivative(u, 2)
    return forcing


def _constant_regime(params: ModelParams) -> tuple[float, float]:
    if not params.is_constant:
        raise RegimeError("constant-coefficient system requires constant r0 and beta_bar")
    return params.r0.mean, params.beta_bar.mean


def rhs_constant(state: State, params: ModelParams) -> State:
    r0, beta = _constant_regime(params)
    eta, u = state.eta, state.u
    ux = derivative(u, 1)
    eta_t = -(r0 / 2) * ux - 0.5 * product(eta, ux) - product(derivative(eta, 1), u)
    u_t = inverse_A_constant(_constant_u_forcing(state, params, r0, beta), params)
    return _finish(eta_t, u_t)


def rhs_mollified(state: State, params: ModelParams, epsilon: float) -> State:
    """Constant system with the transport term replaced by J(J(eta_x) u)."""
    r0, beta = _constant_regime(params)
    eta, u = state.eta, state.u
    ux = derivative(u, 1)
    transport = mollify(product(mollify(derivative(eta, 1), epsilon), u), epsilon)
    eta_t = -(r0 / 2) * ux - 0.5 * product(eta, ux) - transport
    u_t = inverse_A_constant(_constant_u_forcing(state, params, r0, beta), params)
    return _finish(eta_t, u_t)


def general_forcing(state: State, params: ModelParams, nonlinear: bool = True) -> SpectralField:
    """Bracketed right-hand side of the general u-equation, before A^{-1}."""
    eta, u = state.eta, state.u
    r0, beta = params.r0, params.beta_bar
    r0x = derivative(r0, 1)
    ux = derivative(u, 1)
    beta_eta = product(beta, eta)
    tilt = dealias(((3 * params.alpha_bar + r0) * r0x) * 0.5)
    forcing = -derivative(beta_eta, 1) - product(tilt, derivative(beta_eta, 2)) - params.kappa * u
    if nonlinear:
        forcing = forcing - product(u, ux)
    if params.gamma:
        flux = product(beta, product(r0x, u) + 0.5 * product(r0, ux))
        if params.viscous_form == "eq2":
            forcing = forcing + params.gamma * derivative(flux, 1)
        else:
            forcing = forcing + params.gamma * flux
    return forcing


def general_eta_rate(state: State, params: ModelParams, nonlinear: bool = True) -> SpectralField:
    """-(1/2)(r0 + eta) u_x - (r0 + eta)_x u."""
    w = params.r0 + state.eta if nonlinear else params.r0
    ux = derivative(state.u, 1)
    return -0.5 * product(w, ux) - product(derivative(w, 1), state.u)


def rhs_general(state: State, params: ModelParams, cfg: InverseOperatorConfig | None = None,
                *, inverse: NeumannInverse | None = None, nonlinear: bool = True) -> State:
    """Variable-radius system.  Pass a prebuilt ``inverse`` to avoid recomputing
    the Neumann coefficients on every call."""
    inv = inverse or NeumannInverse(params, cfg)
    eta_t = general_eta_rate(state, params, nonlinear)
    u_t = inv(general_forcing(state, params, nonlinear))
    return _finish(eta_t, u_t)
