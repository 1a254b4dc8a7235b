"""Time integration with energy, Wiener-norm and conservation diagnostics."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, NumericFailure, RegimeError
from .model import (
    InverseOperatorConfig,
    ModelParams,
    NeumannInverse,
    State,
    rhs_constant,
    rhs_general,
    rhs_mollified,
)
from .spectral import ResolutionWarning, SpectralField, fit_analyticity_radius, sobolev_norm, wiener_norm

MODES = ("constant", "general", "mollified")


def worker_count() -> int:
    """Thread cap for experiment sweeps, from VESSELWAVE_THREADS."""
    raw = os.environ.get("VESSELWAVE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigurationError(f"VESSELWAVE_THREADS must be an integer, got {raw!r}")
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    t_final: float = 1.0
    scheme: str = "rk4"
    record_stride: int = 1
    s: int = 2
    blowup_factor: float = 1e6

    def __post_init__(self):
        if not self.dt > 0 or not self.t_final > 0:
            raise ConfigurationError("dt and t_final must be positive")
        if self.scheme != "rk4":
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.record_stride < 1:
            raise ConfigurationError("record_stride must be positive")
        if self.s < 2:
            raise ConfigurationError(f"energy index s must be >= 2, got {self.s}")
        n = self.t_final / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ConfigurationError(f"t_final/dt = {n} is not an integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    diagnostics: dict
    status: str = "ok"
    message: str = ""

    @property
    def diverged(self) -> bool:
        return self.status != "ok"

    @property
    def final(self) -> State:
        return self.states[-1]


# ---------------------------------------------------------------------------
# functionals


def energy(state: State, s: int = 2) -> tuple[float, float, float, float]:
    """(E0, E1, E2, E) with E1 on s derivatives of eta and E2 on s+1 of u."""
    if s < 2:
        raise ConfigurationError(f"s must be >= 2, got {s}")
    grid = state.grid
    xi2 = (grid.scale * grid.k) ** 2
    a_eta = np.abs(state.eta.coeffs) ** 2
    a_u = np.abs(state.u.coeffs) ** 2
    half_m = 0.5 * grid.period
    e0 = half_m * float(np.sum(a_eta + a_u))
    e1 = half_m * float(np.sum(xi2**s * a_eta))
    e2 = half_m * float(np.sum(xi2 ** (s + 1) * a_u))
    return e0, e1, e2, e0 + e1 + e2


def difference_energy(a: State, b: State) -> float:
    """Z = int (eta - eta*)^2 + (u - u*)^2 + (u_x - u*_x)^2 dx."""
    if a.grid != b.grid:
        raise ConfigurationError("states live on different grids")
    grid = a.grid
    xi2 = (grid.scale * grid.k) ** 2
    d_eta = np.abs(a.eta.coeffs - b.eta.coeffs) ** 2
    d_u = np.abs(a.u.coeffs - b.u.coeffs) ** 2
    return float(grid.period * np.sum(d_eta + (1 + xi2) * d_u))


def mass(state: State, params: ModelParams) -> float:
    """int (r0 + eta)^2 dx, invariant of both systems."""
    w = params.r0 + state.eta
    return float(w.grid.period * np.sum(np.abs(w.coeffs) ** 2))


def state_analyticity_radius(state: State, band) -> float:
    """Smaller of the fitted strip widths of eta and u; NaN when unfit."""
    fits = []
    for f in (state.eta, state.u):
        try:
            fits.append(fit_analyticity_radius(f, *band))
        except InsufficientDataError:
            pass
    return min(fits) if fits else math.nan


def state_wiener_norm(state: State, rho: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        return wiener_norm(state.eta, rho) + wiener_norm(state.u, rho)


# ---------------------------------------------------------------------------
# stepping


def make_rhs(params: ModelParams, mode: str = "constant", epsilon: float | None = None,
             inverse_cfg: InverseOperatorConfig | None = None) -> Callable[[State], State]:
    if mode == "constant":
        return lambda st: rhs_constant(st, params)
    if mode == "mollified":
        if epsilon is None or not epsilon > 0:
            raise ConfigurationError("mollified mode needs a positive epsilon")
        return lambda st: rhs_mollified(st, params, epsilon)
    if mode == "general":
        inv = NeumannInverse(params, inverse_cfg)
        return lambda st: rhs_general(st, params, inverse=inv)
    raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}")


def rk4_step(rhs: Callable[[State], State], state: State, dt: float) -> State:
    k1 = rhs(state)
    k2 = rhs(state + (0.5 * dt) * k1)
    k3 = rhs(state + (0.5 * dt) * k2)
    k4 = rhs(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def advance(rhs: Callable[[State], State], state: State, dt: float, n_steps: int) -> State:
    """Plain RK4 stepping with no diagnostics; ``dt`` may be negative."""
    for _ in range(n_steps):
        state = rk4_step(rhs, state, dt)
    return state


def integrate(state0: State, params: ModelParams, cfg: IntegratorConfig, mode: str = "constant",
              *, epsilon: float | None = None, inverse_cfg: InverseOperatorConfig | None = None,
              rhos: Sequence[float] = (0.0,), fit_band: tuple[int, int] | None = None,
              reverse: bool = False) -> Trajectory:
    """Integrate with classical RK4 and record diagnostics every ``record_stride`` steps.

    With ``reverse=True`` the system is stepped backward in time; recorded
    times are then elapsed integration time.
    """
    if state0.grid != params.grid:
        raise ConfigurationError("initial state and parameters live on different grids")
    if not state0.is_finite():
        raise NumericFailure("initial data not finite", step=0)
    rhs = make_rhs(params, mode, epsilon, inverse_cfg)
    dt = -cfg.dt if reverse else cfg.dt

    diag: dict[str, list] = {k: [] for k in ("E0", "E1", "E2", "E", "mass")}
    for rho in rhos:
        diag[f"wiener@{rho:g}"] = []
    if fit_band is not None:
        diag["analyticity_radius"] = []

    def record(st):
        for key, val in zip(("E0", "E1", "E2", "E"), energy(st, cfg.s)):
            diag[key].append(val)
        diag["mass"].append(mass(st, params))
        for rho in rhos:
            diag[f"wiener@{rho:g}"].append(state_wiener_norm(st, rho))
        if fit_band is not None:
            diag["analyticity_radius"].append(state_analyticity_radius(st, fit_band))

    times, states = [0.0], [state0]
    record(state0)
    e_start = diag["E"][0]
    threshold = cfg.blowup_factor * e_start if e_start > 0 else math.inf
    status, message = "ok", ""
    state = state0
    for step in range(1, cfg.n_steps + 1):
        state = rk4_step(rhs, state, dt)
        if not state.is_finite():
            raise NumericFailure(f"non-finite coefficients at step {step}", step=step)
        e_now = energy(state, cfg.s)[3]
        tripped = e_now > threshold
        if step % cfg.record_stride == 0 or step == cfg.n_steps or tripped:
            times.append(step * cfg.dt)
            states.append(state)
            record(state)
        if tripped:
            status = "diverged"
            message = f"diverged at t={step * cfg.dt:.6g}: E={e_now:.3e} > {threshold:.3e}"
            break
    return Trajectory(np.asarray(times), states,
                      {k: np.asarray(v) for k, v in diag.items()}, status, message)


# ---------------------------------------------------------------------------
# experiments


def _map(func, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _require_constant(params: ModelParams):
    if not params.is_constant:
        raise RegimeError("experiment requires the constant-r0 system")


def window_constant(times, E) -> float:
    """Smallest c with dE/dt <= c (E + E^{3/2}) along a sampled energy curve."""
    times, E = np.asarray(times), np.asarray(E)
    if len(times) < 2:
        return 0.0
    rate = np.diff(E) / np.diff(times)
    mid = 0.5 * (E[1:] + E[:-1])
    denom = mid + mid**1.5
    ok = denom > 0
    if not ok.any():
        return 0.0
    return float(max(0.0, np.max(rate[ok] / denom[ok])))


def energy_window(d_bar: float, c: float) -> float:
    """Length of [0, d / (c (2d + (2d)^{3/2}))] on which E <= 2d is guaranteed."""
    if c <= 0:
        return math.inf
    return d_bar / (c * (2 * d_bar + (2 * d_bar) ** 1.5))


@dataclass
class EpsilonRun:
    epsilon: float
    max_energy: float
    window_c: float
    window: float
    bound_holds: bool
    h0_gap: float
    hs_gap: float
    hs_interp_bound: float
    status: str


@dataclass
class EpsilonFamilyReport:
    d_bar: float
    runs: list
    reference_max_energy: float
    order: float
    window_spread: float
    energy_spread: float
    gaps_monotone: bool
    partial: bool
    trajectories: dict = field(default_factory=dict, repr=False)


def _gap_series(traj_a: Trajectory, traj_b: Trajectory, s: int, s_prime: float):
    n = min(len(traj_a.states), len(traj_b.states))
    h0, hs, bound = [], [], []
    for sa, sb in zip(traj_a.states[:n], traj_b.states[:n]):
        d = sa - sb
        g0 = math.hypot(sobolev_norm(d.eta, 0), sobolev_norm(d.u, 0))
        gs = math.hypot(sobolev_norm(d.eta, s_prime), sobolev_norm(d.u, s_prime))
        gtop = math.hypot(sobolev_norm(d.eta, s), sobolev_norm(d.u, s))
        th = s_prime / s
        h0.append(g0)
        hs.append(gs)
        bound.append(g0 ** (1 - th) * gtop**th if g0 > 0 else 0.0)
    return np.array(h0), np.array(hs), np.array(bound)


def epsilon_family_experiment(state0: State, params: ModelParams, cfg: IntegratorConfig,
                              epsilons: Sequence[float], s_prime: float = 1.0) -> EpsilonFamilyReport:
    """Mollified runs per epsilon against the unmollified reference.

    For every run the empirical constant c in dE/dt <= c (E + E^{3/2}) is
    fitted, and the resulting guaranteed window d/(c(2d + (2d)^{3/2})) is
    reported along with a direct check that E <= 2d on it.
    """
    _require_constant(params)
    epsilons = list(epsilons)
    d_bar = energy(state0, cfg.s)[3]

    def run(eps):
        if eps is None:
            return integrate(state0, params, cfg, "constant")
        return integrate(state0, params, cfg, "mollified", epsilon=eps)

    trajs = _map(run, [None] + epsilons)
    ref, family = trajs[0], trajs[1:]
    runs = []
    for eps, tr in zip(epsilons, family):
        c = window_constant(tr.times, tr.diagnostics["E"])
        window = energy_window(d_bar, c)
        inside = tr.times <= window
        holds = bool(np.all(tr.diagnostics["E"][inside] <= 2 * d_bar * (1 + 1e-12)))
        h0, hs, bound = _gap_series(tr, ref, cfg.s, s_prime)
        runs.append(EpsilonRun(eps, float(tr.diagnostics["E"].max()), c, window, holds,
                               float(h0.max()), float(hs.max()), float(bound.max()), tr.status))
    gaps = np.array([r.h0_gap for r in runs])
    eps_arr = np.array(epsilons)
    order = math.nan
    pos = gaps > 0
    if pos.sum() >= 2:
        order = float(np.polyfit(np.log(eps_arr[pos]), np.log(gaps[pos]), 1)[0])
    by_eps = np.argsort(-eps_arr)
    ordered = gaps[by_eps]
    # Spread of the fitted windows themselves; E <= 2d is checked directly on
    # the part of each window that was integrated.
    windows = np.array([r.window for r in runs])
    windows = windows[np.isfinite(windows)]
    if windows.size == 0:
        windows = np.array([math.inf])
    maxE = np.array([r.max_energy for r in runs])
    return EpsilonFamilyReport(
        d_bar=d_bar,
        runs=runs,
        reference_max_energy=float(ref.diagnostics["E"].max()),
        order=order,
        window_spread=float((windows.max() - windows.min()) / windows.max()) if np.isfinite(windows.max()) else 0.0,
        energy_spread=float((maxE.max() - maxE.min()) / maxE.max()) if maxE.max() > 0 else 0.0,
        gaps_monotone=bool(np.all(np.diff(ordered) < 0)),
        partial=any(t.diverged for t in trajs),
        trajectories={"reference": ref, **{eps: t for eps, t in zip(epsilons, family)}},
    )


@dataclass
class ContinuousDependenceReport:
    times: np.ndarray
    deltas: list
    ratios: dict
    growth_constants: dict
    collapse_spread: float
    partial: bool


def growth_constant(times, Z) -> float:
    """Smallest c with Z(t) <= Z(0) e^{ct} on the sampled curve."""
    times, Z = np.asarray(times), np.asarray(Z)
    if Z[0] <= 0:
        return 0.0
    t, z = times[1:], Z[1:]
    return float(np.max(np.log(np.maximum(z, 1e-300) / Z[0]) / t))


def continuous_dependence_experiment(state0: State, deltas: Sequence[float], params: ModelParams,
                                     cfg: IntegratorConfig) -> ContinuousDependenceReport:
    """Perturb u0 by delta cos(x) and track the difference energy Z(t)."""
    _require_constant(params)
    grid = params.grid
    bump = SpectralField.from_function(grid, lambda x: np.cos(grid.scale * x))
    deltas = list(deltas)
    base = integrate(state0, params, cfg, "constant")

    def run(delta):
        return integrate(State(state0.eta, state0.u + delta * bump), params, cfg, "constant")

    trajs = _map(run, deltas)
    ratios, constants = {}, {}
    n = min([len(base.states)] + [len(t.states) for t in trajs])
    times = base.times[:n]
    for delta, tr in zip(deltas, trajs):
        Z = np.array([difference_energy(a, b) for a, b in zip(tr.states[:n], base.states[:n])])
        ratios[delta] = Z / Z[0] if Z[0] > 0 else Z
        constants[delta] = growth_constant(times, Z)
    nonzero = [d for d in deltas if d != 0]
    spread = 0.0
    if len(nonzero) >= 2:
        ref = ratios[min(nonzero, key=abs)]
        spread = float(max(np.max(np.abs(ratios[d] / ref - 1)) for d in nonzero))
    return ContinuousDependenceReport(times, deltas, ratios, constants, spread,
                                      base.diverged or any(t.diverged for t in trajs))


# ---------------------------------------------------------------------------
# initial data


def scale_to_energy(state: State, d_bar: float, s: int = 2) -> State:
    """Rescale so that E(0) = d_bar."""
    e = energy(state, s)[3]
    if e <= 0:
        raise ConfigurationError("cannot rescale zero data to a positive energy")
    return state * math.sqrt(d_bar / e)


def powerlaw_state(grid, seed: int = 0, exponent: float = 4.0, n_modes: int = 64,
                   eta_scale: float = 1.0, u_scale: float = 1.0) -> State:
    """Band-limited data with |f_k| ~ k^{-exponent} and random phases."""
    rng = np.random.default_rng(seed)
    n_modes = min(n_modes, grid.dealias_cutoff)
    k = np.arange(1, n_modes + 1)
    amp = k.astype(float) ** (-exponent)

    def field_(scale):
        phases = rng.uniform(0, 2 * np.pi, n_modes)
        return SpectralField.from_modes(grid, dict(zip(k.tolist(), scale * amp * np.exp(1j * phases))))

    return State(field_(eta_scale), field_(u_scale))


def analytic_state(grid, amplitude: float = 0.01, b: float = 1.25) -> State:
    """eta = u = amplitude / (b - cos x); analytic in a strip of width arccosh(b)."""
    f = SpectralField.from_function(grid, lambda x: amplitude / (b - np.cos(grid.scale * x)))
    return State(f, f)


# ---------------------------------------------------------------------------
# Wiener-scale inequalities


@dataclass
class WienerFrameCheck:
    monotone: bool
    algebra: bool
    cauchy: bool
    worst_cauchy_ratio: float

    @property
    def ok(self) -> bool:
        return self.monotone and self.algebra and self.cauchy


def wiener_frame_check(state: State, rhos: Sequence[float]) -> WienerFrameCheck:
    """Check, for eta and u, the scale inequalities of the weighted Wiener norms.

    * ||f||_{rho'} <= ||f||_rho for rho' <= rho;
    * ||f g||_rho <= ||f||_rho ||g||_rho (with f = eta, g = u);
    * ||f_x||_{rho'} <= e / (rho - rho') ||f||_rho for rho' < rho.
    """
    from .spectral import derivative

    rhos = sorted(rhos)
    rtol = 1e-12
    monotone = algebra = cauchy = True
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        for f in (state.eta, state.u):
            norms = [wiener_norm(f, r) for r in rhos]
            monotone &= all(a <= b * (1 + rtol) for a, b in zip(norms, norms[1:]))
            fx = derivative(f, 1)
            for i, rp in enumerate(rhos):
                dnorm = wiener_norm(fx, rp)
                for r, n_r in zip(rhos[i + 1:], norms[i + 1:]):
                    bound = math.e / (r - rp) * n_r
                    ratio = dnorm / bound if bound > 0 else (0.0 if dnorm == 0 else math.inf)
                    worst = max(worst, ratio)
                    cauchy &= ratio <= 1 + rtol
        prod = state.eta * state.u
        for r in rhos:
            lhs = wiener_norm(prod, r)
            rhs = wiener_norm(state.eta, r) * wiener_norm(state.u, r)
            algebra &= lhs <= rhs * (1 + rtol) + 1e-300
    return WienerFrameCheck(bool(monotone), bool(algebra), bool(cauchy), float(worst))


# ---------------------------------------------------------------------------
# convergence and reversibility checks


def self_convergence_order(state0: State, params: ModelParams, mode: str = "constant",
                           t_final: float = 1.0, dt: float = 0.1, *, epsilon: float | None = None,
                           inverse_cfg: InverseOperatorConfig | None = None) -> float:
    """Observed RK4 order from runs at dt, dt/2, dt/4 (Richardson ratio).

    Returns NaN when the differences are at rounding level relative to the
    size of the data (below 1e-12 of its coefficient l2 norm).
    """
    rhs = make_rhs(params, mode, epsilon, inverse_cfg)
    n = int(round(t_final / dt))
    finals = [advance(rhs, state0, dt / 2**j, n * 2**j) for j in range(3)]

    def dist(a, b):
        d = a - b
        return math.sqrt(np.sum(np.abs(d.eta.coeffs) ** 2) + np.sum(np.abs(d.u.coeffs) ** 2))

    e1, e2 = dist(finals[0], finals[1]), dist(finals[1], finals[2])
    floor = 1e-12 * dist(state0, State.zeros(state0.grid))
    if e2 <= floor or e1 <= floor:
        return math.nan
    return math.log2(e1 / e2)


def time_reversal_error(state0: State, params: ModelParams, t_final: float = 1.0,
                        dt: float = 1e-3) -> float:
    """Sup-norm error after integrating forward then backward (constant system)."""
    _require_constant(params)
    if params.kappa or params.gamma:
        raise RegimeError("time reversal applies only when kappa = gamma = 0")
    rhs = make_rhs(params, "constant")
    n = int(round(t_final / dt))
    back = advance(rhs, advance(rhs, state0, dt, n), -dt, n)
    d = back - state0
    return float(max(np.abs(d.eta.values).max(), np.abs(d.u.values).max()))
