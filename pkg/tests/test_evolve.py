import math

import numpy as np
import pytest

from vesselwave.errors import ConfigurationError, NumericFailure, RegimeError
from vesselwave.evolve import (
    IntegratorConfig,
    advance,
    analytic_state,
    continuous_dependence_experiment,
    difference_energy,
    energy,
    energy_window,
    epsilon_family_experiment,
    integrate,
    window_constant,
    make_rhs,
    mass,
    powerlaw_state,
    scale_to_energy,
    self_convergence_order,
    time_reversal_error,
    wiener_frame_check,
    worker_count,
)
from vesselwave.model import ModelParams, State
from vesselwave.spectral import PeriodicGrid, SpectralField


def rich_state(grid):
    """Smooth data with several active modes (clean RK4 error signal)."""
    return State.from_functions(grid, lambda x: 0.3 * np.cos(x) + 0.1 * np.sin(3 * x),
                                lambda x: 0.5 * np.cos(2 * x) + 0.2 * np.sin(x))


def sup_dist(a: State, b: State) -> float:
    d = a - b
    return max(np.abs(d.eta.values).max(), np.abs(d.u.values).max())


class TestEnergy:
    def test_zero(self, grid):
        assert energy(State.zeros(grid)) == (0.0, 0.0, 0.0, 0.0)

    def test_cos_eta(self, grid):
        st = State(SpectralField.from_function(grid, np.cos), SpectralField.zeros(grid))
        np.testing.assert_allclose(energy(st, 2), (np.pi / 2, np.pi / 2, 0.0, np.pi), rtol=1e-12, atol=1e-14)

    def test_sin2_u(self, grid):
        st = State(SpectralField.zeros(grid), SpectralField.from_function(grid, lambda x: np.sin(2 * x)))
        np.testing.assert_allclose(energy(st, 2), (np.pi / 2, 0.0, 32 * np.pi, 32.5 * np.pi), rtol=1e-12, atol=1e-14)

    def test_quadrature_agrees(self, grid, rng):
        from conftest import random_state
        from vesselwave.spectral import derivative

        st = random_state(grid, rng)
        e0, e1, e2, _ = energy(st, 2)
        dx = grid.dx
        assert e0 == pytest.approx(0.5 * dx * np.sum(st.eta.values**2 + st.u.values**2), rel=1e-12)
        assert e1 == pytest.approx(0.5 * dx * np.sum(derivative(st.eta, 2).values ** 2), rel=1e-10)
        assert e2 == pytest.approx(0.5 * dx * np.sum(derivative(st.u, 3).values ** 2), rel=1e-10)

    def test_s_validation(self, grid):
        with pytest.raises(ConfigurationError):
            energy(State.zeros(grid), 1)


class TestDifferenceEnergy:
    def test_identical(self, grid, rng):
        from conftest import random_state

        st = random_state(grid, rng)
        assert difference_energy(st, st) == 0

    def test_eta_cos(self, grid):
        a = State(SpectralField.from_function(grid, np.cos), SpectralField.zeros(grid))
        assert difference_energy(a, State.zeros(grid)) == pytest.approx(np.pi, rel=1e-12)

    def test_u_sin(self, grid):
        a = State(SpectralField.zeros(grid), SpectralField.from_function(grid, np.sin))
        assert difference_energy(a, State.zeros(grid)) == pytest.approx(2 * np.pi, rel=1e-12)

    def test_grid_mismatch(self, grid):
        with pytest.raises(ConfigurationError):
            difference_energy(State.zeros(grid), State.zeros(PeriodicGrid(64)))


class TestIntegratorConfig:
    def test_defaults(self):
        cfg = IntegratorConfig()
        assert cfg.dt == 1e-3 and cfg.n_steps == 1000 and cfg.s == 2

    @pytest.mark.parametrize("kw", [dict(dt=0.0), dict(t_final=-1.0), dict(scheme="euler"),
                                    dict(record_stride=0), dict(s=1), dict(dt=0.3, t_final=1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            IntegratorConfig(**kw)


class TestIntegrate:
    def test_zero_trajectory(self, grid, unit_params):
        tr = integrate(State.zeros(grid), unit_params, IntegratorConfig(dt=1e-2, t_final=0.1))
        assert np.all(tr.diagnostics["E"] == 0)
        assert all(np.all(s.eta.coeffs == 0) and np.all(s.u.coeffs == 0) for s in tr.states)
        assert tr.status == "ok"

    def test_records_aligned(self, grid, unit_params):
        tr = integrate(rich_state(grid), unit_params, IntegratorConfig(dt=1e-2, t_final=0.1, record_stride=3),
                       rhos=(0.0, 0.2), fit_band=(2, 30))
        n = len(tr.times)
        assert np.all(np.diff(tr.times) > 0)
        assert tr.times[-1] == pytest.approx(0.1)
        assert all(len(v) == n for v in tr.diagnostics.values()) and len(tr.states) == n

    def test_blowup_guard(self, grid):
        p = ModelParams.create(grid)
        st = State.from_functions(grid, lambda x: 0.3 * np.cos(2 * x), lambda x: 0 * x)
        tr = integrate(st, p, IntegratorConfig(dt=1e-2, t_final=1.0, blowup_factor=1.01))
        assert tr.diverged and tr.message.startswith("diverged at t=")
        assert tr.times[-1] < 1.0

    def test_nonfinite_initial(self, grid, unit_params):
        bad = State(SpectralField(grid, np.full(grid.n_points, np.nan)), SpectralField.zeros(grid))
        with pytest.raises(NumericFailure):
            integrate(bad, unit_params, IntegratorConfig(dt=1e-2, t_final=0.1))

    def test_unknown_mode(self, unit_params):
        with pytest.raises(ConfigurationError):
            make_rhs(unit_params, "implicit")

    def test_mollified_requires_epsilon(self, unit_params):
        with pytest.raises(ConfigurationError):
            make_rhs(unit_params, "mollified")


class TestConvergence:
    @pytest.mark.parametrize("mode", ["constant", "general", "mollified"])
    def test_rk4_order_against_reference(self, mode):
        grid = PeriodicGrid(64)
        p = ModelParams.sine_family(grid, 1.0, 0.05 if mode == "general" else 0.0)
        rhs = make_rhs(p, mode, epsilon=0.2)
        st = rich_state(grid)
        T = 0.5
        ref = advance(rhs, st, 2.5e-3 / 16, int(round(T * 16 / 2.5e-3)))
        errs = [sup_dist(advance(rhs, st, dt, int(round(T / dt))), ref) for dt in (1e-2, 5e-3, 2.5e-3)]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        np.testing.assert_allclose(ratios, 16.0, rtol=0.1)

    def test_rk4_small_cosine_data(self, grid, unit_params):
        st = State.from_functions(grid, lambda x: 0.01 * np.cos(x), lambda x: 0.01 * np.cos(x))
        rhs = make_rhs(unit_params, "constant")
        ref = advance(rhs, st, 2.5e-3 / 16, 6400)
        errs = [sup_dist(advance(rhs, st, dt, int(round(1.0 / dt))), ref) for dt in (1e-2, 5e-3, 2.5e-3)]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        np.testing.assert_allclose(ratios, 16.0, rtol=0.1)

    def test_self_convergence_order(self):
        grid = PeriodicGrid(64)
        order = self_convergence_order(rich_state(grid), ModelParams.create(grid))
        assert order == pytest.approx(4.0, abs=0.2)

    def test_order_nan_at_rounding_level(self, grid, unit_params):
        assert math.isnan(self_convergence_order(State.zeros(grid), unit_params))

    @pytest.mark.parametrize("eps", [0.0, 0.05])
    def test_mass_drift(self, grid, eps):
        p = ModelParams.sine_family(grid, 1.0, eps, kappa=0.1, gamma=0.05)
        tr = integrate(rich_state(grid) * 0.2, p, IntegratorConfig(dt=1e-3, t_final=1.0, record_stride=100),
                       "general" if eps else "constant")
        m = tr.diagnostics["mass"]
        assert np.max(np.abs(m - m[0])) / m[0] < 1e-8
        assert m[0] == pytest.approx(mass(tr.states[0], p))

    def test_time_reversal(self, grid, unit_params):
        st = rich_state(grid) * 0.1
        assert time_reversal_error(st, unit_params, 1.0, 1e-3) < 1e-6 * sup_dist(st, State.zeros(grid))

    def test_time_reversal_regime(self, grid):
        with pytest.raises(RegimeError):
            time_reversal_error(State.zeros(grid), ModelParams.create(grid, kappa=0.1))


class TestEpsilonFamily:
    def test_inactive_mollifier(self):
        # 1/eps above the dealias cutoff (21 on 64 nodes): mollification is a no-op
        grid = PeriodicGrid(64)
        p = ModelParams.create(grid)
        st = State.from_functions(grid, lambda x: 0.05 * np.cos(4 * x), lambda x: 0.05 * np.sin(3 * x))
        rep = epsilon_family_experiment(st, p, IntegratorConfig(dt=1e-2, t_final=0.2), [0.04, 0.02])
        assert all(r.h0_gap < 1e-13 for r in rep.runs)

    def test_short_family(self):
        grid = PeriodicGrid(128)
        p = ModelParams.create(grid)
        st = scale_to_energy(powerlaw_state(grid, 1, 4.0, 40), 0.01)
        rep = epsilon_family_experiment(st, p, IntegratorConfig(dt=2e-3, t_final=0.2), [0.2, 0.1, 0.05, 0.025])
        assert rep.energy_spread < 0.1
        assert rep.gaps_monotone
        assert all(r.max_energy <= 2 * rep.d_bar for r in rep.runs)
        assert all(r.hs_gap <= r.hs_interp_bound * (1 + 1e-12) for r in rep.runs)
        assert not rep.partial

    def test_requires_constant(self, grid):
        with pytest.raises(RegimeError):
            epsilon_family_experiment(State.zeros(grid), ModelParams.sine_family(grid, 1.0, 0.05),
                                      IntegratorConfig(dt=1e-2, t_final=0.1), [0.1])

    def test_window_shape_across_sizes(self):
        # eta = A cos 2x feeds energy into the more heavily weighted u-mode, so E grows.
        grid = PeriodicGrid(64)
        p = ModelParams.create(grid)
        cfg = IntegratorConfig(dt=1e-2, t_final=2.0)
        base = State.from_functions(grid, lambda x: np.cos(2 * x), lambda x: 0 * x)
        runs = {}
        for d in (0.01, 0.04, 0.16):
            runs[d] = integrate(scale_to_energy(base, d), p, cfg, "mollified", epsilon=0.1)
        c = max(window_constant(t.times, t.diagnostics["E"]) for t in runs.values())
        assert c > 0
        windows = [energy_window(d, c) for d in runs]
        assert windows[0] > windows[1] > windows[2]
        for (d, tr), w in zip(runs.items(), windows):
            inside = tr.times <= w
            assert np.all(tr.diagnostics["E"][inside] <= 2 * d)

    def test_energy_window_formula(self):
        assert energy_window(0.01, 2.0) == pytest.approx(0.01 / (2.0 * (0.02 + 0.02**1.5)))
        assert energy_window(0.01, 0.0) == math.inf


class TestContinuousDependence:
    def test_uniqueness(self, grid, unit_params):
        st = rich_state(grid) * 0.1
        cfg = IntegratorConfig(dt=1e-2, t_final=0.5)
        a, b = integrate(st, unit_params, cfg), integrate(st, unit_params, cfg)
        assert max(difference_energy(x, y) for x, y in zip(a.states, b.states)) < 1e-14

    def test_collapse(self):
        grid = PeriodicGrid(128)
        p = ModelParams.create(grid)
        st = rich_state(grid) * 0.2
        rep = continuous_dependence_experiment(st, [1e-2, 1e-4, 1e-6], p,
                                               IntegratorConfig(dt=5e-3, t_final=1.0, record_stride=4))
        assert rep.collapse_spread < 0.2
        for d, c in rep.growth_constants.items():
            assert math.isfinite(c)
            Z0 = 1.0
            assert np.all(rep.ratios[d][1:] <= Z0 * np.exp(c * rep.times[1:]) * (1 + 1e-12))


class TestInitialDataAndFrames:
    def test_scale_to_energy(self, grid):
        st = scale_to_energy(powerlaw_state(grid, 0), 0.04)
        assert energy(st)[3] == pytest.approx(0.04, rel=1e-12)

    def test_powerlaw_deterministic(self, grid):
        a, b = powerlaw_state(grid, 7), powerlaw_state(grid, 7)
        np.testing.assert_array_equal(a.eta.coeffs, b.eta.coeffs)

    def test_scale_zero(self, grid):
        with pytest.raises(ConfigurationError):
            scale_to_energy(State.zeros(grid), 1.0)

    def test_frame_check(self, grid):
        chk = wiener_frame_check(analytic_state(grid), (0.0, 0.1, 0.3))
        assert chk.ok and 0 < chk.worst_cauchy_ratio < 1


class TestWorkers:
    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("VESSELWAVE_THREADS", "3")
        assert worker_count() == 3

    def test_env_invalid(self, monkeypatch):
        monkeypatch.setenv("VESSELWAVE_THREADS", "many")
        with pytest.raises(ConfigurationError):
            worker_count()

    def test_default(self, monkeypatch):
        monkeypatch.delenv("VESSELWAVE_THREADS", raising=False)
        assert 1 <= worker_count() <= 4
