import math

import numpy as np
import pytest

from vesselwave.errors import ConfigurationError
from vesselwave.illposedness import (
    OVERFLOW_LEVEL,
    exact_growth_rate,
    general_generator_matrix,
    generator_spectrum,
    illposedness_contrast_report,
    measured_growth_rate,
    simplified_eigenvalue,
    simplified_eigenvector,
    simplified_symbol,
    simplified_system_rhs,
)
from vesselwave.model import ModelParams, State, rhs_general
from vesselwave.spectral import PeriodicGrid, SpectralField


class TestExactRate:
    def test_k1(self):
        assert exact_growth_rate(1) == 0.5

    def test_k2(self):
        assert exact_growth_rate(2) == pytest.approx(2 / math.sqrt(5), rel=1e-15)

    def test_asymptotic_ratio(self):
        assert exact_growth_rate(100) / exact_growth_rate(25) == pytest.approx(2.0, abs=0.002)

    def test_monotone_and_identity(self):
        ks = np.arange(1, 200)
        rates = np.array([exact_growth_rate(k) for k in ks])
        assert np.all(np.diff(rates) > 0)
        np.testing.assert_allclose(rates * np.sqrt(2) * np.sqrt(1 + ks**2.0), ks**1.5, rtol=1e-14)

    def test_domain(self):
        with pytest.raises(ConfigurationError):
            exact_growth_rate(0)


class TestSymbol:
    @pytest.mark.parametrize("xi", [1.0, 2.0, 5.0, 16.0])
    def test_eigenvalues(self, xi):
        ev = np.linalg.eigvals(simplified_symbol(xi))
        np.testing.assert_allclose(ev**2, -1j * xi**3 / (1 + xi**2), rtol=1e-12)
        assert ev.sum() == pytest.approx(0, abs=1e-12)
        assert ev.real.max() == pytest.approx(exact_growth_rate(xi), rel=1e-12)

    @pytest.mark.parametrize("growing", [True, False])
    def test_eigenvectors(self, growing):
        xi = 3.0
        v = simplified_eigenvector(xi, growing)
        lam = simplified_eigenvalue(xi, growing)
        np.testing.assert_allclose(simplified_symbol(xi) @ v, lam * v, atol=1e-12)

    def test_zero_state(self, grid):
        r = simplified_system_rhs(State.zeros(grid))
        assert np.all(r.eta.coeffs == 0) and np.all(r.u.coeffs == 0)

    def test_rhs_matches_symbol(self, grid):
        k = 3
        st = State(SpectralField.from_modes(grid, {k: 1.0}), SpectralField.from_modes(grid, {k: 2.0j}))
        r = simplified_system_rhs(st)
        i = grid.index(k)
        expected = simplified_symbol(float(k)) @ np.array([1.0, 2.0j])
        np.testing.assert_allclose([r.eta.coeffs[i], r.u.coeffs[i]], expected, atol=1e-13)


class TestMeasuredRate:
    @pytest.mark.parametrize("k", [1, 2, 16])
    def test_growing(self, k):
        rep = measured_growth_rate(k)
        assert rep.relative_error < 0.01
        assert rep.predicted_rate == pytest.approx(exact_growth_rate(k))

    def test_k1_value(self):
        assert measured_growth_rate(1).measured_rate == pytest.approx(0.5, rel=0.01)

    def test_k16_value(self):
        assert measured_growth_rate(16).predicted_rate == pytest.approx(64 / (math.sqrt(2) * math.sqrt(257)), rel=1e-14)

    def test_decaying(self):
        rep = measured_growth_rate(4, growing=False)
        assert rep.measured_rate < 0
        assert rep.relative_error < 0.02

    def test_overflow_shortens(self):
        rep = measured_growth_rate(100, t_final=200.0, dt=1e-2, amplitude=1.0)
        assert rep.shortened and rep.t_used < 200.0
        assert rep.relative_error < 0.01
        assert math.exp(rep.predicted_rate * rep.t_used) < OVERFLOW_LEVEL * 10

    def test_unresolved_mode(self):
        with pytest.raises(ConfigurationError):
            measured_growth_rate(200, grid=PeriodicGrid(64))


class TestGenerator:
    def test_dimension_and_check(self):
        grid = PeriodicGrid(64)
        p = ModelParams.create(grid)
        M = general_generator_matrix(p, n=8)
        assert M.shape == (34, 34)
        with pytest.raises(ConfigurationError):
            general_generator_matrix(p, n=32)

    def test_exact_matches_fd(self):
        grid = PeriodicGrid(64)
        p = ModelParams.sine_family(grid, 1.0, 0.05, kappa=0.1, gamma=0.02)
        A = general_generator_matrix(p, n=10, method="exact")
        B = general_generator_matrix(p, n=10, method="fd")
        assert np.abs(A - B).max() < 1e-6 * max(1.0, np.abs(A).max())

    def test_linear_action_random_vector(self, rng):
        grid = PeriodicGrid(64)
        p = ModelParams.sine_family(grid, 1.0, 0.05)
        n = 10
        M = general_generator_matrix(p, n=n)
        v = rng.standard_normal(2 * (2 * n + 1))
        x = grid.scale * grid.nodes

        def build(c):
            vals = c[0] + sum(c[2 * k - 1] * np.cos(k * x) + c[2 * k] * np.sin(k * x) for k in range(1, n + 1))
            return SpectralField.from_values(grid, vals)

        dim = 2 * n + 1
        st = State(build(v[:dim]), build(v[dim:]))
        h = 1e-7
        zero = State.zeros(grid)
        fd = (rhs_general(st * h, p) - rhs_general(zero, p)) * (1 / h)
        Mv = M @ v
        from vesselwave.illposedness import _real_coordinates

        got = np.concatenate([_real_coordinates(fd.eta, n), _real_coordinates(fd.u, n)])
        assert np.abs(got - Mv).max() < 1e-6 * max(1.0, np.abs(Mv).max())

    def test_constant_pure_imaginary(self):
        grid = PeriodicGrid(128)
        spec = generator_spectrum(ModelParams.create(grid), 32)
        assert spec.dimension == 130
        assert abs(spec.max_real_part) < 1e-8

    def test_damping_left_half_plane(self):
        grid = PeriodicGrid(64)
        p = ModelParams.create(grid, kappa=0.2)
        ev = generator_spectrum(p, 16).eigenvalues
        assert ev.real.max() < 1e-10
        # every oscillatory (nonzero-mode) eigenvalue is strictly damped
        assert np.all(ev.real[np.abs(ev) > 1e-8] < -1e-6)

    def test_mean_modes_decouple_constant(self):
        grid = PeriodicGrid(64)
        p = ModelParams.create(grid, kappa=0.1, gamma=0.1)
        n = 8
        M = general_generator_matrix(p, n=n)
        dim = 2 * n + 1
        mean = [0, dim]
        rest = [j for j in range(2 * dim) if j not in mean]
        assert np.abs(M[np.ix_(mean, rest)]).max() < 1e-14
        assert np.abs(M[np.ix_(rest, mean)]).max() < 1e-14
        np.testing.assert_allclose(M[np.ix_(mean, mean)], [[0.0, 0.0], [0.0, -0.1]], atol=1e-14)

    def test_weighted_mass_row_vanishes(self):
        # d/dt of the linearised mass 2 * integral(r0 * eta) is zero for every input
        grid = PeriodicGrid(64)
        eps = 0.05
        p = ModelParams.sine_family(grid, 1.0, eps)
        M = general_generator_matrix(p, n=8)
        # r0 = 1 + eps sin x  =>  mean(r0 * eta) = eta_0 + (eps/2) * eta_sin1
        assert np.abs(M[0] + 0.5 * eps * M[2]).max() < 1e-14
        assert np.abs(M[0]).max() > 1e-3


class TestContrast:
    def test_small_report(self):
        grid = PeriodicGrid(128)
        rep = illposedness_contrast_report(ModelParams.create(grid), ModelParams.sine_family(grid, 1.0, 0.05),
                                           (8, 16, 32))
        assert rep.constant_flat
        assert rep.variable_nondecreasing
        assert rep.variable_max[-1] > 0
        rows = rep.rows()
        assert [r[0] for r in rows] == [8, 16, 32] and all(len(r) == 3 for r in rows)
