import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vesselwave.errors import ConfigurationError, InsufficientDataError
from vesselwave.spectral import (
    PeriodicGrid,
    ResolutionWarning,
    SpectralField,
    dealias,
    derivative,
    fit_analyticity_radius,
    inner_product,
    l2_norm,
    mollify,
    product,
    random_bandlimited,
    sobolev_norm,
    to_physical,
    to_spectral,
    wiener_norm,
)


class TestPeriodicGrid:
    def test_nodes_and_spacing(self):
        g = PeriodicGrid(16, 4.0)
        assert g.dx == 0.25
        np.testing.assert_allclose(g.nodes, np.arange(16) * 0.25)
        assert g.nyquist == 8

    @pytest.mark.parametrize("n", [6, 7, 0, 9])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ConfigurationError):
            PeriodicGrid(n)

    def test_rejects_nonpositive_period(self):
        with pytest.raises(ConfigurationError):
            PeriodicGrid(16, 0.0)

    def test_wavenumbers(self):
        g = PeriodicGrid(8)
        assert list(g.k) == [0, 1, 2, 3, 4, -3, -2, -1]


class TestTransforms:
    def test_constant(self):
        for n in (8, 64):
            g = PeriodicGrid(n)
            f = to_spectral(g, np.full(n, 3.0))
            assert f.coeff(0) == pytest.approx(3.0)
            assert np.abs(f.coeffs[1:]).max() < 1e-14

    def test_cosine(self, grid):
        f = SpectralField.from_function(grid, np.cos)
        assert f.coeff(1) == pytest.approx(0.5, abs=1e-12)
        assert f.coeff(-1) == pytest.approx(0.5, abs=1e-12)
        rest = np.delete(np.abs(f.coeffs), [1, grid.n_points - 1])
        assert rest.max() < 1e-12

    def test_round_trip(self, grid, rng):
        v = rng.normal(size=grid.n_points)
        np.testing.assert_allclose(to_physical(to_spectral(grid, v)), v, rtol=0, atol=1e-12 * np.abs(v).max())

    def test_hermitian(self, grid, rng):
        f = to_spectral(grid, rng.normal(size=grid.n_points))
        for k in range(1, grid.nyquist):
            assert f.coeff(-k) == pytest.approx(np.conj(f.coeff(k)), abs=1e-15)

    def test_length_mismatch(self, grid):
        with pytest.raises(ConfigurationError):
            to_spectral(grid, np.zeros(10))

    def test_complex_values_rejected(self, grid):
        with pytest.raises(ConfigurationError):
            to_spectral(grid, np.ones(grid.n_points) * 1j)

    def test_other_period(self):
        g = PeriodicGrid(32, 3.0)
        f = SpectralField.from_function(g, lambda x: np.sin(2 * np.pi * 2 * x / 3.0))
        assert f.coeff(2) == pytest.approx(-0.5j, abs=1e-13)

    def test_immutable(self, grid):
        f = SpectralField.zeros(grid)
        with pytest.raises(AttributeError):
            f.coeffs = None


class TestDerivative:
    def test_cos_first(self, grid):
        f = SpectralField.from_function(grid, np.cos)
        np.testing.assert_allclose(derivative(f, 1).values, -np.sin(grid.nodes), atol=1e-12)

    def test_sin2_third(self, grid):
        f = SpectralField.from_function(grid, lambda x: np.sin(2 * x))
        # rounding noise at |k| ~ n/2 is amplified by k^3 ~ 2e6
        np.testing.assert_allclose(derivative(f, 3).values, -8 * np.cos(2 * grid.nodes), atol=1e-9)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_constant_gives_zero(self, grid, order):
        assert np.abs(derivative(SpectralField.constant(grid, 2.5), order).coeffs).max() == 0

    def test_period_scaling(self):
        g = PeriodicGrid(64, 1.0)
        f = SpectralField.from_function(g, lambda x: np.sin(2 * np.pi * x))
        np.testing.assert_allclose(derivative(f, 1).values, 2 * np.pi * np.cos(2 * np.pi * g.nodes), atol=1e-11)

    def test_nyquist_zeroed_for_odd_orders(self):
        g = PeriodicGrid(16)
        f = SpectralField.from_values(g, (-1.0) ** np.arange(16))
        assert derivative(f, 1).coeff(8) == 0
        assert derivative(f, 3).coeff(8) == 0
        assert derivative(f, 2).coeff(8) == pytest.approx(-64.0)

    def test_order_out_of_range(self, grid):
        with pytest.raises(ConfigurationError):
            derivative(SpectralField.zeros(grid), 4)


class TestDealiasMollify:
    def test_mode5_kept(self):
        g = PeriodicGrid(32)
        f = SpectralField.from_modes(g, {5: 1.0})
        np.testing.assert_array_equal(dealias(f).coeffs, f.coeffs)

    def test_mode12_removed(self):
        g = PeriodicGrid(32)
        f = SpectralField.from_modes(g, {12: 1.0, 3: 0.5})
        d = dealias(f)
        assert d.coeff(12) == 0 and d.coeff(-12) == 0
        assert d.coeff(3) == 0.5

    def test_idempotent(self, grid, rng):
        f = to_spectral(grid, rng.normal(size=grid.n_points))
        np.testing.assert_array_equal(dealias(dealias(f)).coeffs, dealias(f).coeffs)

    def test_product_removes_aliases(self):
        g = PeriodicGrid(32)
        f = SpectralField.from_modes(g, {8: 0.5})
        p = product(f, f)  # cos^2(8x) = 1/2 + cos(16x)/2; 16 > 32/3 is dropped
        assert p.coeff(0) == pytest.approx(0.5)
        assert np.abs(p.coeffs[1:]).max() < 1e-15

    def test_mollify_epsilon_one(self, grid, rng):
        f = random_bandlimited(grid, 20, rng)
        m = mollify(f, 1.0)
        nz = np.nonzero(np.abs(m.coeffs) > 0)[0]
        assert set(grid.k[nz]) <= {-1, 0, 1}

    def test_mollify_keeps_low_mode(self, grid):
        f = SpectralField.from_function(grid, lambda x: np.cos(5 * x))
        np.testing.assert_allclose(mollify(f, 0.1).coeffs, f.coeffs, rtol=0, atol=1e-15)
        assert mollify(f, 0.1).coeff(5) == f.coeff(5)

    def test_mollify_self_adjoint(self, grid, rng):
        for _ in range(5):
            f = random_bandlimited(grid, 60, rng)
            h = random_bandlimited(grid, 60, rng)
            lhs = inner_product(mollify(f, 0.07), h)
            rhs = inner_product(f, mollify(h, 0.07))
            assert lhs == pytest.approx(rhs, abs=1e-12 * max(1, abs(lhs)))

    def test_mollify_converges_monotonically(self, grid, rng):
        f = random_bandlimited(grid, 80, rng)
        errs = [l2_norm(mollify(f, e) - f) for e in (0.5, 0.2, 0.1, 0.05, 0.02, 0.01)]
        assert all(b <= a for a, b in zip(errs, errs[1:]))
        assert errs[-1] == 0

    def test_mollify_rejects_nonpositive(self, grid):
        with pytest.raises(ConfigurationError):
            mollify(SpectralField.zeros(grid), 0.0)


class TestNorms:
    def test_parseval(self, grid, rng):
        f = random_bandlimited(grid, 40, rng)
        nodal = np.sum(f.values**2) * grid.dx
        spectral = np.sum(np.abs(f.coeffs) ** 2) * grid.period
        assert nodal == pytest.approx(spectral, rel=1e-10)
        assert l2_norm(f) ** 2 == pytest.approx(nodal, rel=1e-10)

    def test_sobolev_weight(self, grid):
        f = SpectralField.from_function(grid, lambda x: np.cos(3 * x))
        # ||cos 3x||_{H^1}^2 = (1 + 9) * pi
        assert sobolev_norm(f, 1) ** 2 == pytest.approx(10 * np.pi, rel=1e-12)

    def test_wiener_examples(self, grid):
        assert wiener_norm(SpectralField.zeros(grid), 0.3) == 0
        f = SpectralField.from_modes(grid, {1: 0.5})
        assert wiener_norm(f, 0.0) == pytest.approx(1.0, abs=1e-12)
        assert wiener_norm(f, 1.0) == pytest.approx(math.e, abs=1e-12)

    def test_wiener_sampled_cosine(self, grid):
        f = SpectralField.from_function(grid, np.cos)
        assert wiener_norm(f, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_wiener_resolution_warning(self):
        g = PeriodicGrid(16)
        f = SpectralField.from_values(g, (-1.0) ** np.arange(16))
        with pytest.warns(ResolutionWarning):
            wiener_norm(f, 0.5)

    def test_wiener_negative_rho(self, grid):
        with pytest.raises(ConfigurationError):
            wiener_norm(SpectralField.zeros(grid), -0.1)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), rho=st.floats(0.0, 1.0), drho=st.floats(1e-3, 1.0))
    def test_wiener_nesting_and_cauchy(self, seed, rho, drho):
        g = PeriodicGrid(64)
        f = random_bandlimited(g, 20, np.random.default_rng(seed))
        lo, hi = rho, rho + drho
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            assert wiener_norm(f, lo) <= wiener_norm(f, hi)
            assert wiener_norm(derivative(f, 1), lo) <= math.e / (hi - lo) * wiener_norm(f, hi) * (1 + 1e-12)

    @pytest.mark.filterwarnings("ignore::vesselwave.spectral.ResolutionWarning")
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31), rho=st.floats(0.0, 2.0))
    def test_wiener_algebra(self, seed, rho):
        g = PeriodicGrid(64)
        r = np.random.default_rng(seed)
        f, h = random_bandlimited(g, 15, r), random_bandlimited(g, 15, r)
        # combined bandwidth 30 < 32: the pointwise product is exact
        assert wiener_norm(f * h, rho) <= wiener_norm(f, rho) * wiener_norm(h, rho) * (1 + 1e-12)


def poisson_coefficients(a, kmax):
    """Exact Fourier coefficients of 1/(a - cos x): (1/sqrt(a^2-1)) z^|k| with z = a - sqrt(a^2-1)."""
    s = math.sqrt(a * a - 1)
    z = a - s
    return np.array([z**k / s for k in range(kmax + 1)])


class TestAnalyticityFit:
    def test_exact_exponential(self, grid):
        f = SpectralField.from_modes(grid, {k: math.exp(-0.7 * k) for k in range(0, 40)})
        assert fit_analyticity_radius(f, 2, 30) == pytest.approx(0.7, abs=1e-10)

    def test_poisson_kernel(self, grid):
        f = SpectralField.from_function(grid, lambda x: 1 / (1.25 - np.cos(x)))
        exact = poisson_coefficients(1.25, 20)
        np.testing.assert_allclose(f.coeffs[:21].real, exact, rtol=1e-10)
        phi = max(np.roots([1, -2.5, 1]))
        assert fit_analyticity_radius(f, 2, 30) == pytest.approx(math.log(phi), rel=0.05)

    def test_single_mode_is_insufficient(self, grid):
        f = SpectralField.from_function(grid, np.cos)
        with pytest.raises(InsufficientDataError, match="insufficient spectral decay data"):
            fit_analyticity_radius(f, 1, 20)

    def test_band_validation(self, grid):
        with pytest.raises(ConfigurationError):
            fit_analyticity_radius(SpectralField.zeros(grid), 10, 5)
