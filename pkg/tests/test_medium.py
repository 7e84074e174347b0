import numpy as np
import pytest
from hypothesis import given, strategies as st

from opttomo.grids import build_grid
from opttomo.medium import (PriorRejectionError, PriorSpec, basis_matrix,
                            linearized_prior_covariance,
                            medium_from_coefficients, sample_prior)


@pytest.fixture(scope="module")
def slab():
    return build_grid("slab", 256)


class TestBasis:
    def test_slab_cosines(self, slab):
        spec = PriorSpec(n_modes=3)
        B = basis_matrix(spec, slab)
        x = slab.nodes[:, 0]
        np.testing.assert_allclose(B[:, 0], np.cos(np.pi * x), atol=1e-14)
        np.testing.assert_allclose(B[:, 2], np.cos(3 * np.pi * x), atol=1e-14)

    def test_square_mode_ordering(self):
        grid = build_grid("square", 8)
        B = basis_matrix(PriorSpec(n_modes=4), grid)
        x, y = grid.nodes[:, 0], grid.nodes[:, 1]
        # total frequency shells, kx descending inside each shell
        np.testing.assert_allclose(B[:, 0], np.cos(np.pi * x), atol=1e-14)
        np.testing.assert_allclose(B[:, 1], np.cos(np.pi * y), atol=1e-14)
        np.testing.assert_allclose(B[:, 2], np.cos(2 * np.pi * x), atol=1e-14)
        np.testing.assert_allclose(B[:, 3], np.cos(np.pi * x) * np.cos(np.pi * y),
                                   atol=1e-14)


class TestMedium:
    def test_cosine_bump_admissible(self, slab):
        spec = PriorSpec(n_modes=1, amplitude=1.0)
        m = medium_from_coefficients(spec, np.array([0.5]), slab)
        assert m.admissible
        assert m.sup_sigma == pytest.approx(np.exp(0.5), rel=1e-12)
        assert m.sup_inv_sigma == pytest.approx(np.exp(0.5), rel=1e-12)

    def test_small_sigma_inadmissible(self, slab):
        # constant u = log(0.05) gives sup 1/sigma = 20 > 10
        spec = PriorSpec(n_modes=1, mean_offset=np.log(0.05), amplitude=1.0)
        m = medium_from_coefficients(spec, np.array([0.0]), slab)
        assert m.sup_inv_sigma == pytest.approx(20.0)
        assert not m.admissible

    def test_shape_mismatch_rejected(self, slab):
        with pytest.raises(ValueError, match="shape"):
            medium_from_coefficients(PriorSpec(n_modes=2), np.zeros(3), slab)


class TestPriorSampling:
    def test_zero_amplitude_always_zero(self, slab):
        spec = PriorSpec(amplitude=0.0)
        theta = sample_prior(spec, np.random.default_rng(1), slab)
        np.testing.assert_array_equal(theta, np.zeros(3))

    def test_determinism_bitwise(self, slab):
        spec = PriorSpec()
        a = sample_prior(spec, np.random.default_rng(7), slab)
        b = sample_prior(spec, np.random.default_rng(7), slab)
        np.testing.assert_array_equal(a, b)

    def test_impossible_bound_raises(self, slab):
        # sup sigma and sup 1/sigma cannot both be < 1
        spec = PriorSpec(bound=1.0, max_rejections=50)
        with pytest.raises(PriorRejectionError, match="50 attempts"):
            sample_prior(spec, np.random.default_rng(3), slab)

    def test_default_acceptance_fraction_high(self, slab):
        spec = PriorSpec()
        rng = np.random.default_rng(0)
        scales = spec.coefficient_scales()
        n, ok = 2000, 0
        for _ in range(n):
            theta = scales * rng.standard_normal(spec.n_modes)
            ok += medium_from_coefficients(spec, theta, slab).admissible
        assert ok / n >= 0.99

    @given(st.integers(min_value=0, max_value=10_000))
    def test_accepted_draws_satisfy_bounds(self, seed):
        grid = build_grid("slab", 64)
        spec = PriorSpec(amplitude=0.8, bound=4.0, max_rejections=5000)
        theta = sample_prior(spec, np.random.default_rng(seed), grid)
        m = medium_from_coefficients(spec, theta, grid)
        assert m.sup_sigma < spec.bound
        assert m.sup_inv_sigma < spec.bound
        assert m.sup_grad_inv_sigma < spec.bound


class TestLinearizedCovariance:
    def test_two_mode_example(self):
        cov = linearized_prior_covariance(PriorSpec(n_modes=2, amplitude=1.0, decay=1.0))
        np.testing.assert_allclose(cov, np.diag([1.0, 0.25]), atol=1e-15)

    def test_three_mode_example(self):
        cov = linearized_prior_covariance(PriorSpec(n_modes=3, amplitude=2.0, decay=2.0))
        np.testing.assert_allclose(cov, np.diag([4.0, 0.25, 4.0 / 81.0]), rtol=1e-14)

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="n_modes"):
            PriorSpec(n_modes=0)
        with pytest.raises(ValueError, match="decay"):
            PriorSpec(decay=0.5)
