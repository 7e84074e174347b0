import math

import numpy as np
import pytest

from opttomo.bayes import (DataVector, PosteriorEnsemble, estimate_evidences,
                           estimate_hellinger, estimate_kl, generate_data,
                           log_likelihood, pcn_sampler, prior_ensemble)
from opttomo.diffusion import forward_map_de
from opttomo.grids import build_grid, build_quadrature
from opttomo.measurement import make_trace, setup_from_positions
from opttomo.medium import PriorSpec, medium_from_coefficients


@pytest.fixture(scope="module")
def world():
    grid = build_grid("slab", 64)
    quad = build_quadrature("slab", 8)
    spec = PriorSpec()
    traces = (make_trace("linear"), make_trace("quadratic"))
    setup = setup_from_positions(grid, [np.array([0.0]), np.array([1.0])],
                                 traces, noise_std=0.05)
    return grid, quad, spec, setup


@pytest.fixture(scope="module")
def de_data(world):
    grid, quad, spec, setup = world
    return generate_data(spec, [0.1, -0.05, 0.02], "de", 0.05, 314,
                         setup, grid, quad)


class TestDataVector:
    def test_generation_is_deterministic(self, world, de_data):
        grid, quad, spec, setup = world
        again = generate_data(spec, [0.1, -0.05, 0.02], "de", 0.05, 314,
                              setup, grid, quad)
        assert np.array_equal(again.values, de_data.values)
        assert de_data.values.shape == (2, 2)
        assert de_data.model == "de"

    def test_zero_noise_matches_forward_map(self, world):
        grid, quad, spec, setup = world
        data = generate_data(spec, [0.1, -0.05, 0.02], "de", 0.0, 1, setup,
                             grid, quad)
        medium = medium_from_coefficients(spec, np.array([0.1, -0.05, 0.02]),
                                          grid)
        np.testing.assert_allclose(data.values, forward_map_de(medium, setup),
                                   atol=1e-14)

    def test_kinetic_generation_needs_knudsen(self, world):
        grid, quad, spec, setup = world
        with pytest.raises(ValueError, match="knudsen"):
            generate_data(spec, [0.0, 0.0, 0.0], "rte", 0.05, 1, setup,
                          grid, quad)

    def test_rejects_unknown_model(self, world):
        grid, quad, spec, setup = world
        with pytest.raises(ValueError, match="model"):
            generate_data(spec, [0.0, 0.0, 0.0], "fem", 0.05, 1, setup,
                          grid, quad)

    def test_rejects_nonfinite_values(self):
        with pytest.raises(ValueError, match="finite"):
            DataVector(np.array([[np.nan]]), "de", np.zeros(3), 0, 0.05)


class TestLogLikelihood:
    def test_perfect_fit_gives_zero(self, world):
        grid, quad, spec, setup = world
        theta = [0.1, -0.05, 0.02]
        data = generate_data(spec, theta, "de", 0.05, 1, setup, grid, quad)
        noiseless = DataVector(
            forward_map_de(medium_from_coefficients(spec, np.array(theta),
                                                    grid), setup),
            "de", np.array(theta), 1, 0.05)
        assert log_likelihood("de", theta, noiseless, 0.1, setup, spec,
                              grid, quad) == pytest.approx(0.0, abs=1e-20)
        assert data.values.shape == noiseless.values.shape

    def test_single_entry_off_by_noise_std(self, world):
        # one residual of size gamma costs exactly one half
        grid, quad, spec, setup = world
        theta = [0.1, -0.05, 0.02]
        medium = medium_from_coefficients(spec, np.array(theta), grid)
        shifted = forward_map_de(medium, setup).copy()
        shifted[1, 0] += 0.05
        data = DataVector(shifted, "de", np.array(theta), 1, 0.05)
        ll = log_likelihood("de", theta, data, 0.1, setup, spec, grid, quad)
        assert ll == pytest.approx(-0.5, abs=1e-12)

    def test_nonpositive_for_random_draws(self, world, de_data, rng):
        grid, quad, spec, setup = world
        for _ in range(5):
            theta = 0.2 * rng.standard_normal(3)
            for model in ("rte", "de"):
                ll = log_likelihood(model, theta, de_data, 0.2, setup, spec,
                                    grid, quad)
                assert ll <= 0.0

    def test_rejects_zero_noise_level(self, world):
        grid, quad, spec, setup = world
        data = generate_data(spec, [0.0, 0.0, 0.0], "de", 0.0, 1, setup,
                             grid, quad)
        with pytest.raises(ValueError, match="noise"):
            log_likelihood("de", [0.0, 0.0, 0.0], data, 0.1, setup, spec,
                           grid, quad)


class TestPriorEnsemble:
    def test_thread_count_does_not_change_results(self, world, de_data):
        grid, quad, spec, setup = world
        serial = prior_ensemble(spec, de_data, 0.2, setup, grid, quad,
                                n_samples=6, master_seed=99)
        threaded = prior_ensemble(spec, de_data, 0.2, setup, grid, quad,
                                  n_samples=6, master_seed=99, threads=3)
        assert np.array_equal(serial.thetas, threaded.thetas)
        assert np.array_equal(serial.ll_rte, threaded.ll_rte)
        assert np.array_equal(serial.ll_de, threaded.ll_de)
        assert serial.mode == "prior-is"

    def test_samples_shared_across_knudsen_values(self, world, de_data):
        # common random numbers: the sample list depends only on the seed
        grid, quad, spec, setup = world
        coarse = prior_ensemble(spec, de_data, 0.4, setup, grid, quad,
                                n_samples=4, master_seed=5)
        fine = prior_ensemble(spec, de_data, 0.1, setup, grid, quad,
                              n_samples=4, master_seed=5)
        assert np.array_equal(coarse.thetas, fine.thetas)
        assert not np.array_equal(coarse.ll_rte, fine.ll_rte)

    def test_likelihoods_are_nonpositive(self, world, de_data):
        grid, quad, spec, setup = world
        ens = prior_ensemble(spec, de_data, 0.2, setup, grid, quad,
                             n_samples=4, master_seed=7)
        assert np.all(ens.ll_rte <= 0.0)
        assert np.all(ens.ll_de <= 0.0)

    def test_pairing_is_validated(self):
        with pytest.raises(ValueError, match="pair"):
            PosteriorEnsemble(np.zeros((3, 2)), np.zeros(3), np.zeros(2),
                              "prior-is", 0, 0.1)
        with pytest.raises(ValueError, match="nonpositive"):
            PosteriorEnsemble(np.zeros((3, 2)), np.array([0.0, 0.1, 0.0]),
                              np.zeros(3), "prior-is", 0, 0.1)


def synthetic_gaussian_ensemble(n=10_000, seed=7, mu_rte=0.0, mu_de=1.0):
    """Ensemble whose two posteriors are exactly N(mu, 1).

    Samples come from a wide N(0, 9) "prior"; the stored log-likelihoods are
    log phi(t; mu, 1) - log prior(t), shifted to be nonpositive.  Shifts
    cancel in every estimator, so the closed-form divergences apply:
    KL = (mu_rte - mu_de)^2 / 2 and d^2 = 1 - exp(-(mu_rte - mu_de)^2 / 8).
    """
    rng = np.random.default_rng(seed)
    s = 3.0
    t = s * rng.standard_normal(n)
    log_prior = -0.5 * (t / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)

    def ll(mu):
        raw = -0.5 * (t - mu) ** 2 - 0.5 * math.log(2 * math.pi) - log_prior
        return raw - raw.max() - 1e-9

    return PosteriorEnsemble(t[:, None], ll(mu_rte), ll(mu_de),
                             "prior-is", seed, 0.1)


class TestEstimators:
    def test_evidence_matches_plain_mean(self):
        ens = synthetic_gaussian_ensemble(n=500)
        est = estimate_evidences(ens)
        assert est.z_rte == pytest.approx(np.mean(np.exp(ens.ll_rte)))
        assert est.z_de == pytest.approx(np.mean(np.exp(ens.ll_de)))
        assert est.se_rte > 0 and est.se_de > 0
        assert est.warnings == ()

    def test_small_ensembles_are_rejected(self):
        ens = synthetic_gaussian_ensemble(n=99)
        for fn in (estimate_evidences, estimate_kl, estimate_hellinger):
            with pytest.raises(ValueError, match="100"):
                fn(ens)

    def test_degenerate_weights_warn(self):
        ll = np.full(200, -800.0)
        ll[0] = 0.0
        ens = PosteriorEnsemble(np.zeros((200, 1)), ll, ll, "prior-is", 0, 0.1)
        est = estimate_evidences(ens)
        assert any("effective sample size" in w for w in est.warnings)

    def test_kl_calibration_against_closed_form(self):
        ens = synthetic_gaussian_ensemble()
        est = estimate_kl(ens)
        assert abs(est.value - 0.5) <= 3.0 * est.standard_error
        assert est.standard_error < 0.05

    def test_kl_direction_flag(self):
        ens = synthetic_gaussian_ensemble()
        rev = estimate_kl(ens, direction="de_to_rte")
        # Gaussian same-variance KL is symmetric in closed form
        assert abs(rev.value - 0.5) <= 3.0 * rev.standard_error
        with pytest.raises(ValueError, match="direction"):
            estimate_kl(ens, direction="both")

    def test_kl_of_identical_posteriors_is_exactly_zero(self):
        ens = synthetic_gaussian_ensemble(mu_de=0.0)
        assert estimate_kl(ens).value == 0.0

    def test_hellinger_calibration_against_closed_form(self):
        ens = synthetic_gaussian_ensemble()
        est = estimate_hellinger(ens)
        target = math.sqrt(1.0 - math.exp(-1.0 / 8.0))
        assert abs(est.value - target) <= 3.0 * est.standard_error
        assert est.standard_error < 0.02

    def test_hellinger_of_identical_posteriors_is_exactly_zero(self):
        ens = synthetic_gaussian_ensemble(mu_de=0.0)
        assert estimate_hellinger(ens).value == 0.0

    def test_hellinger_bounded_by_sqrt_kl(self):
        # the classical comparison, with a joint-noise allowance
        ens = synthetic_gaussian_ensemble()
        kl = estimate_kl(ens)
        h = estimate_hellinger(ens)
        se_sqrt_kl = kl.standard_error / (2.0 * math.sqrt(kl.value))
        joint = math.hypot(h.standard_error, se_sqrt_kl)
        assert h.value <= math.sqrt(kl.value) + 2.0 * joint


class TestPcnSampler:
    def test_zero_step_chain_is_constant(self, world, de_data):
        grid, quad, spec, setup = world
        chain = pcn_sampler(spec, de_data, "de", 0.2, beta=0.0, n_steps=25,
                            seed=3, setup=setup, grid=grid, quadrature=quad)
        assert chain.mode == "pcn"
        assert chain.acceptance_rate == 1.0
        assert np.ptp(chain.thetas, axis=0).max() == 0.0

    def test_determinism(self, world, de_data):
        grid, quad, spec, setup = world
        kw = dict(beta=0.6, n_steps=12, seed=11, setup=setup, grid=grid,
                  quadrature=quad)
        a = pcn_sampler(spec, de_data, "de", 0.2, **kw)
        b = pcn_sampler(spec, de_data, "de", 0.2, **kw)
        assert np.array_equal(a.thetas, b.thetas)
        assert np.array_equal(a.ll_rte, b.ll_rte)

    def test_validates_inputs(self, world, de_data):
        grid, quad, spec, setup = world
        with pytest.raises(ValueError, match="beta"):
            pcn_sampler(spec, de_data, "de", 0.2, beta=1.5, n_steps=5,
                        seed=0, setup=setup, grid=grid, quadrature=quad)
        with pytest.raises(ValueError, match="model"):
            pcn_sampler(spec, de_data, "fem", 0.2, beta=0.5, n_steps=5,
                        seed=0, setup=setup, grid=grid, quadrature=quad)

    def test_flat_likelihood_preserves_prior(self, world):
        # a huge noise level makes both likelihoods ~ 1, so with beta = 1
        # the chain draws independent prior samples; check first-mode moments
        grid, quad, spec, setup = world
        flat = DataVector(np.zeros((2, 2)), "de", np.zeros(3), 0, 1e9)
        n = 1200
        chain = pcn_sampler(spec, flat, "de", 0.2, beta=1.0, n_steps=n,
                            seed=21, setup=setup, grid=grid, quadrature=quad)
        assert chain.acceptance_rate > 0.95
        scale = spec.coefficient_scales()[0]
        assert abs(np.mean(chain.thetas[:, 0])) <= 3.0 * scale / math.sqrt(n)
        assert np.std(chain.thetas[:, 0]) == pytest.approx(scale, rel=0.15)

    def test_tiny_acceptance_warns(self, world):
        # data that exactly matches the chain's starting point with a
        # near-zero noise level: every move away is a catastrophic misfit
        grid, quad, spec, setup = world
        theta = np.zeros(3)
        medium = medium_from_coefficients(spec, theta, grid)
        sharp = DataVector(forward_map_de(medium, setup), "de", theta, 0, 1e-9)
        chain = pcn_sampler(spec, sharp, "de", 0.2, beta=1.0, n_steps=150,
                            seed=2, setup=setup, grid=grid, quadrature=quad)
        assert chain.acceptance_rate < 0.01
        assert any("acceptance" in w for w in chain.warnings)
