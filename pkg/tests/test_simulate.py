"""Tests for the SNR-calibrated simulator."""

import numpy as np
import pytest

from ivbounds import (
    AllZeroTau,
    DomainError,
    ScalarTau,
    SimConfig,
    UnachievableSNR,
    ate_bounds_scalar,
    generate_dataset,
    generate_dataset_null,
    generate_dataset_with_min_leakage,
    rho_from_ate,
    sample_covariance,
    toeplitz_covariance,
)
from ivbounds.simulate import _draw_directions, solve_snr_params


class TestSigmaZZ:
    def test_toeplitz_small_oracle(self):
        # d_z = 2, autocorr 0.5, marginal variance 1/2
        got = toeplitz_covariance(2, 0.5, 0.5)
        np.testing.assert_allclose(got, [[0.5, 0.25], [0.25, 0.5]])

    def test_toeplitz_positive_definite_large(self):
        m = toeplitz_covariance(100, 0.5, 1.0 / 100)
        assert np.linalg.eigvalsh(m).min() > 0.0

    def test_zero_autocorr_is_diagonal(self):
        m = toeplitz_covariance(6, 0.0, 1.0 / 6)
        np.testing.assert_allclose(m, np.eye(6) / 6)

    def test_marginal_variance_scales_with_dimension(self):
        for d_z in (1, 3, 8):
            cfg = SimConfig(d_z=d_z)
            np.testing.assert_allclose(np.diag(cfg.sigma_zz()), 1.0 / d_z)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            SimConfig(d_z=0)
        with pytest.raises(DomainError):
            SimConfig(d_z=3, rho=1.0)
        with pytest.raises(DomainError):
            SimConfig(d_z=3, snr_x=0.0)
        with pytest.raises(DomainError):
            SimConfig(d_z=3, sigma_zz_kind="banded")
        with pytest.raises(DomainError):
            SimConfig(d_z=3, gamma_sparsity=1.0)


class TestDirections:
    def test_unit_norms(self):
        cfg = SimConfig(d_z=10, gamma_sparsity=0.2, seed=5)
        beta, gamma = _draw_directions(cfg, np.random.default_rng(cfg.seed))
        assert np.linalg.norm(beta) == pytest.approx(1.0)
        assert np.linalg.norm(gamma) == pytest.approx(1.0)

    def test_sparsity_zero_count(self):
        cfg = SimConfig(d_z=10, gamma_sparsity=0.25, seed=7)
        _, gamma = _draw_directions(cfg, np.random.default_rng(cfg.seed))
        assert int(np.sum(gamma == 0.0)) == 2  # floor(0.25 * 10)


class TestSNRCalibration:
    @pytest.mark.parametrize("snr_x", [0.5, 2.0])
    @pytest.mark.parametrize("snr_y", [0.5, 2.0])
    @pytest.mark.parametrize("kind", ["diagonal", "toeplitz"])
    def test_population_snrs_exact(self, snr_x, snr_y, kind):
        cfg = SimConfig(
            d_z=5, sigma_zz_kind=kind, rho=0.3, snr_x=snr_x, snr_y=snr_y, seed=11
        )
        _, truth = generate_dataset(cfg, 50)
        sigma_zz = cfg.sigma_zz()
        a_xx = truth.beta @ sigma_zz @ truth.beta
        assert a_xx / truth.eta_x**2 == pytest.approx(snr_x, abs=1e-10)
        # The Y noise is everything attributable to the noise channel,
        # including its covariance with theta * eps_x.
        blocks = truth.blocks()
        noise = truth.eta_y**2 + 2 * cfg.theta_star * cfg.rho * truth.eta_x * truth.eta_y
        signal = blocks.sigma_yy - noise
        assert signal / noise == pytest.approx(snr_y, abs=1e-8)
        assert blocks.sigma_yy == pytest.approx(cfg.sigma_yy, abs=1e-10)

    def test_empirical_snr_matches_population(self):
        cfg = SimConfig(d_z=4, rho=-0.4, snr_x=2.0, snr_y=0.5, seed=13)
        data, truth = generate_dataset(cfg, 100_000)
        blocks = sample_covariance(data)
        # variance decompositions estimated from the sample covariance
        sigma_zz_hat = blocks.sigma_zz
        a_xx_hat = truth.beta @ sigma_zz_hat @ truth.beta
        snr_x_hat = a_xx_hat / (blocks.sigma_xx - a_xx_hat)
        assert snr_x_hat == pytest.approx(cfg.snr_x, rel=0.1)
        assert blocks.sigma_yy == pytest.approx(cfg.sigma_yy, rel=0.1)

    def test_unachievable_outcome_variance(self):
        # theta^2 * sigma_xx alone exceeds sigma_yy: no valid noise scale.
        cfg = SimConfig(d_z=3, theta_star=10.0, sigma_yy=0.5, seed=1)
        with pytest.raises(UnachievableSNR):
            generate_dataset(cfg, 50)

    def test_solver_zeta_positive_when_leaky(self):
        cfg = SimConfig(d_z=6, rho=0.5, seed=3)
        rng = np.random.default_rng(cfg.seed)
        beta, gamma = _draw_directions(cfg, rng)
        eta_x, sigma_xx, eta_y, zeta = solve_snr_params(cfg, beta, gamma)
        assert eta_x > 0 and eta_y > 0 and zeta > 0
        assert sigma_xx == pytest.approx(beta @ cfg.sigma_zz() @ beta + eta_x**2)


class TestGroundTruth:
    def test_population_covariance_matches_sample(self):
        cfg = SimConfig(d_z=3, sigma_zz_kind="toeplitz", rho=0.6, seed=21)
        data, truth = generate_dataset(cfg, 1_000_000)
        hat = sample_covariance(data).full_matrix()
        np.testing.assert_allclose(hat, truth.sigma, rtol=0, atol=0.03)

    def test_population_bounds_contain_theta_star(self):
        for seed in range(5):
            cfg = SimConfig(d_z=5, rho=0.3, seed=seed)
            _, truth = generate_dataset(cfg, 10)
            spec = ScalarTau(p=2.0, tau=1.1 * truth.tau_star_2)
            res = ate_bounds_scalar(truth.blocks(), spec)
            assert res.theta_minus <= cfg.theta_star <= res.theta_plus

    def test_rho_from_ate_recovers_truth(self):
        cfg = SimConfig(d_z=4, rho=-0.55, seed=23)
        _, truth = generate_dataset(cfg, 10)
        from ivbounds import compute_kappas

        kappas = compute_kappas(truth.blocks())
        assert rho_from_ate(truth.theta_star, kappas) == pytest.approx(
            cfg.rho, abs=1e-10
        )

    def test_tau_star_not_below_tau_check(self):
        cfg = SimConfig(d_z=6, rho=0.2, seed=29)
        _, truth = generate_dataset(cfg, 10)
        assert truth.tau_check_2 <= truth.tau_star_2 + 1e-12

    def test_to_dict_round_trips_scalars(self):
        cfg = SimConfig(d_z=3, seed=31)
        _, truth = generate_dataset(cfg, 10)
        d = truth.to_dict()
        assert d["theta_star"] == truth.theta_star
        assert d["tau_check_2"] == truth.tau_check_2
        assert len(d["beta"]) == 3
        assert "sigma" not in d and "zeta" not in d

    def test_determinism(self):
        cfg = SimConfig(d_z=4, rho=0.1, seed=37)
        d1, t1 = generate_dataset(cfg, 100)
        d2, t2 = generate_dataset(cfg, 100)
        np.testing.assert_array_equal(d1.matrix(), d2.matrix())
        np.testing.assert_array_equal(t1.sigma, t2.sigma)


class TestNullGenerator:
    def test_gamma_exactly_zero(self):
        cfg = SimConfig(d_z=5, rho=0.4, seed=41)
        _, truth = generate_dataset_null(cfg, 100)
        assert np.all(truth.gamma == 0.0)
        assert truth.tau_star_2 == 0.0
        assert truth.tau_check_2 == 0.0

    def test_population_bounds_collapse_at_zero_tau(self):
        cfg = SimConfig(d_z=5, rho=0.4, seed=43)
        _, truth = generate_dataset_null(cfg, 100)
        res = ate_bounds_scalar(truth.blocks(), ScalarTau(p=2.0, tau=0.0))
        assert res.theta_minus == pytest.approx(cfg.theta_star, abs=1e-9)
        assert res.theta_plus == pytest.approx(cfg.theta_star, abs=1e-9)

    def test_ols_consistent_when_rho_zero(self):
        cfg = SimConfig(d_z=4, rho=0.0, seed=47)
        data, _ = generate_dataset_null(cfg, 200_000)
        x = data.x - data.x.mean()
        y = data.y - data.y.mean()
        theta_ols = float(x @ y / (x @ x))
        assert theta_ols == pytest.approx(cfg.theta_star, abs=0.02)

    def test_outcome_variance_honored(self):
        cfg = SimConfig(d_z=4, rho=0.5, sigma_yy=7.0, seed=53)
        _, truth = generate_dataset_null(cfg, 10)
        assert truth.blocks().sigma_yy == pytest.approx(7.0, abs=1e-10)


class TestMinLeakageCalibration:
    @pytest.mark.parametrize("target", [0.0, 0.3, 1.0])
    def test_tau_check_hits_target(self, target):
        cfg = SimConfig(d_z=5, rho=0.2, seed=59)
        _, truth = generate_dataset_with_min_leakage(cfg, 10, target)
        assert truth.tau_check_2 == pytest.approx(target, abs=1e-8)

    def test_snrs_still_honored(self):
        cfg = SimConfig(d_z=5, rho=0.2, snr_x=0.5, snr_y=2.0, seed=61)
        _, truth = generate_dataset_with_min_leakage(cfg, 10, 0.5)
        sigma_zz = cfg.sigma_zz()
        a_xx = truth.beta @ sigma_zz @ truth.beta
        assert a_xx / truth.eta_x**2 == pytest.approx(0.5, abs=1e-8)
        assert truth.blocks().sigma_yy == pytest.approx(cfg.sigma_yy, abs=1e-8)

    def test_negative_target_rejected(self):
        cfg = SimConfig(d_z=5, seed=1)
        with pytest.raises(DomainError):
            generate_dataset_with_min_leakage(cfg, 10, -0.1)
