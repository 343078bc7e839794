"""Top-level acceptance gate.

Each test checks one release criterion end to end at its stated scale and
tolerance, times itself against a budget, and prints a single PASS/FAIL
line (visible with ``pytest -s`` or in captured output).
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from ivbounds import (
    BayesConfig,
    ScalarTau,
    SimConfig,
    ate_bounds_scalar,
    ate_from_rho,
    compute_kappas,
    compute_regression_vectors,
    generate_dataset,
    generate_dataset_null,
    leakage_norm,
    log_likelihood,
    min_leakage,
    rho_from_ate,
    run_benchmark_records,
    run_coverage,
    run_mh,
    run_power,
    sample_covariance,
    tetrad_statistic,
    two_stage_least_squares,
)
from ivbounds.bounds import _bounds_from_geometry, _geometry

from conftest import random_blocks
from oracles import grid_bounds
from test_baselines import _demo_state


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


class TestAcceptance:
    def test_01_closed_form_matches_bisection(self):
        started = time.perf_counter()
        rng = np.random.default_rng(1001)
        worst = 0.0
        for i in range(1000):
            d_z = int(rng.integers(2, 11))
            blocks = random_blocks(rng, d_z)
            geom = _geometry(blocks, 2.0)
            tau = geom.tau_check * 1.25 + 0.05
            closed = ate_bounds_scalar(blocks, ScalarTau(2.0, tau))
            # routing through an explicit active set skips the closed form
            # and exercises the generic bisection root finder on the same norm
            bisected = _bounds_from_geometry(geom, tau, active=np.arange(d_z))
            worst = max(
                worst,
                abs(closed.theta_minus - bisected.theta_minus),
                abs(closed.theta_plus - bisected.theta_plus),
            )
        elapsed = time.perf_counter() - started
        _report(
            "closed-form-vs-bisection",
            worst < 1e-8 and elapsed < 10.0,
            f"max diff {worst:.2e}, {elapsed:.1f}s over 1000 instances",
        )

    def test_02_grid_oracle_sharpness(self):
        started = time.perf_counter()
        rng = np.random.default_rng(1002)
        checked = 0
        worst = 0.0
        for i in range(200):
            d_z = int(rng.integers(1, 5))
            p = [1.0, 1.5, 2.0, 3.0, np.inf][i % 5]
            blocks = random_blocks(rng, d_z)
            geom = _geometry(blocks, p)
            tau = geom.tau_check * 1.4 + 0.05
            b = _bounds_from_geometry(geom, tau)
            oracle = grid_bounds(blocks.full_matrix(), d_z, p, tau, grid_size=100_000)
            assert oracle is not None
            lo, hi, _, _, step = oracle
            kappas = compute_kappas(blocks)
            # the analytic bounds must enclose every feasible grid point and
            # sit within two grid steps of the extreme ones (measured in rho)
            assert b.theta_minus <= lo + 1e-9 and b.theta_plus >= hi - 1e-9
            gap = max(
                abs(rho_from_ate(b.theta_minus, kappas) - rho_from_ate(lo, kappas)),
                abs(rho_from_ate(b.theta_plus, kappas) - rho_from_ate(hi, kappas)),
            )
            worst = max(worst, gap / step)
            checked += 1
        elapsed = time.perf_counter() - started
        _report(
            "grid-oracle-sharpness",
            worst <= 2.0 and elapsed < 120.0,
            f"worst gap {worst:.2f} grid steps on {checked} instances, {elapsed:.1f}s",
        )

    def test_03_benchmark_containment(self):
        started = time.perf_counter()
        records = run_benchmark_records(
            n=1000, runs_per_cell=10, tau_factor=1.1, seed=1003
        )
        rows = [r for r in records if r["method"] == "bounds"]
        finite = [r for r in rows if np.isfinite(r["estimate_lo"])]
        hits = sum(
            1 for r in finite if r["estimate_lo"] <= r["theta_star"] <= r["estimate_hi"]
        )
        rate = hits / len(rows)
        elapsed = time.perf_counter() - started
        _report(
            "benchmark-containment",
            rate >= 0.95 and elapsed < 600.0,
            f"containment {rate:.3f} over {len(rows)} runs, {elapsed:.1f}s",
        )

    def test_04_exclusion_level_and_power(self):
        started = time.perf_counter()
        (level_pt,) = run_power(
            tau_check_targets=(0.0,), n=1000, runs=200, n_null=500, level=0.1,
            d_z=5, seed=1004,
        )
        (power_pt,) = run_power(
            tau_check_targets=(1.0,), n=2000, runs=200, n_null=500, level=0.1,
            d_z=5, seed=1005,
        )
        elapsed = time.perf_counter() - started
        level_ok = 0.05 <= level_pt.rejection_rate <= 0.15
        power_ok = power_pt.rejection_rate >= 0.90
        _report(
            "exclusion-level-and-power",
            level_ok and power_ok and elapsed < 900.0,
            f"level {level_pt.rejection_rate:.3f}, power {power_pt.rejection_rate:.3f}, "
            f"{elapsed:.1f}s",
        )

    def test_05_bootstrap_coverage(self):
        started = time.perf_counter()
        cells = run_coverage(
            rhos=(-0.6, 0.0, 0.6),
            methods=("empirical", "kernel", "gaussian"),
            n=1000,
            n_datasets=100,
            n_boot=500,
            alpha=0.1,
            seed=1006,
        )
        rates = []
        for cell in cells:
            rates.extend([cell.coverage_minus, cell.coverage_plus])
        lo, hi = min(rates), max(rates)
        elapsed = time.perf_counter() - started
        _report(
            "bootstrap-coverage",
            lo >= 0.84 and hi <= 0.97 and elapsed < 1200.0,
            f"coverage range [{lo:.3f}, {hi:.3f}] over {len(rates)} endpoints, "
            f"{elapsed:.1f}s",
        )

    def test_06_snr_round_trip(self):
        rng = np.random.default_rng(1007)
        worst_pop = 0.0
        for i in range(100):
            cfg = SimConfig(
                d_z=int(rng.integers(2, 11)),
                sigma_zz_kind=["diagonal", "toeplitz"][i % 2],
                rho=float(rng.uniform(-0.8, 0.8)),
                snr_x=float(rng.uniform(0.3, 4.0)),
                snr_y=float(rng.uniform(0.3, 4.0)),
                seed=2000 + i,
            )
            _, truth = generate_dataset(cfg, 20)
            sigma_zz = cfg.sigma_zz()
            a_xx = truth.beta @ sigma_zz @ truth.beta
            noise_y = (
                truth.eta_y**2
                + 2 * cfg.theta_star * cfg.rho * truth.eta_x * truth.eta_y
            )
            signal_y = truth.blocks().sigma_yy - noise_y
            worst_pop = max(
                worst_pop,
                abs(a_xx / truth.eta_x**2 - cfg.snr_x),
                abs(signal_y / noise_y - cfg.snr_y),
            )
        # empirical check on a subsample of configs at n = 1e5
        worst_emp = 0.0
        for i in range(10):
            cfg = SimConfig(
                d_z=4, rho=0.2, snr_x=2.0, snr_y=0.5, seed=3000 + i
            )
            data, truth = generate_dataset(cfg, 100_000)
            blocks = sample_covariance(data)
            a_xx_hat = truth.beta @ blocks.sigma_zz @ truth.beta
            snr_x_hat = a_xx_hat / (blocks.sigma_xx - a_xx_hat)
            worst_emp = max(worst_emp, abs(snr_x_hat / cfg.snr_x - 1.0))
        _report(
            "snr-round-trip",
            worst_pop < 1e-8 and worst_emp < 0.10,
            f"population err {worst_pop:.2e}, empirical rel err {worst_emp:.3f}",
        )

    def test_07_zero_leakage_consistency(self):
        cfg = SimConfig(d_z=5, rho=0.4, theta_star=1.0, seed=1008)
        n = 10_000
        # Monte Carlo standard errors of each estimator at this n
        reps = {"2sls": [], "theta_check": [], "mid": []}
        for r in range(40):
            rep_cfg = SimConfig(d_z=5, rho=0.4, theta_star=1.0, seed=5000 + r)
            d, _ = generate_dataset_null(rep_cfg, n)
            blocks = sample_covariance(d)
            reps["2sls"].append(two_stage_least_squares(blocks))
            vecs = compute_regression_vectors(blocks)
            (t_lo, t_hi), tau_check = min_leakage(vecs, 2.0)
            reps["theta_check"].append(0.5 * (t_lo + t_hi))
            b = ate_bounds_scalar(blocks, ScalarTau(2.0, tau_check))
            reps["mid"].append(0.5 * (b.theta_minus + b.theta_plus))
        ok = True
        details = []
        for name, vals in reps.items():
            se = float(np.std(vals, ddof=1))
            err = abs(float(np.mean(vals)) - 1.0)
            ok = ok and err <= 3.0 * se / math.sqrt(len(vals))
            details.append(f"{name} |bias|={err:.4f} se={se:.4f}")
        # the exclusion statistic vanishes as n grows under gamma = 0
        psis = []
        for n_k in (1_000, 10_000, 100_000):
            d, _ = generate_dataset_null(cfg, n_k)
            psis.append(tetrad_statistic(sample_covariance(d)))
        shrinks = psis[0] > psis[1] > psis[2]
        _report(
            "zero-leakage-consistency",
            ok and shrinks,
            "; ".join(details) + f"; psi {psis[0]:.2e} > {psis[1]:.2e} > {psis[2]:.2e}",
        )

    def test_08_bayes_likelihood_and_prior(self):
        # density oracle
        state = _demo_state(3, seed=42)
        tau = 1.3
        from ivbounds import model_covariance

        sigma = model_covariance(state, tau)
        rng = np.random.default_rng(1009)
        n, k = 150, 5
        m = rng.multivariate_normal(np.zeros(k), sigma, n)
        got = log_likelihood(state, tau, m.T @ m, n)
        oracle = stats.multivariate_normal(np.zeros(k), sigma).logpdf(m).sum()
        oracle += 0.5 * n * k * math.log(2.0 * math.pi)
        lik_err = abs(got - oracle)
        # prior recovery: with the likelihood off, theta must follow its prior
        cfg = SimConfig(d_z=2, rho=0.0, seed=1010)
        data, _ = generate_dataset_null(cfg, 50)
        bc = BayesConfig(
            tau=1.0, v_theta=4.0, n_iter=60000, burn_in=5000, adapt_steps=4000,
            seed=11, use_likelihood=False,
        )
        res = run_mh(data, bc)
        ks = stats.kstest(res.theta_samples[::25], "norm", args=(0.0, 2.0))
        _report(
            "bayes-likelihood-and-prior",
            lik_err < 1e-8 and ks.pvalue > 0.01,
            f"loglik err {lik_err:.2e}, prior KS p={ks.pvalue:.3f}",
        )

    def test_09_property_suite(self):
        rng = np.random.default_rng(1011)
        failures = []
        for i in range(200):
            d_z = int(rng.integers(1, 7))
            blocks = random_blocks(rng, d_z)
            kappas = compute_kappas(blocks)
            # conditional-covariance Cauchy-Schwarz
            if kappas.kappa_xy**2 > kappas.kappa_xx * kappas.kappa_yy:
                failures.append("cauchy-schwarz")
            # f strictly decreasing and invertible on a random pair
            r1, r2 = sorted(rng.uniform(-0.99, 0.99, 2))
            t1, t2 = ate_from_rho(r1, kappas), ate_from_rho(r2, kappas)
            if r1 < r2 and not t1 > t2:
                failures.append("monotone")
            if abs(rho_from_ate(t1, kappas) - r1) > 1e-9:
                failures.append("bijection")
            # convexity of the leakage norm along theta
            vecs = compute_regression_vectors(blocks)
            p = [1.0, 1.5, 2.0, 3.0, np.inf][i % 5]
            a, b, lam = rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform()
            mix = leakage_norm(lam * a + (1 - lam) * b, vecs, p)
            chord = lam * leakage_norm(a, vecs, p) + (1 - lam) * leakage_norm(
                b, vecs, p
            )
            if mix > chord + 1e-9:
                failures.append("convexity")
            # nesting of the identified set in the budget
            geom = _geometry(blocks, 2.0)
            small = ate_bounds_scalar(blocks, ScalarTau(2.0, geom.tau_check + 0.1))
            large = ate_bounds_scalar(blocks, ScalarTau(2.0, geom.tau_check + 1.0))
            if not (
                large.theta_minus <= small.theta_minus + 1e-12
                and large.theta_plus >= small.theta_plus - 1e-12
            ):
                failures.append("nesting")
        # determinism under a fixed seed
        cfg = SimConfig(d_z=3, rho=0.2, seed=1012)
        d1, _ = generate_dataset(cfg, 200)
        d2, _ = generate_dataset(cfg, 200)
        if not np.array_equal(d1.matrix(), d2.matrix()):
            failures.append("determinism")
        _report(
            "property-suite",
            not failures,
            "zero failures" if not failures else f"failures: {sorted(set(failures))}",
        )
