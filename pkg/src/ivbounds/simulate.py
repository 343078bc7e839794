"""SNR-calibrated synthetic data generation.

The generator draws random directions for the instrument-to-treatment and
leakage weight vectors, then solves for the residual scales eta_x, eta_y
and the leakage scale zeta so that the population signal-to-noise ratios
of the treatment and outcome equations hit requested targets, with the
outcome variance held fixed. "Noise" is every variance contribution that
involves the residual covariance, including the confounding cross term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import min_leakage
from .covariance import CovarianceBlocks, Dataset, RegressionVectors
from .errors import DegenerateDirection, DomainError, UnachievableSNR


@dataclass(frozen=True)
class SimConfig:
    d_z: int
    sigma_zz_kind: str = "diagonal"  # "diagonal" | "toeplitz"
    toeplitz_autocorr: float = 0.5
    rho: float = 0.0
    snr_x: float = 2.0
    snr_y: float = 2.0
    theta_star: float = 1.0
    sigma_yy: float = 10.0
    gamma_sparsity: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.d_z < 1:
            raise DomainError("d_z must be >= 1")
        if self.sigma_zz_kind not in ("diagonal", "toeplitz"):
            raise DomainError(f"unknown sigma_zz_kind {self.sigma_zz_kind!r}")
        if not (-1.0 < self.rho < 1.0):
            raise DomainError("rho must lie in (-1, 1)")
        if self.snr_x <= 0.0 or self.snr_y <= 0.0:
            raise DomainError("SNRs must be positive")
        if self.sigma_yy <= 0.0:
            raise DomainError("sigma_yy must be positive")
        if not (0.0 <= self.gamma_sparsity < 1.0):
            raise DomainError("gamma_sparsity must lie in [0, 1)")

    @property
    def marginal_z_var(self) -> float:
        return 1.0 / self.d_z

    def sigma_zz(self) -> np.ndarray:
        if self.sigma_zz_kind == "diagonal":
            return np.eye(self.d_z) * self.marginal_z_var
        return toeplitz_covariance(self.d_z, self.toeplitz_autocorr, self.marginal_z_var)


@dataclass(frozen=True)
class GroundTruth:
    beta: np.ndarray
    gamma: np.ndarray
    theta_star: float
    rho: float
    eta_x: float
    eta_y: float
    zeta: float
    tau_star_2: float
    tau_check_2: float
    sigma: np.ndarray = field(repr=False)

    def blocks(self) -> CovarianceBlocks:
        return CovarianceBlocks.from_matrix(self.sigma)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "theta_star": self.theta_star,
            "rho": self.rho,
            "eta_x": self.eta_x,
            "eta_y": self.eta_y,
            "tau_star_2": self.tau_star_2,
            "tau_check_2": self.tau_check_2,
        }


def toeplitz_covariance(d_z: int, autocorr: float, marginal_var: float) -> np.ndarray:
    """AR(1)-style Toeplitz matrix: entry (i, j) = var * autocorr^|i-j|."""
    if not (-1.0 < autocorr < 1.0):
        raise DomainError("|autocorr| must be < 1")
    idx = np.arange(d_z)
    return marginal_var * autocorr ** np.abs(idx[:, None] - idx[None, :])


def solve_snr_params(
    config: SimConfig, beta_tilde: np.ndarray, gamma_tilde: np.ndarray
) -> tuple[float, float, float, float]:
    """Residual and leakage scales hitting the requested SNRs.

    Returns (eta_x, sigma_xx, eta_y, zeta). eta_y solves the quadratic
    eta_y^2 + 2*theta*rho*eta_x*eta_y - N = 0 with N = sigma_yy/(1 + SNR_Y),
    and zeta solves A_yy*zeta^2 + 2*theta*A_xy*zeta + (theta^2*sigma_xx - S) = 0
    with S = sigma_yy - N; each takes its positive root.
    """
    sigma_zz = config.sigma_zz()
    theta = config.theta_star
    a_xx = float(beta_tilde @ sigma_zz @ beta_tilde)
    a_xy = float(beta_tilde @ sigma_zz @ gamma_tilde)
    a_yy = float(gamma_tilde @ sigma_zz @ gamma_tilde)
    if a_xx <= 0.0:
        raise DegenerateDirection("beta direction carries no instrument variance")

    eta_x = math.sqrt(a_xx / config.snr_x)
    sigma_xx = a_xx + eta_x**2

    noise_y = config.sigma_yy / (1.0 + config.snr_y)
    half_b = theta * config.rho * eta_x
    eta_y = -half_b + math.sqrt(half_b**2 + noise_y)
    if eta_y <= 0.0:
        raise UnachievableSNR("no positive eta_y solves the outcome noise equation")

    signal_y = config.sigma_yy - noise_y
    const = theta**2 * sigma_xx - signal_y
    if a_yy > 0.0:
        disc = (theta * a_xy) ** 2 - a_yy * const
        if disc < 0.0:
            raise UnachievableSNR(
                f"requested SNR_Y needs signal {signal_y:.4g} below the "
                f"theta contribution {theta**2 * sigma_xx:.4g}"
            )
        zeta = (-theta * a_xy + math.sqrt(disc)) / a_yy
        if zeta <= 0.0:
            raise UnachievableSNR("no positive leakage scale hits the requested SNR_Y")
    else:
        # gamma direction vanished: the Y signal must come from theta alone
        if abs(const) > 1e-9 * max(1.0, signal_y):
            raise UnachievableSNR(
                "gamma direction is zero but theta^2 * sigma_xx does not "
                "match the requested Y signal"
            )
        zeta = 0.0
    return eta_x, sigma_xx, eta_y, zeta


def _population_covariance(
    sigma_zz: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    theta: float,
    rho: float,
    eta_x: float,
    eta_y: float,
) -> np.ndarray:
    d = beta.shape[0]
    sigma = np.empty((d + 2, d + 2))
    sigma_zx = sigma_zz @ beta
    sigma_zy = sigma_zz @ (gamma + theta * beta)
    sigma_xx = float(beta @ sigma_zx) + eta_x**2
    cross = rho * eta_x * eta_y
    sigma_xy = theta * sigma_xx + float(gamma @ sigma_zx) + cross
    sigma_yy = (
        float(gamma @ sigma_zz @ gamma)
        + 2.0 * theta * float(gamma @ sigma_zx)
        + theta**2 * sigma_xx
        + 2.0 * theta * cross
        + eta_y**2
    )
    sigma[:d, :d] = sigma_zz
    sigma[:d, d] = sigma[d, :d] = sigma_zx
    sigma[:d, d + 1] = sigma[d + 1, :d] = sigma_zy
    sigma[d, d] = sigma_xx
    sigma[d, d + 1] = sigma[d + 1, d] = sigma_xy
    sigma[d + 1, d + 1] = sigma_yy
    return sigma


def _draw_directions(config: SimConfig, rng: np.random.Generator):
    """Unit-norm directions; unit beta keeps the X signal bounded by the top
    eigenvalue of Sigma_zz, which keeps every grid SNR pairing achievable."""
    beta_tilde = rng.standard_normal(config.d_z)
    beta_tilde /= np.linalg.norm(beta_tilde)
    gamma_tilde = rng.standard_normal(config.d_z)
    n_zero = int(config.gamma_sparsity * config.d_z)
    if n_zero:
        zero_idx = rng.choice(config.d_z, size=n_zero, replace=False)
        gamma_tilde[zero_idx] = 0.0
    norm = np.linalg.norm(gamma_tilde)
    if norm > 0.0:
        gamma_tilde /= norm
    return beta_tilde, gamma_tilde


def _ground_truth(config, sigma_zz, beta, gamma, eta_x, eta_y, zeta) -> GroundTruth:
    theta = config.theta_star
    sigma = _population_covariance(sigma_zz, beta, gamma, theta, config.rho, eta_x, eta_y)
    tau_star_2 = float(np.linalg.norm(gamma))
    _, tau_check_2 = min_leakage(
        RegressionVectors(alpha=gamma + theta * beta, beta=beta), p=2.0
    )
    return GroundTruth(
        beta=beta,
        gamma=gamma,
        theta_star=theta,
        rho=config.rho,
        eta_x=eta_x,
        eta_y=eta_y,
        zeta=zeta,
        tau_star_2=tau_star_2,
        tau_check_2=tau_check_2,
        sigma=sigma,
    )


def _sample_rows(config, sigma_zz, beta, gamma, eta_x, eta_y, n, rng) -> Dataset:
    chol_z = np.linalg.cholesky(sigma_zz)
    cov_eps = np.array(
        [
            [eta_x**2, config.rho * eta_x * eta_y],
            [config.rho * eta_x * eta_y, eta_y**2],
        ]
    )
    # guard the rho = +/-1 boundary against rounding in the 2x2 factorization
    chol_eps = np.linalg.cholesky(cov_eps + 1e-15 * np.eye(2) * max(eta_x, eta_y) ** 2)
    z = rng.standard_normal((n, config.d_z)) @ chol_z.T
    eps = rng.standard_normal((n, 2)) @ chol_eps.T
    x = z @ beta + eps[:, 0]
    y = z @ gamma + config.theta_star * x + eps[:, 1]
    return Dataset(z=z, x=x, y=y)


def generate_dataset(config: SimConfig, n: int) -> tuple[Dataset, GroundTruth]:
    """Draw one dataset plus the oracle quantities behind it."""
    rng = np.random.default_rng(config.seed)
    beta_tilde, gamma_tilde = _draw_directions(config, rng)
    eta_x, _, eta_y, zeta = solve_snr_params(config, beta_tilde, gamma_tilde)
    beta, gamma = beta_tilde, zeta * gamma_tilde
    sigma_zz = config.sigma_zz()
    truth = _ground_truth(config, sigma_zz, beta, gamma, eta_x, eta_y, zeta)
    data = _sample_rows(config, sigma_zz, beta, gamma, eta_x, eta_y, n, rng)
    return data, truth


def generate_dataset_null(config: SimConfig, n: int) -> tuple[Dataset, GroundTruth]:
    """Dataset from a model with zero leakage (gamma identically 0).

    SNR_X is honored; the outcome noise scale is instead chosen so the
    outcome variance hits ``sigma_yy``, since with gamma = 0 the Y signal
    is fully determined by theta and cannot also match a requested SNR_Y.
    """
    rng = np.random.default_rng(config.seed)
    beta_tilde, _ = _draw_directions(config, rng)
    sigma_zz = config.sigma_zz()
    theta = config.theta_star
    a_xx = float(beta_tilde @ sigma_zz @ beta_tilde)
    eta_x = math.sqrt(a_xx / config.snr_x)
    sigma_xx = a_xx + eta_x**2
    # sigma_yy = theta^2 sigma_xx + 2 theta rho eta_x eta_y + eta_y^2
    half_b = theta * config.rho * eta_x
    disc = half_b**2 + (config.sigma_yy - theta**2 * sigma_xx)
    if disc <= half_b**2:
        raise UnachievableSNR(
            "theta alone already exceeds the requested outcome variance"
        )
    eta_y = -half_b + math.sqrt(disc)
    gamma = np.zeros(config.d_z)
    truth = _ground_truth(config, sigma_zz, beta_tilde, gamma, eta_x, eta_y, 0.0)
    data = _sample_rows(config, sigma_zz, beta_tilde, gamma, eta_x, eta_y, n, rng)
    return data, truth


def generate_dataset_with_min_leakage(
    config: SimConfig, n: int, tau_check_target: float
) -> tuple[Dataset, GroundTruth]:
    """Like ``generate_dataset`` but calibrated to a population tau_check.

    The minimum feasible L2 leakage equals the norm of gamma's component
    orthogonal to beta, so the orthogonal part of the gamma direction is
    rescaled (with the leakage scale re-solved each time) until the
    population tau_check_2 hits the target. Used by the power study, where
    tau_check_2 is the effect size of the exclusion test.
    """
    if tau_check_target < 0.0:
        raise DomainError("tau_check_target must be nonnegative")
    rng = np.random.default_rng(config.seed)
    beta_tilde, gamma_tilde = _draw_directions(config, rng)
    bnorm2 = float(beta_tilde @ beta_tilde)
    parallel = (float(gamma_tilde @ beta_tilde) / bnorm2) * beta_tilde
    orthogonal = gamma_tilde - parallel
    ortho_norm = float(np.linalg.norm(orthogonal))
    if ortho_norm == 0.0 and tau_check_target > 0.0:
        raise DegenerateDirection("gamma direction is parallel to beta")

    def tau_check_at(u: float) -> tuple[float, float, float, float, np.ndarray]:
        direction = parallel + u * orthogonal
        eta_x, _, eta_y, zeta = solve_snr_params(config, beta_tilde, direction)
        return zeta * u * ortho_norm, eta_x, eta_y, zeta, direction

    if tau_check_target == 0.0:
        u = 0.0
    else:
        lo, hi = 0.0, 1.0
        while tau_check_at(hi)[0] < tau_check_target:
            hi *= 2.0
            if hi > 1e8:
                raise UnachievableSNR("cannot reach the requested tau_check")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if tau_check_at(mid)[0] < tau_check_target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * max(1.0, hi):
                break
        u = 0.5 * (lo + hi)

    _, eta_x, eta_y, zeta, direction = tau_check_at(u)
    beta, gamma = beta_tilde, zeta * direction
    sigma_zz = config.sigma_zz()
    truth = _ground_truth(config, sigma_zz, beta, gamma, eta_x, eta_y, zeta)
    data = _sample_rows(config, sigma_zz, beta, gamma, eta_x, eta_y, n, rng)
    return data, truth
