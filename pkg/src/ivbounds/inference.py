"""Monte Carlo exclusion test and bootstrap inference for the bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import _kernels
from .bounds import ScalarTau, TauSpec, VectorTau, ate_bounds_scalar, ate_bounds_vector
from .covariance import (
    PD_TOL,
    CovarianceBlocks,
    Dataset,
    sample_covariance,
)
from .errors import (
    DomainError,
    Irrelevance,
    IvBoundsError,
    NullNotRepairable,
    TooFewInstruments,
    TooManyDiscarded,
)

REPAIR_TOL = 1e-6  # relative Frobenius change allowed by the PSD repair
KDE_GRID = 4096


@dataclass(frozen=True)
class ExclusionTestResult:
    psi_hat: float
    p_value: float
    B: int
    theta_2sls: float
    null_stats: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "psi_hat": self.psi_hat,
            "p_value": self.p_value,
            "B": self.B,
            "theta_2sls": self.theta_2sls,
        }


@dataclass(frozen=True)
class BootstrapResult:
    target: str            # "minus" | "plus"
    alpha: float
    method: str            # "empirical" | "kernel" | "gaussian"
    ci: tuple[float, float]
    n_discarded: int
    B: int
    samples: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "alpha": self.alpha,
            "method": self.method,
            "ci": [self.ci[0], self.ci[1]],
            "n_discarded": self.n_discarded,
            "B": self.B,
        }


def tetrad_statistic(blocks: CovarianceBlocks) -> float:
    """psi = det of the 2x2 Gram matrix of [sigma_zx, sigma_zy].

    Zero exactly when the two covariance vectors are parallel, i.e. when
    the tetrad constraints all hold.
    """
    if blocks.d_z < 2:
        raise TooFewInstruments("the tetrad statistic needs d_z >= 2")
    zx, zy = blocks.sigma_zx, blocks.sigma_zy
    return float((zx @ zx) * (zy @ zy) - (zx @ zy) ** 2)


def two_stage_least_squares(blocks: CovarianceBlocks) -> float:
    """2SLS estimate as the covariance dot-product ratio."""
    zx, zy = blocks.sigma_zx, blocks.sigma_zy
    denom = float(zx @ zx)
    if denom <= 0.0:
        raise Irrelevance("sigma_zx is zero; 2SLS undefined")
    return float(zx @ zy) / denom


def _replicate_seeds(seed: int, count: int) -> np.ndarray:
    """Independent per-replicate 32-bit seeds from one master seed."""
    return np.random.SeedSequence(seed).generate_state(count).astype(np.int64)


def build_null_covariance(blocks: CovarianceBlocks) -> tuple[np.ndarray, float]:
    """Null covariance with the Z-Y block forced onto the 2SLS ray.

    The replacement can leave the matrix indefinite, in which case negative
    eigenvalues are clipped to zero; a relative Frobenius change beyond
    REPAIR_TOL raises NullNotRepairable.
    """
    theta_2sls = two_stage_least_squares(blocks)
    sigma0 = blocks.full_matrix()
    d = blocks.d_z
    sigma0[:d, d + 1] = sigma0[d + 1, :d] = blocks.sigma_zx * theta_2sls
    eigvals, eigvecs = np.linalg.eigh(sigma0)
    if eigvals[0] < 0.0:
        repaired = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
        repaired = 0.5 * (repaired + repaired.T)
        shift = np.linalg.norm(repaired - sigma0) / np.linalg.norm(sigma0)
        if shift > REPAIR_TOL:
            raise NullNotRepairable(
                f"PSD repair moved the null covariance by {shift:.3e} (> {REPAIR_TOL})"
            )
        sigma0 = repaired
    return sigma0, theta_2sls


def exclusion_test(
    data: Dataset,
    B: int,
    seed: int,
    family="gaussian",
    keep_null_stats: bool = True,
) -> ExclusionTestResult:
    """Monte Carlo test of the exclusion criterion (H0: psi = 0).

    ``family`` is either ``"gaussian"`` (mean-zero multivariate normal under
    the null covariance, the default) or a callable
    ``family(seed, sigma0, n) -> (n, d_z + 2) array`` for any other
    distribution family parameterized by a covariance matrix.
    """
    if data.d_z < 2:
        raise TooFewInstruments("the exclusion test needs d_z >= 2")
    if B < 99:
        raise DomainError("B must be at least 99")
    blocks = sample_covariance(data)
    psi_hat = tetrad_statistic(blocks)
    sigma0, theta_2sls = build_null_covariance(blocks)
    seeds = _replicate_seeds(seed, B)
    if family == "gaussian":
        eigvals, eigvecs = np.linalg.eigh(sigma0)
        factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
        null_stats = _kernels.tetrad_null_stats(factor, data.n, seeds)
    else:
        null_stats = np.empty(B)
        for b in range(B):
            m = np.asarray(family(int(seeds[b]), sigma0, data.n), dtype=float)
            m = m - m.mean(axis=0)
            null_stats[b] = _kernels._tetrad_from_data(m, data.d_z)
    p_value = (int(np.sum(null_stats >= psi_hat)) + 1) / (B + 1)
    return ExclusionTestResult(
        psi_hat=psi_hat,
        p_value=p_value,
        B=B,
        theta_2sls=theta_2sls,
        null_stats=null_stats if keep_null_stats else None,
    )


def _bounds_for_spec(blocks: CovarianceBlocks, spec: TauSpec):
    if isinstance(spec, ScalarTau):
        return ate_bounds_scalar(blocks, spec)
    return ate_bounds_vector(blocks, spec)


def _bootstrap_replicates(
    data: Dataset, spec: TauSpec, seeds: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-replicate (lower, upper, status) arrays; status 0 marks a discard."""
    if isinstance(spec, ScalarTau) and spec.p == 2.0:
        return _kernels.bootstrap_bounds_l2(
            data.matrix(), seeds, spec.tau, PD_TOL, 1e-12
        )
    n = data.n
    lower = np.full(seeds.shape[0], np.nan)
    upper = np.full(seeds.shape[0], np.nan)
    status = np.zeros(seeds.shape[0], dtype=np.uint8)
    matrix = data.matrix()
    for b, s in enumerate(seeds):
        np.random.seed(int(s))
        idx = np.random.randint(0, n, n)
        resampled = Dataset(
            z=matrix[idx, : data.d_z], x=matrix[idx, data.d_z], y=matrix[idx, data.d_z + 1]
        )
        try:
            bnd = _bounds_for_spec(sample_covariance(resampled), spec)
        except IvBoundsError:
            continue
        lower[b], upper[b], status[b] = bnd.theta_minus, bnd.theta_plus, 1
    return lower, upper, status


def _empirical_ci(samples: np.ndarray, alpha: float) -> tuple[float, float]:
    m = samples.shape[0]
    ordered = np.sort(samples)
    lo_idx = max(math.ceil((m + 1) * alpha / 2.0), 1)
    hi_idx = min(math.ceil((m + 1) * (1.0 - alpha / 2.0)), m)
    return float(ordered[lo_idx - 1]), float(ordered[hi_idx - 1])


def _kernel_ci(samples: np.ndarray, alpha: float) -> tuple[float, float]:
    """Quantiles of a Gaussian-kernel-smoothed CDF (Silverman bandwidth)."""
    m = samples.shape[0]
    sd = float(np.std(samples, ddof=1))
    iqr = float(np.subtract(*np.percentile(samples, [75, 25])))
    width = min(sd, iqr / 1.349) if iqr > 0 else sd
    bw = 0.9 * width * m ** (-0.2)
    if bw <= 0.0:
        return _empirical_ci(samples, alpha)
    grid = np.linspace(samples.min() - 4 * bw, samples.max() + 4 * bw, KDE_GRID)
    cdf = ndtr((grid[:, None] - samples[None, :]) / bw).mean(axis=1)
    lo = float(np.interp(alpha / 2.0, cdf, grid))
    hi = float(np.interp(1.0 - alpha / 2.0, cdf, grid))
    return lo, hi


def _gaussian_ci(samples: np.ndarray, alpha: float) -> tuple[float, float]:
    mu = float(np.mean(samples))
    sd = float(np.std(samples, ddof=1))
    z = float(ndtri(1.0 - alpha / 2.0))
    return mu - z * sd, mu + z * sd


_CI_METHODS = {
    "empirical": _empirical_ci,
    "kernel": _kernel_ci,
    "gaussian": _gaussian_ci,
}


def bootstrap_bounds(
    data: Dataset,
    spec: TauSpec,
    B: int,
    alpha: float,
    method: str = "empirical",
    seed: int = 0,
) -> tuple[BootstrapResult, BootstrapResult]:
    """Bootstrap confidence intervals for the lower and upper ATE bounds.

    Resamples rows with replacement, recomputes the bounds per replicate,
    and discards replicates whose bounds are infeasible or whose resampled
    covariance is degenerate. Quantile indices use the retained count.
    """
    if B < 199:
        raise DomainError("B must be at least 199")
    if not (0.0 < alpha < 1.0):
        raise DomainError("alpha must lie in (0, 1)")
    if method not in _CI_METHODS:
        raise DomainError(f"unknown method {method!r}")
    _bounds_for_spec(sample_covariance(data), spec)  # full-data feasibility gate
    seeds = _replicate_seeds(seed, B)
    lower, upper, status = _bootstrap_replicates(data, spec, seeds)
    retained = status == 1
    n_discarded = int(B - retained.sum())
    if n_discarded > B / 2:
        raise TooManyDiscarded(f"{n_discarded} of {B} bootstrap replicates infeasible")
    ci_fn = _CI_METHODS[method]
    results = []
    for target, samples in (("minus", lower[retained]), ("plus", upper[retained])):
        results.append(
            BootstrapResult(
                target=target,
                alpha=alpha,
                method=method,
                ci=ci_fn(samples, alpha),
                n_discarded=n_discarded,
                B=B,
                samples=samples,
            )
        )
    return results[0], results[1]
