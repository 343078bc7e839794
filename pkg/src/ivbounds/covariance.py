"""Covariance estimation and the conditional moments derived from it.

Everything downstream consumes the partitioned covariance of (Z, X, Y):
the Z block comes first, then X, then Y. Datasets are centered by their
sample means on load, so inputs need not be mean zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateData, Irrelevance, NotPositiveDefinite

PD_TOL = 1e-10   # relative to the largest eigenvalue
REL_TOL = 1e-10  # minimum ||beta|| for relevance


@dataclass(frozen=True)
class Dataset:
    """Observations of (Z, X, Y) with instruments in columns of ``z``."""

    z: np.ndarray  # (n, d_z)
    x: np.ndarray  # (n,)
    y: np.ndarray  # (n,)

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.z, dtype=float))
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        n = x.shape[0]
        if z.shape[0] != n or y.shape[0] != n:
            raise DegenerateData("z, x, y must have the same number of rows")
        if n < z.shape[1] + 2:
            raise DegenerateData(f"need n >= d_z + 2, got n={n}, d_z={z.shape[1]}")
        for name, arr in (("z", z), ("x", x), ("y", y)):
            if not np.all(np.isfinite(arr)):
                raise DegenerateData(f"non-finite values in {name}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d_z(self) -> int:
        return self.z.shape[1]

    def matrix(self) -> np.ndarray:
        """Stacked (n, d_z + 2) matrix in (Z, X, Y) column order."""
        return np.column_stack([self.z, self.x, self.y])


@dataclass(frozen=True)
class CovarianceBlocks:
    """Partitioned covariance of (Z, X, Y)."""

    sigma_zz: np.ndarray  # (d_z, d_z)
    sigma_zx: np.ndarray  # (d_z,)
    sigma_zy: np.ndarray  # (d_z,)
    sigma_xx: float
    sigma_xy: float
    sigma_yy: float

    @property
    def d_z(self) -> int:
        return self.sigma_zx.shape[0]

    def full_matrix(self) -> np.ndarray:
        """Assemble the full (d_z + 2) square matrix, Z block first."""
        d = self.d_z
        s = np.empty((d + 2, d + 2))
        s[:d, :d] = self.sigma_zz
        s[:d, d] = s[d, :d] = self.sigma_zx
        s[:d, d + 1] = s[d + 1, :d] = self.sigma_zy
        s[d, d] = self.sigma_xx
        s[d, d + 1] = s[d + 1, d] = self.sigma_xy
        s[d + 1, d + 1] = self.sigma_yy
        return s

    @classmethod
    def from_matrix(cls, sigma: np.ndarray) -> "CovarianceBlocks":
        sigma = np.asarray(sigma, dtype=float)
        d = sigma.shape[0] - 2
        if d < 1 or sigma.shape[0] != sigma.shape[1]:
            raise DegenerateData("covariance matrix must be square with d_z >= 1")
        if not np.allclose(sigma, sigma.T, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise DegenerateData("covariance matrix is not symmetric")
        return cls(
            sigma_zz=sigma[:d, :d].copy(),
            sigma_zx=sigma[:d, d].copy(),
            sigma_zy=sigma[:d, d + 1].copy(),
            sigma_xx=float(sigma[d, d]),
            sigma_xy=float(sigma[d, d + 1]),
            sigma_yy=float(sigma[d + 1, d + 1]),
        )


@dataclass(frozen=True)
class KappaTriple:
    """Second moments of (X, Y) conditional on Z."""

    kappa_xx: float
    kappa_xy: float
    kappa_yy: float


@dataclass(frozen=True)
class RegressionVectors:
    """Population OLS weights: alpha for Y on Z, beta for X on Z."""

    alpha: np.ndarray
    beta: np.ndarray


def check_positive_definite(sigma: np.ndarray, pd_tol: float = PD_TOL) -> None:
    """Raise NotPositiveDefinite unless all eigenvalues clear a relative floor."""
    eigvals = np.linalg.eigvalsh(sigma)
    if eigvals[0] <= pd_tol * max(eigvals[-1], 0.0):
        raise NotPositiveDefinite(
            f"smallest eigenvalue {eigvals[0]:.3e} below tolerance "
            f"{pd_tol * max(eigvals[-1], 0.0):.3e}"
        )


def sample_covariance(
    data: Dataset, ridge: float = 0.0, unbiased: bool = False
) -> CovarianceBlocks:
    """MLE covariance of (Z, X, Y), centered by sample means.

    ``ridge`` adds a constant to the diagonal after estimation. The default
    divides by n; ``unbiased`` switches to the n - 1 denominator.
    """
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    m = data.matrix()
    m = m - m.mean(axis=0)
    denom = data.n - 1 if unbiased else data.n
    sigma = (m.T @ m) / denom
    if np.any(np.diag(sigma) <= 0.0):
        raise DegenerateData("a column has zero variance")
    sigma[np.diag_indices_from(sigma)] += ridge
    check_positive_definite(sigma)
    return CovarianceBlocks.from_matrix(sigma)


def _solve_zz(blocks: CovarianceBlocks, rhs: np.ndarray) -> np.ndarray:
    """Solve sigma_zz @ w = rhs through a Cholesky factorization."""
    try:
        factor = cho_factor(blocks.sigma_zz, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("sigma_zz is not positive definite") from exc
    return cho_solve(factor, rhs)


def compute_kappas(blocks: CovarianceBlocks) -> KappaTriple:
    """Conditional (co)variances of X and Y given Z."""
    sol = _solve_zz(blocks, np.column_stack([blocks.sigma_zx, blocks.sigma_zy]))
    kxx = blocks.sigma_xx - float(blocks.sigma_zx @ sol[:, 0])
    kxy = blocks.sigma_xy - float(blocks.sigma_zx @ sol[:, 1])
    kyy = blocks.sigma_yy - float(blocks.sigma_zy @ sol[:, 1])
    if kxx <= 0.0:
        raise DegenerateData("X is a deterministic function of Z (kappa_xx <= 0)")
    if kyy <= 0.0:
        raise DegenerateData("Y is a deterministic function of Z (kappa_yy <= 0)")
    return KappaTriple(kappa_xx=kxx, kappa_xy=kxy, kappa_yy=kyy)


def compute_regression_vectors(blocks: CovarianceBlocks) -> RegressionVectors:
    """OLS weight vectors alpha (Y on Z) and beta (X on Z)."""
    sol = _solve_zz(blocks, np.column_stack([blocks.sigma_zy, blocks.sigma_zx]))
    alpha, beta = sol[:, 0], sol[:, 1]
    if np.linalg.norm(beta) < REL_TOL:
        raise Irrelevance("||beta|| is numerically zero; relevance (A1) fails")
    return RegressionVectors(alpha=alpha, beta=beta)


def load_dataset_csv(path) -> Dataset:
    """Read a dataset CSV with header ``X,Y,Z1,...,Zd``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    cols = [h.strip() for h in header]
    if len(cols) < 3 or cols[0].upper() != "X" or cols[1].upper() != "Y":
        raise DegenerateData(f"expected header X,Y,Z1,...,Zd; got {cols!r}")
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != len(cols):
        raise DegenerateData("ragged or empty CSV body")
    return Dataset(z=arr[:, 2:], x=arr[:, 0], y=arr[:, 1])


def write_dataset_csv(path, data: Dataset) -> None:
    """Write a dataset CSV with header ``X,Y,Z1,...,Zd``."""
    header = ["X", "Y"] + [f"Z{j + 1}" for j in range(data.d_z)]
    body = np.column_stack([data.x, data.y, data.z])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(body.tolist())


def load_covariance_csv(path) -> CovarianceBlocks:
    """Read a covariance matrix CSV ordered (Z block, X, Y)."""
    sigma = np.loadtxt(path, delimiter=",", dtype=float)
    blocks = CovarianceBlocks.from_matrix(sigma)
    check_positive_definite(sigma)
    return blocks
