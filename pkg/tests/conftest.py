import numpy as np
import pytest

from ivbounds import CovarianceBlocks


def random_blocks(rng: np.random.Generator, d_z: int) -> CovarianceBlocks:
    """Random positive-definite covariance with nondegenerate kappas.

    Built from a random full-rank factor, so the (Z, X, Y) covariance is PD
    almost surely; X is nudged toward Z so the instruments stay relevant.
    """
    k = d_z + 2
    a = rng.standard_normal((k, k + 2))
    sigma = a @ a.T / (k + 2)
    sigma[:d_z, d_z] += 0.3 * np.sign(sigma[:d_z, d_z]) + 0.1
    sigma[d_z, :d_z] = sigma[:d_z, d_z]
    # re-project to PD in case the nudge broke it
    w, v = np.linalg.eigh(sigma)
    sigma = v @ np.diag(np.maximum(w, 0.05)) @ v.T
    return CovarianceBlocks.from_matrix(sigma)


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)
