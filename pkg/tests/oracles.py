"""Independent brute-force reference implementations used only by tests.

Everything here is written directly from the defining formulas with plain
numpy (no calls into the package's solvers), so agreement is meaningful.
"""

import numpy as np


def conditional_moments(sigma, d_z):
    """(kappa_xx, kappa_xy, kappa_yy, alpha, beta) by direct matrix algebra."""
    szz = sigma[:d_z, :d_z]
    szx = sigma[:d_z, d_z]
    szy = sigma[:d_z, d_z + 1]
    inv = np.linalg.inv(szz)
    alpha = inv @ szy
    beta = inv @ szx
    kxx = sigma[d_z, d_z] - szx @ inv @ szx
    kxy = sigma[d_z, d_z + 1] - szx @ inv @ szy
    kyy = sigma[d_z + 1, d_z + 1] - szy @ inv @ szy
    return kxx, kxy, kyy, alpha, beta


def f_of_rho(rho, kxx, kxy, kyy):
    return (kxy - np.sqrt(kxx * kyy - kxy**2) * rho / np.sqrt(1.0 - rho**2)) / kxx


def norm_p(v, p):
    if np.isinf(p):
        return float(np.max(np.abs(v)))
    return float(np.sum(np.abs(v) ** p) ** (1.0 / p))


def grid_bounds(sigma, d_z, p, tau, grid_size=100_000):
    """Extreme f(rho) over a uniform rho grid where the leakage fits in tau.

    Returns (theta_lo, theta_hi, rho_at_hi, rho_at_lo, step); None if no
    grid point is feasible.
    """
    kxx, kxy, kyy, alpha, beta = conditional_moments(sigma, d_z)
    rho = np.linspace(-1.0, 1.0, grid_size + 2)[1:-1]
    theta = f_of_rho(rho, kxx, kxy, kyy)
    if np.isinf(p):
        leak = np.max(np.abs(alpha[None, :] - theta[:, None] * beta[None, :]), axis=1)
    else:
        leak = np.sum(
            np.abs(alpha[None, :] - theta[:, None] * beta[None, :]) ** p, axis=1
        ) ** (1.0 / p)
    ok = leak <= tau
    if not ok.any():
        return None
    step = rho[1] - rho[0]
    # f is decreasing: theta_lo at the largest feasible rho
    return (
        float(theta[ok].min()),
        float(theta[ok].max()),
        float(rho[ok].max()),
        float(rho[ok].min()),
        float(step),
    )


def grid_bounds_vector(sigma, d_z, tau_vec, grid_size=100_000):
    """Vector-threshold variant: per-coordinate |gamma_j| <= tau_j checks."""
    kxx, kxy, kyy, alpha, beta = conditional_moments(sigma, d_z)
    rho = np.linspace(-1.0, 1.0, grid_size + 2)[1:-1]
    theta = f_of_rho(rho, kxx, kxy, kyy)
    gamma = alpha[None, :] - theta[:, None] * beta[None, :]
    ok = np.all(np.abs(gamma) <= np.asarray(tau_vec)[None, :], axis=1)
    if not ok.any():
        return None
    step = rho[1] - rho[0]
    return float(theta[ok].min()), float(theta[ok].max()), float(step)


def min_leakage_grid(alpha, beta, p, lo=-50.0, hi=50.0, step=1e-5):
    """Brute-force scan of theta -> ||alpha - theta beta||_p."""
    theta = np.arange(lo, hi, step)
    if np.isinf(p):
        vals = np.max(np.abs(alpha[None, :] - theta[:, None] * beta[None, :]), axis=1)
    else:
        vals = np.sum(
            np.abs(alpha[None, :] - theta[:, None] * beta[None, :]) ** p, axis=1
        ) ** (1.0 / p)
    i = int(np.argmin(vals))
    return float(theta[i]), float(vals[i])
