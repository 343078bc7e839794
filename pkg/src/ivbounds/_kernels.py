"""Hot numeric inner loops, JIT-compiled when numba is available.

Set ``IVBOUNDS_NO_NUMBA=1`` to force the pure-numpy path. Both paths run
the same source and use the legacy ``np.random`` generator, whose numba
implementation reproduces numpy bit for bit, so results do not depend on
which path executed.

Replicated loops draw one 32-bit seed per replicate (produced by the
caller from a single ``SeedSequence``), so aggregation order never
matters and replicates can be sharded freely.
"""

from __future__ import annotations

import math
import os

import numpy as np

USING_NUMBA = os.environ.get("IVBOUNDS_NO_NUMBA", "") != "1"
if USING_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dependency
        USING_NUMBA = False

if not USING_NUMBA:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _center_columns(m):
    n, k = m.shape
    for j in range(k):
        mu = 0.0
        for i in range(n):
            mu += m[i, j]
        mu /= n
        for i in range(n):
            m[i, j] -= mu
    return m


@njit(cache=True)
def _tetrad_from_data(m, d_z):
    """Tetrad statistic det(Lambda' Lambda) from a centered data matrix."""
    n = m.shape[0]
    szx = np.zeros(d_z)
    szy = np.zeros(d_z)
    for i in range(n):
        xi = m[i, d_z]
        yi = m[i, d_z + 1]
        for j in range(d_z):
            szx[j] += m[i, j] * xi
            szy[j] += m[i, j] * yi
    szx /= n
    szy /= n
    xx = szx @ szx
    yy = szy @ szy
    xy = szx @ szy
    return xx * yy - xy * xy


@njit(cache=True)
def tetrad_null_stats(factor, n, seeds):
    """Tetrad statistics on synthetic null datasets.

    ``factor`` is any square root of the null covariance (rows of
    standard normals are multiplied by its transpose). One statistic per
    seed; each replicate reseeds the legacy generator independently.
    """
    k = factor.shape[0]
    d_z = k - 2
    b_count = seeds.shape[0]
    out = np.empty(b_count)
    for b in range(b_count):
        np.random.seed(seeds[b])
        raw = np.random.standard_normal((n, k))
        m = raw @ factor.T
        _center_columns(m)
        out[b] = _tetrad_from_data(m, d_z)
    return out


@njit(cache=True)
def bootstrap_bounds_l2(data, seeds, tau, pd_tol, feas_tol):
    """Row-resampled p = 2 ATE bounds, one replicate per seed.

    Returns (lower, upper, status) with status 1 for a feasible replicate
    and 0 for one discarded as degenerate or infeasible.
    """
    n, k = data.shape
    d_z = k - 2
    b_count = seeds.shape[0]
    lower = np.full(b_count, np.nan)
    upper = np.full(b_count, np.nan)
    status = np.zeros(b_count, dtype=np.uint8)
    for b in range(b_count):
        np.random.seed(seeds[b])
        idx = np.random.randint(0, n, n)
        m = np.empty((n, k))
        for i in range(n):
            m[i] = data[idx[i]]
        _center_columns(m)
        sigma = (m.T @ m) / n
        eigvals = np.linalg.eigvalsh(sigma)
        if eigvals[0] <= pd_tol * max(eigvals[-1], 0.0):
            continue
        sigma_zz = sigma[:d_z, :d_z].copy()
        rhs = np.empty((d_z, 2))
        rhs[:, 0] = sigma[:d_z, d_z + 1]  # sigma_zy
        rhs[:, 1] = sigma[:d_z, d_z]      # sigma_zx
        sol = np.linalg.solve(sigma_zz, rhs)
        alpha = sol[:, 0]
        beta = sol[:, 1]
        bb = beta @ beta
        if bb <= 0.0:
            continue
        theta_check = (beta @ alpha) / bb
        resid = alpha - theta_check * beta
        tau_check = math.sqrt(resid @ resid)
        if tau < tau_check - feas_tol:
            continue
        disc = bb * (tau * tau - alpha @ alpha) + (alpha @ beta) ** 2
        half = math.sqrt(max(disc, 0.0)) / bb
        lower[b] = theta_check - half
        upper[b] = theta_check + half
        status[b] = 1
    return lower, upper, status


@njit(cache=True)
def _chol_lower(a):
    """Cholesky with an explicit failure flag instead of an exception."""
    k = a.shape[0]
    ell = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1):
            s = a[i, j]
            for t in range(j):
                s -= ell[i, t] * ell[j, t]
            if i == j:
                if s <= 0.0:
                    return ell, False
                ell[i, i] = math.sqrt(s)
            else:
                ell[i, j] = s / ell[j, j]
    return ell, True


@njit(cache=True)
def _trace_inv_product(ell, s):
    """trace(A^{-1} S) given the Cholesky factor of A."""
    k = ell.shape[0]
    total = 0.0
    for col in range(k):
        # forward solve L w = s[:, col]
        w = np.empty(k)
        for i in range(k):
            acc = s[i, col]
            for t in range(i):
                acc -= ell[i, t] * w[t]
            w[i] = acc / ell[i, i]
        # back solve L' v = w, only v[col] is needed for the trace
        v = np.empty(k)
        for i in range(k - 1, -1, -1):
            acc = w[i]
            for t in range(i + 1, k):
                acc -= ell[t, i] * v[t]
            v[i] = acc / ell[i, i]
        total += v[col]
    return total


@njit(cache=True)
def _std_normal_cdf(w):
    return 0.5 * (1.0 + math.erf(w / math.sqrt(2.0)))


@njit(cache=True)
def _mh_log_posterior(params, d_z, s, n, tau, priors, use_likelihood, sqrt_norm):
    """Log posterior (up to a constant) of the leakage-constrained SEM.

    ``priors`` packs (v_beta, v_b, v_theta, l_mu_z, l_v_z, l_mu_x, l_v_x,
    l_mu_y, l_v_y). ``sqrt_norm`` selects the gamma radius encoding:
    ||gamma||_2 = sqrt(kappa * tau) when true, kappa * tau otherwise.
    """
    k = d_z + 2
    beta = params[:d_z]
    bvec = params[d_z : 2 * d_z]
    w_kappa = params[2 * d_z]
    w_rho = params[2 * d_z + 1]
    theta = params[2 * d_z + 2]
    log_eta_z2 = params[2 * d_z + 3 : 3 * d_z + 3]
    log_eta_x2 = params[3 * d_z + 3]
    log_eta_y2 = params[3 * d_z + 4]

    v_beta, v_b, v_theta = priors[0], priors[1], priors[2]
    l_mu_z, l_v_z = priors[3], priors[4]
    l_mu_x, l_v_x = priors[5], priors[6]
    l_mu_y, l_v_y = priors[7], priors[8]

    logp = 0.0
    for j in range(d_z):
        logp -= 0.5 * beta[j] * beta[j] / v_beta
        logp -= 0.5 * bvec[j] * bvec[j] / v_b
        logp -= 0.5 * (log_eta_z2[j] - l_mu_z) ** 2 / l_v_z
    logp -= 0.5 * w_kappa * w_kappa
    logp -= 0.5 * w_rho * w_rho
    logp -= 0.5 * theta * theta / v_theta
    logp -= 0.5 * (log_eta_x2 - l_mu_x) ** 2 / l_v_x
    logp -= 0.5 * (log_eta_y2 - l_mu_y) ** 2 / l_v_y
    if use_likelihood == 0:
        return logp

    kappa = _std_normal_cdf(w_kappa)
    rho = 2.0 * _std_normal_cdf(w_rho) - 1.0
    bnorm2 = bvec @ bvec
    if bnorm2 <= 0.0:
        return -np.inf
    if sqrt_norm:
        radius = math.sqrt(kappa * tau / bnorm2)
    else:
        radius = kappa * tau / math.sqrt(bnorm2)
    gamma = bvec * radius
    eta_z2 = np.exp(log_eta_z2)
    eta_x2 = math.exp(log_eta_x2)
    eta_y2 = math.exp(log_eta_y2)
    eta_x = math.sqrt(eta_x2)
    eta_y = math.sqrt(eta_y2)

    sigma = np.empty((k, k))
    for i in range(d_z):
        for j in range(d_z):
            sigma[i, j] = 0.0
        sigma[i, i] = eta_z2[i]
    sigma_zx = eta_z2 * beta
    sigma_zy = eta_z2 * gamma + theta * sigma_zx
    sigma_xx = beta @ sigma_zx + eta_x2
    cross = rho * eta_x * eta_y
    sigma_xy = theta * sigma_xx + gamma @ sigma_zx + cross
    sigma_yy = (
        gamma @ (eta_z2 * gamma)
        + 2.0 * theta * (gamma @ sigma_zx)
        + theta * theta * sigma_xx
        + 2.0 * theta * cross
        + eta_y2
    )
    for i in range(d_z):
        sigma[i, d_z] = sigma_zx[i]
        sigma[d_z, i] = sigma_zx[i]
        sigma[i, d_z + 1] = sigma_zy[i]
        sigma[d_z + 1, i] = sigma_zy[i]
    sigma[d_z, d_z] = sigma_xx
    sigma[d_z, d_z + 1] = sigma_xy
    sigma[d_z + 1, d_z] = sigma_xy
    sigma[d_z + 1, d_z + 1] = sigma_yy

    ell, ok = _chol_lower(sigma)
    if not ok:
        return -np.inf
    logdet = 0.0
    for i in range(k):
        logdet += 2.0 * math.log(ell[i, i])
    return logp - 0.5 * _trace_inv_product(ell, s) - 0.5 * n * logdet


@njit(cache=True)
def mh_chain(
    init,
    d_z,
    s,
    n,
    tau,
    priors,
    step_scales,
    n_iter,
    burn_in,
    adapt_steps,
    seed,
    use_likelihood,
    sqrt_norm,
):
    """Random-walk Metropolis-Hastings over the packed parameter vector.

    A pre-burn-in phase rescales a global step multiplier every 100
    proposals toward a 20-40% acceptance rate, then freezes it. Returns
    (kept samples, acceptance rate after adaptation, diverged flag,
    frozen multiplier). ``diverged`` is set when any post-adaptation
    1000-step window accepts fewer than 1% of proposals.
    """
    np.random.seed(seed)
    nparams = init.shape[0]
    params = init.copy()
    logp = _mh_log_posterior(params, d_z, s, n, tau, priors, use_likelihood, sqrt_norm)
    kept = np.empty((n_iter - burn_in, nparams))
    mult = 1.0
    accepted_window = 0
    window_size = 0
    accepted_total = 0
    proposals_total = 0
    diverged = False
    for it in range(n_iter):
        proposal = params + mult * step_scales * np.random.standard_normal(nparams)
        logp_new = _mh_log_posterior(
            proposal, d_z, s, n, tau, priors, use_likelihood, sqrt_norm
        )
        accept = False
        if logp_new > -np.inf:
            if logp_new >= logp or math.log(np.random.random()) < logp_new - logp:
                accept = True
        if accept:
            params = proposal
            logp = logp_new
        if it < adapt_steps:
            accepted_window += 1 if accept else 0
            window_size += 1
            if window_size == 100:
                rate = accepted_window / 100.0
                if rate > 0.4:
                    mult *= 1.25
                elif rate < 0.2:
                    mult *= 0.8
                accepted_window = 0
                window_size = 0
            if it == adapt_steps - 1:
                accepted_window = 0
                window_size = 0
        else:
            accepted_window += 1 if accept else 0
            window_size += 1
            accepted_total += 1 if accept else 0
            proposals_total += 1
            if window_size == 1000:
                if accepted_window < 10:
                    diverged = True
                accepted_window = 0
                window_size = 0
        if it >= burn_in:
            kept[it - burn_in] = params
    rate = accepted_total / max(proposals_total, 1)
    return kept, rate, diverged, mult
