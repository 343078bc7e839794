"""Timing comparison of the compiled kernels against their pure-python forms.

Each hot kernel is a numba dispatcher; calling ``.py_func`` runs the same
code through the plain numpy interpreter path (what you get with
IVBOUNDS_NO_NUMBA=1). Results are identical; only speed differs.

Run: python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from ivbounds import ScalarTau, SimConfig, generate_dataset, sample_covariance
from ivbounds import _kernels
from ivbounds.baselines import BayesConfig, _initial_state, _step_scales
from ivbounds.covariance import PD_TOL
from ivbounds.bounds import FEAS_TOL


def timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    if not _kernels.USING_NUMBA:
        raise SystemExit(
            "run without IVBOUNDS_NO_NUMBA so both paths can be compared"
        )
    cfg = SimConfig(d_z=5, sigma_zz_kind="diagonal", rho=0.3, seed=0)
    data, _ = generate_dataset(cfg, 1000)
    blocks = sample_covariance(data)
    sigma = blocks.full_matrix()
    w, v = np.linalg.eigh(sigma)
    factor = v @ np.diag(np.sqrt(np.maximum(w, 0.0)))
    seeds = np.random.SeedSequence(0).generate_state(500).astype(np.int64)
    matrix = data.matrix()
    tau = 5.0

    rows = []

    name = "tetrad_null_stats (B=500, n=1000)"
    args = (factor, 1000, seeds)
    _kernels.tetrad_null_stats(*args)  # compile
    fast = timeit(lambda: _kernels.tetrad_null_stats(*args))
    slow = timeit(lambda: _kernels.tetrad_null_stats.py_func(*args))
    rows.append((name, fast, slow))

    name = "bootstrap_bounds_l2 (B=500, n=1000)"
    args = (matrix, seeds, tau, PD_TOL, FEAS_TOL)
    _kernels.bootstrap_bounds_l2(*args)
    fast = timeit(lambda: _kernels.bootstrap_bounds_l2(*args))
    slow = timeit(lambda: _kernels.bootstrap_bounds_l2.py_func(*args))
    rows.append((name, fast, slow))

    name = "mh_chain (5000 iters, d_z=5)"
    bc = BayesConfig(tau=tau, n_iter=5000, burn_in=1000, adapt_steps=800)
    rng = np.random.default_rng(0)
    init = _initial_state(data, rng).packed()
    suffstat = matrix.T @ matrix
    args = (init, data.d_z, suffstat, data.n, tau, bc.priors_packed(),
            _step_scales(data.d_z, bc.base_step), bc.n_iter, bc.burn_in,
            bc.adapt_steps, 7, 1, True)
    _kernels.mh_chain(*args)
    fast = timeit(lambda: _kernels.mh_chain(*args))
    slow = timeit(lambda: _kernels.mh_chain.py_func(*args), repeats=1)
    rows.append((name, fast, slow))

    print(f"{'kernel':45s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, fast, slow in rows:
        print(f"{name:45s} {fast:9.4f}s {slow:9.4f}s {slow / fast:7.1f}x")


if __name__ == "__main__":
    main()
