"""Partial-identification bounds on causal effects with leaky instruments."""

from ._kernels import USING_NUMBA
from .baselines import (
    BayesConfig,
    BayesState,
    MhResult,
    backdoor_ols,
    log_likelihood,
    model_covariance,
    posterior_interval,
    run_mh,
)
from .bounds import (
    AteBounds,
    LatentParams,
    ScalarTau,
    VectorTau,
    ate_bounds_scalar,
    ate_bounds_vector,
    ate_from_rho,
    curve_samples,
    implied_covariance,
    latent_params,
    leakage_norm,
    min_leakage,
    rho_from_ate,
)
from .covariance import (
    CovarianceBlocks,
    Dataset,
    KappaTriple,
    RegressionVectors,
    compute_kappas,
    compute_regression_vectors,
    load_covariance_csv,
    load_dataset_csv,
    sample_covariance,
    write_dataset_csv,
)
from .errors import (
    AllZeroTau,
    ChainDiverged,
    DegenerateData,
    DegenerateDirection,
    DegenerateKappa,
    DomainError,
    Infeasible,
    Irrelevance,
    IvBoundsError,
    NotPositiveDefinite,
    NullNotRepairable,
    RankDeficient,
    TooFewInstruments,
    TooManyDiscarded,
    UnachievableSNR,
)
from .experiments import (
    BenchmarkCell,
    CoverageCell,
    PowerPoint,
    benchmark_grid,
    run_benchmark,
    run_benchmark_records,
    run_coverage,
    run_power,
    summarize_benchmark,
)
from .inference import (
    BootstrapResult,
    ExclusionTestResult,
    bootstrap_bounds,
    exclusion_test,
    tetrad_statistic,
    two_stage_least_squares,
)
from .simulate import (
    GroundTruth,
    SimConfig,
    generate_dataset,
    generate_dataset_null,
    generate_dataset_with_min_leakage,
    solve_snr_params,
    toeplitz_covariance,
)

__version__ = "1.0.0"
