"""Sharp ATE bounds under bounded instrument leakage.

The machinery lives on two curves. ``ate_from_rho`` maps the confounding
correlation rho to the ATE theta through a strictly decreasing bijection f.
``leakage_norm`` maps theta to the L_p norm of the direct-effect weights,
g_p(theta) = ||alpha - theta * beta||_p, which is convex. Their composite
h_p = g_p o f is minimized at an interior point, so for any feasible
budget tau the sublevel set {rho : h_p(rho) <= tau} is an interval whose
ends give the extreme feasible confounding values, and through f the sharp
ATE bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import (
    CovarianceBlocks,
    KappaTriple,
    RegressionVectors,
    compute_kappas,
    compute_regression_vectors,
)
from .errors import (
    AllZeroTau,
    DegenerateKappa,
    DomainError,
    Infeasible,
    Irrelevance,
)

FEAS_TOL = 1e-12   # slack on the tau >= tau_check feasibility test
ROOT_TOL = 1e-12   # bisection tolerance in rho
RHO_CLIP = 1e-12   # f is never evaluated closer than this to |rho| = 1
CS_CLAMP = 1e-12   # negative Cauchy-Schwarz slack absorbed as rounding noise
S0_RTOL = 1e-8     # relative agreement required among zero-threshold pins


@dataclass(frozen=True)
class ScalarTau:
    """Scalar leakage budget: ||gamma||_p <= tau."""

    p: float
    tau: float

    def __post_init__(self):
        if not (self.p >= 1.0):
            raise DomainError("norm order p must be >= 1")
        if self.tau < 0.0:
            raise DomainError("tau must be nonnegative")


@dataclass(frozen=True)
class VectorTau:
    """Per-instrument budgets: |gamma_j| <= tau_j, with tau_j = 0 allowed."""

    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float).ravel()
        object.__setattr__(self, "tau", tau)
        if tau.size == 0 or np.any(tau < 0.0) or not np.all(np.isfinite(tau)):
            raise DomainError("tau vector entries must be finite and nonnegative")

    @property
    def s0(self) -> np.ndarray:
        """Indices with a zero threshold (classically valid instruments)."""
        return np.flatnonzero(self.tau == 0.0)

    @property
    def s1(self) -> np.ndarray:
        return np.flatnonzero(self.tau > 0.0)


TauSpec = ScalarTau | VectorTau


@dataclass(frozen=True)
class LeakageGeometry:
    """Minimum-leakage landmarks of the rho/theta curves."""

    kappas: KappaTriple
    vectors: RegressionVectors
    p: float
    theta_check: tuple[float, float]  # interval of norm-minimizing ATE values
    rho_check: tuple[float, float]
    tau_check: float


@dataclass(frozen=True)
class AteBounds:
    theta_minus: float
    theta_plus: float
    rho_minus: float
    rho_plus: float
    geometry: LeakageGeometry
    tau_used: float
    boundary_clipped: bool = False


@dataclass(frozen=True)
class LatentParams:
    """Full structural parameter set implied by the data at a given rho."""

    theta: float
    gamma: np.ndarray
    rho: float
    eta_x: float
    eta_y: float


def _cs_gap(kappas: KappaTriple) -> float:
    """kappa_xx * kappa_yy - kappa_xy^2, clamped at 0 for rounding noise."""
    gap = kappas.kappa_xx * kappas.kappa_yy - kappas.kappa_xy**2
    if gap < -CS_CLAMP * max(1.0, kappas.kappa_xx * kappas.kappa_yy):
        raise DegenerateKappa(f"Cauchy-Schwarz violated by more than noise: gap={gap:.3e}")
    return max(gap, 0.0)


def ate_from_rho(rho: float, kappas: KappaTriple) -> float:
    """The ATE implied by confounding correlation rho (strictly decreasing)."""
    if not (-1.0 < rho < 1.0):
        raise DomainError("rho must lie strictly inside (-1, 1)")
    gap = _cs_gap(kappas)
    # tan(arcsin(rho)) = rho / sqrt(1 - rho^2)
    t = rho / math.sqrt((1.0 - rho) * (1.0 + rho))
    return (kappas.kappa_xy - math.sqrt(gap) * t) / kappas.kappa_xx


def rho_from_ate(theta: float, kappas: KappaTriple) -> float:
    """Inverse of ``ate_from_rho``; unique rho in (-1, 1) for any theta."""
    gap = _cs_gap(kappas)
    num = kappas.kappa_xy - theta * kappas.kappa_xx
    if gap == 0.0:
        raise DegenerateKappa(
            "kappa_xx * kappa_yy = kappa_xy^2; rho pinned to "
            f"{'+1' if num > 0 else '-1' if num < 0 else '+/-1'}"
        )
    # sin(arctan(t)) = t / sqrt(1 + t^2)
    t = num / math.sqrt(gap)
    return t / math.sqrt(1.0 + t * t)


def leakage_norm(
    theta: float,
    vectors: RegressionVectors,
    p: float,
    active: np.ndarray | None = None,
) -> float:
    """g_p(theta) = ||alpha - theta * beta||_p over the active coordinates."""
    if not (p >= 1.0):
        raise DomainError("norm order p must be >= 1")
    resid = vectors.alpha - theta * vectors.beta
    if active is not None:
        resid = resid[active]
    if resid.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(np.abs(resid)))
    return float(np.sum(np.abs(resid) ** p) ** (1.0 / p))


def _min_l1(alpha: np.ndarray, beta: np.ndarray) -> tuple[float, float]:
    """Weighted-median minimizer interval of ||alpha - t*beta||_1."""
    nz = beta != 0.0
    t = alpha[nz] / beta[nz]
    w = np.abs(beta[nz])
    order = np.argsort(t)
    t, w = t[order], w[order]
    total = w.sum()
    csum = np.cumsum(w)
    # first breakpoint where the subgradient becomes nonnegative
    k = int(np.searchsorted(csum, total / 2.0))
    if np.isclose(csum[k], total / 2.0, rtol=0.0, atol=1e-15 * total) and k + 1 < t.size:
        return float(t[k]), float(t[k + 1])
    return float(t[k]), float(t[k])


def _min_linf(alpha: np.ndarray, beta: np.ndarray) -> tuple[float, float]:
    """Chebyshev minimizer interval via bisection on the objective value.

    For a trial value v, max_j |alpha_j - t*beta_j| <= v holds iff t lies in
    the intersection of per-coordinate intervals; bisect on the smallest v
    with nonempty intersection, then report that intersection.
    """
    nz = beta != 0.0
    const = float(np.max(np.abs(alpha[~nz]), initial=0.0))

    def interval(v: float) -> tuple[float, float]:
        lo = (alpha[nz] - np.sign(beta[nz]) * v) / beta[nz]
        hi = (alpha[nz] + np.sign(beta[nz]) * v) / beta[nz]
        return float(np.max(lo)), float(np.min(hi))

    v_hi = max(
        leakage_norm(float(_min_l2(alpha, beta)), RegressionVectors(alpha, beta), math.inf),
        const,
    )
    v_lo = const
    lo, hi = interval(v_hi)
    if lo > hi:  # pragma: no cover - v_hi always feasible by construction
        raise DomainError("internal bracket failure in L-infinity minimization")
    scale = max(1.0, abs(v_hi))
    for _ in range(200):
        if v_hi - v_lo <= 1e-15 * scale:
            break
        v = 0.5 * (v_lo + v_hi)
        a, b = interval(v)
        if a <= b and v >= const:
            v_hi = v
        else:
            v_lo = v
    lo, hi = interval(v_hi)
    return (lo, max(lo, hi))


def _min_l2(alpha: np.ndarray, beta: np.ndarray) -> float:
    return float(beta @ alpha) / float(beta @ beta)


def _min_lp(alpha: np.ndarray, beta: np.ndarray, p: float) -> float:
    """Unique minimizer of ||alpha - t*beta||_p for p in (1, inf), p != 2.

    Minimizes phi(t) = sum |alpha_j - t*beta_j|^p by bisecting its monotone
    derivative between the extreme residual-zero breakpoints.
    """
    nz = beta != 0.0
    t_pts = alpha[nz] / beta[nz]
    lo, hi = float(t_pts.min()), float(t_pts.max())
    if lo == hi:
        return lo

    def dphi(t: float) -> float:
        r = alpha - t * beta
        return float(-p * np.sum(beta * np.sign(r) * np.abs(r) ** (p - 1.0)))

    for _ in range(200):
        if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if dphi(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def min_leakage(
    vectors: RegressionVectors,
    p: float,
    active: np.ndarray | None = None,
) -> tuple[tuple[float, float], float]:
    """Minimizer interval of g_p and the minimum leakage tau_check.

    The interval is degenerate for p in (1, inf); for p = 1 and p = inf the
    minimizing set can be a nontrivial compact interval.
    """
    alpha, beta = vectors.alpha, vectors.beta
    if active is not None:
        alpha, beta = alpha[active], beta[active]
    if np.linalg.norm(beta) == 0.0:
        raise Irrelevance("||beta|| = 0 over the active coordinates")
    if math.isinf(p):
        interval = _min_linf(alpha, beta)
    elif p == 1.0:
        interval = _min_l1(alpha, beta)
    elif p == 2.0:
        t = _min_l2(alpha, beta)
        interval = (t, t)
    else:
        t = _min_lp(alpha, beta, p)
        interval = (t, t)
    sub = RegressionVectors(alpha=alpha, beta=beta)
    tau_check = leakage_norm(0.5 * (interval[0] + interval[1]), sub, p)
    return interval, tau_check


def _geometry(blocks: CovarianceBlocks, p: float, active=None) -> LeakageGeometry:
    kappas = compute_kappas(blocks)
    vectors = compute_regression_vectors(blocks)
    theta_check, tau_check = min_leakage(vectors, p, active=active)
    # f is decreasing, so the larger theta maps to the smaller rho
    rho_check = (
        rho_from_ate(theta_check[1], kappas),
        rho_from_ate(theta_check[0], kappas),
    )
    return LeakageGeometry(
        kappas=kappas,
        vectors=vectors,
        p=p,
        theta_check=theta_check,
        rho_check=rho_check,
        tau_check=tau_check,
    )


def _h(rho: float, geom: LeakageGeometry, active=None) -> float:
    return leakage_norm(ate_from_rho(rho, geom.kappas), geom.vectors, geom.p, active=active)


def _extreme_root(geom, tau, lo, hi, side: str, active=None) -> tuple[float, bool]:
    """Extreme point of {rho : h_p(rho) <= tau} on one side of rho_check.

    ``side='left'`` bisects on [lo, hi] where h is nonincreasing and returns
    the leftmost feasible rho; ``side='right'`` mirrors this on the other
    flank. Returns (root, clipped) where ``clipped`` marks a bracket end that
    was already feasible at the clipped domain boundary.
    """
    end = lo if side == "left" else hi
    if _h(end, geom, active) <= tau:
        return end, True
    # invariant: h(feas) <= tau < h(infeas)
    if side == "left":
        infeas, feas = lo, hi
    else:
        infeas, feas = hi, lo
    while abs(feas - infeas) > ROOT_TOL:
        mid = 0.5 * (feas + infeas)
        if _h(mid, geom, active) <= tau:
            feas = mid
        else:
            infeas = mid
    return feas, False


def _bounds_from_geometry(
    geom: LeakageGeometry, tau: float, active=None
) -> AteBounds:
    if tau < geom.tau_check - FEAS_TOL:
        raise Infeasible(
            f"tau={tau:.6g} below minimum feasible leakage tau_check={geom.tau_check:.6g}"
        )
    if tau <= geom.tau_check:
        # at (or within tolerance of) the minimum: bounds collapse onto the
        # minimizing interval
        t_lo, t_hi = geom.theta_check
        return AteBounds(
            theta_minus=t_lo,
            theta_plus=t_hi,
            rho_minus=geom.rho_check[0],
            rho_plus=geom.rho_check[1],
            geometry=geom,
            tau_used=tau,
        )
    if geom.p == 2.0 and active is None:
        alpha, beta = geom.vectors.alpha, geom.vectors.beta
        bb = float(beta @ beta)
        disc = bb * (tau**2 - float(alpha @ alpha)) + float(alpha @ beta) ** 2
        half = math.sqrt(max(disc, 0.0)) / bb
        theta_check = geom.theta_check[0]
        theta_minus, theta_plus = theta_check - half, theta_check + half
        rho_minus = rho_from_ate(theta_plus, geom.kappas)
        rho_plus = rho_from_ate(theta_minus, geom.kappas)
        return AteBounds(
            theta_minus=theta_minus,
            theta_plus=theta_plus,
            rho_minus=rho_minus,
            rho_plus=rho_plus,
            geometry=geom,
            tau_used=tau,
        )
    lo_clip, hi_clip = -1.0 + RHO_CLIP, 1.0 - RHO_CLIP
    rho_minus, clip_l = _extreme_root(
        geom, tau, lo_clip, geom.rho_check[0], "left", active=active
    )
    rho_plus, clip_r = _extreme_root(
        geom, tau, geom.rho_check[1], hi_clip, "right", active=active
    )
    return AteBounds(
        theta_minus=ate_from_rho(rho_plus, geom.kappas),
        theta_plus=ate_from_rho(rho_minus, geom.kappas),
        rho_minus=rho_minus,
        rho_plus=rho_plus,
        geometry=geom,
        tau_used=tau,
        boundary_clipped=clip_l or clip_r,
    )


def ate_bounds_scalar(blocks: CovarianceBlocks, spec: ScalarTau) -> AteBounds:
    """Sharp ATE bounds for a scalar L_p leakage budget."""
    geom = _geometry(blocks, spec.p)
    return _bounds_from_geometry(geom, spec.tau)


def transform_vector_tau(
    blocks: CovarianceBlocks, spec: VectorTau
) -> tuple[CovarianceBlocks, ScalarTau, np.ndarray]:
    """Rescale instruments by their thresholds, reducing to p = inf, tau = 1.

    Each instrument is rescaled to Z_j * tau_j, whose leakage coefficient is
    gamma_j / tau_j, so the per-coordinate constraints |gamma_j| <= tau_j
    become a single sup-norm budget of 1 on the rescaled scale (and uniform
    thresholds (t, ..., t) reduce exactly to the scalar sup-norm bounds at
    tau = t). Zero-threshold entries get a dummy scale of 1; callers must
    force the corresponding leakage coordinates to zero (see
    ``ate_bounds_vector``). Returns the transformed blocks, the equivalent
    scalar spec, and the zero-threshold index set.
    """
    if spec.tau.shape[0] != blocks.d_z:
        raise DomainError("tau vector length must equal d_z")
    tau_plus = np.where(spec.tau > 0.0, spec.tau, 1.0)
    scale = np.concatenate([tau_plus, [1.0, 1.0]])  # (Z block, X, Y) order
    t = np.outer(scale, scale)
    transformed = CovarianceBlocks.from_matrix(t * blocks.full_matrix())
    return transformed, ScalarTau(p=math.inf, tau=1.0), spec.s0


def ate_bounds_vector(
    blocks: CovarianceBlocks, spec: VectorTau, s0_rtol: float = S0_RTOL
) -> AteBounds:
    """Sharp ATE bounds under per-instrument thresholds.

    Instruments with tau_j > 0 enter a sup-norm constraint on the rescaled
    scale; instruments with tau_j = 0 are classical IVs whose zero-leakage
    equations each pin theta to alpha_j / beta_j (combined by least squares
    when over-identified). ``s0_rtol`` is the relative spread the individual
    pins may show before being declared inconsistent; loosen it for sample
    covariances, whose pins disagree by sampling noise. The ATE scale is
    unchanged by the rescaling, so bounds are reported directly.
    """
    transformed, scalar, s0 = transform_vector_tau(blocks, spec)
    s1 = spec.s1
    if s0.size == 0:
        geom = _geometry(transformed, math.inf, active=None)
        return _bounds_from_geometry(geom, 1.0)

    kappas = compute_kappas(transformed)
    vectors = compute_regression_vectors(transformed)
    alpha, beta = vectors.alpha, vectors.beta

    # each zero-threshold instrument pins theta; they must agree
    usable = s0[np.abs(beta[s0]) > 0.0]
    if usable.size == 0:
        raise Irrelevance("all zero-threshold instruments have beta_j = 0")
    theta_pin = float(beta[usable] @ alpha[usable]) / float(beta[usable] @ beta[usable])
    # residual leakage left on the pinned coordinates; the ratio pins
    # alpha_j / beta_j themselves are ill-conditioned when beta_j is small
    spread = float(np.max(np.abs(alpha[s0] - theta_pin * beta[s0])))
    consistent = spread <= s0_rtol * max(1.0, abs(theta_pin) * float(np.max(np.abs(beta[s0]))))
    if not consistent:
        if s1.size == 0:
            raise AllZeroTau(
                "zero-threshold constraints are mutually inconsistent "
                f"(spread {spread:.3e} around theta={theta_pin:.6g})"
            )
        raise Infeasible(
            "zero-threshold instruments pin conflicting ATE values "
            f"(spread {spread:.3e})"
        )
    if s1.size > 0 and leakage_norm(theta_pin, vectors, math.inf, active=s1) > 1.0 + FEAS_TOL:
        raise Infeasible("pinned ATE violates a positive per-instrument threshold")

    rho_pin = rho_from_ate(theta_pin, kappas)
    tau_check = leakage_norm(theta_pin, vectors, math.inf, active=s1)
    geom = LeakageGeometry(
        kappas=kappas,
        vectors=vectors,
        p=math.inf,
        theta_check=(theta_pin, theta_pin),
        rho_check=(rho_pin, rho_pin),
        tau_check=tau_check,
    )
    return AteBounds(
        theta_minus=theta_pin,
        theta_plus=theta_pin,
        rho_minus=rho_pin,
        rho_plus=rho_pin,
        geometry=geom,
        tau_used=scalar.tau,
    )


def curve_samples(
    blocks: CovarianceBlocks, p: float, rho_grid: np.ndarray
) -> np.ndarray:
    """Rows (rho, theta, leakage) along a grid of confounding values."""
    rho_grid = np.asarray(rho_grid, dtype=float).ravel()
    if rho_grid.size and (rho_grid.min() <= -1.0 or rho_grid.max() >= 1.0):
        raise DomainError("rho grid must lie strictly inside (-1, 1)")
    kappas = compute_kappas(blocks)
    vectors = compute_regression_vectors(blocks)
    rows = np.empty((rho_grid.size, 3))
    for i, rho in enumerate(rho_grid):
        theta = ate_from_rho(float(rho), kappas)
        rows[i] = (rho, theta, leakage_norm(theta, vectors, p))
    return rows


def latent_params(blocks: CovarianceBlocks, rho: float) -> LatentParams:
    """Reconstruct the full structural parameter set at a given rho."""
    kappas = compute_kappas(blocks)
    vectors = compute_regression_vectors(blocks)
    theta = ate_from_rho(rho, kappas)
    gamma = vectors.alpha - theta * vectors.beta
    eta_x = math.sqrt(kappas.kappa_xx)
    eta_y2 = kappas.kappa_yy - 2.0 * theta * kappas.kappa_xy + theta**2 * kappas.kappa_xx
    return LatentParams(
        theta=theta, gamma=gamma, rho=rho, eta_x=eta_x, eta_y=math.sqrt(max(eta_y2, 0.0))
    )


def implied_covariance(
    params: LatentParams, beta: np.ndarray, sigma_zz: np.ndarray
) -> CovarianceBlocks:
    """Model covariance implied by structural parameters (forward direction)."""
    theta, gamma, rho = params.theta, params.gamma, params.rho
    eta_x, eta_y = params.eta_x, params.eta_y
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
    return CovarianceBlocks(
        sigma_zz=np.asarray(sigma_zz, dtype=float),
        sigma_zx=sigma_zx,
        sigma_zy=sigma_zy,
        sigma_xx=sigma_xx,
        sigma_xy=sigma_xy,
        sigma_yy=sigma_yy,
    )
