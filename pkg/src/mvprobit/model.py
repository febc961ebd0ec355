"""Latent-factor multivariate probit model and its Gibbs sampler.

Binary responses y_nm are thresholded latent Gaussians z_nm with mean
x_n'b_m + psi_n'theta_m and unit residual variance.  The residual
covariance of z_n is Theta Theta' + I, so only the correlation-scale
quantities R (correlation matrix) and B_tilde (rescaled coefficients)
are identified; every kept draw is rescaled before storage.

The four full-conditional updates accept a prior fraction ``epsilon``:
with epsilon = 1 they are the full-data updates, with epsilon = n_s / N
they implement the fractionated-prior updates used by sharded chains
(the ridge added to each Gram matrix becomes epsilon / prior_variance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import cho_solve
from scipy.special import ndtr

from .errors import (
    InvalidParameterError,
    NonFiniteStateError,
    UnsupportedDimensionError,
)
from .rng import RngStream, cholesky_lower, mvn_from_precision_chol, truncated_normal_batch

DEFAULT_QUANTILE_GRID = (0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975)

_REQUIRED_LEVELS = (0.025, 0.5, 0.975)

_HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)


@dataclass
class Dataset:
    """Binary response matrix Y (N x M) plus predictor matrix X (N x P)."""

    Y: np.ndarray
    X: np.ndarray
    response_names: list[str] | None = None
    predictor_names: list[str] | None = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y)
        self.X = np.asarray(self.X, dtype=float)
        if self.Y.ndim != 2 or self.X.ndim != 2:
            raise InvalidParameterError("Y and X must be 2-dimensional")
        if not np.all((self.Y == 0) | (self.Y == 1)):
            raise InvalidParameterError(
                "Y entries must be exactly 0 or 1 with no missing values"
            )
        self.Y = self.Y.astype(np.int8)
        n, m = self.Y.shape
        if self.X.shape[0] != n:
            raise InvalidParameterError(
                f"row mismatch: Y has {n} rows, X has {self.X.shape[0]}"
            )
        p = self.X.shape[1]
        if n < 1 or m < 2 or p < 1:
            raise InvalidParameterError(
                f"need N >= 1, M >= 2, P >= 1; got N={n}, M={m}, P={p}"
            )
        if not np.all(np.isfinite(self.X)):
            raise InvalidParameterError("X entries must all be finite")
        if self.response_names is None:
            self.response_names = [f"y{i}" for i in range(1, m + 1)]
        if self.predictor_names is None:
            self.predictor_names = [f"x{j}" for j in range(1, p + 1)]
        if len(self.response_names) != m or len(self.predictor_names) != p:
            raise InvalidParameterError("name lists must match Y/X column counts")

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        """View of the given rows (ascending order preserved by caller)."""
        return Dataset(
            self.Y[rows], self.X[rows], self.response_names, self.predictor_names
        )


@dataclass(frozen=True)
class ModelConfig:
    """Sampler configuration.

    The residual covariance of the latent utilities is the identity by
    construction and is not configurable; ``prior_variance`` is the
    common prior variance of coefficient and loading entries.
    """

    n_factors: int
    n_iter: int
    burn_in: int
    seed: int
    prior_variance: float = 1e6
    thin: int = 1
    quantile_grid: tuple[float, ...] = DEFAULT_QUANTILE_GRID

    def __post_init__(self):
        if self.n_factors < 1:
            raise InvalidParameterError("n_factors must be >= 1")
        if self.prior_variance <= 0:
            raise InvalidParameterError("prior_variance must be positive")
        if self.n_iter < 1:
            raise InvalidParameterError("n_iter must be >= 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise InvalidParameterError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise InvalidParameterError("thin must be >= 1")
        if self.n_kept < 1:
            raise InvalidParameterError("no draws kept: n_iter/burn_in/thin combination")
        grid = np.asarray(self.quantile_grid, dtype=float)
        if grid.ndim != 1 or len(grid) < 3:
            raise InvalidParameterError("quantile_grid must be a 1-d level list")
        if np.any(grid <= 0) or np.any(grid >= 1) or np.any(np.diff(grid) <= 0):
            raise InvalidParameterError(
                "quantile_grid must be strictly increasing within (0, 1)"
            )
        for level in _REQUIRED_LEVELS:
            if not np.any(grid == level):
                raise InvalidParameterError(f"quantile_grid must contain {level}")

    @property
    def n_kept(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class ChainState:
    """Unidentified per-iteration parameters of one chain."""

    Z: np.ndarray  # N x M latent utilities
    Psi: np.ndarray  # N x K factor scores
    Theta: np.ndarray  # M x K loadings
    B: np.ndarray  # M x P coefficients


@dataclass
class IdentifiedDraw:
    R: np.ndarray  # M x M correlation matrix
    B_tilde: np.ndarray  # M x P rescaled coefficients


@dataclass
class PosteriorSummary:
    """Quantile table (and optionally raw kept draws) of one chain.

    Parameters are ordered "b[m,p]" row-major over the coefficient
    matrix, then "r[i,j]" over the strict upper triangle (1-based
    indices).
    """

    parameter_names: list[str]
    quantile_grid: np.ndarray
    quantiles: np.ndarray  # n_params x n_levels
    n_kept: int
    draws: np.ndarray | None = None  # n_params x n_kept when retained
    epsilon: float | None = None
    response_names: list[str] | None = None
    predictor_names: list[str] | None = None


def make_parameter_names(m: int, p: int) -> list[str]:
    names = [f"b[{i},{j}]" for i in range(1, m + 1) for j in range(1, p + 1)]
    names += [
        f"r[{i},{j}]" for i in range(1, m + 1) for j in range(i + 1, m + 1)
    ]
    return names


def _check_epsilon(epsilon: float):
    if not 0.0 < epsilon <= 1.0:
        raise InvalidParameterError(f"epsilon must lie in (0, 1], got {epsilon}")


def gaussian_update_moments(
    design: np.ndarray, resid: np.ndarray, ridge: float, context: str = ""
) -> tuple[np.ndarray, np.ndarray]:
    """Moments of the conjugate Gaussian update shared by B and Theta.

    For A = design'design + ridge*I returns (means, L) where the rows of
    ``means`` are A^{-1} design' resid[:, j] per residual column j and L
    is the lower Cholesky factor of the precision A.
    """
    d = design.shape[1]
    prec = design.T @ design + ridge * np.eye(d)
    chol = cholesky_lower(prec, context)
    means = cho_solve((chol, True), design.T @ resid)
    return means.T, chol


def update_latents(state: ChainState, data: Dataset, rng: RngStream) -> ChainState:
    """Refresh every latent utility from its one-sided truncated normal."""
    means = data.X @ state.B.T + state.Psi @ state.Theta.T
    state.Z = truncated_normal_batch(rng, means, data.Y == 1)
    return state


def update_factors(state: ChainState, data: Dataset, rng: RngStream) -> ChainState:
    """Refresh factor-score rows; the K x K system is factorized once."""
    k = state.Theta.shape[1]
    prec = state.Theta.T @ state.Theta + np.eye(k)
    chol = cholesky_lower(prec, "factor score update")
    resid = state.Z - data.X @ state.B.T
    means = cho_solve((chol, True), (resid @ state.Theta).T).T
    state.Psi = mvn_from_precision_chol(rng.generator, means, chol)
    return state


def update_coefficients(
    state: ChainState,
    data: Dataset,
    prior_variance: float,
    epsilon: float,
    rng: RngStream,
    xtx_chol: np.ndarray | None = None,
) -> ChainState:
    """Refresh coefficient rows b_m under the fractionated prior.

    X'X + (epsilon/prior_variance) I is constant across m and across
    iterations; pass its Cholesky factor as ``xtx_chol`` to reuse it.
    """
    _check_epsilon(epsilon)
    resid = state.Z - state.Psi @ state.Theta.T
    if xtx_chol is None:
        means, xtx_chol = gaussian_update_moments(
            data.X, resid, epsilon / prior_variance, "coefficient update"
        )
    else:
        means = cho_solve((xtx_chol, True), data.X.T @ resid).T
    state.B = mvn_from_precision_chol(rng.generator, means, xtx_chol)
    return state


def update_loadings(
    state: ChainState,
    data: Dataset,
    prior_variance: float,
    epsilon: float,
    rng: RngStream,
) -> ChainState:
    """Refresh loading rows theta_m under the fractionated prior."""
    _check_epsilon(epsilon)
    resid = state.Z - data.X @ state.B.T
    means, chol = gaussian_update_moments(
        state.Psi, resid, epsilon / prior_variance, "loading update"
    )
    state.Theta = mvn_from_precision_chol(rng.generator, means, chol)
    return state


def identify(state: ChainState) -> IdentifiedDraw:
    """Rescale one draw to the correlation scale.

    Sigma = Theta Theta' + I, D = diag(Sigma); returns
    R = D^{-1/2} Sigma D^{-1/2} with an exactly unit diagonal and
    B_tilde = D^{-1/2} B.  Diagonal entries of Sigma are >= 1, so the
    rescaling never degenerates.
    """
    diag = 1.0 + np.sum(state.Theta * state.Theta, axis=1)
    inv_root = 1.0 / np.sqrt(diag)
    sigma = state.Theta @ state.Theta.T + np.eye(state.Theta.shape[0])
    corr = sigma * np.outer(inv_root, inv_root)
    np.fill_diagonal(corr, 1.0)
    return IdentifiedDraw(R=corr, B_tilde=state.B * inv_root[:, None])


def initialize_state(data: Dataset, config: ModelConfig, rng: RngStream) -> ChainState:
    """Starting state: B = 0, small random loadings to break factor
    symmetry, zero scores, and latents at +/- the half-normal mean so the
    sign constraint holds immediately."""
    m, p, k = data.m, data.p, config.n_factors
    theta = 0.1 * rng.generator.standard_normal((m, k))
    z = np.where(data.Y == 1, _HALF_NORMAL_MEAN, -_HALF_NORMAL_MEAN)
    return ChainState(
        Z=z.astype(float),
        Psi=np.zeros((data.n, k)),
        Theta=theta,
        B=np.zeros((m, p)),
    )


def _check_finite(state: ChainState, iteration: int):
    for name, arr in (
        ("Z", state.Z),
        ("Psi", state.Psi),
        ("Theta", state.Theta),
        ("B", state.B),
    ):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteStateError(
                f"non-finite values in {name} at iteration {iteration}"
            )


def run_chain(
    data: Dataset,
    config: ModelConfig,
    epsilon: float = 1.0,
    stream_id: int = 0,
    keep_draws: bool = False,
) -> PosteriorSummary:
    """Run one Gibbs chain and summarize the identified draws.

    Sweeps latents -> factor scores -> coefficients -> loadings, rescales
    each kept draw, and returns per-parameter quantile tables (raw kept
    draws too when ``keep_draws``).  Deterministic function of
    ``(data, config, epsilon, stream_id)``.
    """
    _check_epsilon(epsilon)
    rng = RngStream(config.seed, stream_id)
    state = initialize_state(data, config, rng)
    m, p = data.m, data.p

    ridge = epsilon / config.prior_variance
    xtx_chol = cholesky_lower(
        data.X.T @ data.X + ridge * np.eye(p), "coefficient update"
    )

    names = make_parameter_names(m, p)
    n_kept = config.n_kept
    draws = np.empty((len(names), n_kept))
    upper = np.triu_indices(m, k=1)
    n_coef = m * p

    kept = 0
    for t in range(1, config.n_iter + 1):
        update_latents(state, data, rng)
        update_factors(state, data, rng)
        update_coefficients(
            state, data, config.prior_variance, epsilon, rng, xtx_chol=xtx_chol
        )
        update_loadings(state, data, config.prior_variance, epsilon, rng)
        if t % 100 == 0 or t == config.n_iter:
            _check_finite(state, t)
        offset = t - config.burn_in
        if offset > 0 and offset % config.thin == 0 and kept < n_kept:
            ident = identify(state)
            draws[:n_coef, kept] = ident.B_tilde.ravel()
            draws[n_coef:, kept] = ident.R[upper]
            kept += 1

    grid = np.asarray(config.quantile_grid, dtype=float)
    quantiles = np.quantile(draws, grid, axis=1).T
    return PosteriorSummary(
        parameter_names=names,
        quantile_grid=grid,
        quantiles=quantiles,
        n_kept=n_kept,
        draws=draws if keep_draws else None,
        epsilon=epsilon,
        response_names=list(data.response_names),
        predictor_names=list(data.predictor_names),
    )


def log_joint_density(
    state: ChainState,
    data: Dataset,
    prior_variance: float = 1e6,
    epsilon: float = 1.0,
) -> float:
    """Unnormalized log joint of (Z, Psi, Theta, B) given (Y, X).

    Returns -inf when any latent sign contradicts its response.  Useful
    as a stationarity diagnostic; additive constants are dropped.
    """
    signs_ok = np.all((state.Z > 0) == (data.Y == 1))
    if not signs_ok:
        return -np.inf
    resid = state.Z - data.X @ state.B.T - state.Psi @ state.Theta.T
    out = -0.5 * float(np.sum(resid * resid))
    out -= 0.5 * float(np.sum(state.Psi * state.Psi))
    scale = epsilon / prior_variance
    out -= 0.5 * scale * float(np.sum(state.B * state.B))
    out -= 0.5 * scale * float(np.sum(state.Theta * state.Theta))
    return out


def _norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _upper_orthant_2(a1: float, a2: float, rho: float) -> float:
    """P(W1 > a1, W2 > a2) for standard bivariate normal with corr rho."""
    if rho >= 1.0 - 1e-12:
        return float(ndtr(-max(a1, a2)))
    if rho <= -1.0 + 1e-12:
        return max(0.0, float(ndtr(-a1) - ndtr(a2)))
    s = math.sqrt(1.0 - rho * rho)

    def integrand(t):
        return _norm_pdf(t) * ndtr((rho * t - a2) / s)

    value, _ = quad(integrand, a1, np.inf, epsabs=1e-10, epsrel=1e-10, limit=200)
    return value


def _upper_orthant_3(a: np.ndarray, corr: np.ndarray) -> float:
    r12, r13, r23 = corr[0, 1], corr[0, 2], corr[1, 2]
    s2 = math.sqrt(max(1.0 - r12 * r12, 1e-300))
    s3 = math.sqrt(max(1.0 - r13 * r13, 1e-300))
    rho_cond = (r23 - r12 * r13) / (s2 * s3)
    rho_cond = min(1.0, max(-1.0, rho_cond))

    def integrand(t):
        return _norm_pdf(t) * _upper_orthant_2(
            (a[1] - r12 * t) / s2, (a[2] - r13 * t) / s3, rho_cond
        )

    value, _ = quad(integrand, a[0], np.inf, epsabs=5e-8, epsrel=1e-8, limit=200)
    return value


def orthant_probability(mu: np.ndarray, R: np.ndarray, y: np.ndarray) -> float:
    """P(Y = y) under z ~ N(mu, R), y_m = 1{z_m > 0}, for M <= 3.

    Deterministic numerical integration, absolute error <= 1e-6.  Serves
    as the independent oracle for the sampler's likelihood.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    y = np.atleast_1d(np.asarray(y))
    m = mu.shape[0]
    if m > 3:
        raise UnsupportedDimensionError(
            f"orthant probability supports M <= 3, got M={m}"
        )
    if R.shape != (m, m) or y.shape[0] != m:
        raise InvalidParameterError("mu, R, y dimensions disagree")
    if not np.allclose(R, R.T) or not np.allclose(np.diag(R), 1.0):
        raise InvalidParameterError("R must be a symmetric correlation matrix")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidParameterError("y entries must be 0 or 1")

    sign = 2.0 * np.asarray(y, dtype=float) - 1.0
    lower = -sign * mu
    corr = R * np.outer(sign, sign)
    if m == 1:
        return float(ndtr(-lower[0]))
    if m == 2:
        return _upper_orthant_2(lower[0], lower[1], corr[0, 1])
    return _upper_orthant_3(lower, corr)
