"""
Numerical kernels: error function, Gauss-Chebyshev quadrature, truncated
Gaussian integration, multivariate normal CDF and PSD square roots.

Everything here is a pure function of its inputs. Randomized pieces
(mvn_cdf) derive every replicate stream from the caller's seed, so results
do not depend on evaluation order.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from scipy import linalg, special
from scipy.stats import qmc

logger = logging.getLogger(__name__)

DEFAULT_CHEBYSHEV_NODES = 100
DEFAULT_MVN_BUDGET = 2**14
DEFAULT_MVN_REPLICATES = 8
PSD_RELATIVE_TOL = 1e-10

_UNIT_EPS = np.finfo(float).eps
_UNIT_TINY = np.finfo(float).tiny


class NotPositiveSemidefiniteError(ValueError):
    """
    Raised when a matrix is indefinite beyond the allowed tolerance.

    The most negative eigenvalue is kept on the exception for diagnostics.
    """

    def __init__(self, min_eigenvalue: float, tolerance: float, what: str = "matrix"):
        self.min_eigenvalue = float(min_eigenvalue)
        self.tolerance = float(tolerance)
        super().__init__(
            f"{what} is not positive semidefinite: most negative eigenvalue "
            f"{self.min_eigenvalue:.6e} < -{self.tolerance:.3e}"
        )


class FactorizationError(ValueError):
    """Raised when a covariance cannot be factorized even after PSD repair."""
    pass


# ================================================================
# SCALAR KERNELS
# ================================================================

def erf(x):
    """Error function; accepts scalars or arrays."""
    return special.erf(x)


# ================================================================
# GAUSS-CHEBYSHEV QUADRATURE
# ================================================================

@dataclass(frozen=True)
class ChebyshevRule:
    """
    Gauss-Chebyshev rule of the first kind on [-1, 1].

    nodes[t-1] = cos((2t - 1) pi / (2U)), strictly decreasing; every node
    carries the same weight pi / U.
    """
    num_nodes: int
    nodes: np.ndarray
    weight_scale: float

    def integrate_weighted(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Approximate the integral of f(x) / sqrt(1 - x^2) over [-1, 1]."""
        return float(self.weight_scale * np.sum(f(self.nodes)))


@lru_cache(maxsize=32)
def chebyshev_rule(num_nodes: int = DEFAULT_CHEBYSHEV_NODES) -> ChebyshevRule:
    """
    Build the U-node Gauss-Chebyshev rule.

    Exact for polynomials of degree <= 2U - 1 against the Chebyshev weight.

    Raises:
        ValueError: If num_nodes < 1
    """
    if num_nodes < 1:
        raise ValueError(f"num_nodes must be >= 1, got {num_nodes}")
    t = np.arange(1, num_nodes + 1)
    nodes = np.cos((2 * t - 1) * np.pi / (2 * num_nodes))
    nodes.setflags(write=False)
    return ChebyshevRule(num_nodes=num_nodes, nodes=nodes, weight_scale=np.pi / num_nodes)


@dataclass(frozen=True)
class TruncationWindow:
    """Finite window [center - half_width, center + half_width]."""
    half_width: float
    center: float = 0.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"half_width must be > 0, got {self.half_width}")

    def nodes(self, rule: ChebyshevRule) -> np.ndarray:
        """Physical abscissae x_t = center + H p_t."""
        return self.center + self.half_width * rule.nodes

    def weights(self, rule: ChebyshevRule) -> np.ndarray:
        """Weights H (pi/U) sqrt(1 - p_t^2) that undo the Chebyshev weight."""
        return self.half_width * rule.weight_scale * np.sqrt(1.0 - rule.nodes**2)


def integrate_truncated(
    f: Callable[[np.ndarray], np.ndarray],
    window: TruncationWindow,
    rule: ChebyshevRule,
) -> float:
    """
    Integrate f over the truncation window with the Gauss-Chebyshev rule.

    Substitutes x = center + H p, so that
        int f(x) dx ~= H (pi/U) sum_t sqrt(1 - p_t^2) f(x_t).

    f must accept a 1-D array of abscissae and return values of the same shape.
    """
    values = np.asarray(f(window.nodes(rule)), dtype=float)
    return float(np.dot(window.weights(rule), values))


# ================================================================
# PSD HELPERS
# ================================================================

def psd_tolerance(matrix: np.ndarray, relative: float = PSD_RELATIVE_TOL) -> float:
    """Absolute eigenvalue tolerance: relative x order x largest diagonal entry."""
    order = matrix.shape[0]
    scale = float(np.max(np.abs(np.diag(matrix)))) if order else 1.0
    return relative * order * max(scale, _UNIT_TINY)


def min_eigenvalue(matrix: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(linalg.eigvalsh(matrix)[0])


def repair_psd(
    matrix: np.ndarray,
    unit_diagonal: bool = False,
) -> Tuple[np.ndarray, float]:
    """
    Clip negative eigenvalues to zero and re-symmetrize.

    Args:
        matrix: Symmetric matrix
        unit_diagonal: Rescale the result back to a unit diagonal (correlation matrices)

    Returns:
        (repaired matrix, most negative eigenvalue before repair). The input is
        returned unchanged when it is already PSD.
    """
    values, vectors = linalg.eigh(matrix)
    lowest = float(values[0])
    if lowest >= 0.0:
        return matrix, lowest

    clipped = (vectors * np.clip(values, 0.0, None)) @ vectors.T
    clipped = 0.5 * (clipped + clipped.T)
    if unit_diagonal:
        scale = 1.0 / np.sqrt(np.clip(np.diag(clipped), _UNIT_TINY, None))
        clipped = np.clip(clipped * np.outer(scale, scale), -1.0, 1.0)
        np.fill_diagonal(clipped, 1.0)
    return clipped, lowest


def psd_sqrt(
    matrix: np.ndarray,
    tol: Optional[float] = None,
    method: str = "auto",
) -> np.ndarray:
    """
    Factor F with F @ F.T == matrix.

    "auto" tries a lower-triangular Cholesky factor and falls back to the
    eigen-based factor V sqrt(max(lambda, 0)) for singular or numerically
    indefinite input. "eigen" always uses the eigen-based factor.

    Raises:
        ValueError: If matrix is not square and symmetric
        NotPositiveSemidefiniteError: If an eigenvalue is below -tol
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"Matrix must be square, got shape {matrix.shape}")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * max(1.0, np.max(np.abs(matrix)))):
        raise ValueError("Matrix must be symmetric")
    if method not in ("auto", "eigen"):
        raise ValueError(f"Unsupported factorization method: {method}")
    if tol is None:
        tol = psd_tolerance(matrix)

    if method == "auto":
        try:
            return linalg.cholesky(matrix, lower=True)
        except linalg.LinAlgError:
            logger.debug("Cholesky failed for order-%d matrix, using eigen factor", matrix.shape[0])

    values, vectors = linalg.eigh(matrix)
    if values[0] < -tol:
        raise NotPositiveSemidefiniteError(values[0], tol)
    return vectors * np.sqrt(np.clip(values, 0.0, None))


# ================================================================
# MULTIVARIATE NORMAL CDF
# ================================================================

@dataclass(frozen=True)
class MvnProblem:
    """
    P(X_1 <= y, ..., X_N <= y) for X ~ N(mean, covariance).

    The same scalar upper limit applies to every coordinate.
    """
    upper_limit: float
    mean: np.ndarray
    covariance: np.ndarray
    rng_seed: int = 0
    sample_budget: int = DEFAULT_MVN_BUDGET
    replicates: int = DEFAULT_MVN_REPLICATES

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"Covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        if mean.size < 1:
            raise ValueError("MvnProblem needs at least one coordinate")
        if self.sample_budget < 1:
            raise ValueError(f"sample_budget must be >= 1, got {self.sample_budget}")
        if self.replicates < 2:
            raise ValueError(f"replicates must be >= 2, got {self.replicates}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def order(self) -> int:
        return self.mean.size


class MvnEstimate(NamedTuple):
    """Estimated probability and standard error across randomization replicates."""
    value: float
    error_estimate: float


def _truncated_mean(z: float) -> float:
    """E[Z | Z <= z] for standard normal Z."""
    if math.isinf(z):
        return 0.0 if z > 0 else -math.inf
    return -math.exp(-0.5 * z * z - 0.5 * math.log(2 * math.pi) - special.log_ndtr(z))


def _ordered_cholesky(cov: np.ndarray, limits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cholesky factor with variable reordering.

    At each step the remaining variable with the smallest conditional
    probability (given truncated-normal means of earlier variables) is moved
    to the front. Pivots below the relative tolerance are treated as fully
    determined by earlier variables (zero column).

    Returns:
        (L, permuted limits) with cov[perm][:, perm] == L @ L.T
    """
    n = limits.size
    c = cov.copy()
    b = limits.copy()
    lower = np.zeros((n, n))
    y = np.zeros(n)
    floor = 1e-12 * max(float(np.max(np.diag(c))), _UNIT_TINY)

    for i in range(n):
        var = np.diag(c)[i:] - np.sum(lower[i:, :i] ** 2, axis=1)
        sd = np.sqrt(np.clip(var, 0.0, None))
        gap = b[i:] - lower[i:, :i] @ y[:i]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sd > math.sqrt(floor), gap / sd, np.where(gap >= 0, np.inf, -np.inf))
        j = i + int(np.argmin(special.ndtr(z)))
        if j != i:
            c[[i, j], :] = c[[j, i], :]
            c[:, [i, j]] = c[:, [j, i]]
            b[[i, j]] = b[[j, i]]
            lower[[i, j], :] = lower[[j, i], :]

        pivot = c[i, i] - lower[i, :i] @ lower[i, :i]
        if pivot > floor:
            d = math.sqrt(pivot)
            lower[i, i] = d
            lower[i + 1:, i] = (c[i + 1:, i] - lower[i + 1:, :i] @ lower[i, :i]) / d
            y[i] = _truncated_mean((b[i] - lower[i, :i] @ y[:i]) / d)
            if math.isinf(y[i]):
                y[i] = 0.0
    return lower, b


def _sequential_conditioning(lower: np.ndarray, limits: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Integrand values of the separation-of-variables transform at given points."""
    n = limits.size
    count = points.shape[0]
    f = np.ones(count)
    w = np.zeros((count, n))
    for i in range(n):
        shift = w[:, :i] @ lower[i, :i]
        d = lower[i, i]
        if d > 0:
            e = special.ndtr((limits[i] - shift) / d)
        else:
            e = (shift <= limits[i]).astype(float)
        f *= e
        if i < n - 1 and d > 0:
            u = np.clip(e * points[:, i], _UNIT_TINY, 1.0 - _UNIT_EPS)
            w[:, i] = special.ndtri(u)
    return f


def mvn_cdf(problem: MvnProblem) -> MvnEstimate:
    """
    Multivariate normal CDF at a common upper limit.

    Separation of variables on a reordered Cholesky factor, integrated with
    scrambled Sobol points (antithetic pairs). Each randomization replicate
    uses its own scramble drawn from a stream spawned off rng_seed.

    Returns:
        MvnEstimate(value in [0, 1], standard error across replicates)

    Raises:
        FactorizationError: If the covariance is not factorizable after PSD repair
    """
    n = problem.order
    limits = problem.upper_limit - problem.mean
    cov = 0.5 * (problem.covariance + problem.covariance.T)

    if n == 1:
        sd = math.sqrt(max(cov[0, 0], 0.0))
        if sd == 0.0:
            return MvnEstimate(1.0 if limits[0] >= 0 else 0.0, 0.0)
        return MvnEstimate(float(special.ndtr(limits[0] / sd)), 0.0)

    tol = psd_tolerance(cov)
    repaired, lowest = repair_psd(cov)
    if lowest < -tol:
        logger.warning(
            "MVN covariance repaired: most negative eigenvalue %.3e (order %d)", lowest, n
        )
    try:
        lower, limits = _ordered_cholesky(repaired, limits)
    except (linalg.LinAlgError, FloatingPointError) as e:
        raise FactorizationError(f"Covariance of order {n} could not be factorized: {e}") from e
    if not np.all(np.isfinite(lower)):
        raise FactorizationError(f"Covariance of order {n} produced a non-finite factor")

    m = max(0, math.ceil(math.log2(problem.sample_budget)))
    streams = np.random.SeedSequence(problem.rng_seed).spawn(problem.replicates)
    estimates = np.empty(problem.replicates)
    for r, stream in enumerate(streams):
        sampler = qmc.Sobol(d=n - 1, scramble=True, seed=np.random.default_rng(stream))
        points = sampler.random_base2(m)
        values = _sequential_conditioning(lower, limits, points)
        mirrored = _sequential_conditioning(lower, limits, 1.0 - points)
        estimates[r] = 0.5 * (values.mean() + mirrored.mean())

    value = float(np.clip(estimates.mean(), 0.0, 1.0))
    error = float(estimates.std(ddof=1) / math.sqrt(problem.replicates))
    return MvnEstimate(value, error)
