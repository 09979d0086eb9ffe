"""
Spatial port correlation of the fluid antenna and its block approximation.

Ports are spread uniformly over an aperture of W wavelengths; the
correlation between ports k and l follows the 3D Clarke model
sinc(2 pi (k - l) W / (N - 1)). The resulting Toeplitz matrix Sigma is
approximated by a block-diagonal matrix of equicorrelated blocks whose
count and sizes are fitted to the principal eigenvalues of Sigma.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from fasris.quad import NotPositiveSemidefiniteError, psd_tolerance, repair_psd

logger = logging.getLogger(__name__)

DEFAULT_MU = 0.9
DEFAULT_EIGEN_THRESHOLD = 0.1
DEFAULT_MASS_FRACTION = 0.95
SPECTRUM_MASS_RTOL = 1e-8
MU_MODES = ("fixed", "matched")
DEFAULT_MU_MODE = "matched"
MATCHED_MU_FLOOR = 1e-6
MATCHED_MU_CEILING = 1.0 - 1e-6


class EigenSolverError(ValueError):
    """Raised when the symmetric eigensolver does not converge."""
    pass


class BlockFitError(ValueError):
    """Raised when a block structure cannot be fitted (e.g. more blocks than ports)."""
    pass


# ================================================================
# TYPES
# ================================================================

@dataclass(frozen=True)
class PortGeometry:
    """N ports on a linear aperture of W carrier wavelengths."""
    num_ports: int
    normalized_size: float

    def __post_init__(self):
        if int(self.num_ports) != self.num_ports or self.num_ports < 1:
            raise ValueError(f"num_ports must be a positive integer, got {self.num_ports}")
        if not self.normalized_size > 0:
            raise ValueError(f"normalized_size must be > 0, got {self.normalized_size}")


@dataclass(frozen=True)
class CorrelationMatrix:
    """
    Dense symmetric correlation matrix with unit diagonal.

    Used for the port correlation Sigma as well as the combined-channel
    correlations Omega and Omega-hat.
    """
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] < 1:
            raise ValueError(f"Correlation matrix must be square and non-empty, got {entries.shape}")
        if not np.array_equal(entries, entries.T):
            raise ValueError("Correlation matrix must be exactly symmetric")
        if not np.all(np.diag(entries) == 1.0):
            raise ValueError("Correlation matrix must have a unit diagonal")
        if np.any(np.abs(entries) > 1.0):
            raise ValueError("Correlation matrix entries must lie in [-1, 1]")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    def default_tolerance(self) -> float:
        """PSD tolerance 1e-10 x order."""
        return psd_tolerance(self.entries)

    def check_psd(self, tol: Optional[float] = None, what: str = "correlation matrix") -> float:
        """
        Verify the matrix is PSD up to tol.

        Returns:
            The smallest eigenvalue

        Raises:
            NotPositiveSemidefiniteError: If the smallest eigenvalue is below -tol
        """
        tol = self.default_tolerance() if tol is None else tol
        lowest = float(linalg.eigvalsh(self.entries)[0])
        if lowest < -tol:
            raise NotPositiveSemidefiniteError(lowest, tol, what)
        return lowest


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenvalues sorted in descending order."""
    values: np.ndarray

    def __post_init__(self):
        values = -np.sort(-np.asarray(self.values, dtype=float))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.values))

    @property
    def order(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class BlockSpec:
    """
    Block structure of the approximated correlation matrix.

    D blocks of sizes L_d (sum N), each equicorrelated with constant mu.
    distance is the eigenvalue distance to the matrix the blocks were fitted
    against (NaN for explicitly supplied structures).
    """
    block_sizes: Tuple[int, ...]
    intra_block_mu: float = DEFAULT_MU
    eigen_threshold: float = DEFAULT_EIGEN_THRESHOLD
    distance: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        sizes = tuple(int(size) for size in self.block_sizes)
        if not sizes:
            raise ValueError("BlockSpec needs at least one block")
        if any(size < 1 for size in sizes):
            raise ValueError(f"Block sizes must be positive, got {sizes}")
        if not 0.0 < self.intra_block_mu < 1.0:
            raise ValueError(
                f"intra_block_mu must lie strictly inside (0, 1), got {self.intra_block_mu}"
            )
        if not self.eigen_threshold > 0:
            raise ValueError(f"eigen_threshold must be > 0, got {self.eigen_threshold}")
        object.__setattr__(self, "block_sizes", sizes)

    @property
    def num_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def num_ports(self) -> int:
        return sum(self.block_sizes)

    def block_slices(self) -> Iterator[slice]:
        """Index ranges of consecutive blocks."""
        start = 0
        for size in self.block_sizes:
            yield slice(start, start + size)
            start += size


# ================================================================
# PORT CORRELATION
# ================================================================

def _sinc_pi(x: np.ndarray) -> np.ndarray:
    """sin(pi x) / (pi x), exactly 0 at nonzero integers and exactly 1 at 0."""
    values = np.sinc(x)
    return np.where((x != 0) & (x == np.round(x)), 0.0, values)


def port_correlation(delta: int, geometry: PortGeometry) -> float:
    """
    Correlation between two ports delta positions apart.

    sinc(2 pi delta W / (N - 1)) with sinc(x) = sin(x) / x. A single-port
    aperture has no spacing; its only entry is 1.
    """
    n = geometry.num_ports
    if abs(delta) > n - 1:
        raise ValueError(f"|delta| must be <= N - 1 = {n - 1}, got {delta}")
    if n == 1 or delta == 0:
        return 1.0
    x = 2.0 * delta * geometry.normalized_size / (n - 1)
    return float(_sinc_pi(np.array([x]))[0])


def build_sigma(geometry: PortGeometry, tol: Optional[float] = None) -> CorrelationMatrix:
    """
    Toeplitz port-correlation matrix Sigma.

    Raises:
        NotPositiveSemidefiniteError: If Sigma is indefinite beyond tol
    """
    n = geometry.num_ports
    if n == 1:
        return CorrelationMatrix(np.ones((1, 1)))
    offsets = np.arange(n)
    first_row = _sinc_pi(2.0 * offsets * geometry.normalized_size / (n - 1))
    sigma = CorrelationMatrix(linalg.toeplitz(first_row))
    sigma.check_psd(tol, what=f"Sigma (N={n}, W={geometry.normalized_size})")
    return sigma


def is_toeplitz(matrix: CorrelationMatrix) -> bool:
    """True when every diagonal of the matrix is constant (exact comparison)."""
    entries = matrix.entries
    n = matrix.order
    return all(
        np.all(np.diagonal(entries, offset=k) == entries[0, k]) for k in range(n)
    )


# ================================================================
# EIGEN-SPECTRUM
# ================================================================

def eigen_spectrum(matrix: CorrelationMatrix) -> EigenSpectrum:
    """
    Descending eigenvalues of a symmetric matrix.

    Raises:
        EigenSolverError: If the eigensolver fails or the eigenvalue mass
            drifts from the trace beyond 1e-8 relative
    """
    try:
        values = linalg.eigvalsh(matrix.entries)
    except linalg.LinAlgError as e:
        raise EigenSolverError(
            f"Eigensolver did not converge for order-{matrix.order} matrix: {e}"
        ) from e
    spectrum = EigenSpectrum(values)
    trace = float(np.trace(matrix.entries))
    if abs(spectrum.total_mass - trace) > SPECTRUM_MASS_RTOL * max(abs(trace), 1.0):
        raise EigenSolverError(
            f"Eigenvalue mass {spectrum.total_mass!r} differs from trace {trace!r}"
        )
    return spectrum


def select_block_count(spectrum: EigenSpectrum, eigen_threshold: float = DEFAULT_EIGEN_THRESHOLD) -> int:
    """
    Number of principal eigenvalues (>= eigen_threshold), clamped to [1, N].

    A threshold above the largest eigenvalue yields a single block and a warning.
    """
    if not eigen_threshold > 0:
        raise ValueError(f"eigen_threshold must be > 0, got {eigen_threshold}")
    count = int(np.count_nonzero(spectrum.values >= eigen_threshold))
    if count == 0:
        logger.warning(
            "eigen_threshold %.4g exceeds the largest eigenvalue %.4g; using a single block",
            eigen_threshold, spectrum.values[0],
        )
        return 1
    return min(count, spectrum.order)


def select_block_count_by_mass(spectrum: EigenSpectrum, fraction: float = DEFAULT_MASS_FRACTION) -> int:
    """Smallest D whose top-D eigenvalues carry at least `fraction` of the total mass."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    cumulative = np.cumsum(spectrum.values)
    target = fraction * spectrum.total_mass
    # tolerate rounding in the cumulative sum at fraction == 1
    reached = np.nonzero(cumulative >= target - 1e-12 * spectrum.order)[0]
    count = int(reached[0]) + 1 if reached.size else spectrum.order
    return max(1, min(count, spectrum.order))


# ================================================================
# BLOCK MODEL
# ================================================================

def block_model_spectrum(spec: BlockSpec) -> EigenSpectrum:
    """
    Analytic eigenvalues of the block-diagonal model.

    Each equicorrelated block of size L has one eigenvalue 1 + (L - 1) mu and
    L - 1 eigenvalues 1 - mu.
    """
    mu = spec.intra_block_mu
    leading = [1.0 + (size - 1) * mu for size in spec.block_sizes]
    trailing = [1.0 - mu] * (spec.num_ports - spec.num_blocks)
    return EigenSpectrum(np.array(leading + trailing))


def eigen_distance(a: EigenSpectrum, b: EigenSpectrum) -> float:
    """Sum of squared differences between descending eigenvalue vectors."""
    if a.order != b.order:
        raise ValueError(f"Spectra have different orders: {a.order} vs {b.order}")
    return float(np.sum((a.values - b.values) ** 2))


def _paired_cost(sizes: Sequence[int], targets: np.ndarray, mu: float) -> float:
    """Cost with block d paired to the d-th principal eigenvalue."""
    return float(np.sum((1.0 + (np.asarray(sizes) - 1) * mu - targets) ** 2))


def _sequential_sizes(principal: np.ndarray, num_blocks: int, mu: float, total: int) -> List[int]:
    """Match each principal eigenvalue to 1 + (L - 1) mu, one block at a time."""
    sizes = []
    remaining = total
    for d in range(num_blocks - 1):
        wanted = int(round((principal[d] - 1.0) / mu)) + 1
        size = max(1, min(wanted, remaining - (num_blocks - 1 - d)))
        sizes.append(size)
        remaining -= size
    sizes.append(remaining)
    return sizes


def _refine_sizes(sizes: List[int], targets: np.ndarray, mu: float) -> List[int]:
    """
    Move single ports between blocks while the paired cost decreases.

    The cost is separable and convex in each L_d, so a point where no
    single-port transfer improves it is the global optimum under sum L_d = N.
    """
    sizes = list(sizes)
    cost = _paired_cost(sizes, targets, mu)
    improved = True
    while improved:
        improved = False
        best = (cost, None, None)
        for src, dst in itertools.permutations(range(len(sizes)), 2):
            if sizes[src] <= 1:
                continue
            sizes[src] -= 1
            sizes[dst] += 1
            trial = _paired_cost(sizes, targets, mu)
            sizes[src] += 1
            sizes[dst] -= 1
            if trial < best[0] - 1e-15:
                best = (trial, src, dst)
        if best[1] is not None:
            cost, src, dst = best
            sizes[src] -= 1
            sizes[dst] += 1
            improved = True
    return sizes


def matched_intra_block_mu(spectrum: EigenSpectrum, num_blocks: int, fallback: float = DEFAULT_MU) -> float:
    """
    Intra-block correlation that preserves the principal eigenvalue mass.

    The block model's D leading eigenvalues sum to D + (N - D) mu whatever the
    sizes, so mu = (sum of the top-D eigenvalues - D) / (N - D). The result
    lies in [0, 1] and is clamped into (0, 1); with D == N there are no
    trailing eigenvalues and `fallback` is returned.
    """
    total = spectrum.order
    if not 1 <= num_blocks <= total:
        raise BlockFitError(f"num_blocks must lie in [1, {total}], got {num_blocks}")
    if num_blocks == total:
        return fallback
    mass = float(np.sum(spectrum.values[:num_blocks]))
    mu = (mass - num_blocks) / (total - num_blocks)
    return min(max(mu, MATCHED_MU_FLOOR), MATCHED_MU_CEILING)


def fit_block_sizes(
    spectrum: EigenSpectrum,
    num_blocks: int,
    mu: float = DEFAULT_MU,
    total: Optional[int] = None,
    eigen_threshold: float = DEFAULT_EIGEN_THRESHOLD,
) -> BlockSpec:
    """
    Fit block sizes L_1..L_D (sum N) to the principal eigenvalues.

    Sizes are chosen sequentially so that the d-th block eigenvalue
    1 + (L_d - 1) mu tracks the d-th principal eigenvalue, the last block
    takes the remainder, and a transfer pass then moves single ports between
    blocks while the eigenvalue distance decreases. Sizes are returned in
    descending order.

    Raises:
        BlockFitError: If num_blocks is outside [1, N]
    """
    total = spectrum.order if total is None else total
    if total != spectrum.order:
        raise BlockFitError(f"total {total} does not match spectrum order {spectrum.order}")
    if not 1 <= num_blocks <= total:
        raise BlockFitError(f"num_blocks must lie in [1, {total}], got {num_blocks}")
    if not 0.0 < mu < 1.0:
        raise BlockFitError(f"mu must lie strictly inside (0, 1), got {mu}")

    principal = spectrum.values[:num_blocks]
    sizes = _sequential_sizes(principal, num_blocks, mu, total)
    sizes = _refine_sizes(sizes, principal, mu)
    sizes.sort(reverse=True)

    spec = BlockSpec(tuple(sizes), intra_block_mu=mu, eigen_threshold=eigen_threshold)
    distance = eigen_distance(block_model_spectrum(spec), spectrum)
    logger.debug("Fitted blocks %s (D=%d) with distance %.6e", spec.block_sizes, num_blocks, distance)
    return BlockSpec(spec.block_sizes, mu, eigen_threshold, distance)


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """All ordered tuples of `parts` positive integers summing to `total`."""
    for cuts in itertools.combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))


def exhaustive_block_sizes(
    spectrum: EigenSpectrum,
    num_blocks: int,
    mu: float = DEFAULT_MU,
) -> Tuple[Tuple[int, ...], float]:
    """
    Brute-force minimum of the eigenvalue distance over all compositions of N.

    Intended as an oracle for small N (the number of compositions grows as
    C(N - 1, D - 1)).

    Returns:
        (block sizes of one minimizer, minimal distance)
    """
    if not 1 <= num_blocks <= spectrum.order:
        raise BlockFitError(f"num_blocks must lie in [1, {spectrum.order}], got {num_blocks}")
    best_sizes: Tuple[int, ...] = ()
    best_distance = math.inf
    for sizes in _compositions(spectrum.order, num_blocks):
        model = block_model_spectrum(BlockSpec(sizes, intra_block_mu=mu))
        distance = eigen_distance(model, spectrum)
        if distance < best_distance:
            best_sizes, best_distance = sizes, distance
    return best_sizes, best_distance


def repair_correlation(matrix: np.ndarray, what: str = "correlation matrix") -> CorrelationMatrix:
    """
    Clip negative eigenvalues of a unit-diagonal matrix and restore the diagonal.

    Logs a warning when a repair was needed beyond the PSD tolerance.
    """
    tol = psd_tolerance(matrix)
    repaired, lowest = repair_psd(matrix, unit_diagonal=True)
    if lowest < -tol:
        logger.warning("%s repaired: most negative eigenvalue %.3e", what, lowest)
        return CorrelationMatrix(repaired)
    return CorrelationMatrix(matrix)
