"""
Monte Carlo simulation of the RIS-aided FAS link.

Per trial: h_m ~ CN(0, eps1) for m = 1..M, port vectors v_m ~ CN(0, eps2 Sigma),
gamma_k = sum_m |h_m| |v_{m,k}|, outage when max_k gamma_k <= Lambda_th.
Noise is never sampled; comparing gamma* with the threshold is exact.

Trials are grouped in fixed stream blocks of STREAM_BLOCK trials. Block b
draws from SeedSequence(seed, spawn_key=(b,)) and per-block results are
reduced in block order, so a seed gives bit-identical output for any chunk
size and any number of workers.
"""
import logging
import math
from dataclasses import dataclass
from multiprocessing import Pool
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import special

from fasris.config import SystemConfig
from fasris.corr import build_sigma
from fasris.outage import link_threshold
from fasris.quad import psd_sqrt

logger = logging.getLogger(__name__)

STREAM_BLOCK = 256
NORMAL_CI_MIN_COUNT = 30
Z_95 = float(special.ndtri(0.975))


class EmptySimulationError(ValueError):
    """Raised when a simulation is asked to run zero trials."""
    pass


@dataclass(frozen=True)
class SimPlan:
    """
    A Monte Carlo run.

    threshold overrides the threshold derived from config.radio.
    chunk_size is rounded up to a whole number of stream blocks.
    """
    config: SystemConfig
    num_trials: int
    seed: int
    chunk_size: int = 65536
    workers: int = 1
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.num_trials < 0:
            raise ValueError(f"num_trials must be >= 0, got {self.num_trials}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.threshold is not None and self.threshold < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")

    def resolved_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return link_threshold(self.config.radio, self.config.budget)


@dataclass(frozen=True)
class SimEstimate:
    """Empirical outage probability with a 95% interval and pooled gamma_k moments."""
    outage_probability: float
    ci_low: float
    ci_high: float
    trials: int
    outages: int
    mean_gamma: float
    var_gamma: float
    threshold: float


class CrossMomentEstimate(NamedTuple):
    value: float
    standard_error: float


class _BlockStats(NamedTuple):
    """Per-stream-block partial results."""
    outages: int
    count: int
    mean: float
    m2: float


# ================================================================
# SAMPLING
# ================================================================

def port_factor(config: SystemConfig) -> np.ndarray:
    """F with F @ F.T == Sigma for the configured geometry."""
    return psd_sqrt(build_sigma(config.geometry).entries)


def sample_port_gains(
    rng: np.random.Generator,
    config: SystemConfig,
    factor: Optional[np.ndarray] = None,
    size: Optional[int] = None,
) -> np.ndarray:
    """
    Draw gamma_1..gamma_N.

    Returns shape (N,) when size is None, otherwise (size, N). The port
    factor is shared across all M element draws; pass it in to avoid
    refactoring Sigma on every call.
    """
    factor = port_factor(config) if factor is None else factor
    trials = 1 if size is None else size
    m = config.budget.num_elements
    n = config.geometry.num_ports

    h_abs = rng.rayleigh(scale=math.sqrt(config.budget.gain_bs_ris / 2.0), size=(trials, m))
    # port-major layout: the draws for port k do not depend on N
    z = rng.standard_normal((n, 2, trials, m))
    white = z[:, 0] + 1j * z[:, 1]
    v = math.sqrt(config.budget.gain_ris_user / 2.0) * np.einsum("kj,jtm->tmk", factor, white)
    gains = np.einsum("tm,tmk->tk", h_abs, np.abs(v))
    return gains[0] if size is None else gains


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _block_sizes(num_trials: int) -> List[int]:
    full, rest = divmod(num_trials, STREAM_BLOCK)
    return [STREAM_BLOCK] * full + ([rest] if rest else [])


def _run_blocks(args: Tuple[SystemConfig, np.ndarray, int, float, int, List[int]]) -> List[_BlockStats]:
    """Worker: simulate consecutive stream blocks starting at first_block."""
    config, factor, seed, threshold, first_block, sizes = args
    stats = []
    for offset, size in enumerate(sizes):
        rng = _block_rng(seed, first_block + offset)
        gains = sample_port_gains(rng, config, factor, size)
        outages = int(np.count_nonzero(gains.max(axis=1) <= threshold))
        mean = float(gains.mean())
        stats.append(_BlockStats(outages, gains.size, mean, float(np.sum((gains - mean) ** 2))))
    return stats


def _combine(stats: List[_BlockStats]) -> Tuple[int, float, float]:
    """Pairwise-update pooling of block moments in block order: (outages, mean, variance)."""
    outages, count, mean, m2 = 0, 0, 0.0, 0.0
    for block in stats:
        total = count + block.count
        delta = block.mean - mean
        mean += delta * block.count / total
        m2 += block.m2 + delta * delta * count * block.count / total
        count = total
        outages += block.outages
    variance = m2 / (count - 1) if count > 1 else 0.0
    return outages, mean, variance


# ================================================================
# CONFIDENCE INTERVALS
# ================================================================

def wilson_interval(successes: int, trials: int, z: float = Z_95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise EmptySimulationError("Wilson interval needs at least one trial")
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def outage_interval(successes: int, trials: int) -> Tuple[float, float]:
    """Normal-approximation 95% interval, Wilson when either count is below 30."""
    if min(successes, trials - successes) < NORMAL_CI_MIN_COUNT:
        return wilson_interval(successes, trials)
    p = successes / trials
    half = Z_95 * math.sqrt(p * (1.0 - p) / trials)
    return max(0.0, p - half), min(1.0, p + half)


# ================================================================
# ESTIMATES
# ================================================================

def _simulate(plan: SimPlan, threshold: float) -> List[_BlockStats]:
    factor = port_factor(plan.config)
    sizes = _block_sizes(plan.num_trials)
    per_chunk = max(1, math.ceil(plan.chunk_size / STREAM_BLOCK))
    tasks = [
        (plan.config, factor, plan.seed, threshold, start, sizes[start:start + per_chunk])
        for start in range(0, len(sizes), per_chunk)
    ]
    if plan.workers > 1 and len(tasks) > 1:
        with Pool(processes=min(plan.workers, len(tasks))) as pool:
            results = pool.map(_run_blocks, tasks)
    else:
        results = []
        for idx, task in enumerate(tasks):
            results.append(_run_blocks(task))
            logger.debug("Simulated chunk %d/%d", idx + 1, len(tasks))
    return [block for chunk in results for block in chunk]


def empirical_outage(plan: SimPlan) -> SimEstimate:
    """
    Fraction of trials with max_k gamma_k <= threshold.

    Raises:
        EmptySimulationError: If plan.num_trials is zero
    """
    if plan.num_trials == 0:
        raise EmptySimulationError("Simulation needs at least one trial")
    threshold = plan.resolved_threshold()
    outages, mean, variance = _combine(_simulate(plan, threshold))
    p = outages / plan.num_trials
    low, high = outage_interval(outages, plan.num_trials)
    return SimEstimate(
        outage_probability=p,
        ci_low=min(low, p),
        ci_high=max(high, p),
        trials=plan.num_trials,
        outages=outages,
        mean_gamma=mean,
        var_gamma=variance,
        threshold=threshold,
    )


def simulate_gains(plan: SimPlan) -> np.ndarray:
    """All simulated gamma vectors, shape (num_trials, N), in stream-block order."""
    if plan.num_trials == 0:
        raise EmptySimulationError("Simulation needs at least one trial")
    factor = port_factor(plan.config)
    blocks = [
        sample_port_gains(_block_rng(plan.seed, b), plan.config, factor, size)
        for b, size in enumerate(_block_sizes(plan.num_trials))
    ]
    return np.concatenate(blocks, axis=0)


def empirical_port_correlation(plan: SimPlan) -> np.ndarray:
    """Pearson correlation matrix of simulated gamma_1..gamma_N."""
    gains = simulate_gains(plan)
    if gains.shape[1] == 1:
        return np.ones((1, 1))
    return np.corrcoef(gains, rowvar=False)


def empirical_cross_moment(g: float, trials: int, seed: int, gain: float = 1.0) -> CrossMomentEstimate:
    """
    Sample mean of |v_k| |v_l| for CN(0, gain) pairs with correlation g.

    Raises:
        ValueError: If |g| > 1
        EmptySimulationError: If trials is zero
    """
    if abs(g) > 1.0:
        raise ValueError(f"Correlation g must lie in [-1, 1], got {g}")
    if trials < 1:
        raise EmptySimulationError("Cross-moment estimate needs at least one trial")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    z = rng.standard_normal((4, trials))
    scale = math.sqrt(gain / 2.0)
    first = scale * (z[0] + 1j * z[1])
    independent = scale * (z[2] + 1j * z[3])
    second = g * first + math.sqrt(max(0.0, 1.0 - g * g)) * independent
    products = np.abs(first) * np.abs(second)
    error = float(products.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return CrossMomentEstimate(float(products.mean()), error)
