"""
Outage probability estimators.

All three analytical estimators approximate the port gains by a Gaussian
vector with mean E_gamma, variance V_gamma and a correlation matrix:

- CLT:     full matrix Omega = eta(Sigma); N-dimensional normal CDF.
- CLT-BC:  block matrix Omega-hat; one outer quadrature over the shared
           component w wrapping one inner quadrature per distinct block size.
- CLT-IID: D independent blocks that share only the common component;
           a single quadrature.
"""
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special

from fasris.corr import (
    DEFAULT_EIGEN_THRESHOLD,
    DEFAULT_MASS_FRACTION,
    DEFAULT_MU,
    DEFAULT_MU_MODE,
    MU_MODES,
    BlockSpec,
    PortGeometry,
    build_sigma,
    eigen_spectrum,
    fit_block_sizes,
    matched_intra_block_mu,
    select_block_count,
    select_block_count_by_mass,
)
from fasris.moments import (
    EtaCoefficients,
    GammaMoments,
    LinkBudget,
    build_omega,
    eta_coefficients,
    gamma_moments,
)
from fasris.quad import (
    DEFAULT_CHEBYSHEV_NODES,
    DEFAULT_MVN_BUDGET,
    DEFAULT_MVN_REPLICATES,
    ChebyshevRule,
    MvnProblem,
    TruncationWindow,
    chebyshev_rule,
    erf,
    mvn_cdf,
)

logger = logging.getLogger(__name__)

THRESHOLD_MODES = ("rate", "mean")
TRUNCATION_MODES = ("adaptive", "fixed")
BLOCK_COUNT_MODES = ("threshold", "mass")


class DegenerateBlockModelError(ValueError):
    """Raised when rho1 <= rho0, which leaves the block decomposition without a shared-block variance."""
    pass


class Estimator(str, Enum):
    """Estimator identifiers as they appear in result files."""
    CLT = "CLT"
    CLT_BC = "CLT-BC"
    CLT_IID = "CLT-IID"
    MONTE_CARLO = "MC"


ESTIMATOR_ORDER = {estimator: idx for idx, estimator in enumerate(Estimator)}


@dataclass(frozen=True)
class RadioParams:
    """
    Transmit power P_S (W), noise power (W) and target rate R (bit/s/Hz).

    threshold_mode "rate" derives the threshold from R; "mean" sets it to
    threshold_scale x E_gamma.
    """
    transmit_power: float
    noise_power: float
    target_rate: float
    threshold_mode: str = "rate"
    threshold_scale: float = 1.0

    def __post_init__(self):
        for name in ("transmit_power", "noise_power", "target_rate", "threshold_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}, got {self.threshold_mode!r}")


@dataclass(frozen=True)
class TruncationPolicy:
    """
    How each integration variable is truncated.

    "adaptive": centred at the variable's mean, num_std standard deviations wide.
    "fixed":    symmetric [-half_width, half_width] around zero for every variable.
    """
    mode: str = "adaptive"
    num_std: float = 10.0
    half_width: Optional[float] = None

    def __post_init__(self):
        if self.mode not in TRUNCATION_MODES:
            raise ValueError(f"truncation mode must be one of {TRUNCATION_MODES}, got {self.mode!r}")
        if self.mode == "fixed" and not (self.half_width is not None and self.half_width > 0):
            raise ValueError("fixed truncation needs a positive half_width")
        if not self.num_std > 0:
            raise ValueError(f"num_std must be > 0, got {self.num_std}")

    def window(self, mean: float, std: float) -> TruncationWindow:
        if self.mode == "fixed":
            return TruncationWindow(half_width=self.half_width, center=0.0)
        return TruncationWindow(half_width=self.num_std * std, center=mean)


@dataclass(frozen=True)
class EstimatorSettings:
    """
    Numerical settings shared by the analytical estimators.

    mu_mode "matched" derives the intra-block correlation from the fitted
    eigenvalue mass and uses mu only when every port is its own block;
    "fixed" uses mu as given.
    """
    chebyshev_nodes: int = DEFAULT_CHEBYSHEV_NODES
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    mvn_budget: int = DEFAULT_MVN_BUDGET
    mvn_replicates: int = DEFAULT_MVN_REPLICATES
    seed: int = 1
    mu: float = DEFAULT_MU
    mu_mode: str = DEFAULT_MU_MODE
    eigen_threshold: float = DEFAULT_EIGEN_THRESHOLD
    block_count_mode: str = "threshold"
    mass_fraction: float = DEFAULT_MASS_FRACTION
    block_sizes: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.chebyshev_nodes < 1:
            raise ValueError(f"chebyshev_nodes must be >= 1, got {self.chebyshev_nodes}")
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must lie strictly inside (0, 1), got {self.mu}")
        if self.mu_mode not in MU_MODES:
            raise ValueError(f"mu_mode must be one of {MU_MODES}, got {self.mu_mode!r}")
        if self.block_count_mode not in BLOCK_COUNT_MODES:
            raise ValueError(
                f"block_count_mode must be one of {BLOCK_COUNT_MODES}, got {self.block_count_mode!r}"
            )
        if self.block_sizes is not None:
            object.__setattr__(self, "block_sizes", tuple(int(size) for size in self.block_sizes))


@dataclass(frozen=True)
class OutageResult:
    """
    One estimate of the outage probability.

    probability is clamped to [0, 1]; raw_probability keeps the unclamped
    value and clamped records whether clamping changed it. wall_time is in
    seconds.
    """
    estimator: Estimator
    probability: float
    error_estimate: float
    wall_time: float
    raw_probability: float
    clamped: bool = False
    block_spec: Optional[BlockSpec] = None


# ================================================================
# THRESHOLD
# ================================================================

def outage_threshold(params: RadioParams) -> float:
    """Lambda_th = sqrt((2^R - 1) sigma^2 / P_S)."""
    return math.sqrt((2.0**params.target_rate - 1.0) * params.noise_power / params.transmit_power)


def link_threshold(params: RadioParams, budget: LinkBudget) -> float:
    """Threshold for the configured mode (rate-derived or scaled to E_gamma)."""
    if params.threshold_mode == "mean":
        return params.threshold_scale * gamma_moments(budget).mean
    return outage_threshold(params)


def _finish(
    estimator: Estimator,
    raw: float,
    error: float,
    started: float,
    block_spec: Optional[BlockSpec] = None,
) -> OutageResult:
    probability = min(max(raw, 0.0), 1.0)
    clamped = probability != raw
    if clamped:
        logger.info("%s probability clamped from %.6e to %.6e", estimator.value, raw, probability)
    return OutageResult(
        estimator=estimator,
        probability=probability,
        error_estimate=abs(error),
        wall_time=time.perf_counter() - started,
        raw_probability=raw,
        clamped=clamped,
        block_spec=block_spec,
    )


# ================================================================
# CLT (full multivariate normal)
# ================================================================

def outage_clt(
    geometry: PortGeometry,
    budget: LinkBudget,
    params: RadioParams,
    settings: EstimatorSettings = EstimatorSettings(),
) -> OutageResult:
    """
    P(max_k gamma_k <= Lambda_th) under the full Gaussian surrogate
    N(E_gamma 1, V_gamma Omega).
    """
    started = time.perf_counter()
    moments = gamma_moments(budget)
    y = link_threshold(params, budget)
    omega = build_omega(build_sigma(geometry))
    problem = MvnProblem(
        upper_limit=y,
        mean=np.full(geometry.num_ports, moments.mean),
        covariance=moments.variance * omega.entries,
        rng_seed=settings.seed,
        sample_budget=settings.mvn_budget,
        replicates=settings.mvn_replicates,
    )
    estimate = mvn_cdf(problem)
    return _finish(Estimator.CLT, estimate.value, estimate.error_estimate, started)


# ================================================================
# CLT-BC (block correlation)
# ================================================================

def block_conditional_cdf(y, x_d, x_0, moments: GammaMoments, rho0: float, rho1: float):
    """
    CDF of one port in block d given the block component x_d and the
    centred shared component x_0:

        0.5 [1 + erf((y - x_d - x_0 - E_gamma) / sqrt(2 V_gamma (1 - rho1)))]

    Broadcasts over array arguments.
    """
    if not rho0 <= rho1 < 1.0:
        raise ValueError(f"Need rho0 <= rho1 < 1, got rho0={rho0}, rho1={rho1}")
    scale = math.sqrt(2.0 * moments.variance * (1.0 - rho1))
    return 0.5 * (1.0 + erf((y - x_d - x_0 - moments.mean) / scale))


def _gaussian_nodes(mean: float, std: float, rule: ChebyshevRule, truncation: TruncationPolicy):
    """Abscissae and density-weighted quadrature weights for N(mean, std^2)."""
    window = truncation.window(mean, std)
    x = window.nodes(rule)
    weights = window.weights(rule) * np.exp(-0.5 * ((x - mean) / std) ** 2) / (std * math.sqrt(2.0 * math.pi))
    return x, weights


def _block_maximum_nodes(
    size: int,
    moments: GammaMoments,
    rho0: float,
    rho1: float,
    rule: ChebyshevRule,
    truncation: TruncationPolicy,
):
    """
    Abscissae and density-weighted weights for the largest port residual of a block.

    Residuals are i.i.d. N(0, V (1 - rho1)); the maximum of `size` of them
    has density size * phi * F^(size - 1), with F the port CDF at zero block
    and shared components.
    """
    std = math.sqrt(moments.variance * (1.0 - rho1))
    m, weights = _gaussian_nodes(0.0, std, rule, truncation)
    port_cdf = block_conditional_cdf(moments.mean + m, 0.0, 0.0, moments, rho0, rho1)
    return m, size * weights * np.power(port_cdf, size - 1)


def block_correlation_cdf(
    y: float,
    moments: GammaMoments,
    coeffs: EtaCoefficients,
    block_sizes: Sequence[int],
    rule: ChebyshevRule,
    truncation: TruncationPolicy = TruncationPolicy(),
) -> float:
    """
    E_w[ prod_d E_{r_d}[ F(y | r_d, w)^{L_d} ] ] by nested Gauss-Chebyshev rules.

    w ~ N(E_gamma, V rho0) is shared by all ports, r_d ~ N(0, V (rho1 - rho0))
    by the ports of block d. Blocks of equal size share one inner integral.

    The inner integral runs over whichever variable has the wider law. When
    the port residuals are narrower than r_d (rho1 close to 1) it is taken
    over the block maximum m instead, E_m[ Phi((y - w - m) / sd(r_d)) ],
    which equals the r_d form but stays smooth on the node grid.

    Raises:
        DegenerateBlockModelError: If rho1 <= rho0
    """
    rho0, rho1 = coeffs.rho0, coeffs.rho1
    if not rho1 > rho0:
        raise DegenerateBlockModelError(f"Block model needs rho1 > rho0, got rho0={rho0}, rho1={rho1}")
    v = moments.variance
    w, w_weights = _gaussian_nodes(moments.mean, math.sqrt(v * rho0), rule, truncation)
    shared = (w - moments.mean)[:, None]
    block_std = math.sqrt(v * (rho1 - rho0))
    residual_std = math.sqrt(v * (1.0 - rho1))

    # rows: shared component w_l, columns: inner variable
    per_size = {}
    if residual_std <= block_std:
        for size in set(block_sizes):
            m, m_weights = _block_maximum_nodes(size, moments, rho0, rho1, rule, truncation)
            per_size[size] = special.ndtr((y - moments.mean - shared - m[None, :]) / block_std) @ m_weights
    else:
        r, r_weights = _gaussian_nodes(0.0, block_std, rule, truncation)
        conditional = block_conditional_cdf(y, r[None, :], shared, moments, rho0, rho1)
        for size in set(block_sizes):
            per_size[size] = np.power(conditional, size) @ r_weights

    product = np.ones(w.size)
    for size, count in sorted(Counter(block_sizes).items()):
        product *= np.power(per_size[size], count)
    return float(w_weights @ product)


def resolve_block_spec(geometry: PortGeometry, settings: EstimatorSettings) -> BlockSpec:
    """
    Block structure used by CLT-BC and CLT-IID.

    Explicit settings.block_sizes win and keep settings.mu; otherwise D is
    selected from the eigen-spectrum of Sigma (threshold or mass mode), mu
    is either settings.mu ("fixed") or the mass-preserving value
    ("matched"), and sizes are fitted with that mu.
    """
    if settings.block_sizes is not None:
        spec = BlockSpec(settings.block_sizes, settings.mu, settings.eigen_threshold)
        if spec.num_ports != geometry.num_ports:
            raise ValueError(
                f"block_sizes sum to {spec.num_ports} but geometry has {geometry.num_ports} ports"
            )
        return spec
    spectrum = eigen_spectrum(build_sigma(geometry))
    if settings.block_count_mode == "mass":
        num_blocks = select_block_count_by_mass(spectrum, settings.mass_fraction)
    else:
        num_blocks = select_block_count(spectrum, settings.eigen_threshold)
    mu = settings.mu
    if settings.mu_mode == "matched":
        mu = matched_intra_block_mu(spectrum, num_blocks, fallback=settings.mu)
        logger.debug("Matched intra-block mu %.6f for D=%d, N=%d", mu, num_blocks, geometry.num_ports)
    return fit_block_sizes(spectrum, num_blocks, mu, geometry.num_ports, settings.eigen_threshold)


def outage_clt_bc(
    geometry: PortGeometry,
    budget: LinkBudget,
    params: RadioParams,
    settings: EstimatorSettings = EstimatorSettings(),
) -> OutageResult:
    """
    Outage probability under the block-correlation model.

    error_estimate is |Q(U) - Q(ceil(U/2))|.
    """
    started = time.perf_counter()
    spec = resolve_block_spec(geometry, settings)
    moments = gamma_moments(budget)
    coeffs = eta_coefficients(spec.intra_block_mu)
    y = link_threshold(params, budget)
    rule = chebyshev_rule(settings.chebyshev_nodes)
    coarse = chebyshev_rule(max(1, math.ceil(settings.chebyshev_nodes / 2)))

    raw = block_correlation_cdf(y, moments, coeffs, spec.block_sizes, rule, settings.truncation)
    rough = block_correlation_cdf(y, moments, coeffs, spec.block_sizes, coarse, settings.truncation)
    return _finish(Estimator.CLT_BC, raw, raw - rough, started, spec)


# ================================================================
# CLT-IID (independent blocks)
# ================================================================

def iid_block_cdf(
    y: float,
    moments: GammaMoments,
    rho0: float,
    num_blocks: int,
    rule: ChebyshevRule,
    truncation: TruncationPolicy = TruncationPolicy(),
) -> float:
    """
    E_{b0}[ F(y | b0)^D ] with b0 ~ N(0, V_gamma) and

        F(y | b0) = 0.5 [1 + erf((y - E_gamma - sqrt(rho0) b0) / sqrt(2 V_gamma (1 - rho0)))]
    """
    if not 0.0 <= rho0 < 1.0:
        raise ValueError(f"rho0 must lie in [0, 1), got {rho0}")
    if num_blocks < 1:
        raise ValueError(f"num_blocks must be >= 1, got {num_blocks}")
    v = moments.variance
    b0, weights = _gaussian_nodes(0.0, math.sqrt(v), rule, truncation)
    scale = math.sqrt(2.0 * v * (1.0 - rho0))
    conditional = 0.5 * (1.0 + erf((y - moments.mean - math.sqrt(rho0) * b0) / scale))
    return float(weights @ np.power(conditional, num_blocks))


def outage_clt_iid(
    geometry: PortGeometry,
    budget: LinkBudget,
    params: RadioParams,
    settings: EstimatorSettings = EstimatorSettings(),
) -> OutageResult:
    """
    Outage probability with the D fitted blocks treated as i.i.d. channels
    that share only the common BS-RIS component.

    error_estimate is |Q(U) - Q(ceil(U/2))|.
    """
    started = time.perf_counter()
    spec = resolve_block_spec(geometry, settings)
    moments = gamma_moments(budget)
    rho0 = eta_coefficients(spec.intra_block_mu).rho0
    y = link_threshold(params, budget)
    rule = chebyshev_rule(settings.chebyshev_nodes)
    coarse = chebyshev_rule(max(1, math.ceil(settings.chebyshev_nodes / 2)))

    raw = iid_block_cdf(y, moments, rho0, spec.num_blocks, rule, settings.truncation)
    rough = iid_block_cdf(y, moments, rho0, spec.num_blocks, coarse, settings.truncation)
    return _finish(Estimator.CLT_IID, raw, raw - rough, started, spec)
