"""
Sweep orchestration and block-fit reports.

run_sweep evaluates every selected estimator at every sweep point and
returns rows sorted by estimator, then sweep point. Rows are derived,
regenerable results; nothing here writes files.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from fasris.config import ExperimentConfig, SystemConfig
from fasris.corr import (
    BlockSpec,
    PortGeometry,
    build_sigma,
    eigen_spectrum,
    exhaustive_block_sizes,
)
from fasris.moments import eta_coefficients
from fasris.outage import (
    ESTIMATOR_ORDER,
    Estimator,
    EstimatorSettings,
    link_threshold,
    outage_clt,
    outage_clt_bc,
    outage_clt_iid,
    resolve_block_spec,
)
from fasris.sim import SimPlan, empirical_outage

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_SKIPPED_DIMENSION = "skipped: dimension"

# Exhaustive block search is only reported for small N
EXHAUSTIVE_MAX_PORTS = 12

_ANALYTIC = {
    Estimator.CLT: outage_clt,
    Estimator.CLT_BC: outage_clt_bc,
    Estimator.CLT_IID: outage_clt_iid,
}


@dataclass(frozen=True)
class ResultRow:
    """One (estimator, sweep point) result."""
    estimator: str
    M: int
    N: int
    W: float
    R: float
    P_S: float
    sigma2: float
    threshold: float
    probability: float
    error_estimate: float
    wall_time_ms: float
    seed: int
    status: str = STATUS_OK

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _row(
    estimator: Estimator,
    system: SystemConfig,
    seed: int,
    probability: float,
    error_estimate: float,
    wall_time_ms: float,
    status: str = STATUS_OK,
) -> ResultRow:
    return ResultRow(
        estimator=estimator.value,
        M=system.budget.num_elements,
        N=system.geometry.num_ports,
        W=float(system.geometry.normalized_size),
        R=float(system.radio.target_rate),
        P_S=float(system.radio.transmit_power),
        sigma2=float(system.radio.noise_power),
        threshold=float(link_threshold(system.radio, system.budget)),
        probability=float(probability),
        error_estimate=float(error_estimate),
        wall_time_ms=float(wall_time_ms),
        seed=seed,
        status=status,
    )


def evaluate_point(
    config: ExperimentConfig,
    system: SystemConfig,
    estimator: Estimator,
    record_timing: bool = True,
) -> ResultRow:
    """
    One estimator at one operating point.

    Monte Carlo reports half the width of its 95% interval as error_estimate.
    CLT rows above the MVN dimension cap carry NaN and a skip status.
    """
    seed = config.simulation.seed
    n = system.geometry.num_ports

    if estimator is Estimator.CLT and n > config.mvn_dimension_cap:
        logger.info("Skipping CLT at N=%d (dimension cap %d)", n, config.mvn_dimension_cap)
        return _row(estimator, system, seed, math.nan, math.nan, 0.0, STATUS_SKIPPED_DIMENSION)

    if estimator is Estimator.MONTE_CARLO:
        started = time.perf_counter()
        plan = SimPlan(
            config=system,
            num_trials=config.simulation.trials,
            seed=seed,
            chunk_size=config.simulation.chunk_size,
            workers=config.simulation.workers,
        )
        estimate = empirical_outage(plan)
        elapsed = time.perf_counter() - started
        half_width = 0.5 * (estimate.ci_high - estimate.ci_low)
        return _row(
            estimator, system, seed, estimate.outage_probability, half_width,
            1000.0 * elapsed if record_timing else 0.0,
        )

    result = _ANALYTIC[estimator](system.geometry, system.budget, system.radio, config.settings)
    return _row(
        estimator, system, seed, result.probability, result.error_estimate,
        1000.0 * result.wall_time if record_timing else 0.0,
    )


def run_sweep(config: ExperimentConfig, record_timing: bool = True) -> List[ResultRow]:
    """
    Rows for every selected estimator at every sweep point.

    Monte Carlo uses the same base seed at every sweep point.

    Args:
        config: Validated experiment
        record_timing: False writes wall_time_ms as 0 so reruns are byte-identical

    Returns:
        Rows ordered by estimator, then sweep point
    """
    keyed: List[Tuple[Tuple[int, int], ResultRow]] = []
    for point_idx, value in enumerate(config.sweep.points()):
        system = config.system.at(config.sweep.kind, value)
        for estimator in config.estimators:
            row = evaluate_point(config, system, estimator, record_timing)
            logger.debug(
                "%s N=%d W=%g M=%d -> %.6e", row.estimator, row.N, row.W, row.M, row.probability
            )
            keyed.append(((ESTIMATOR_ORDER[estimator], point_idx), row))
    keyed.sort(key=lambda item: item[0])
    return [row for _, row in keyed]


# ================================================================
# BLOCK-FIT REPORT
# ================================================================

@dataclass(frozen=True)
class BlockFitReport:
    geometry: PortGeometry
    top_eigenvalues: Tuple[float, ...]
    total_mass: float
    spec: BlockSpec
    mu_mode: str
    rho0: float
    rho1: float
    exhaustive_distance: Optional[float] = None

    def lines(self) -> List[str]:
        eigs = ", ".join(f"{value:.6f}" for value in self.top_eigenvalues)
        lines = [
            f"N: {self.geometry.num_ports}",
            f"W: {self.geometry.normalized_size:g}",
            f"Top eigenvalues: {eigs}",
            f"Total eigenvalue mass: {self.total_mass:.6f}",
            f"mu: {self.spec.intra_block_mu:.6f} ({self.mu_mode})   lambda_th: {self.spec.eigen_threshold:g}",
            f"D: {self.spec.num_blocks}",
            f"Block sizes: {list(self.spec.block_sizes)}",
            f"rho0: {self.rho0:.6f}",
            f"rho1: {self.rho1:.6f}",
            f"Eigenvalue distance: {self.spec.distance:.6e}",
        ]
        if self.exhaustive_distance is not None:
            lines.append(f"Exhaustive-search distance: {self.exhaustive_distance:.6e}")
        return lines

    def format(self) -> str:
        return "\n".join(self.lines())


def show_blockfit(
    geometry: PortGeometry,
    settings: EstimatorSettings = EstimatorSettings(),
    top: int = 10,
) -> BlockFitReport:
    """Fit the block model for one geometry and collect what the report prints."""
    spectrum = eigen_spectrum(build_sigma(geometry))
    spec = resolve_block_spec(geometry, settings)
    coeffs = eta_coefficients(spec.intra_block_mu)
    exhaustive = None
    if geometry.num_ports <= EXHAUSTIVE_MAX_PORTS:
        _, exhaustive = exhaustive_block_sizes(spectrum, spec.num_blocks, spec.intra_block_mu)
    return BlockFitReport(
        geometry=geometry,
        top_eigenvalues=tuple(float(v) for v in np.asarray(spectrum.values[:top])),
        total_mass=spectrum.total_mass,
        spec=spec,
        mu_mode=settings.mu_mode if settings.block_sizes is None else "fixed",
        rho0=coeffs.rho0,
        rho1=coeffs.rho1,
        exhaustive_distance=exhaustive,
    )
