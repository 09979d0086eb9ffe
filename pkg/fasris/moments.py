"""
CLT surrogate moments of the per-port combined channel.

gamma_k = sum_m |h_m| |v_{m,k}| is a sum of M i.i.d. double-Rayleigh terms.
Its mean and variance are closed-form; the correlation between two ports
depends only on the port correlation g through the envelope cross-moment
E(|v_k| |v_l|) = (pi eps2 / 4) 2F1(-1/2, -1/2; 1; g^2).
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from fasris.corr import BlockSpec, CorrelationMatrix, repair_correlation

PI2_OVER_16 = math.pi**2 / 16.0
RHO0 = math.pi / (4.0 + math.pi)


@dataclass(frozen=True)
class LinkBudget:
    """M reflecting elements with average gains eps1 (BS-RIS) and eps2 (RIS-user)."""
    num_elements: int
    gain_bs_ris: float
    gain_ris_user: float

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 1:
            raise ValueError(f"num_elements must be a positive integer, got {self.num_elements}")
        if not self.gain_bs_ris > 0:
            raise ValueError(f"gain_bs_ris must be > 0, got {self.gain_bs_ris}")
        if not self.gain_ris_user > 0:
            raise ValueError(f"gain_ris_user must be > 0, got {self.gain_ris_user}")

    @classmethod
    def from_path_loss(
        cls,
        num_elements: int,
        bs_ris_distance: float,
        ris_user_distance: float,
        exponent: float = 2.0,
    ) -> "LinkBudget":
        """Gains from distances and a common path-loss exponent: eps = d^(-exponent)."""
        return cls(
            num_elements=num_elements,
            gain_bs_ris=bs_ris_distance ** (-exponent),
            gain_ris_user=ris_user_distance ** (-exponent),
        )


@dataclass(frozen=True)
class GammaMoments:
    """Mean E_gamma and variance V_gamma of one port's combined channel."""
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class EtaCoefficients:
    """Inter-block rho0 = eta(0) and intra-block rho1 = eta(mu)."""
    rho0: float
    rho1: float


def gamma_moments(budget: LinkBudget) -> GammaMoments:
    """E_gamma = M pi sqrt(eps1 eps2) / 4,  V_gamma = M eps1 eps2 (1 - pi^2/16)."""
    m = budget.num_elements
    e1, e2 = budget.gain_bs_ris, budget.gain_ris_user
    return GammaMoments(
        mean=m * math.pi * math.sqrt(e1 * e2) / 4.0,
        variance=m * e1 * e2 * (1.0 - PI2_OVER_16),
    )


def mean_snr_db(
    budget: LinkBudget,
    transmit_power: float,
    noise_power: float,
    include_variance: bool = True,
) -> float:
    """
    Average received SNR in dB at one port.

    With include_variance, uses E[gamma^2] = V_gamma + E_gamma^2; otherwise the
    mean-channel power E_gamma^2, which scales exactly as M^2.
    """
    moments = gamma_moments(budget)
    power = moments.mean**2 + (moments.variance if include_variance else 0.0)
    return 10.0 * math.log10(transmit_power * power / noise_power)


def envelope_cross_moment(g, gain: float = 1.0):
    """
    E(|v_k| |v_l|) for complex Gaussians with variance `gain` and correlation g.

    Closed form (pi gain / 4) 2F1(-1/2, -1/2; 1; g^2); even in g. |g| = 1
    returns the endpoint value `gain` exactly. Accepts scalars or arrays.
    """
    g = np.asarray(g, dtype=float)
    if np.any(np.abs(g) > 1.0):
        raise ValueError("Correlation g must lie in [-1, 1]")
    z = g * g
    value = np.where(z >= 1.0, 1.0, 0.25 * np.pi * special.hyp2f1(-0.5, -0.5, 1.0, np.minimum(z, 1.0)))
    value = gain * value
    return float(value) if value.ndim == 0 else value


def _bivariate_rayleigh_pdf(x, y, power_corr: float, gain: float):
    """Joint density of two Rayleigh envelopes with E|v|^2 = gain and power correlation."""
    scale = gain * (1.0 - power_corr)
    arg = 2.0 * math.sqrt(power_corr) * x * y / scale
    # i0e(a) * exp(a) == I0(a); fold exp(a) into the exponent for stability
    return (4.0 * x * y / (gain * scale)) * special.i0e(arg) * np.exp(arg - (x * x + y * y) / scale)


def envelope_cross_moment_quadrature(g: float, gain: float = 1.0) -> float:
    """
    E(|v_k| |v_l|) by 2D numerical integration of the bivariate Rayleigh density.

    Validation path for envelope_cross_moment; restricted to |g| < 1.
    """
    if not abs(g) < 1.0:
        raise ValueError("Quadrature oracle needs |g| < 1")
    power_corr = g * g
    upper = 12.0 * math.sqrt(gain)
    value, _ = integrate.dblquad(
        lambda y, x: x * y * _bivariate_rayleigh_pdf(x, y, power_corr, gain),
        0.0, upper, 0.0, upper,
        epsabs=1e-12, epsrel=1e-10,
    )
    return float(value)


def eta(g):
    """
    Correlation between the combined channels of two ports with port correlation g.

    eta(g) = (c(g) - pi^2/16) / (1 - pi^2/16) with c(g) the unit-gain envelope
    cross-moment. Ranges over [pi/(4+pi), 1]; eta(1) == 1 exactly.
    """
    c = envelope_cross_moment(g, 1.0)
    return (c - PI2_OVER_16) / (1.0 - PI2_OVER_16)


def eta_from_budget(g: float, budget: LinkBudget) -> float:
    """
    Pearson form with the full link budget:
    (M eps1 E(|v_k||v_l|) - E_gamma^2 / M) / V_gamma.
    """
    moments = gamma_moments(budget)
    m = budget.num_elements
    cross = envelope_cross_moment(g, budget.gain_ris_user)
    return (m * budget.gain_bs_ris * cross - moments.mean**2 / m) / moments.variance


def eta_coefficients(mu: float) -> EtaCoefficients:
    """rho0 = eta(0) = pi/(4+pi) and rho1 = eta(mu)."""
    return EtaCoefficients(rho0=float(eta(0.0)), rho1=float(eta(mu)))


def build_omega(sigma: CorrelationMatrix) -> CorrelationMatrix:
    """
    Combined-channel correlation Omega = eta applied entrywise to Sigma.

    The entrywise map need not preserve positive semidefiniteness; an
    indefinite result is repaired (negative eigenvalues clipped) with a warning.
    """
    entries = np.asarray(eta(sigma.entries), dtype=float)
    np.fill_diagonal(entries, 1.0)
    entries = 0.5 * (entries + entries.T)
    return repair_correlation(entries, what=f"Omega (order {sigma.order})")


def build_omega_hat(spec: BlockSpec) -> CorrelationMatrix:
    """
    Block correlation Omega-hat: rho1 inside each block, rho0 between blocks.
    """
    coeffs = eta_coefficients(spec.intra_block_mu)
    n = spec.num_ports
    entries = np.full((n, n), coeffs.rho0)
    for block in spec.block_slices():
        entries[block, block] = coeffs.rho1
    np.fill_diagonal(entries, 1.0)
    return CorrelationMatrix(entries)
