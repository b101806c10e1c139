"""Decoy-state BB84 rate layer.

Weak-coherent channel model, vacuum + weak decoy analytic bounds on the
single-photon yield and error, and a GLLP-style secret fraction scaled by a
one-parameter finite-block factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .noise import DetectorSpec, NoiseBudget
from .units import binary_entropy

FINITE_SIZE_CONSTANT = 1500.0


@dataclass(frozen=True)
class ProtocolParams:
    clock_hz: float = 1e9
    mu: float = 0.4
    nu: float = 0.1
    p_mu: float = 0.9
    p_nu: float = 0.05
    p_vac: float = 0.05
    basis_prob_z: float = 0.9
    e_opt: float = 0.03
    f_ec: float = 1.16
    block_size_sifted: float = 1e8

    def __post_init__(self):
        if not self.clock_hz > 0:
            raise ValueError("protocol.clock_hz must be > 0")
        if not self.mu > self.nu >= 0:
            raise ValueError(f"protocol intensities need mu > nu >= 0, got mu={self.mu!r}, nu={self.nu!r}")
        probs = (self.p_mu, self.p_nu, self.p_vac)
        if any(not 0 <= p <= 1 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"protocol intensity probabilities must be in [0, 1] and sum to 1, got {probs}")
        if not 0 <= self.basis_prob_z <= 1:
            raise ValueError("protocol.basis_prob_z must lie in [0, 1]")
        if not 0 <= self.e_opt <= 0.1:
            raise ValueError(f"protocol.e_opt must lie in [0, 0.1], got {self.e_opt!r}")
        if not 1 <= self.f_ec <= 1.5:
            raise ValueError(f"protocol.f_ec must lie in [1, 1.5], got {self.f_ec!r}")
        if not self.block_size_sifted >= 1:
            raise ValueError("protocol.block_size_sifted must be >= 1")

    @property
    def sifting_factor(self) -> float:
        pz = self.basis_prob_z
        return pz * pz + (1.0 - pz) * (1.0 - pz)


@dataclass(frozen=True)
class LinkOperatingPoint:
    channel_transmittance: float
    detector: DetectorSpec
    noise: NoiseBudget

    def __post_init__(self):
        if not 0 < self.channel_transmittance <= 1:
            raise ValueError(f"channel transmittance must lie in (0, 1], got {self.channel_transmittance!r}")

    @property
    def eta(self) -> float:
        return self.channel_transmittance * self.detector.efficiency

    @property
    def y0(self) -> float:
        return self.noise.background_yield


@dataclass(frozen=True)
class GainErrorTable:
    mu: float
    nu: float
    q_mu: float
    q_nu: float
    q_vac: float
    e_mu: float
    e_nu: float
    e_vac: float
    degenerate: bool = False


@dataclass(frozen=True)
class DecoyEstimate:
    y1_lower: float
    e1_upper: float
    q1_lower: float
    reason: str = ""


@dataclass(frozen=True)
class RateResult:
    sifted_rate_bps: float
    secure_rate_asymptotic_bps: float
    secure_rate_finite_bps: float
    qber: float
    secret_fraction: float
    finite_size_factor: float
    estimate: DecoyEstimate
    saturated: bool = False
    reason: str = ""


def _gain_error(eta: float, y0: float, e_opt: float, intensity: float) -> tuple[float, float]:
    signal = -math.expm1(-eta * intensity)
    q = min(1.0, y0 + signal)
    if q <= 0:
        return 0.0, 0.5
    return q, (0.5 * y0 + e_opt * signal) / q


def channel_gains(eta: float, y0: float, e_opt: float, mu: float, nu: float) -> GainErrorTable:
    """Gains and error rates for total transmittance ``eta`` and background yield ``y0``."""
    if eta < 0:
        raise ValueError(f"total transmittance must be >= 0, got {eta!r}")
    if not 0 <= y0 <= 1:
        raise ValueError(f"background yield must lie in [0, 1], got {y0!r}")
    q_mu, e_mu = _gain_error(eta, y0, e_opt, mu)
    q_nu, e_nu = _gain_error(eta, y0, e_opt, nu)
    return GainErrorTable(
        mu=mu, nu=nu,
        q_mu=q_mu, q_nu=q_nu, q_vac=y0,
        e_mu=e_mu, e_nu=e_nu, e_vac=0.5,
        degenerate=q_mu == 0.0,
    )


def gain_and_error(params: ProtocolParams, link: LinkOperatingPoint) -> GainErrorTable:
    eta = link.eta
    if not eta > 0:
        raise ValueError("total transmittance must be > 0")
    return channel_gains(eta, link.y0, params.e_opt, params.mu, params.nu)


def decoy_bounds(params: ProtocolParams, table: GainErrorTable) -> DecoyEstimate:
    """Vacuum + weak decoy lower bound on Y1 and upper bound on e1."""
    mu, nu = params.mu, params.nu
    y0 = table.q_vac
    if nu <= 0:
        return DecoyEstimate(0.0, 0.5, 0.0, "weak decoy intensity is zero; single-photon yield unbounded")
    bracket = (
        table.q_nu * math.exp(nu)
        - table.q_mu * math.exp(mu) * nu * nu / (mu * mu)
        - (mu * mu - nu * nu) / (mu * mu) * y0
    )
    y1 = min(1.0, mu / (mu * nu - nu * nu) * bracket)
    if not y1 > 0:
        return DecoyEstimate(0.0, 0.5, 0.0, f"single-photon yield bound is non-positive ({y1:.3g})")
    e1 = (table.e_nu * table.q_nu * math.exp(nu) - table.e_vac * y0) / (y1 * nu)
    e1 = min(0.5, max(0.0, e1))
    return DecoyEstimate(y1, e1, y1 * mu * math.exp(-mu))


def finite_size_factor(block_size_sifted: float) -> float:
    """Fraction of the asymptotic rate retained at a sifted block of this size."""
    if not block_size_sifted >= 1:
        raise ValueError("block size must be >= 1")
    return min(1.0, max(0.0, 1.0 - FINITE_SIZE_CONSTANT / math.sqrt(block_size_sifted)))


def sifted_rate(params: ProtocolParams, table: GainErrorTable) -> float:
    return params.clock_hz * params.p_mu * table.q_mu * params.sifting_factor


def secret_fraction(params: ProtocolParams, table: GainErrorTable, estimate: DecoyEstimate) -> float:
    if table.q_mu <= 0 or estimate.q1_lower <= 0:
        return 0.0
    r = (estimate.q1_lower / table.q_mu) * (1.0 - binary_entropy(estimate.e1_upper)) \
        - params.f_ec * binary_entropy(min(0.5, table.e_mu))
    return min(1.0, max(0.0, r))


def secure_key_rate(
    params: ProtocolParams,
    table: GainErrorTable,
    estimate: DecoyEstimate,
    sifted_rate_bps: float | None = None,
    saturated: bool = False,
) -> RateResult:
    sifted = sifted_rate(params, table) if sifted_rate_bps is None else sifted_rate_bps
    r = secret_fraction(params, table, estimate)
    phi = finite_size_factor(params.block_size_sifted)
    reason = estimate.reason
    if not reason and r == 0.0:
        reason = "error correction cost exceeds single-photon secrecy"
    return RateResult(
        sifted_rate_bps=sifted,
        secure_rate_asymptotic_bps=sifted * r,
        secure_rate_finite_bps=sifted * r * phi,
        qber=table.e_mu,
        secret_fraction=r,
        finite_size_factor=phi,
        estimate=estimate,
        saturated=saturated,
        reason=reason,
    )
