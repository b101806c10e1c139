"""Optical noise at the quantum receiver, expressed as click probability per gate."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable

from .fiber import (
    QUANTUM_WAVELENGTH_NM,
    ChannelPlan,
    FiberSpec,
    leakage_power_at_receiver,
    raman_inband_power,
)
from .units import db_to_linear, photon_rate_from_power

SATURATION_PROB = 0.5


class SaturationWarning(RuntimeWarning):
    """Noise click probability is past the range where the gate model is meaningful."""


@dataclass(frozen=True)
class FilterSpec:
    """Ideal rectangular DWDM filter in front of the detector."""

    center_nm: float = QUANTUM_WAVELENGTH_NM
    passband_nm: float = 0.4
    insertion_loss_db: float = 0.6
    out_of_band_isolation_db: float = 80.0

    def __post_init__(self):
        if not self.center_nm > 0:
            raise ValueError("filter.center_nm must be > 0")
        if not 0 < self.passband_nm < 10:
            raise ValueError(f"filter.passband_nm must lie in (0, 10) nm, got {self.passband_nm!r}")
        if not self.insertion_loss_db >= 0:
            raise ValueError("filter.insertion_loss_db must be >= 0")
        if not self.out_of_band_isolation_db >= 40:
            raise ValueError(
                f"filter.out_of_band_isolation_db must be >= 40 dB, got {self.out_of_band_isolation_db!r}"
            )


@dataclass(frozen=True)
class DetectorSpec:
    """Gated InGaAs single-photon detector.

    ``dark_count_prob_per_gate`` is the detector's own contribution to the
    background yield. Defaults are seeds for calibration, not measured values.
    """

    efficiency: float = 0.20
    dark_count_prob_per_gate: float = 2.0e-5
    gate_width_s: float = 150e-12
    clock_hz: float = 1e9

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"detector.efficiency must lie in (0, 1], got {self.efficiency!r}")
        if not 0 <= self.dark_count_prob_per_gate < 1e-2:
            raise ValueError(
                f"detector.dark_count_prob_per_gate must lie in [0, 1e-2), got {self.dark_count_prob_per_gate!r}"
            )
        if not self.clock_hz > 0:
            raise ValueError("detector.clock_hz must be > 0")
        if not 0 < self.gate_width_s <= 1.0 / self.clock_hz:
            raise ValueError("detector.gate_width_s must be > 0 and no longer than one clock period")


def filter_transmission(filt: FilterSpec, wavelength_nm: float) -> float:
    if not wavelength_nm > 0:
        raise ValueError("wavelength must be > 0 nm")
    half = filt.passband_nm / 2.0
    # Edges are inclusive; the slack absorbs float error in nm subtraction.
    if abs(wavelength_nm - filt.center_nm) <= half + 1e-9:
        return db_to_linear(-filt.insertion_loss_db)
    if math.isinf(filt.out_of_band_isolation_db):
        return 0.0
    return db_to_linear(-(filt.insertion_loss_db + filt.out_of_band_isolation_db))


def _source_probability(power_w: float, wavelength_nm: float, filt: FilterSpec, det: DetectorSpec) -> float:
    if power_w < 0:
        raise ValueError("noise power must be >= 0 W")
    rate = photon_rate_from_power(power_w * filter_transmission(filt, wavelength_nm), wavelength_nm)
    return min(1.0, rate * det.gate_width_s * det.efficiency)


def combine_probabilities(probs: Iterable[float]) -> float:
    """Probability that at least one independent source clicks."""
    miss = 1.0
    for p in probs:
        miss *= 1.0 - p
    return 1.0 - miss


def noise_count_prob_per_gate(
    sources: Iterable[tuple[float, float]], filt: FilterSpec, det: DetectorSpec
) -> float:
    """Combined click probability per gate from ``(power_w, wavelength_nm)`` sources.

    In-band sources (for instance Raman light already restricted to the
    passband) should be passed at the filter centre so they pay only the
    insertion loss.
    """
    total = combine_probabilities(_source_probability(p, wl, filt, det) for p, wl in sources)
    if total > SATURATION_PROB:
        warnings.warn(f"noise click probability {total:.3g} per gate exceeds model range", SaturationWarning)
    return total


@dataclass(frozen=True)
class NoiseBudget:
    leakage_w: float
    leakage_in_band_w: float
    raman_in_band_w: float
    noise_count_prob_per_gate: float
    dark_count_prob_per_gate: float
    breakdown: tuple[tuple[str, float], ...]
    saturated: bool = False

    @property
    def background_yield(self) -> float:
        return min(1.0, self.dark_count_prob_per_gate + self.noise_count_prob_per_gate)


def assemble_noise_budget(
    fiber: FiberSpec,
    plan: ChannelPlan,
    filt: FilterSpec,
    det: DetectorSpec,
    kappa_r: float,
) -> NoiseBudget:
    leaks = leakage_power_at_receiver(fiber, plan)
    raman_w = raman_inband_power(kappa_r, plan, filt.passband_nm)

    entries: list[tuple[str, float]] = []
    leak_in_band = 0.0
    for ch, leak in zip(plan.all_classical(), leaks):
        leak_in_band += leak.power_w * filter_transmission(filt, leak.wavelength_nm)
        entries.append(
            (f"leakage core {leak.source_core} {ch.direction} {leak.wavelength_nm:g} nm",
             _source_probability(leak.power_w, leak.wavelength_nm, filt, det))
        )
    if plan.all_classical():
        entries.append(("raman", _source_probability(raman_w, filt.center_nm, filt, det)))

    noise = combine_probabilities(p for _, p in entries)
    saturated = noise > SATURATION_PROB
    if saturated:
        warnings.warn(f"noise click probability {noise:.3g} per gate exceeds model range", SaturationWarning)
    entries.append(("dark counts", det.dark_count_prob_per_gate))
    entries.sort(key=lambda e: e[1], reverse=True)
    return NoiseBudget(
        leakage_w=sum(leak.power_w for leak in leaks),
        leakage_in_band_w=leak_in_band,
        raman_in_band_w=raman_w,
        noise_count_prob_per_gate=noise,
        dark_count_prob_per_gate=det.dark_count_prob_per_gate,
        breakdown=tuple(entries),
        saturated=saturated,
    )


def quiet_budget(det: DetectorSpec) -> NoiseBudget:
    """Budget for a crosstalk-free quantum channel: dark counts only."""
    return NoiseBudget(0.0, 0.0, 0.0, 0.0, det.dark_count_prob_per_gate,
                       (("dark counts", det.dark_count_prob_per_gate),))
