"""Unit conversions and elementary functions shared across the simulator.

Physical constants come from :mod:`scipy.constants` (CODATA 2018 exact values
for h and c) and are intentionally not configurable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.constants import c as SPEED_OF_LIGHT
from scipy.constants import h as PLANCK

__all__ = [
    "PLANCK",
    "SPEED_OF_LIGHT",
    "DecibelValue",
    "LinearRatio",
    "OpticalPower",
    "Wavelength",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watts",
    "watts_to_dbm",
    "photon_energy",
    "photon_rate_from_power",
    "binary_entropy",
]

TELECOM_BAND_NM = (1000.0, 1700.0)


@dataclass(frozen=True)
class DecibelValue:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"decibel value must be finite, got {self.value!r}")

    def linear(self) -> "LinearRatio":
        return LinearRatio(db_to_linear(self.value))


@dataclass(frozen=True)
class LinearRatio:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"linear ratio must be >= 0, got {self.value!r}")

    def db(self) -> DecibelValue:
        return DecibelValue(linear_to_db(self.value))


@dataclass(frozen=True)
class OpticalPower:
    watts: float

    def __post_init__(self):
        if not (self.watts >= 0 and math.isfinite(self.watts)):
            raise ValueError(f"optical power must be finite and >= 0 W, got {self.watts!r}")

    @classmethod
    def from_dbm(cls, dbm: float) -> "OpticalPower":
        return cls(dbm_to_watts(dbm))

    @classmethod
    def from_mw(cls, mw: float) -> "OpticalPower":
        return cls(mw * 1e-3)

    @property
    def mw(self) -> float:
        return self.watts * 1e3

    @property
    def dbm(self) -> float:
        if self.watts <= 0:
            raise ValueError("dBm is undefined for zero optical power")
        return watts_to_dbm(self.watts)

    def __add__(self, other: "OpticalPower") -> "OpticalPower":
        return OpticalPower(self.watts + other.watts)

    def scaled(self, factor: float) -> "OpticalPower":
        return OpticalPower(self.watts * factor)


@dataclass(frozen=True)
class Wavelength:
    nanometers: float

    def __post_init__(self):
        if not (self.nanometers > 0 and math.isfinite(self.nanometers)):
            raise ValueError(f"wavelength must be > 0 nm, got {self.nanometers!r}")

    @property
    def meters(self) -> float:
        return self.nanometers * 1e-9

    def in_telecom_band(self) -> bool:
        lo, hi = TELECOM_BAND_NM
        return lo <= self.nanometers <= hi


def _value(x) -> float:
    return float(getattr(x, "value", x))


def db_to_linear(x: DecibelValue | float) -> float:
    """Power ratio for a decibel value, ``10**(x/10)``."""
    x = _value(x)
    if not math.isfinite(x):
        raise ValueError(f"decibel value must be finite, got {x!r}")
    return 10.0 ** (x / 10.0)


def linear_to_db(x: LinearRatio | float) -> float:
    x = _value(x)
    if not x > 0:
        raise ValueError(f"cannot express non-positive ratio {x!r} in dB")
    return 10.0 * math.log10(x)


def dbm_to_watts(dbm: float) -> float:
    return 1e-3 * db_to_linear(dbm)


def watts_to_dbm(watts: float) -> float:
    return linear_to_db(watts / 1e-3)


def _nm(wavelength: Wavelength | float) -> float:
    return float(getattr(wavelength, "nanometers", wavelength))


def photon_energy(wavelength: Wavelength | float) -> float:
    """Photon energy in joules at ``wavelength`` (nm)."""
    nm = _nm(wavelength)
    if not nm > 0:
        raise ValueError(f"wavelength must be > 0 nm, got {nm!r}")
    return PLANCK * SPEED_OF_LIGHT / (nm * 1e-9)


def photon_rate_from_power(power: OpticalPower | float, wavelength: Wavelength | float) -> float:
    """Photons per second carried by ``power`` (W) at ``wavelength`` (nm)."""
    watts = float(getattr(power, "watts", power))
    if watts < 0:
        raise ValueError(f"optical power must be >= 0 W, got {watts!r}")
    return watts / photon_energy(wavelength)


def binary_entropy(p: float) -> float:
    """Shannon binary entropy in bits, with H(0) = H(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)
