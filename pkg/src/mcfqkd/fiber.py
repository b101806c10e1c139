"""Multicore fiber plant: per-core loss, intercore leakage and Raman crosstalk."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

from .units import OpticalPower, Wavelength, db_to_linear, dbm_to_watts

CENTRAL_CORE = 0
DWDM_GRID_NM = 0.8
MAX_LEAKAGE_DB = -20.0

DEFAULT_LENGTH_KM = 53.0
DEFAULT_CORES = 7
DEFAULT_ATTENUATION_DB_PER_KM = 0.23
# 53 km * 0.23 dB/km = 12.19 dB; splices/connectors close the gap to the 12.4 dB span loss.
DEFAULT_EXCESS_LOSS_DB = 0.21
# Quantum path pays 1.1 dB across both fanouts; outer cores sit at the low end of 1.0-4.6 dB.
DEFAULT_CENTRAL_FANOUT_DB = (0.55, 0.55)
DEFAULT_OUTER_FANOUT_DB = (1.0, 1.0)
DEFAULT_LEAKAGE_FORWARD_DB = -60.0
DEFAULT_LEAKAGE_BACKWARD_DB = -80.0

DEFAULT_KAPPA_R = 5.0e-16  # W per nm per mW of launch, worst case at the quantum receiver
RAYLEIGH_OFFSET_DB = 40.0

QUANTUM_WAVELENGTH_NM = 1547.72
DATA_WAVELENGTH_NM = 1552.72

Direction = Literal["co", "counter"]
ScatterDirection = Literal["forward", "backward"]


def _check_core_index(core) -> None:
    if isinstance(core, bool) or not isinstance(core, int):
        raise ValueError(f"core index must be an integer, got {core!r}")


def _uniform_matrix(n: int, value: float) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(value for _ in range(n)) for _ in range(n))


@dataclass(frozen=True)
class FiberSpec:
    """Static description of the fiber plant.

    Leakage matrices are indexed ``[source][destination]`` in dB; diagonal
    entries are ignored. ``fanout_loss_db[core]`` holds the (transmit end,
    receive end) coupling losses of that core. ``lumped_attenuator_db`` is an
    extra attenuator in the quantum path (used to match loss budgets between
    fiber types).
    """

    length_km: float = DEFAULT_LENGTH_KM
    core_count: int = DEFAULT_CORES
    attenuation_db_per_km: tuple[float, ...] = (DEFAULT_ATTENUATION_DB_PER_KM,) * DEFAULT_CORES
    excess_loss_db: tuple[float, ...] = (DEFAULT_EXCESS_LOSS_DB,) * DEFAULT_CORES
    fanout_loss_db: tuple[tuple[float, float], ...] = (
        (DEFAULT_CENTRAL_FANOUT_DB,) + (DEFAULT_OUTER_FANOUT_DB,) * (DEFAULT_CORES - 1)
    )
    leakage_forward_db: tuple[tuple[float, ...], ...] = _uniform_matrix(DEFAULT_CORES, DEFAULT_LEAKAGE_FORWARD_DB)
    leakage_backward_db: tuple[tuple[float, ...], ...] = _uniform_matrix(DEFAULT_CORES, DEFAULT_LEAKAGE_BACKWARD_DB)
    lumped_attenuator_db: float = 0.0

    def __post_init__(self):
        n = self.core_count
        if not self.length_km >= 0 or not math.isfinite(self.length_km):
            raise ValueError(f"fiber.length_km must be >= 0, got {self.length_km!r}")
        if n < 1:
            raise ValueError(f"fiber.core_count must be >= 1, got {n!r}")
        for name in ("attenuation_db_per_km", "excess_loss_db", "fanout_loss_db",
                     "leakage_forward_db", "leakage_backward_db"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"fiber.{name} must have one entry per core ({n})")
        if any(not a > 0 for a in self.attenuation_db_per_km):
            raise ValueError("fiber.attenuation_db_per_km must be > 0 for every core")
        if any(not e >= 0 for e in self.excess_loss_db):
            raise ValueError("fiber.excess_loss_db must be >= 0 for every core")
        for pair in self.fanout_loss_db:
            if len(pair) != 2 or any(not f >= 0 for f in pair):
                raise ValueError("fiber.fanout_loss_db entries must be (tx, rx) pairs of losses >= 0")
        if not self.lumped_attenuator_db >= 0:
            raise ValueError("fiber.lumped_attenuator_db must be >= 0")
        for name in ("leakage_forward_db", "leakage_backward_db"):
            matrix = getattr(self, name)
            for src, row in enumerate(matrix):
                if len(row) != n:
                    raise ValueError(f"fiber.{name} must be a {n}x{n} matrix")
                for dst, value in enumerate(row):
                    if src != dst and not value <= MAX_LEAKAGE_DB:
                        raise ValueError(
                            f"fiber.{name}[{src}][{dst}] = {value} dB exceeds the {MAX_LEAKAGE_DB} dB guard"
                        )

    def check_core(self, core: int) -> None:
        if not 0 <= core < self.core_count:
            raise ValueError(f"core index {core} out of range for a {self.core_count}-core fiber")

    def span_loss_db(self, core: int) -> float:
        self.check_core(core)
        return self.length_km * self.attenuation_db_per_km[core] + self.excess_loss_db[core]

    def concatenate(self, other: "FiberSpec") -> "FiberSpec":
        """Splice ``other`` after this fiber.

        Fanouts are kept at the outer ends only (this fiber's transmit side,
        ``other``'s receive side); attenuators add.
        """
        if other.core_count != self.core_count:
            raise ValueError("cannot concatenate fibers with different core counts")
        length = self.length_km + other.length_km
        if length > 0:
            # Normalise weights first so denormal lengths do not underflow.
            wa, wb = self.length_km / length, other.length_km / length
            atten = tuple(
                wa * a + wb * b
                for a, b in zip(self.attenuation_db_per_km, other.attenuation_db_per_km)
            )
        else:
            atten = self.attenuation_db_per_km
        return replace(
            self,
            length_km=length,
            attenuation_db_per_km=atten,
            excess_loss_db=tuple(a + b for a, b in zip(self.excess_loss_db, other.excess_loss_db)),
            fanout_loss_db=tuple((a[0], b[1]) for a, b in zip(self.fanout_loss_db, other.fanout_loss_db)),
            lumped_attenuator_db=self.lumped_attenuator_db + other.lumped_attenuator_db,
        )


@dataclass(frozen=True)
class QuantumChannel:
    core: int = CENTRAL_CORE
    wavelength_nm: float = QUANTUM_WAVELENGTH_NM

    def __post_init__(self):
        _check_core_index(self.core)
        Wavelength(self.wavelength_nm)


@dataclass(frozen=True)
class ClassicalChannel:
    """A classical signal; ``co`` propagates in the same direction as the quantum signal."""

    core: int
    wavelength_nm: float = DATA_WAVELENGTH_NM
    direction: Direction = "co"
    launch_w: float = 1e-3

    def __post_init__(self):
        _check_core_index(self.core)
        Wavelength(self.wavelength_nm)
        if self.direction not in ("co", "counter"):
            raise ValueError(f"channel direction must be 'co' or 'counter', got {self.direction!r}")
        OpticalPower(self.launch_w)


def _default_classical() -> tuple[ClassicalChannel, ...]:
    # Bidirectional 10G pair at 0 dBm each, in separate outer cores.
    return (
        ClassicalChannel(core=1, direction="co", launch_w=1e-3),
        ClassicalChannel(core=4, direction="counter", launch_w=1e-3),
    )


@dataclass(frozen=True)
class ChannelPlan:
    quantum: QuantumChannel = field(default_factory=QuantumChannel)
    classical: tuple[ClassicalChannel, ...] = field(default_factory=_default_classical)
    auxiliary: tuple[ClassicalChannel, ...] = ()

    def __post_init__(self):
        q = self.quantum
        for ch in self.all_classical():
            if ch.core == q.core:
                raise ValueError(f"core {q.core} carries the quantum channel and cannot carry classical traffic")
            if abs(ch.wavelength_nm - q.wavelength_nm) < DWDM_GRID_NM - 1e-9:
                raise ValueError(
                    f"classical wavelength {ch.wavelength_nm} nm is within one DWDM grid spacing "
                    f"of the quantum wavelength {q.wavelength_nm} nm"
                )

    def all_classical(self) -> tuple[ClassicalChannel, ...]:
        return self.classical + self.auxiliary

    def total_launch_mw(self) -> float:
        return sum(ch.launch_w for ch in self.all_classical()) * 1e3

    def validate_for(self, fiber: FiberSpec) -> None:
        fiber.check_core(self.quantum.core)
        for ch in self.all_classical():
            fiber.check_core(ch.core)

    def with_combined_power(self, total_mw: float) -> "ChannelPlan":
        """Data channels rescaled to an equal split of ``total_mw``; auxiliaries untouched."""
        if not self.classical:
            raise ValueError("plan has no classical data channels to scale")
        each_w = total_mw * 1e-3 / len(self.classical)
        return replace(self, classical=tuple(replace(ch, launch_w=each_w) for ch in self.classical))

    def without_data(self) -> "ChannelPlan":
        return replace(self, classical=(), auxiliary=())


@dataclass(frozen=True)
class LossBudget:
    fiber_db: float
    fanout_db: float
    filter_db: float
    attenuator_db: float

    @property
    def total_db(self) -> float:
        return self.fiber_db + self.fanout_db + self.filter_db + self.attenuator_db

    @property
    def transmittance(self) -> float:
        return db_to_linear(-self.total_db)


def quantum_loss_budget(fiber: FiberSpec, plan: ChannelPlan, filter_insertion_db: float) -> LossBudget:
    core = plan.quantum.core
    fiber.check_core(core)
    if not filter_insertion_db >= 0:
        raise ValueError("filter insertion loss must be >= 0 dB")
    return LossBudget(
        fiber_db=fiber.span_loss_db(core),
        fanout_db=sum(fiber.fanout_loss_db[core]),
        filter_db=filter_insertion_db,
        attenuator_db=fiber.lumped_attenuator_db,
    )


def quantum_path_loss_db(fiber: FiberSpec, plan: ChannelPlan, filter_insertion_db: float) -> float:
    """Total loss in dB seen by the quantum signal from transmitter to detector."""
    return quantum_loss_budget(fiber, plan, filter_insertion_db).total_db


@dataclass(frozen=True)
class LeakageContribution:
    source_core: int
    wavelength_nm: float
    power_w: float


def leakage_power_at_receiver(fiber: FiberSpec, plan: ChannelPlan) -> list[LeakageContribution]:
    """Per-channel leaked power reaching the quantum receiver, before filtering.

    Co-propagating channels leak forward; counter-propagating ones reach the
    receiver through backward (Rayleigh-assisted) leakage.
    """
    plan.validate_for(fiber)
    dst = plan.quantum.core
    out = []
    for ch in plan.all_classical():
        matrix = fiber.leakage_forward_db if ch.direction == "co" else fiber.leakage_backward_db
        out.append(LeakageContribution(ch.core, ch.wavelength_nm, ch.launch_w * db_to_linear(matrix[ch.core][dst])))
    return out


@dataclass(frozen=True)
class RamanSpectrum:
    """Backscatter spectral density in dBm/nm recorded for a given launch power."""

    wavelengths_nm: tuple[float, ...]
    density_dbm_per_nm: tuple[float, ...]
    launch_power_dbm: float = 0.0
    fiber_length_km: float = DEFAULT_LENGTH_KM
    direction: ScatterDirection = "backward"

    def __post_init__(self):
        if len(self.wavelengths_nm) != len(self.density_dbm_per_nm):
            raise ValueError("wavelength and density columns differ in length")
        if len(self.wavelengths_nm) < 2:
            raise ValueError("a Raman spectrum needs at least 2 samples")
        if any(b <= a for a, b in zip(self.wavelengths_nm, self.wavelengths_nm[1:])):
            raise ValueError("spectrum wavelengths must be strictly increasing")
        if not all(math.isfinite(d) for d in self.density_dbm_per_nm):
            raise ValueError("spectrum densities must be finite")
        if not math.isfinite(self.launch_power_dbm):
            raise ValueError("spectrum launch power must be finite")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"spectrum direction must be forward or backward, got {self.direction!r}")

    def covers(self, wavelength_nm: float) -> bool:
        return self.wavelengths_nm[0] <= wavelength_nm <= self.wavelengths_nm[-1]


def derive_intercore_spectrum(intra: RamanSpectrum, rayleigh_offset_db: float = RAYLEIGH_OFFSET_DB) -> RamanSpectrum:
    """Shift an intracore spectrum down by the inter/intracore Rayleigh peak difference."""
    if not intra.density_dbm_per_nm:
        raise ValueError("cannot derive from an empty spectrum")
    if not rayleigh_offset_db >= 0:
        raise ValueError("rayleigh_offset_db must be >= 0")
    return replace(intra, density_dbm_per_nm=tuple(d - rayleigh_offset_db for d in intra.density_dbm_per_nm))


def worst_case_raman_coefficient(inter: RamanSpectrum) -> float:
    """Peak spectral density per unit launch power, in W/nm per mW."""
    launch_mw = 10.0 ** (inter.launch_power_dbm / 10.0)
    if not launch_mw > 0:
        raise ValueError("spectrum launch power must be > 0")
    peak_w_per_nm = max(dbm_to_watts(d) for d in inter.density_dbm_per_nm)
    return peak_w_per_nm / launch_mw


def raman_inband_power(kappa_r: float, plan: ChannelPlan, passband_nm: float) -> float:
    """Worst-case Raman power (W) inside the receiver passband.

    Every classical channel, whatever its direction, is assumed to scatter at
    the peak coefficient.
    """
    if not kappa_r >= 0:
        raise ValueError("Raman coefficient must be >= 0")
    if not passband_nm > 0:
        raise ValueError("passband must be > 0 nm")
    return kappa_r * passband_nm * plan.total_launch_mw()


# Piecewise-linear silica backscatter envelope (intracore, 0 dBm at 1552.72 nm,
# 53 km). Shape is illustrative; the maximum is pinned so that the 40 dB
# intercore derivation reproduces DEFAULT_KAPPA_R.
_PEAK_INTRACORE_DBM_PER_NM = 10.0 * math.log10(DEFAULT_KAPPA_R * 1e3 * 10 ** (RAYLEIGH_OFFSET_DB / 10.0))
_DEFAULT_ENVELOPE = (
    (1450.0, -12.0),
    (1480.0, -8.5),
    (1510.0, -5.5),
    (1530.0, -4.0),
    (1547.72, -3.2),
    (1570.0, -2.4),
    (1600.0, -1.2),
    (1630.0, -0.3),
    (1650.0, 0.0),
)


def default_intracore_spectrum() -> RamanSpectrum:
    return RamanSpectrum(
        wavelengths_nm=tuple(w for w, _ in _DEFAULT_ENVELOPE),
        density_dbm_per_nm=tuple(_PEAK_INTRACORE_DBM_PER_NM + rel for _, rel in _DEFAULT_ENVELOPE),
        launch_power_dbm=0.0,
        fiber_length_km=DEFAULT_LENGTH_KM,
        direction="backward",
    )


def scaled_plan(plan: ChannelPlan, factor: float) -> ChannelPlan:
    """Every classical and auxiliary launch power multiplied by ``factor``."""
    def scale(chs: Sequence[ClassicalChannel]) -> tuple[ClassicalChannel, ...]:
        return tuple(replace(ch, launch_w=ch.launch_w * factor) for ch in chs)

    return replace(plan, classical=scale(plan.classical), auxiliary=scale(plan.auxiliary))
