"""Simulation driver: single points, power sweeps, calibration, Raman fitting,
long-run session emulation and DWDM bandwidth planning."""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal, Sequence, TypeVar

import numpy as np
from scipy.optimize import bisect
from scipy.stats import truncnorm

from .decoy import (
    GainErrorTable,
    LinkOperatingPoint,
    ProtocolParams,
    RateResult,
    channel_gains,
    decoy_bounds,
    gain_and_error,
    secure_key_rate,
    sifted_rate,
)
from .fiber import (
    DEFAULT_KAPPA_R,
    ChannelPlan,
    FiberSpec,
    LossBudget,
    quantum_loss_budget,
    quantum_path_loss_db,
)
from .noise import (
    DetectorSpec,
    FilterSpec,
    NoiseBudget,
    SaturationWarning,
    assemble_noise_budget,
    quiet_budget,
)

Mode = Literal["mcf", "dual_ssmf_control"]
T = TypeVar("T")
R = TypeVar("R")

F_EC_RANGE = (1.05, 1.25)
CALIBRATION_RTOL = 1e-9
CALIBRATION_MAXITER = 200
KAPPA_SEARCH_LOG10 = (-24.0, -8.0)


class CalibrationInfeasible(RuntimeError):
    """A calibration target lies outside what the model can reach."""

    def __init__(self, target: str, value: float, achievable: tuple[float, float]):
        self.target = target
        self.value = value
        self.achievable = achievable
        super().__init__(
            f"calibration target {target}={value:.6g} is infeasible; "
            f"achievable range is [{achievable[0]:.6g}, {achievable[1]:.6g}]"
        )


class ModelInconsistencyError(RuntimeError):
    pass


def worker_count(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get("SIM_THREADS")
        if raw is None:
            return min(8, os.cpu_count() or 1)
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"SIM_THREADS must be an integer >= 1, got {raw!r}") from None
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Order-preserving map over independent evaluations."""
    items = list(items)
    n = worker_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Scenario:
    fiber: FiberSpec = field(default_factory=FiberSpec)
    plan: ChannelPlan = field(default_factory=ChannelPlan)
    filter: FilterSpec = field(default_factory=FilterSpec)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    kappa_r: float = DEFAULT_KAPPA_R
    mode: Mode = "mcf"
    # Quantum-path loss the control attenuator must reproduce; None means the
    # built-in MCF budget behind this scenario's filter.
    control_loss_db: float | None = None

    def __post_init__(self):
        if self.mode not in ("mcf", "dual_ssmf_control"):
            raise ValueError(f"mode must be 'mcf' or 'dual_ssmf_control', got {self.mode!r}")
        if not self.kappa_r >= 0:
            raise ValueError("raman.kappa_r must be >= 0")
        if self.control_loss_db is not None and not self.control_loss_db >= 0:
            raise ValueError("control_loss_db must be >= 0")
        if abs(self.detector.clock_hz - self.protocol.clock_hz) > 1e-9 * self.protocol.clock_hz:
            raise ValueError("detector.clock_hz and protocol.clock_hz must agree")
        self.plan.validate_for(self.fiber)

    def effective_fiber(self) -> FiberSpec:
        if self.mode == "mcf":
            return self.fiber
        target = self.control_loss_db
        if target is None:
            target = quantum_path_loss_db(FiberSpec(), ChannelPlan(), self.filter.insertion_loss_db)
        bare = replace(self.fiber, lumped_attenuator_db=0.0)
        gap = target - quantum_path_loss_db(bare, self.plan, self.filter.insertion_loss_db)
        if gap < -1e-12:
            raise ValueError(f"control fiber loss already exceeds the {target:.2f} dB target by {-gap:.3f} dB")
        return replace(self.fiber, lumped_attenuator_db=max(0.0, gap))

    def with_combined_power(self, total_mw: float) -> "Scenario":
        return replace(self, plan=self.plan.with_combined_power(total_mw))

    def without_data(self) -> "Scenario":
        return replace(self, plan=self.plan.without_data())


@dataclass(frozen=True)
class SimResult:
    mode: str
    combined_power_mw: float
    loss: LossBudget
    noise: NoiseBudget
    link: LinkOperatingPoint
    table: GainErrorTable
    rate: RateResult

    @property
    def qber(self) -> float:
        return self.rate.qber

    @property
    def secure_finite_bps(self) -> float:
        return self.rate.secure_rate_finite_bps

    def provenance(self) -> list[tuple[str, float | str]]:
        """Every intermediate quantity, in evaluation order."""
        r, t, n, est = self.rate, self.table, self.noise, self.rate.estimate
        rows: list[tuple[str, float | str]] = [
            ("mode", self.mode),
            ("combined_power_mw", self.combined_power_mw),
            ("fiber_loss_db", self.loss.fiber_db),
            ("fanout_loss_db", self.loss.fanout_db),
            ("filter_loss_db", self.loss.filter_db),
            ("attenuator_db", self.loss.attenuator_db),
            ("total_loss_db", self.loss.total_db),
            ("channel_transmittance", self.link.channel_transmittance),
            ("detector_efficiency", self.link.detector.efficiency),
            ("total_transmittance", self.link.eta),
            ("leakage_w", n.leakage_w),
            ("leakage_in_band_w", n.leakage_in_band_w),
            ("raman_in_band_w", n.raman_in_band_w),
            ("noise_count_prob_per_gate", n.noise_count_prob_per_gate),
            ("dark_count_prob_per_gate", n.dark_count_prob_per_gate),
        ]
        rows += [(f"noise[{name}]", p) for name, p in n.breakdown]
        rows += [
            ("background_yield", n.background_yield),
            ("q_mu", t.q_mu), ("q_nu", t.q_nu), ("q_vac", t.q_vac),
            ("e_mu", t.e_mu), ("e_nu", t.e_nu),
            ("y1_lower", est.y1_lower), ("e1_upper", est.e1_upper), ("q1_lower", est.q1_lower),
            ("secret_fraction", r.secret_fraction),
            ("finite_size_factor", r.finite_size_factor),
            ("qber", r.qber),
            ("sifted_bps", r.sifted_rate_bps),
            ("secure_asym_bps", r.secure_rate_asymptotic_bps),
            ("secure_finite_bps", r.secure_rate_finite_bps),
            ("saturated", str(r.saturated).lower()),
        ]
        if r.reason:
            rows.append(("reason", r.reason))
        return rows


def _link(s: Scenario) -> tuple[LossBudget, NoiseBudget, LinkOperatingPoint]:
    fiber = s.effective_fiber()
    loss = quantum_loss_budget(fiber, s.plan, s.filter.insertion_loss_db)
    if s.mode == "dual_ssmf_control":
        noise = quiet_budget(s.detector)
    else:
        noise = assemble_noise_budget(fiber, s.plan, s.filter, s.detector, s.kappa_r)
    return loss, noise, LinkOperatingPoint(loss.transmittance, s.detector, noise)


def simulate_point(s: Scenario) -> SimResult:
    loss, noise, link = _link(s)
    table = gain_and_error(s.protocol, link)
    estimate = decoy_bounds(s.protocol, table)
    rate = secure_key_rate(s.protocol, table, estimate, saturated=noise.saturated)
    return SimResult(s.mode, s.plan.total_launch_mw(), loss, noise, link, table, rate)


@dataclass(frozen=True)
class SweepSpec:
    power_min_mw: float
    power_max_mw: float
    points: int
    scale: Literal["log", "linear"] = "log"

    def __post_init__(self):
        if not (self.power_min_mw > 0 and self.power_max_mw > 0):
            raise ValueError("sweep powers must be > 0 mW")
        if not self.power_min_mw < self.power_max_mw:
            raise ValueError("sweep needs power_min_mw < power_max_mw")
        if self.points < 2:
            raise ValueError("sweep needs at least 2 points")
        if self.scale not in ("log", "linear"):
            raise ValueError("sweep scale must be 'log' or 'linear'")

    def grid(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.power_min_mw, self.power_max_mw, self.points)
        return np.linspace(self.power_min_mw, self.power_max_mw, self.points)


def sweep_power(s: Scenario, sweep: SweepSpec, threads: int | None = None) -> list[tuple[float, SimResult]]:
    """Evaluate the scenario with classical power split equally to each combined total."""
    grid = [float(p) for p in sweep.grid()]
    results = parallel_map(lambda mw: simulate_point(s.with_combined_power(mw)), grid, threads)
    return list(zip(grid, results))


@dataclass(frozen=True)
class CalibrationTargets:
    sifted_rate_bps: float = 2.7e6
    qber: float = 0.0336
    secure_finite_bps: float | None = 627e3

    def __post_init__(self):
        for name in ("sifted_rate_bps", "qber", "secure_finite_bps"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"calibration target {name} must be positive")


@dataclass(frozen=True)
class CalibrationReport:
    efficiency: float
    e_opt: float
    f_ec: float
    iterations: dict[str, int]
    achieved: dict[str, float]
    residuals: dict[str, float]
    notes: tuple[str, ...] = ()

    def lines(self) -> list[str]:
        out = [
            "stage order: detector.efficiency (sifted rate) -> protocol.e_opt (QBER) -> protocol.f_ec (secure rate)",
            f"detector.efficiency = {self.efficiency:.9g} ({self.iterations.get('efficiency', 0)} bisection steps)",
            f"protocol.e_opt = {self.e_opt:.9g} (closed form)",
            f"protocol.f_ec = {self.f_ec:.9g} ({self.iterations.get('f_ec', 0)} bisection steps)",
        ]
        for key, val in self.achieved.items():
            out.append(f"{key}: achieved {val:.9g}, relative residual {self.residuals[key]:.3e}")
        out += list(self.notes)
        return out


def _bisect(fn: Callable[[float], float], lo: float, hi: float) -> tuple[float, int]:
    x, res = bisect(fn, lo, hi, xtol=1e-15, rtol=CALIBRATION_RTOL, maxiter=CALIBRATION_MAXITER,
                    full_output=True, disp=False)
    return x, res.iterations


def calibrate_baseline(s: Scenario, targets: CalibrationTargets = CalibrationTargets()) -> tuple[Scenario, CalibrationReport]:
    """Fit detector efficiency, intrinsic error and EC inefficiency at zero data power.

    The stages are separable: the sifted rate does not depend on ``e_opt`` or
    ``f_ec``, and the QBER does not depend on ``f_ec``.
    """
    base = s.without_data()
    _, noise, _ = _link(base)
    y0 = noise.background_yield
    proto = s.protocol
    iterations: dict[str, int] = {}

    def sifted_at(eff: float) -> float:
        det = replace(s.detector, efficiency=eff)
        _, _, link = _link(replace(base, detector=det))
        return sifted_rate(proto, channel_gains(link.eta, link.y0, proto.e_opt, proto.mu, proto.nu))

    eff_lo, eff_hi = 1e-9, 1.0
    lo_rate, hi_rate = sifted_at(eff_lo), sifted_at(eff_hi)
    target = targets.sifted_rate_bps
    if not lo_rate <= target <= hi_rate:
        raise CalibrationInfeasible("sifted_rate_bps", target, (lo_rate, hi_rate))
    eff, iterations["efficiency"] = _bisect(lambda e: sifted_at(e) / target - 1.0, eff_lo, eff_hi)
    detector = replace(s.detector, efficiency=eff)

    _, noise, link = _link(replace(base, detector=detector))
    y0 = noise.background_yield
    signal = -math.expm1(-link.eta * proto.mu)
    q_mu = y0 + signal
    e_opt = (targets.qber * q_mu - 0.5 * y0) / signal
    if not 0.0 <= e_opt <= 0.1:
        qber_range = (0.5 * y0 / q_mu, (0.5 * y0 + 0.1 * signal) / q_mu)
        raise CalibrationInfeasible("qber", targets.qber, qber_range)
    proto = replace(proto, e_opt=e_opt)

    def secure_at(f_ec: float) -> float:
        return simulate_point(replace(base, detector=detector, protocol=replace(proto, f_ec=f_ec))).secure_finite_bps

    if targets.secure_finite_bps is not None:
        goal = targets.secure_finite_bps
        hi_secure, lo_secure = secure_at(F_EC_RANGE[0]), secure_at(F_EC_RANGE[1])
        if not lo_secure <= goal <= hi_secure:
            raise CalibrationInfeasible("secure_finite_bps", goal, (lo_secure, hi_secure))
        f_ec, iterations["f_ec"] = _bisect(lambda f: secure_at(f) / goal - 1.0, *F_EC_RANGE)
        proto = replace(proto, f_ec=f_ec)

    calibrated = replace(s, detector=detector, protocol=proto)
    point = simulate_point(replace(base, detector=detector, protocol=proto))
    achieved = {"sifted_rate_bps": point.rate.sifted_rate_bps, "qber": point.qber}
    wanted = {"sifted_rate_bps": targets.sifted_rate_bps, "qber": targets.qber}
    if targets.secure_finite_bps is not None:
        achieved["secure_finite_bps"] = point.secure_finite_bps
        wanted["secure_finite_bps"] = targets.secure_finite_bps
    residuals = {k: achieved[k] / wanted[k] - 1.0 for k in achieved}
    report = CalibrationReport(eff, e_opt, proto.f_ec, iterations, achieved, residuals)
    return calibrated, report


@dataclass(frozen=True)
class RamanFit:
    kappa_lo: float
    kappa_hi: float
    recommended: float
    baseline_drop_at_100mw: float
    notes: tuple[str, ...] = ()

    def contains(self, kappa: float) -> bool:
        return self.kappa_lo <= kappa <= self.kappa_hi


def _largest_satisfying(pred: Callable[[float], bool], iterations: int = 80) -> float:
    """Largest kappa on the log search range for which the monotone ``pred`` holds."""
    lo, hi = KAPPA_SEARCH_LOG10
    if not pred(10.0 ** lo):
        return 0.0
    if pred(10.0 ** hi):
        return 10.0 ** hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if pred(10.0 ** mid):
            lo = mid
        else:
            hi = mid
    return 10.0 ** lo


def rate_drop(s: Scenario, combined_mw: float) -> float:
    """Relative secure-rate loss caused by Raman crosstalk at a given combined power."""
    loaded = s.with_combined_power(combined_mw)
    reference = simulate_point(replace(loaded, kappa_r=0.0)).secure_finite_bps
    if reference <= 0:
        return 1.0
    return 1.0 - simulate_point(loaded).secure_finite_bps / reference


def fit_raman_coefficient(
    s: Scenario,
    negligible_mw: float = 100.0,
    coexist_mw: float = 2000.0,
    max_drop: float = 0.01,
) -> RamanFit:
    """Bracket the worst-case Raman coefficient with the two power-sweep constraints.

    ``kappa_hi`` is the largest coefficient that still yields key at
    ``coexist_mw``; ``kappa_lo`` the largest whose rate penalty at
    ``negligible_mw`` stays under ``max_drop``.
    """
    def positive(k: float) -> bool:
        return simulate_point(replace(s, kappa_r=k).with_combined_power(coexist_mw)).secure_finite_bps > 0

    def negligible(k: float) -> bool:
        return rate_drop(replace(s, kappa_r=k), negligible_mw) < max_drop

    # The upper end of the search range saturates the receiver by design.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        kappa_hi = _largest_satisfying(positive)
        kappa_lo = _largest_satisfying(negligible)
    if kappa_hi <= 0 or kappa_lo > kappa_hi:
        raise ModelInconsistencyError(
            f"no Raman coefficient satisfies both constraints (negligible up to {kappa_lo:.3g}, "
            f"key survives up to {kappa_hi:.3g} W/nm/mW)"
        )
    notes = (
        f"kappa_lo: rate drop < {max_drop:.0%} at {negligible_mw:g} mW combined",
        f"kappa_hi: positive key at {coexist_mw:g} mW combined",
    )
    return RamanFit(kappa_lo, kappa_hi, math.sqrt(kappa_lo * kappa_hi),
                    rate_drop(s, negligible_mw), notes)


@dataclass(frozen=True)
class SessionSpec:
    duration_hours: float = 24.0
    qber_mean: float = 0.0336
    qber_std: float = 0.0054
    rng_seed: int = 1

    def __post_init__(self):
        if not self.duration_hours > 0:
            raise ValueError("session duration must be > 0 h")
        if not 0 < self.qber_mean <= 0.5:
            raise ValueError("session qber_mean must lie in (0, 0.5]")
        if not 0 <= self.qber_std < self.qber_mean:
            raise ValueError("session qber_std must lie in [0, qber_mean)")


@dataclass(frozen=True)
class SessionBlock:
    timestamp_s: float
    qber: float
    secure_finite_bps: float


@dataclass(frozen=True)
class SessionResult:
    blocks: tuple[SessionBlock, ...]
    block_duration_s: float
    qber_mean: float
    qber_std: float
    secure_mean_bps: float
    secure_std_bps: float
    histogram_edges: tuple[float, ...]
    histogram_counts: tuple[int, ...]
    seed: int

    def summary_lines(self) -> list[tuple[str, float]]:
        return [
            ("blocks", len(self.blocks)),
            ("block_duration_s", self.block_duration_s),
            ("qber_mean", self.qber_mean),
            ("qber_std", self.qber_std),
            ("secure_mean_bps", self.secure_mean_bps),
            ("secure_std_bps", self.secure_std_bps),
            ("seed", self.seed),
        ]


QBER_HISTOGRAM_EDGES = tuple(float(x) for x in np.linspace(0.0, 0.08, 41))


def block_duration_s(s: Scenario) -> float:
    return s.protocol.block_size_sifted / simulate_point(s).rate.sifted_rate_bps


def emulate_session(s: Scenario, spec: SessionSpec, threads: int | None = None) -> SessionResult:
    """Per-block QBER drawn from a truncated normal; secure rate recomputed per block."""
    base = simulate_point(s)
    sifted = base.rate.sifted_rate_bps
    if sifted <= 0:
        raise ModelInconsistencyError("scenario has zero sifted rate; nothing to emulate")
    duration = s.protocol.block_size_sifted / sifted
    n_blocks = int(spec.duration_hours * 3600.0 // duration)

    if spec.qber_std == 0:
        draws = np.full(n_blocks, spec.qber_mean)
    else:
        rng = np.random.default_rng(spec.rng_seed)
        a = (0.0 - spec.qber_mean) / spec.qber_std
        b = (0.5 - spec.qber_mean) / spec.qber_std
        draws = truncnorm.rvs(a, b, loc=spec.qber_mean, scale=spec.qber_std, size=n_blocks, random_state=rng)

    eta, y0 = base.link.eta, base.link.y0
    signal = -math.expm1(-eta * s.protocol.mu)
    q_mu = base.table.q_mu

    def block(args: tuple[int, float]) -> SessionBlock:
        k, qber = args
        e_opt = min(0.1, max(0.0, (qber * q_mu - 0.5 * y0) / signal))
        proto = replace(s.protocol, e_opt=e_opt)
        table = channel_gains(eta, y0, e_opt, proto.mu, proto.nu)
        rate = secure_key_rate(proto, table, decoy_bounds(proto, table))
        return SessionBlock(k * duration, rate.qber, rate.secure_rate_finite_bps)

    blocks = parallel_map(block, enumerate(float(q) for q in draws), threads)
    qbers = np.array([b.qber for b in blocks])
    secure = np.array([b.secure_finite_bps for b in blocks])
    counts, _ = np.histogram(qbers, bins=QBER_HISTOGRAM_EDGES)
    return SessionResult(
        blocks=tuple(blocks),
        block_duration_s=duration,
        qber_mean=float(qbers.mean()),
        qber_std=float(qbers.std(ddof=1)) if len(qbers) > 1 else 0.0,
        secure_mean_bps=float(secure.mean()),
        secure_std_bps=float(secure.std(ddof=1)) if len(secure) > 1 else 0.0,
        histogram_edges=QBER_HISTOGRAM_EDGES,
        histogram_counts=tuple(int(c) for c in counts),
        seed=spec.rng_seed,
    )


@dataclass(frozen=True)
class BandwidthPlan:
    power_per_direction_mw: float
    aggregate_bidirectional_tbps: float

    @property
    def combined_power_mw(self) -> float:
        return 2.0 * self.power_per_direction_mw


def plan_bandwidth(cores: int, channels_per_core_per_direction: int,
                   power_per_channel_mw: float, rate_per_channel_gbps: float) -> BandwidthPlan:
    for name, v in (("cores", cores), ("channels", channels_per_core_per_direction),
                    ("power_per_channel_mw", power_per_channel_mw), ("rate_per_channel_gbps", rate_per_channel_gbps)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    return BandwidthPlan(
        power_per_direction_mw=cores * channels_per_core_per_direction * power_per_channel_mw,
        aggregate_bidirectional_tbps=cores * 2 * channels_per_core_per_direction * rate_per_channel_gbps / 1000.0,
    )
