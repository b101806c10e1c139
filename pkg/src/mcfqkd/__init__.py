"""Quantum key distribution coexisting with classical data over multicore fiber."""
from .config import load_config, write_config
from .decoy import ProtocolParams, decoy_bounds, finite_size_factor, gain_and_error, secure_key_rate
from .engine import (
    CalibrationTargets,
    Scenario,
    SessionSpec,
    SweepSpec,
    calibrate_baseline,
    emulate_session,
    fit_raman_coefficient,
    plan_bandwidth,
    simulate_point,
    sweep_power,
)
from .fiber import ChannelPlan, ClassicalChannel, FiberSpec, QuantumChannel, RamanSpectrum
from .noise import DetectorSpec, FilterSpec

__version__ = "0.1.0"
