"""YAML scenario configuration: strict loading, defaults and round-trip writing."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .decoy import ProtocolParams
from .engine import Scenario
from .fiber import (
    RAYLEIGH_OFFSET_DB,
    ChannelPlan,
    ClassicalChannel,
    FiberSpec,
    QuantumChannel,
    derive_intercore_spectrum,
    worst_case_raman_coefficient,
)
from .noise import DetectorSpec, FilterSpec
from .tables import SpectrumError, builtin_spectrum_path, ingest_spectrum_csv
from .units import dbm_to_watts


class ConfigError(Exception):
    exit_code = 1


class ConfigParseError(ConfigError):
    exit_code = 2


class UnknownKeyError(ConfigError):
    exit_code = 3


class ConfigInvariantError(ConfigError):
    exit_code = 4


SECTIONS = ("mode", "control_loss_db", "fiber", "plan", "filter", "detector", "protocol", "raman")
FIBER_KEYS = {f.name for f in fields(FiberSpec)}
FILTER_KEYS = {f.name for f in fields(FilterSpec)}
# detector.clock_hz follows protocol.clock_hz
DETECTOR_KEYS = {f.name for f in fields(DetectorSpec)} - {"clock_hz"}
PROTOCOL_KEYS = {f.name for f in fields(ProtocolParams)}
PLAN_KEYS = {"quantum", "classical", "auxiliary"}
QUANTUM_KEYS = {"core", "wavelength_nm"}
CHANNEL_KEYS = {"core", "wavelength_nm", "direction", "launch_w", "launch_mw", "launch_dbm"}
RAMAN_KEYS = {"kappa_r", "spectrum_csv", "rayleigh_offset_db"}
PER_CORE_KEYS = ("attenuation_db_per_km", "excess_loss_db")
MATRIX_KEYS = ("leakage_forward_db", "leakage_backward_db")


def _check_keys(section: str, data: Any, allowed: set[str]) -> dict:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigInvariantError(f"{section} must be a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - allowed)
    if unknown:
        names = ", ".join(f"{section}.{k}" if section else k for k in unknown)
        raise UnknownKeyError(f"unknown configuration key(s): {names}")
    return dict(data)


def _build(section: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        if not msg.startswith(section):
            msg = f"{section}: {msg}"
        raise ConfigInvariantError(msg) from exc


def _number(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvariantError(f"{section}.{key} must be a number, got {value!r}")
    return float(value)


def _fiber(data: Any) -> FiberSpec:
    raw = _check_keys("fiber", data, FIBER_KEYS)
    count = _number("fiber", "core_count", raw.get("core_count", FiberSpec.core_count))
    if count != int(count) or count < 1:
        raise ConfigInvariantError(f"fiber.core_count must be a positive integer, got {raw['core_count']!r}")
    n = int(count)
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        if key in PER_CORE_KEYS:
            if isinstance(value, (list, tuple)):
                kwargs[key] = tuple(_number("fiber", key, v) for v in value)
            else:
                kwargs[key] = (_number("fiber", key, value),) * n
        elif key == "fanout_loss_db":
            if isinstance(value, (list, tuple)) and value and isinstance(value[0], (list, tuple)):
                kwargs[key] = tuple(tuple(_number("fiber", key, x) for x in pair) for pair in value)
            elif isinstance(value, (list, tuple)) and len(value) == 2:
                kwargs[key] = (tuple(_number("fiber", key, x) for x in value),) * n
            else:
                v = _number("fiber", key, value)
                kwargs[key] = ((v, v),) * n
        elif key in MATRIX_KEYS:
            if isinstance(value, (list, tuple)):
                kwargs[key] = tuple(tuple(_number("fiber", key, x) for x in row) for row in value)
            else:
                v = _number("fiber", key, value)
                kwargs[key] = tuple(tuple(v for _ in range(n)) for _ in range(n))
        elif key == "core_count":
            kwargs[key] = n
        else:
            kwargs[key] = _number("fiber", key, value)
    if n != FiberSpec.core_count:
        # A non-default core count cannot reuse the 7-core defaults; broadcast them.
        base = FiberSpec()
        kwargs.setdefault("attenuation_db_per_km", (base.attenuation_db_per_km[0],) * n)
        kwargs.setdefault("excess_loss_db", (base.excess_loss_db[0],) * n)
        kwargs.setdefault("fanout_loss_db", (base.fanout_loss_db[0],) + (base.fanout_loss_db[1],) * (n - 1))
        for key in MATRIX_KEYS:
            v = getattr(base, key)[1][0]
            kwargs.setdefault(key, tuple(tuple(v for _ in range(n)) for _ in range(n)))
    return _build("fiber", FiberSpec, **kwargs)


def _channel(section: str, data: Any) -> ClassicalChannel:
    raw = _check_keys(section, data, CHANNEL_KEYS)
    if "core" not in raw:
        raise ConfigInvariantError(f"{section}.core is required")
    launches = [k for k in ("launch_w", "launch_mw", "launch_dbm") if k in raw]
    if len(launches) > 1:
        raise ConfigInvariantError(f"{section}: give only one of launch_w, launch_mw, launch_dbm")
    kwargs: dict[str, Any] = {"core": raw["core"]}
    if "wavelength_nm" in raw:
        kwargs["wavelength_nm"] = _number(section, "wavelength_nm", raw["wavelength_nm"])
    if "direction" in raw:
        kwargs["direction"] = raw["direction"]
    if "launch_w" in raw:
        kwargs["launch_w"] = _number(section, "launch_w", raw["launch_w"])
    elif "launch_mw" in raw:
        kwargs["launch_w"] = _number(section, "launch_mw", raw["launch_mw"]) * 1e-3
    elif "launch_dbm" in raw:
        kwargs["launch_w"] = dbm_to_watts(_number(section, "launch_dbm", raw["launch_dbm"]))
    return _build(section, ClassicalChannel, **kwargs)


def _plan(data: Any) -> ChannelPlan:
    raw = _check_keys("plan", data, PLAN_KEYS)
    kwargs: dict[str, Any] = {}
    if "quantum" in raw:
        q = _check_keys("plan.quantum", raw["quantum"], QUANTUM_KEYS)
        kwargs["quantum"] = _build("plan.quantum", QuantumChannel, **q)
    for group in ("classical", "auxiliary"):
        if group in raw:
            items = raw[group] or []
            if not isinstance(items, list):
                raise ConfigInvariantError(f"plan.{group} must be a list of channels")
            kwargs[group] = tuple(_channel(f"plan.{group}[{i}]", item) for i, item in enumerate(items))
    return _build("plan", ChannelPlan, **kwargs)


def _kappa(data: Any, base_dir: Path) -> float | None:
    raw = _check_keys("raman", data, RAMAN_KEYS)
    if "kappa_r" in raw and "spectrum_csv" in raw:
        raise ConfigInvariantError("raman: give either kappa_r or spectrum_csv, not both")
    if "spectrum_csv" in raw:
        ref = str(raw["spectrum_csv"])
        path = builtin_spectrum_path() if ref == "builtin" else (base_dir / ref)
        offset = _number("raman", "rayleigh_offset_db", raw.get("rayleigh_offset_db", RAYLEIGH_OFFSET_DB))
        try:
            spectrum = ingest_spectrum_csv(path)
            return worst_case_raman_coefficient(derive_intercore_spectrum(spectrum, offset))
        except OSError as exc:
            raise ConfigParseError(f"raman.spectrum_csv: cannot read {path}: {exc}") from exc
        except SpectrumError as exc:
            raise ConfigInvariantError(f"raman.spectrum_csv: {exc}") from exc
        except ValueError as exc:
            raise ConfigInvariantError(f"raman: {exc}") from exc
    if "rayleigh_offset_db" in raw:
        raise ConfigInvariantError("raman.rayleigh_offset_db only applies together with spectrum_csv")
    if "kappa_r" in raw:
        return _number("raman", "kappa_r", raw["kappa_r"])
    return None


def scenario_from_mapping(doc: Any, base_dir: Path | str = ".") -> Scenario:
    doc = _check_keys("", doc, set(SECTIONS))
    protocol_raw = _check_keys("protocol", doc.get("protocol"), PROTOCOL_KEYS)
    protocol = _build("protocol", ProtocolParams,
                      **{k: _number("protocol", k, v) for k, v in protocol_raw.items()})
    detector_raw = _check_keys("detector", doc.get("detector"), DETECTOR_KEYS)
    detector = _build("detector", DetectorSpec, clock_hz=protocol.clock_hz,
                      **{k: _number("detector", k, v) for k, v in detector_raw.items()})
    filter_raw = _check_keys("filter", doc.get("filter"), FILTER_KEYS)
    filt = _build("filter", FilterSpec, **{k: _number("filter", k, v) for k, v in filter_raw.items()})

    kwargs: dict[str, Any] = dict(
        fiber=_fiber(doc.get("fiber")),
        plan=_plan(doc.get("plan")),
        filter=filt,
        detector=detector,
        protocol=protocol,
    )
    kappa = _kappa(doc.get("raman"), Path(base_dir))
    if kappa is not None:
        kwargs["kappa_r"] = kappa
    if "mode" in doc:
        kwargs["mode"] = doc["mode"]
    if doc.get("control_loss_db") is not None:
        kwargs["control_loss_db"] = _number("", "control_loss_db", doc["control_loss_db"])
    return _build("scenario", Scenario, **kwargs)


def parse_config_text(text: str, base_dir: Path | str = ".") -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else "?"
        raise ConfigParseError(f"line {line}: {exc.problem or exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(str(exc)) from exc
    return scenario_from_mapping(doc or {}, base_dir)


def load_config(path: str | Path) -> Scenario:
    """Fully defaulted scenario from a YAML file; an empty file gives the 53 km seven-core default setup."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, path.parent)


def scenario_to_mapping(s: Scenario) -> dict:
    def channel(ch: ClassicalChannel) -> dict:
        return {"core": ch.core, "wavelength_nm": ch.wavelength_nm, "direction": ch.direction, "launch_w": ch.launch_w}

    fiber = asdict(s.fiber)
    fiber["attenuation_db_per_km"] = list(s.fiber.attenuation_db_per_km)
    fiber["excess_loss_db"] = list(s.fiber.excess_loss_db)
    fiber["fanout_loss_db"] = [list(p) for p in s.fiber.fanout_loss_db]
    for key in MATRIX_KEYS:
        fiber[key] = [list(row) for row in getattr(s.fiber, key)]
    detector = asdict(s.detector)
    detector.pop("clock_hz")
    return {
        "mode": s.mode,
        "control_loss_db": s.control_loss_db,
        "fiber": fiber,
        "plan": {
            "quantum": {"core": s.plan.quantum.core, "wavelength_nm": s.plan.quantum.wavelength_nm},
            "classical": [channel(ch) for ch in s.plan.classical],
            "auxiliary": [channel(ch) for ch in s.plan.auxiliary],
        },
        "filter": asdict(s.filter),
        "detector": detector,
        "protocol": asdict(s.protocol),
        "raman": {"kappa_r": s.kappa_r},
    }


def write_config(s: Scenario, header: str = "") -> str:
    body = yaml.safe_dump(scenario_to_mapping(s), sort_keys=False, default_flow_style=None, width=100)
    if header:
        body = "".join(f"# {line}\n" for line in header.splitlines()) + body
    return body


def config_hash(s: Scenario) -> str:
    canonical = json.dumps(scenario_to_mapping(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
