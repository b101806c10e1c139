"""Command-line interface.

Exit codes: 0 success, 2 parse/usage error, 3 unknown config key,
4 invariant violation, 5 calibration infeasible or inconsistent model.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, config_hash, load_config, write_config
from .engine import (
    CalibrationInfeasible,
    CalibrationTargets,
    ModelInconsistencyError,
    SessionSpec,
    SweepSpec,
    calibrate_baseline,
    emulate_session,
    fit_raman_coefficient,
    plan_bandwidth,
    simulate_point,
    sweep_power,
)
from .tables import ResultsTable, SpectrumError, fmt, key_value_csv

log = logging.getLogger("mcfqkd")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVARIANT = 4
EXIT_INFEASIBLE = 5

SWEEP_COLUMNS = ("combined_mw", "qber", "sifted_bps", "secure_asym_bps", "secure_finite_bps", "raman_w", "leakage_w")
SESSION_COLUMNS = ("timestamp_s", "qber", "secure_finite_bps")
LOSS_KEYS = ("fiber_loss_db", "fanout_loss_db", "filter_loss_db", "attenuator_db", "total_loss_db")


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
        log.info("wrote %s", path)


def _stamp(scenario, seed=None) -> list[tuple[str, object]]:
    return [("config_sha256", config_hash(scenario)), ("seed", "none" if seed is None else seed)]


def _print_stamp(scenario, seed=None) -> None:
    for key, value in _stamp(scenario, seed):
        print(f"# {key}={value}")


def cmd_simulate(args) -> int:
    s = load_config(args.config)
    result = simulate_point(s)
    _print_stamp(s)
    rows = result.provenance()
    for key, value in rows:
        if key in LOSS_KEYS:
            print(f"{key},{value:.2f}")
    for key, value in rows:
        if key not in LOSS_KEYS:
            print(f"{key},{fmt(value)}")
    _write(args.out, "".join(f"# {k}={v}\n" for k, v in _stamp(s)) + key_value_csv(rows))
    return EXIT_OK


def cmd_sweep(args, parser) -> int:
    if not args.min_mw < args.max_mw:
        parser.error("--min-mw must be smaller than --max-mw")
    if args.points < 2:
        parser.error("--points must be at least 2")
    s = load_config(args.config)
    spec = SweepSpec(args.min_mw, args.max_mw, args.points, "log" if args.log else "linear")
    table = ResultsTable(
        columns=SWEEP_COLUMNS,
        rows=[
            (mw, r.qber, r.rate.sifted_rate_bps, r.rate.secure_rate_asymptotic_bps,
             r.secure_finite_bps, r.noise.raman_in_band_w, r.noise.leakage_w)
            for mw, r in sweep_power(s, spec)
        ],
        comments=_stamp(s) + [("scale", spec.scale)],
        trailer=[],
    )
    text = table.to_csv()
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    s = load_config(args.config)
    targets = CalibrationTargets(
        sifted_rate_bps=args.sifted_bps,
        qber=args.qber,
        secure_finite_bps=None if args.no_secure_target else args.secure_bps,
    )
    t0 = time.perf_counter()
    calibrated, report = calibrate_baseline(s, targets)
    lines = report.lines() + [f"elapsed_s = {time.perf_counter() - t0:.3f}"]
    _print_stamp(calibrated)
    for line in lines:
        print(line)
    header = "calibrated scenario\n" + "\n".join(lines) + f"\nsource config: {args.config}"
    _write(args.out, write_config(calibrated, header))
    return EXIT_OK


def cmd_session(args) -> int:
    s = load_config(args.config)
    spec = SessionSpec(args.hours, args.qber_mean, args.qber_std, args.seed)
    result = emulate_session(s, spec)
    summary = result.summary_lines()
    hist = [(f"hist[{lo:.4f},{hi:.4f})", c) for lo, hi, c in
            zip(result.histogram_edges, result.histogram_edges[1:], result.histogram_counts)]
    table = ResultsTable(
        columns=SESSION_COLUMNS,
        rows=[(b.timestamp_s, b.qber, b.secure_finite_bps) for b in result.blocks],
        comments=_stamp(s, args.seed) + [("hours", args.hours), ("qber_mean_spec", args.qber_mean),
                                         ("qber_std_spec", args.qber_std)],
        trailer=summary + hist,
    )
    _print_stamp(s, args.seed)
    for key, value in summary:
        print(f"{key},{fmt(value)}")
    _write(args.out, table.to_csv())
    return EXIT_OK


def cmd_fit_raman(args) -> int:
    s = load_config(args.config)
    fit = fit_raman_coefficient(s)
    _print_stamp(s)
    print(f"kappa_lo,{fmt(fit.kappa_lo)}")
    print(f"kappa_hi,{fmt(fit.kappa_hi)}")
    print(f"recommended,{fmt(fit.recommended)}")
    print(f"configured,{fmt(s.kappa_r)}")
    print(f"configured_in_interval,{str(fit.contains(s.kappa_r)).lower()}")
    for note in fit.notes:
        print(f"# {note}")
    return EXIT_OK


def cmd_plan(args) -> int:
    plan = plan_bandwidth(args.cores, args.channels, args.power_mw, args.gbps)
    print(f"{plan.power_per_direction_mw:g} mW/direction, {plan.aggregate_bidirectional_tbps:g} Tb/s")
    if args.config:
        s = load_config(args.config)
        point = simulate_point(s.with_combined_power(plan.combined_power_mw))
        _print_stamp(s)
        print(f"combined_mw,{fmt(plan.combined_power_mw)}")
        print(f"qber,{fmt(point.qber)}")
        print(f"secure_finite_bps,{fmt(point.secure_finite_bps)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcfqkd", description="QKD over multicore fiber simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="evaluate a single operating point")
    p.add_argument("--config", required=True)
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="combined classical launch power sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--min-mw", type=float, required=True)
    p.add_argument("--max-mw", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--log", action="store_true", help="logarithmic grid (default linear)")
    p.add_argument("--out")

    p = sub.add_parser("calibrate", help="fit detector efficiency, e_opt and f_ec to measured targets")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sifted-bps", type=float, default=CalibrationTargets.sifted_rate_bps)
    p.add_argument("--qber", type=float, default=CalibrationTargets.qber)
    p.add_argument("--secure-bps", type=float, default=CalibrationTargets.secure_finite_bps)
    p.add_argument("--no-secure-target", action="store_true")

    p = sub.add_parser("session", help="long-run per-block emulation")
    p.add_argument("--config", required=True)
    p.add_argument("--hours", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--qber-mean", type=float, default=SessionSpec.qber_mean)
    p.add_argument("--qber-std", type=float, default=SessionSpec.qber_std)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit-raman", help="admissible worst-case Raman coefficient interval")
    p.add_argument("--config", required=True)

    p = sub.add_parser("plan", help="DWDM power and capacity plan")
    p.add_argument("--cores", type=int, required=True)
    p.add_argument("--channels", type=int, required=True, help="channels per core per direction")
    p.add_argument("--power-mw", type=float, required=True)
    p.add_argument("--gbps", type=float, required=True)
    p.add_argument("--config", help="also evaluate the scenario at the planned combined power")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "simulate": cmd_simulate,
        "sweep": lambda a: cmd_sweep(a, parser),
        "calibrate": cmd_calibrate,
        "session": cmd_session,
        "fit-raman": cmd_fit_raman,
        "plan": cmd_plan,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, SpectrumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (CalibrationInfeasible, ModelInconsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
