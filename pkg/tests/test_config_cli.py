import os
import subprocess
import sys
from dataclasses import replace

import pytest

from mcfqkd.cli import main
from mcfqkd.config import (
    ConfigInvariantError,
    ConfigParseError,
    UnknownKeyError,
    config_hash,
    load_config,
    parse_config_text,
    write_config,
)
from mcfqkd.engine import Scenario, SessionSpec, SweepSpec, emulate_session, simulate_point, sweep_power
from mcfqkd.fiber import ClassicalChannel, ChannelPlan, derive_intercore_spectrum, worst_case_raman_coefficient
from mcfqkd.tables import (
    MissingMetadataError,
    NonMonotoneSpectrumError,
    TooFewSamplesError,
    builtin_spectrum_path,
    format_spectrum_csv,
    ingest_spectrum_csv,
    parse_spectrum_csv,
    read_results_csv,
)

from conftest import CONFIGS

SPECTRUM_META = "# launch_dbm=0\n# length_km=53\n# direction=backward\n"


def _write(tmp_path, text, name="c.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        s = load_config(_write(tmp_path, ""))
        assert s == Scenario()
        assert s.fiber.length_km == 53.0
        assert [c.launch_w for c in s.plan.classical] == [1e-3, 1e-3]

    def test_shipped_default_config_matches_defaults(self):
        assert load_config(CONFIGS / "default.yaml") == Scenario()

    def test_control_override(self, tmp_path):
        s = load_config(_write(tmp_path, "mode: dual_ssmf_control\nfiber:\n  length_km: 50\n"))
        assert s.mode == "dual_ssmf_control"
        assert s.fiber.length_km == 50

    def test_invalid_efficiency_names_key(self, tmp_path):
        with pytest.raises(ConfigInvariantError, match="detector.efficiency"):
            load_config(_write(tmp_path, "detector:\n  efficiency: 1.5\n"))

    @pytest.mark.parametrize("text, key", [
        ("detector:\n  effciency: 0.2\n", "detector.effciency"),
        ("fibre: {}\n", "fibre"),
        ("plan:\n  classical:\n    - {core: 1, power: 1}\n", "plan.classical[0].power"),
    ])
    def test_unknown_keys(self, tmp_path, text, key):
        with pytest.raises(UnknownKeyError, match=key.replace("[", r"\[").replace("]", r"\]")):
            load_config(_write(tmp_path, text))

    def test_yaml_error_reports_line(self, tmp_path):
        with pytest.raises(ConfigParseError, match="line 3"):
            load_config(_write(tmp_path, "fiber:\n  length_km: 53\n  core_count: 7: 8\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigParseError):
            load_config(tmp_path / "nope.yaml")

    def test_non_numeric_core_count(self):
        with pytest.raises(ConfigInvariantError, match="core_count"):
            parse_config_text("fiber:\n  core_count: seven\n")

    def test_launch_units(self):
        s = parse_config_text(
            "plan:\n  classical:\n"
            "    - {core: 2, launch_mw: 5}\n"
            "    - {core: 3, direction: counter, launch_dbm: 10}\n"
        )
        assert [c.launch_w for c in s.plan.classical] == pytest.approx([5e-3, 1e-2])

    def test_builtin_spectrum_reference(self):
        s = parse_config_text("raman:\n  spectrum_csv: builtin\n")
        assert s.kappa_r == pytest.approx(5.0e-16, rel=1e-9)

    def test_round_trip(self, calibrated):
        variants = [
            Scenario(),
            calibrated,
            replace(calibrated, mode="dual_ssmf_control", control_loss_db=13.0),
            replace(Scenario(), plan=ChannelPlan(
                classical=(ClassicalChannel(2, 1551.0, "counter", 3e-3),),
                auxiliary=(ClassicalChannel(5, 1530.0, "co", 1e-4),))),
        ]
        for s in variants:
            assert parse_config_text(write_config(s, "header line")) == s

    def test_hash_tracks_content(self, calibrated):
        assert config_hash(Scenario()) == config_hash(Scenario())
        assert config_hash(Scenario()) != config_hash(calibrated)


class TestSpectrumFiles:
    def test_two_line_file(self):
        spec = parse_spectrum_csv(SPECTRUM_META + "wavelength_nm,density_dbm_per_nm\n1500,-90\n1600,-95\n")
        assert spec.wavelengths_nm == (1500.0, 1600.0)
        assert spec.direction == "backward"

    def test_builtin_file_gives_default_kappa(self):
        spec = ingest_spectrum_csv(builtin_spectrum_path())
        assert worst_case_raman_coefficient(derive_intercore_spectrum(spec, 40.0)) == pytest.approx(5.0e-16, rel=1e-9)

    def test_descending(self):
        with pytest.raises(NonMonotoneSpectrumError):
            parse_spectrum_csv(SPECTRUM_META + "wavelength_nm,density_dbm_per_nm\n1600,-90\n1500,-95\n")

    def test_missing_metadata(self):
        with pytest.raises(MissingMetadataError, match="length_km"):
            parse_spectrum_csv("# launch_dbm=0\n# direction=forward\nwavelength_nm,density_dbm_per_nm\n1,2\n3,4\n")

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            parse_spectrum_csv(SPECTRUM_META + "wavelength_nm,density_dbm_per_nm\n1500,-90\n")

    def test_format_round_trip(self):
        spec = ingest_spectrum_csv(builtin_spectrum_path())
        assert parse_spectrum_csv(format_spectrum_csv(spec)) == spec


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCli:
    def test_simulate_default(self, capsys):
        code, out, _ = _run(capsys, "simulate", "--config", str(CONFIGS / "default.yaml"))
        assert code == 0
        lines = out.splitlines()
        assert "total_loss_db,14.10" in lines
        assert {"fiber_loss_db,12.40", "fanout_loss_db,1.10", "filter_loss_db,0.60"} <= set(lines)
        assert any(l.startswith("# config_sha256=") for l in lines)
        assert "# seed=none" in lines

    def test_simulate_out_file(self, capsys, tmp_path):
        out = tmp_path / "point.csv"
        assert main(["simulate", "--config", str(CONFIGS / "default.yaml"), "--out", str(out)]) == 0
        rows = dict(l.split(",", 1) for l in out.read_text().splitlines() if not l.startswith("#"))
        expected = simulate_point(Scenario())
        assert float(rows["secure_finite_bps"]) == pytest.approx(expected.secure_finite_bps, rel=1e-9)

    def test_sweep_csv_fidelity(self, capsys, tmp_path):
        out = tmp_path / "sweep.csv"
        cfg = CONFIGS / "baseline_calibrated.yaml"
        code = main(["sweep", "--config", str(cfg), "--min-mw", "2", "--max-mw", "3000",
                     "--points", "12", "--log", "--out", str(out)])
        assert code == 0
        columns, rows, meta = read_results_csv(out.read_text())
        assert columns == ["combined_mw", "qber", "sifted_bps", "secure_asym_bps",
                           "secure_finite_bps", "raman_w", "leakage_w"]
        assert "config_sha256" in meta and meta["seed"] == "none"
        expected = sweep_power(load_config(cfg), SweepSpec(2, 3000, 12, "log"))
        for row, (mw, r) in zip(rows, expected):
            ref = (mw, r.qber, r.rate.sifted_rate_bps, r.rate.secure_rate_asymptotic_bps,
                   r.secure_finite_bps, r.noise.raman_in_band_w, r.noise.leakage_w)
            assert row == pytest.approx(list(ref), rel=1e-9)

    def test_sweep_min_above_max_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["sweep", "--config", str(CONFIGS / "default.yaml"),
                  "--min-mw", "10", "--max-mw", "5", "--points", "3"])
        assert exc.value.code == 2

    def test_calibrate_writes_loadable_config(self, capsys, tmp_path, calibrated):
        out = tmp_path / "cal.yaml"
        code, stdout, _ = _run(capsys, "calibrate", "--config", str(CONFIGS / "default.yaml"), "--out", str(out))
        assert code == 0
        assert "detector.efficiency" in stdout
        assert load_config(out) == calibrated
        assert out.read_text().startswith("# calibrated scenario")

    def test_calibrate_infeasible_exit_code(self, capsys, tmp_path):
        code, _, err = _run(capsys, "calibrate", "--config", str(CONFIGS / "default.yaml"),
                            "--out", str(tmp_path / "x.yaml"), "--sifted-bps", "5e9")
        assert code == 5
        assert "sifted" in err
        assert not (tmp_path / "x.yaml").exists()

    def test_session_csv(self, capsys, tmp_path, calibrated):
        out = tmp_path / "session.csv"
        code, stdout, _ = _run(capsys, "session", "--config", str(CONFIGS / "baseline_calibrated.yaml"),
                               "--hours", "1", "--seed", "5", "--out", str(out))
        assert code == 0
        assert "# seed=5" in stdout
        columns, rows, meta = read_results_csv(out.read_text())
        assert columns == ["timestamp_s", "qber", "secure_finite_bps"]
        expected = emulate_session(calibrated, SessionSpec(1, 0.0336, 0.0054, 5))
        assert len(rows) == len(expected.blocks)
        for row, block in zip(rows, expected.blocks):
            assert row == pytest.approx([block.timestamp_s, block.qber, block.secure_finite_bps], rel=1e-9)
        assert float(meta["qber_mean"]) == pytest.approx(expected.qber_mean, rel=1e-9)

    def test_fit_raman(self, capsys):
        code, out, _ = _run(capsys, "fit-raman", "--config", str(CONFIGS / "baseline_calibrated.yaml"))
        assert code == 0
        assert "configured_in_interval,true" in out.splitlines()

    def test_plan(self, capsys):
        code, out, _ = _run(capsys, "plan", "--cores", "5", "--channels", "64", "--power-mw", "1", "--gbps", "10")
        assert code == 0
        assert out.strip() == "320 mW/direction, 6.4 Tb/s"

    def test_plan_with_config(self, capsys):
        code, out, _ = _run(capsys, "plan", "--cores", "5", "--channels", "64", "--power-mw", "1",
                            "--gbps", "10", "--config", str(CONFIGS / "baseline_calibrated.yaml"))
        assert code == 0
        rows = dict(l.split(",", 1) for l in out.splitlines()[1:] if not l.startswith("#"))
        assert float(rows["combined_mw"]) == 640
        assert float(rows["secure_finite_bps"]) > 0

    @pytest.mark.parametrize("text, code", [
        ("fiber: {length_km: 53\n", 2),
        ("detector: {bogus: 1}\n", 3),
        ("detector: {efficiency: 1.5}\n", 4),
        ("raman: {spectrum_csv: missing.csv}\n", 2),
    ])
    def test_exit_codes(self, capsys, tmp_path, text, code):
        got, _, err = _run(capsys, "simulate", "--config", str(_write(tmp_path, text)))
        assert got == code
        assert err.startswith("error:")

    def test_module_entry_point_honours_thread_env(self, tmp_path):
        env = dict(os.environ, SIM_THREADS="2")
        proc = subprocess.run(
            [sys.executable, "-m", "mcfqkd", "sweep", "--config", str(CONFIGS / "default.yaml"),
             "--min-mw", "1", "--max-mw", "10", "--points", "4"],
            capture_output=True, text=True, env=env, check=False,
        )
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.count("\n") == 3 + 1 + 4

    def test_bad_thread_env_is_invariant_error(self, capsys, monkeypatch):
        monkeypatch.setenv("SIM_THREADS", "zero")
        code, _, err = _run(capsys, "sweep", "--config", str(CONFIGS / "default.yaml"),
                            "--min-mw", "1", "--max-mw", "10", "--points", "4")
        assert code == 4
        assert "SIM_THREADS" in err
