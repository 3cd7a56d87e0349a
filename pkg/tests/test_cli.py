"""End-to-end CLI behavior: exit codes, emitted files, reproducibility."""

import hashlib
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from qswitch.calibration import read_waveform_raw
from qswitch.cli import main
from qswitch.config import parse_config

DEVICE = """\
[device]
delta = 2.417 GHz
wr = 2.417 GHz
g = 9.14 MHz
"""

WAVEFORM_CFG = DEVICE + """\
[drive]
lambda_z = 180.0376 MHz
"""

SPECTRUM_CFG = DEVICE + """\
[epsilon_sweep]
start = -40 MHz
stop = 40 MHz
points = 3
[probe]
points = 9
"""

ANTICROSS_CFG = DEVICE + """\
[epsilon_sweep]
start = -50 MHz
stop = 50 MHz
points = 11
"""


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("QSWITCH_OUT", raising=False)


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_stderr_error(capsys):
    err = capsys.readouterr().err.strip()
    assert err.count("\n") == 0, "error output must be a single JSON line"
    return json.loads(err)


class TestExitCodes:
    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["waveform", "--config", str(tmp_path / "absent.cfg")])
        assert code == 4
        payload = read_stderr_error(capsys)
        assert payload["exit_code"] == 4
        assert payload["error"]["type"] == "FileNotFoundError"

    def test_bad_config(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, DEVICE + "[device]\ncolor = blue\n")
        assert main(["waveform", "--config", cfg]) == 2
        payload = read_stderr_error(capsys)
        assert payload["error"]["type"] == "ConfigError"
        assert "unknown key" in payload["error"]["message"]

    def test_domain_excursion_is_numerical_failure(self, tmp_path, capsys):
        # 2 * 1.4 GHz swings the gap far outside the calibrated 2-5 GHz map.
        cfg = write_cfg(tmp_path, DEVICE + "[drive]\nlambda_z = 1.4 GHz\n")
        assert main(["waveform", "--config", cfg,
                     "--out", str(tmp_path / "o")]) == 3
        payload = read_stderr_error(capsys)
        assert payload["error"]["type"] == "DomainError"

    def test_workers_must_be_positive(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, WAVEFORM_CFG)
        assert main(["waveform", "--config", cfg, "--workers", "0"]) == 2

    def test_pinned_protocol_conflict(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "[run]\nprotocol = storage\n" + DEVICE)
        assert main(["waveform", "--config", cfg]) == 2
        payload = read_stderr_error(capsys)
        assert "pins protocol" in payload["error"]["message"]

    def test_bad_format_flag(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, WAVEFORM_CFG)
        assert main(["waveform", "--config", cfg, "--format", "png"]) == 2


class TestWaveformRun:
    def test_emits_all_files(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, WAVEFORM_CFG)
        out = tmp_path / "out"
        assert main(["waveform", "--config", cfg, "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {"waveform.csv", "summary.json", "waveform.svg",
                         "waveform.qswf", "manifest.json"}

        lines = (out / "waveform.csv").read_text().splitlines()
        assert lines[0] == "time_s,volts"
        assert len(lines) == 1 + 240  # 100 ns at 2.4 GS/s

        summary = json.loads((out / "summary.json").read_text())
        assert summary["n_samples"] == 240
        assert summary["v_min"] < summary["v_max"]

        ET.fromstring((out / "waveform.svg").read_text())

        wf = read_waveform_raw(out / "waveform.qswf")
        assert wf.samples.size == 240
        csv_volts = [float(l.split(",")[1]) for l in lines[1:]]
        np.testing.assert_array_equal(wf.samples, csv_volts)

    def test_manifest_checksums_and_echo(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, WAVEFORM_CFG)
        out = tmp_path / "out"
        assert main(["waveform", "--config", cfg, "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["tool"] == "qswitch"
        assert manifest["protocol"] == "waveform"
        assert manifest["workers"] == 1
        assert manifest["duration_seconds"] > 0.0
        assert set(manifest["files"]) == {"waveform.csv", "summary.json",
                                          "waveform.svg", "waveform.qswf"}
        for name, digest in manifest["files"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
        echoed = parse_config(manifest["config"])
        assert echoed.protocol == "waveform"
        assert echoed.out_dir == str(out)
        assert echoed.lambda_z_hz == 180.0376e6

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, WAVEFORM_CFG)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["waveform", "--config", cfg, "--out", str(a)]) == 0
        assert main(["waveform", "--config", cfg, "--out", str(b)]) == 0
        for name in ("waveform.csv", "summary.json", "waveform.svg",
                     "waveform.qswf"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_format_filter(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, WAVEFORM_CFG)
        out = tmp_path / "out"
        assert main(["waveform", "--config", cfg, "--out", str(out),
                     "--format", "csv"]) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {"waveform.csv", "waveform.qswf", "manifest.json"}
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["files"]) == {"waveform.csv", "waveform.qswf"}

    def test_env_overrides_out_flag(self, tmp_path, capsys, monkeypatch):
        cfg = write_cfg(tmp_path, WAVEFORM_CFG)
        env_dir = tmp_path / "from_env"
        monkeypatch.setenv("QSWITCH_OUT", str(env_dir))
        assert main(["waveform", "--config", cfg,
                     "--out", str(tmp_path / "ignored")]) == 0
        assert (env_dir / "waveform.csv").exists()
        assert not (tmp_path / "ignored").exists()

    def test_gain_scales_samples(self, tmp_path, capsys):
        out1, out2 = tmp_path / "g1", tmp_path / "g2"
        cfg1 = write_cfg(tmp_path, WAVEFORM_CFG, "g1.cfg")
        cfg2 = write_cfg(tmp_path, WAVEFORM_CFG + "[waveform]\ngain = -0.5\n",
                         "g2.cfg")
        assert main(["waveform", "--config", cfg1, "--out", str(out1)]) == 0
        assert main(["waveform", "--config", cfg2, "--out", str(out2)]) == 0
        wf1 = read_waveform_raw(out1 / "waveform.qswf")
        wf2 = read_waveform_raw(out2 / "waveform.qswf")
        np.testing.assert_array_equal(wf2.samples, -0.5 * wf1.samples)


class TestSweepReproducibility:
    def test_worker_count_does_not_change_bytes(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SPECTRUM_CFG)
        a, b = tmp_path / "w1", tmp_path / "w8"
        assert main(["spectrum", "--config", cfg, "--out", str(a),
                     "--workers", "1"]) == 0
        assert main(["spectrum", "--config", cfg, "--out", str(b),
                     "--workers", "8"]) == 0
        assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()
        assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
        manifest = json.loads((b / "manifest.json").read_text())
        assert manifest["workers"] == 8

    def test_spectrum_summary(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SPECTRUM_CFG)
        out = tmp_path / "out"
        assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["full_splitting_2g_hz"] == 2 * 9.14e6
        # the sweep includes eps = 0, where the splitting is exactly 2g
        assert summary["min_splitting_hz"] == pytest.approx(2 * 9.14e6, rel=1e-9)


class TestGapCurveRun:
    def test_crossing_marked(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, DEVICE)
        out = tmp_path / "out"
        assert main(["gap-curve", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["crossing_ghz"] == 1e-9 * 2.417e9
        assert summary["crossing_volts"] == pytest.approx(-1.2273411474369,
                                                          abs=1e-10)
        lines = (out / "gap-curve.csv").read_text().splitlines()
        assert lines[0] == "volts,gap_ghz"
        assert len(lines) == 1 + 211

    def test_unreachable_crossing_reports_null_with_reason(self, tmp_path, capsys):
        text = DEVICE.replace("wr = 2.417 GHz", "wr = 6.0 GHz") + """\
[probe]
start = 5.9 GHz
stop = 6.1 GHz
"""
        cfg = write_cfg(tmp_path, text)
        out = tmp_path / "out"
        assert main(["gap-curve", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["crossing_volts"] is None
        assert "outside the calibrated map domain" in summary["crossing_volts_reason"]


class TestAnticrossingRun:
    def test_noiseless_fit_recovers_config(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, ANTICROSS_CFG)
        out = tmp_path / "out"
        assert main(["fit-anticrossing", "--config", cfg, "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["g_rel_error"] < 1e-6
        assert summary["noise_khz"] == 0.0
        lines = (out / "fit-anticrossing.csv").read_text().splitlines()
        assert lines[0] == "epsilon_hz,f_lower_hz,f_upper_hz"
        assert len(lines) == 1 + 11

    def test_seeded_noise_is_reproducible(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, ANTICROSS_CFG + "[anticrossing]\nnoise_khz = 10.0\n")
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["fit-anticrossing", "--config", cfg, "--out", str(a)]) == 0
        assert main(["fit-anticrossing", "--config", cfg, "--out", str(b)]) == 0
        assert (a / "fit-anticrossing.csv").read_bytes() == \
            (b / "fit-anticrossing.csv").read_bytes()
        assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
        summary = json.loads((a / "summary.json").read_text())
        assert 0.0 < summary["g_rel_error"] < 1e-2
