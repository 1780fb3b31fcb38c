import math
import subprocess
import sys

import numpy as np
import pytest

from mzlock import dsp
from mzlock.cli import SWEEPS, main
from mzlock.config import SCHEMA, ConfigError, load_config
from mzlock.experiments import SweepResult
from mzlock.synth import read_interferogram, synthesize


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def all_keys(schema=SCHEMA, prefix=""):
    for k, v in schema.items():
        if isinstance(v, dict):
            yield from all_keys(v, f"{prefix}{k}.")
        else:
            yield prefix + k


# config

def test_defaults_build_objects():
    cfg = load_config()
    assert cfg.mzi().dual
    assert cfg.drive().mode == "digital"
    assert cfg.laser().wavelength_nm == 635.0
    assert cfg.bench().fft_length == 4096


def test_file_and_override_precedence(tmp_path):
    p = tmp_path / "a.toml"
    p.write_text('[drive]\nmodulation_freq_hz = 32\n[[scene.lasers]]\npower_w = 2e-6\n')
    cfg = load_config([p], ["drive.modulation_freq_hz=48", "scene.lasers.0.wavelength_nm=532"])
    assert cfg.drive().modulation_freq_hz == 48.0
    assert cfg.laser().power_w == 2e-6 and cfg.laser().wavelength_nm == 532.0


def test_override_appends_laser_and_sets_lists():
    cfg = load_config(overrides=["scene.lasers.1.power_w=3e-9", "sweep.frequencies_hz=[20, 72]"])
    assert len(cfg.scene().lasers) == 2
    assert cfg.data["sweep"]["frequencies_hz"] == [20.0, 72.0]


def test_env_seed_wins():
    cfg = load_config(overrides=["noise.seed=3"], env={"MZLOCK_SEED": "11"})
    assert cfg.seed == 11 and cfg.noise().seed == 11
    with pytest.raises(ConfigError):
        load_config(env={"MZLOCK_SEED": "x"})


@pytest.mark.parametrize("override, key", [
    ("mzi.bogus=1", "mzi.bogus"),
    ("nosuch.key=1", "nosuch"),
    ("scene.lasers.0.colour=1", "scene.lasers.0.colour"),
    ("dsp.fft_length=1000", "dsp.fft_length"),
    ("dsp.fft_length=2.5", "dsp.fft_length"),
    ("mzi.dual_modulator=1", "mzi.dual_modulator"),
    ("dsp.window=blackman", "dsp.window"),
])
def test_bad_keys_named(override, key):
    with pytest.raises(ConfigError) as err:
        load_config(overrides=[override])
    assert err.value.key == key


def test_domain_errors_become_config_errors():
    with pytest.raises(ConfigError):
        load_config(overrides=["mzi.split_ratio=1.5"])
    with pytest.raises(ConfigError):
        load_config(overrides=["mzi.modulator_b.axis_deg=45"])


def test_units_in_every_key_name():
    units = ("_nm", "_hz", "_v", "_w", "_s", "_m", "_deg", "_pi", "_pow", "_a_per_w")
    unitless = {"mode", "seed", "split_ratio", "dual_modulator", "visibility_profile", "allow_nonorthogonal",
                "degradation", "scintillation_enabled", "scintillation_index", "fft_length", "window",
                "guard_bins", "noise_estimator", "floor_sigma", "threshold", "trials", "phase_fractions", "lasers"}
    for key in all_keys():
        leaf = key.rsplit(".", 1)[-1]
        assert leaf in unitless or leaf.endswith(units), key


def test_digest_tracks_content():
    assert load_config().digest() == load_config().digest()
    assert load_config().digest() != load_config(overrides=["noise.seed=1"]).digest()


# commands

@pytest.mark.parametrize("sub", ["synth", "detect", "sweep", "calibrate"])
def test_help_documents_every_key(capsys, sub):
    with pytest.raises(SystemExit) as ex:
        main([sub, "--help"])
    assert ex.value.code == 0
    out = capsys.readouterr().out
    for key in all_keys():
        assert key in out


def test_synth_row_count_and_round_trip(tmp_path, capsys):
    out = tmp_path / "x.csv"
    code, _, _ = run(capsys, "synth", "--out", str(out), "--set", "acquisition.duration_s=1.5",
                     "--set", "drive.modulation_freq_hz=32")
    assert code == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert len(lines) - 1 == 30000

    cfg = load_config(overrides=["acquisition.duration_s=1.5", "drive.modulation_freq_hz=32"])
    mem = synthesize(cfg.scene(), cfg.mzi(), cfg.drive(), 1.5, 20000.0, cfg.noise())
    expect = dsp.detect(mem, 32.0, integration_s=1.0)
    code, stdout, _ = run(capsys, "detect", str(out), "--target-hz", "32", "--integration-s", "1")
    assert code == 0
    header, row = stdout.strip().splitlines()
    assert header == dsp.CSV_HEADER
    assert row == expect.to_csv_row()
    assert row.endswith("true")


def test_binary_format(tmp_path, capsys):
    out = tmp_path / "x.bin"
    assert run(capsys, "synth", "--out", str(out), "--set", "acquisition.duration_s=0.5")[0] == 0
    assert read_interferogram(out).n_samples == 10000


def test_noise_only_not_detected(tmp_path, capsys):
    out = tmp_path / "n.csv"
    run(capsys, "synth", "--out", str(out), "--set", "scene.lasers=[]", "--set", "acquisition.duration_s=1")
    code, stdout, _ = run(capsys, "detect", str(out), "--target-hz", "20")
    assert code == 0 and stdout.strip().endswith("false")


def test_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--out", str(tmp_path / "x.csv"), "--set", "drive.bogus_hz=1")
    assert code == 2 and "drive.bogus_hz" in err
    bad = tmp_path / "bad.toml"
    bad.write_text("[mzi]\nsplit_ratio = 0.5\nmirror_count = 2\n")
    code, _, err = run(capsys, "synth", "--config", str(bad), "--out", str(tmp_path / "x.csv"))
    assert code == 2 and "mzi.mirror_count" in err
    bad.write_text("[mzi\n")
    assert run(capsys, "synth", "--config", str(bad), "--out", str(tmp_path / "x.csv"))[0] == 2
    assert run(capsys, "detect", str(tmp_path / "missing.csv"))[0] == 3
    assert run(capsys, "synth", "--config", str(tmp_path / "missing.toml"), "--out", "x.csv")[0] == 3
    assert run(capsys, "synth", "--out", str(tmp_path / "no" / "dir.csv"))[0] == 3
    junk = tmp_path / "junk.csv"
    junk.write_text("hello\n")
    assert run(capsys, "detect", str(junk))[0] == 3


def test_unknown_sweep_lists_names(capsys, tmp_path):
    code, _, err = run(capsys, "sweep", "fig4", "--out-dir", str(tmp_path))
    assert code == 2
    for name in SWEEPS:
        assert name in err


def test_sweep_fig3_columns_and_determinism(tmp_path, capsys):
    args = ["sweep", "fig3", "fig5", "--timestamp", "T", "--jobs", "1",
            "--set", "sweep.phase_fractions=[0, 0.5, 1]"]
    assert run(capsys, *args, "--out-dir", str(tmp_path / "a"))[0] == 0
    assert run(capsys, *args, "--out-dir", str(tmp_path / "b"))[0] == 0
    res = SweepResult.read_csv(tmp_path / "a" / "fig3_T.csv")
    assert [c for c in res.columns if c.startswith("balanced_depth")] == [
        "balanced_depth_f0", "balanced_depth_f0.5", "balanced_depth_f1"]
    assert "run_config_hash" in res.metadata and "seed" in res.metadata
    for name in ("fig3_T.csv", "fig5_T.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_fig9_schema(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "fig9", "--out-dir", str(tmp_path), "--timestamp", "T", "--jobs", "1",
                     "--set", "sweep.frequencies_hz=[20]", "--set", "sweep.powers_w=[5e-9, 2e-8]",
                     "--set", "sweep.integration_times_s=[1]", "--set", "sweep.trials=2")
    assert code == 0
    res = SweepResult.read_csv(tmp_path / "fig9_T.csv")
    assert res.columns == ("power_w", "freq_hz", "integration_s", "mean_snr", "detect_rate")
    assert len(res.rows) == 2


def test_calibrate_fragment_loads_back(tmp_path, capsys):
    frag = tmp_path / "derived.toml"
    code, _, _ = run(capsys, "calibrate", "--out", str(frag), "--trials", "10")
    assert code == 0
    cfg = load_config([frag])
    coeffs = cfg.data["mzi"]["modulator_a"]["rolloff_coeffs_per_hz_pow"]
    assert coeffs[1] == 0.0 and coeffs[2] < 0
    assert math.isfinite(cfg.noise().rms_w) and cfg.noise().rms_w > 0


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mzlock.cli", "sweep", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "valid names" in proc.stderr
