"""``mzlock`` command line: synth, detect, sweep and calibrate.

Exit codes: 0 success, 2 configuration or usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dsp, experiments
from .config import ConfigError, describe_keys, load_config, to_toml
from .calibration import _with_rolloff, calibrate_noise, calibrate_rolloff, rolloff_coeffs
from .synth import dual_frequency_synthesize, read_interferogram, synthesize, write_interferogram

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
SWEEPS = ("fig2", "fig3", "fig5", "fig7", "fig8", "fig9")


def _fail(code, message):
    print(f"mzlock: {message}", file=sys.stderr)
    return code


def _config(args):
    return load_config(args.config or (), args.set or (), os.environ)


def _stamp(meta, cfg):
    meta.setdefault("seed", cfg.seed)
    meta["run_config_hash"] = cfg.digest()
    return meta


def cmd_synth(args) -> int:
    cfg = _config(args)
    fmt = args.format or ("bin" if Path(args.out).suffix == ".bin" else "csv")
    acq = cfg.data["acquisition"]
    drive = cfg.drive()
    fb = cfg.data["drive"]["modulation_freq_b_hz"]
    try:
        if fb > 0 and fb != drive.modulation_freq_hz:
            ifg = dual_frequency_synthesize(cfg.scene(), cfg.mzi(), drive, drive.modulation_freq_hz, fb,
                                            acq["duration_s"], acq["sample_rate_hz"], cfg.noise())
        else:
            ifg = synthesize(cfg.scene(), cfg.mzi(), drive, acq["duration_s"], acq["sample_rate_hz"], cfg.noise())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    write_interferogram(ifg, args.out, fmt)
    print(f"wrote {args.out} ({ifg.n_samples} samples, seed={cfg.seed}, config={cfg.digest()})", file=sys.stderr)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args)
    d = cfg.data["dsp"]
    try:
        ifg = read_interferogram(args.path)
    except ValueError as exc:
        return _fail(EXIT_IO, f"cannot read {args.path}: {exc}")
    target = args.target_hz if args.target_hz is not None else (d["target_freq_hz"] or cfg.drive().modulation_freq_hz)
    threshold = args.threshold if args.threshold is not None else d["threshold"]
    integration = args.integration_s if args.integration_s is not None else d["integration_s"]
    try:
        res = dsp.detect(ifg, target, threshold, integration, d["fft_length"], d["window"], d["guard_bins"],
                         d["noise_estimator"], d["floor_sigma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(dsp.CSV_HEADER)
    print(res.to_csv_row())
    return EXIT_OK


def run_sweep(name, cfg, jobs):
    s = cfg.data["sweep"]
    bench = cfg.bench()
    mzi = bench.config
    if name == "fig2":
        return experiments.fig2(mzi, s["theta_step_deg"])
    if name == "fig3":
        return experiments.fig3(mzi, tuple(s["phase_fractions"]), s["theta_step_deg"])
    if name == "fig5":
        dev = mzi.modulator_a
        grid = np.arange(0.0, dev.max_modulation_hz + 1e-9, s["response_freq_step_hz"])
        return experiments.sweep_frequency(dev, grid)
    laser = cfg.laser()
    if name == "fig7":
        amps = np.arange(s["amplitude_step_v"], s["amplitude_max_v"] + 1e-9, s["amplitude_step_v"])
        return experiments.sweep_amplitude(bench, replace(laser, power_w=s["fig7_power_w"]), amps,
                                           tuple(s["wavelengths_nm"]), jobs=jobs)
    if name == "fig8":
        b = replace(bench, drive=bench.drive.with_frequency(s["fig8_mod_freq_hz"]))
        theta = experiments._theta_grid(s["theta_step_deg"], 180.0)
        return experiments.sweep_polarization_synth(b, replace(laser, power_w=s["fig8_power_w"]), theta, jobs=jobs)
    return experiments.sensitivity_sweep(bench, laser, tuple(s["powers_w"]), tuple(s["frequencies_hz"]),
                                         tuple(s["integration_times_s"]), s["trials"], jobs)


def cmd_sweep(args) -> int:
    unknown = [n for n in args.names if n not in SWEEPS]
    if unknown:
        return _fail(EXIT_CONFIG, f"unknown sweep {', '.join(unknown)}; valid names: {' '.join(SWEEPS)}")
    cfg = _config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = args.timestamp or time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    jobs = args.jobs or experiments.default_jobs()
    for name in args.names:
        t0 = time.perf_counter()
        try:
            result = run_sweep(name, cfg, jobs)
        except ValueError as exc:
            raise ConfigError(str(exc), "sweep") from exc
        _stamp(result.metadata, cfg)
        path = result.write(out, stamp)
        print(f"{name}: {path} ({len(result.rows)} rows, {time.perf_counter() - t0:.1f} s)", file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    bench = cfg.bench()
    fmax = bench.config.modulator_a.max_modulation_hz
    curv = calibrate_rolloff(bench)
    coeffs = list(rolloff_coeffs(curv, fmax))
    bench = _with_rolloff(bench, tuple(coeffs))
    rms = calibrate_noise(bench, trials=args.trials)
    fragment = {"mzi": {"modulator_a": {"rolloff_coeffs_per_hz_pow": coeffs}}, "noise": {"rms_w": rms}}
    if bench.config.modulator_b is not None:
        fragment["mzi"]["modulator_b"] = {"rolloff_coeffs_per_hz_pow": coeffs}
    text = f"# derived constants: rolloff curvature {curv!r} per Hz^2, config {cfg.digest()}\n" + to_toml(fragment)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}", file=sys.stderr)
    return EXIT_OK


def _add_config_args(p):
    p.add_argument("--config", action="append", metavar="PATH", help="TOML config file (repeatable, later wins)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one key; laser keys as scene.lasers.N.key")


def build_parser() -> argparse.ArgumentParser:
    epilog = "config keys (defaults shown):\n" + describe_keys() + "\n\nMZLOCK_SEED overrides noise.seed."
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="mzlock", description="Polarization-modulated MZI simulator and detector.",
                                     epilog=epilog, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize an interferogram", epilog=epilog, formatter_class=fmt)
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output path")
    p.add_argument("--format", choices=("csv", "bin"), help="default: from extension, csv otherwise")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="test an interferogram file for modulation", epilog=epilog, formatter_class=fmt)
    p.add_argument("path")
    _add_config_args(p)
    p.add_argument("--target-hz", type=float, help="default: dsp.target_freq_hz, else drive.modulation_freq_hz")
    p.add_argument("--threshold", type=float)
    p.add_argument("--integration-s", type=float)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep", help=f"run sweeps ({' '.join(SWEEPS)})", epilog=epilog, formatter_class=fmt)
    p.add_argument("names", nargs="+", metavar="NAME")
    _add_config_args(p)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, help="worker processes (default: available CPUs)")
    p.add_argument("--timestamp", help="filename timestamp (default: current UTC time)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="derive rolloff and noise constants", epilog=epilog, formatter_class=fmt)
    _add_config_args(p)
    p.add_argument("--out", default="-", help="TOML fragment path, '-' for stdout")
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config error: {exc}")
    except OSError as exc:
        return _fail(EXIT_IO, f"I/O error: {exc}")


if __name__ == "__main__":
    sys.exit(main())
