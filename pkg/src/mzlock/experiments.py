"""Scripted sweeps that regenerate the model curves and measured trends as tables."""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dsp
from .drive import DriveWaveform
from .model import (
    LaserSource,
    LcmDevice,
    MziConfig,
    balanced_modulation_depth,
    detector_intensities,
    lcm_frequency_response,
)
from .synth import Interferogram, NoiseModel, Scene, synthesize

__all__ = [
    "Bench",
    "SweepResult",
    "SweepSpec",
    "fig2",
    "fig3",
    "sensitivity_sweep",
    "sweep_amplitude",
    "sweep_frequency",
    "sweep_polarization_model",
    "sweep_polarization_synth",
    "threshold_crossing",
]

SWEEP_VARIABLES = ("polarization", "amplitude", "mod_frequency", "power", "integration_time", "phase_fraction")
DEFAULT_FREQUENCIES_HZ = (16.0, 20.0, 32.0, 48.0, 72.0)
DEFAULT_POWERS_W = tuple(float(p) for p in np.logspace(-9, -6, 13))
DEFAULT_INTEGRATION_S = (1.0, 5.0, 10.0)


def default_laser(power_w=1e-6, polarization_deg=30.0):
    return LaserSource(635.0, power_w, math.radians(polarization_deg), 1e-2)


@dataclass(frozen=True)
class Bench:
    """Everything but the scene: interferometer, drive, noise, acquisition and detector settings."""

    config: MziConfig = field(default_factory=MziConfig)
    drive: DriveWaveform = field(default_factory=lambda: DriveWaveform(mode="digital"))
    noise: NoiseModel = field(default_factory=NoiseModel)
    sample_rate_hz: float = 20000.0
    fft_length: int = 4096
    window: str = "hann"
    guard_bins: int = 2
    noise_estimator: str = "median"
    floor_sigma: float = 4.0
    threshold: float = 1.0

    def synth(self, scene, duration_s, seed=None, drive=None, config=None) -> Interferogram:
        noise = self.noise if seed is None else replace(self.noise, seed=seed)
        return synthesize(scene, config or self.config, drive or self.drive, duration_s, self.sample_rate_hz, noise)

    def detect(self, ifg, target_freq_hz, integration_s) -> dsp.DetectionResult:
        return dsp.detect(
            ifg,
            target_freq_hz,
            threshold=self.threshold,
            integration_s=integration_s,
            fft_length=self.fft_length,
            window=self.window,
            guard_bins=self.guard_bins,
            noise_estimator=self.noise_estimator,
            floor_sigma=self.floor_sigma,
        )

    def frames(self, integration_s) -> int:
        return dsp.frame_count(int(round(integration_s * self.sample_rate_hz)), self.sample_rate_hz,
                               integration_s, self.fft_length)

    def single(self) -> Bench:
        return replace(self, config=replace(self.config, modulator_b=None))

    def dual(self) -> Bench:
        if self.config.modulator_b is not None:
            return self
        a = self.config.modulator_a
        b = replace(a, axis_angle_rad=a.axis_angle_rad + math.pi / 2)
        return replace(self, config=replace(self.config, modulator_b=b))


@dataclass(frozen=True)
class SweepSpec:
    sweep_variable: str
    grid: tuple[float, ...]
    mode: str = "model"

    def __post_init__(self):
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep_variable must be one of {SWEEP_VARIABLES}")
        if self.mode not in ("model", "synth"):
            raise ValueError("mode must be 'model' or 'synth'")
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ValueError("sweep grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("sweep grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)


@dataclass
class SweepResult:
    name: str
    columns: tuple[str, ...]
    rows: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.shape[1] != len(self.columns):
            raise ValueError("row width does not match the column names")

    def column(self, name) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_csv(self) -> str:
        lines = [f"# sweep={self.name}"]
        lines += [f"# {k}={v}" for k, v in self.metadata.items()]
        lines.append(",".join(self.columns))
        lines += [",".join(f"{x:.17g}" for x in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, out_dir, timestamp) -> Path:
        path = Path(out_dir) / f"{self.name}_{timestamp}.csv"
        path.write_text(self.to_csv())
        return path

    @classmethod
    def read_csv(cls, path) -> SweepResult:
        meta, header, rows = {}, None, []
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append([float(x) for x in line.split(",")])
        name = meta.pop("sweep", Path(path).stem)
        return cls(name, header, np.array(rows).reshape(-1, len(header)), meta)


def _provenance(*parts) -> str:
    return hashlib.sha256(repr(parts).encode()).hexdigest()[:16]


def _map(fn, tasks, jobs):
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


# Closed-form sweeps

def sweep_polarization_model(config, amplitude_volts, phase_fraction_f, theta_deg, wavelength_nm=635.0) -> SweepResult:
    """Detector-1 intensity at the drive extremes and the balanced depth, per unit I0."""
    spec = SweepSpec("polarization", theta_deg, "model")
    a = amplitude_volts
    v_b_at = lambda v_a_frac: 0.5 * a * (1.0 - math.cos(v_a_frac * math.pi - phase_fraction_f * math.pi))
    rows = []
    for th in spec.grid:
        src = LaserSource(wavelength_nm, 1.0, math.radians(th), 1.0)
        lo = detector_intensities(config, src, 0.0, v_b_at(0.0)).i1
        hi = detector_intensities(config, src, a, v_b_at(1.0)).i1
        depth = balanced_modulation_depth(config, src, a, phase_fraction_f)
        rows.append((th, lo, hi, depth))
    return SweepResult(
        "polarization_model",
        ("theta_deg", "i1_at_vmin", "i1_at_vmax", "balanced_depth"),
        rows,
        {"amplitude_v": a, "phase_fraction": phase_fraction_f, "dual": config.dual,
         "config_hash": _provenance(config, a, phase_fraction_f, spec)},
    )


def _theta_grid(step_deg, stop_deg):
    return tuple(float(x) for x in np.arange(0.0, stop_deg + 1e-9, step_deg))


def fig2(config: MziConfig, theta_step_deg=5.0, wavelength_nm=635.0) -> SweepResult:
    """Intensity at V0 and V0 + V_pi: one modulator, then two with offsets 0, pi/2, pi."""
    grid = _theta_grid(theta_step_deg, 180.0)
    single = replace(config, modulator_b=None)
    dual = Bench(config=config).dual().config
    amp = config.modulator_a.v_pi_at(wavelength_nm)
    cases = [("single", single, 0.0), ("dual_f0", dual, 0.0), ("dual_f0.5", dual, 0.5), ("dual_f1", dual, 1.0)]
    cols, data = ["theta_deg"], [np.array(grid)]
    for label, cfg, f in cases:
        res = sweep_polarization_model(cfg, amp, f, grid, wavelength_nm)
        cols += [f"{label}_vmin", f"{label}_vmax"]
        data += [res.column("i1_at_vmin"), res.column("i1_at_vmax")]
    return SweepResult("fig2", cols, np.column_stack(data),
                       {"amplitude_v": amp, "config_hash": _provenance(config, grid, wavelength_nm)})


def fig3(config: MziConfig, phase_fractions=(0.0, 0.25, 0.5, 0.75, 1.0), theta_step_deg=5.0,
         wavelength_nm=635.0) -> SweepResult:
    """Balanced depth against polarization, one column per phase fraction."""
    grid = _theta_grid(theta_step_deg, 180.0)
    dual = Bench(config=config).dual().config
    amp = config.modulator_a.v_pi_at(wavelength_nm)
    cols, data = ["theta_deg"], [np.array(grid)]
    for f in SweepSpec("phase_fraction", phase_fractions).grid:
        res = sweep_polarization_model(dual, amp, f, grid, wavelength_nm)
        cols.append(f"balanced_depth_f{f:g}")
        data.append(res.column("balanced_depth"))
    return SweepResult("fig3", cols, np.column_stack(data),
                       {"amplitude_v": amp, "config_hash": _provenance(config, grid, phase_fractions)})


def sweep_frequency(device: LcmDevice, freqs_hz) -> SweepResult:
    spec = SweepSpec("mod_frequency", freqs_hz)
    resp = lcm_frequency_response(device, np.array(spec.grid))
    return SweepResult("fig5", ("freq_hz", "response"), np.column_stack([spec.grid, resp]),
                       {"rolloff_coeffs": " ".join(repr(c) for c in device.rolloff_coeffs),
                        "config_hash": _provenance(device, spec)})


# Full-pipeline sweeps

def _polarization_point(task):
    bench, laser, theta_deg, duration, seed = task
    src = replace(laser, polarization_angle_rad=math.radians(theta_deg))
    f = bench.drive.modulation_freq_hz
    out = [theta_deg]
    for i, b in enumerate((bench.single(), bench.dual())):
        ifg = b.synth(Scene((src,)), duration, seed=seed)
        if i == 0:
            out.append(float(np.mean(ifg.channel_1 + ifg.channel_2)))
        out.append(b.detect(ifg, f, duration).signal_power)
    return out


def sweep_polarization_synth(bench: Bench, laser: LaserSource, theta_deg, integration_s=1.0, jobs=1) -> SweepResult:
    """DC level and modulation power against polarization, single and dual modulator."""
    spec = SweepSpec("polarization", theta_deg, "synth")
    seed0 = bench.noise.seed
    tasks = [(bench, laser, th, integration_s, seed0 + i) for i, th in enumerate(spec.grid)]
    rows = _map(_polarization_point, tasks, jobs)
    return SweepResult("fig8", ("theta_deg", "dc_level", "mod_power_single", "mod_power_dual"), rows,
                       {"seed": seed0, "modulation_freq_hz": bench.drive.modulation_freq_hz,
                        "integration_s": integration_s, "config_hash": _provenance(bench, laser, spec)})


def _amplitude_point(task):
    bench, laser, amp, wavelengths, duration, seed = task
    drive = replace(bench.drive, amplitude_volts=amp)
    row = [amp]
    for lam in wavelengths:
        ifg = bench.synth(Scene((replace(laser, wavelength_nm=lam),)), duration, seed=seed, drive=drive)
        res = bench.detect(ifg, drive.modulation_freq_hz, duration)
        row += [res.signal_power, res.snr]
    return row


def sweep_amplitude(bench: Bench, laser: LaserSource, amplitudes_v, wavelengths_nm=(635.0, 532.0, 405.0),
                    integration_s=1.0, jobs=1) -> SweepResult:
    """Modulation power against analog drive amplitude for several wavelengths."""
    spec = SweepSpec("amplitude", amplitudes_v, "synth")
    bench = replace(bench, drive=replace(bench.drive, mode="analog"))
    seed0 = bench.noise.seed
    lams = tuple(float(x) for x in wavelengths_nm)
    tasks = [(bench, laser, a, lams, integration_s, seed0 + i) for i, a in enumerate(spec.grid)]
    rows = _map(_amplitude_point, tasks, jobs)
    cols = ["amplitude_v"]
    for lam in lams:
        cols += [f"mod_power_{lam:g}nm", f"snr_{lam:g}nm"]
    return SweepResult("fig7", cols, rows,
                       {"seed": seed0, "modulation_freq_hz": bench.drive.modulation_freq_hz,
                        "laser_power_w": laser.power_w, "config_hash": _provenance(bench, laser, spec, lams)})


def _sensitivity_point(task):
    bench, laser, power, freq, times, trials, seed0 = task
    drive = bench.drive.with_frequency(freq)
    scene = Scene((replace(laser, power_w=power),))
    duration = max(times)
    snr = np.empty((trials, len(times)))
    hit = np.empty((trials, len(times)), dtype=bool)
    for k in range(trials):
        ifg = bench.synth(scene, duration, seed=seed0 + k, drive=drive)
        for j, t in enumerate(times):
            res = bench.detect(ifg, freq, t)
            snr[k, j], hit[k, j] = res.snr, res.detected
    return [[power, freq, t, snr[:, j].mean(), hit[:, j].mean()] for j, t in enumerate(times)]


def threshold_crossing(powers, snr, level=1.0) -> float:
    """Lowest power where ``snr`` reaches ``level``, interpolated linearly in log-log.

    Returns NaN when the curve never brackets ``level``.
    """
    p = np.asarray(powers, dtype=float)
    s = np.asarray(snr, dtype=float)
    for i in range(len(p) - 1):
        if s[i] < level <= s[i + 1]:
            if s[i] <= 0:
                return float(p[i + 1])
            x0, x1 = math.log(p[i]), math.log(p[i + 1])
            y0, y1 = math.log(s[i]), math.log(s[i + 1])
            return math.exp(x0 + (math.log(level) - y0) * (x1 - x0) / (y1 - y0))
    if len(s) and s[0] >= level:
        return float(p[0])
    return float("nan")


def sensitivity_sweep(bench: Bench, laser: LaserSource | None = None, powers_w=DEFAULT_POWERS_W,
                      freqs_hz=DEFAULT_FREQUENCIES_HZ, integration_times_s=DEFAULT_INTEGRATION_S,
                      trials=20, jobs=1) -> SweepResult:
    """Mean SNR and detection rate over a power x frequency x integration-time grid.

    Trial ``k`` uses seed ``noise.seed + k`` at every grid point.  The metadata
    carries the interpolated S:N = 1 crossing for every (frequency, time) pair
    and, for the longer times, the crossing predicted from the shortest time
    by the fourth-root frame law.
    """
    laser = laser or default_laser()
    pspec = SweepSpec("power", powers_w, "synth")
    fspec = SweepSpec("mod_frequency", freqs_hz, "synth")
    tspec = SweepSpec("integration_time", integration_times_s, "synth")
    seed0 = bench.noise.seed
    tasks = [(bench, laser, p, f, tspec.grid, trials, seed0) for f in fspec.grid for p in pspec.grid]
    rows = [r for block in _map(_sensitivity_point, tasks, jobs) for r in block]
    result = SweepResult("fig9", ("power_w", "freq_hz", "integration_s", "mean_snr", "detect_rate"), rows,
                         {"seed": seed0, "trials": trials, "noise_rms_w": bench.noise.rms_w,
                          "config_hash": _provenance(bench, laser, pspec, fspec, tspec, trials)})
    t0 = tspec.grid[0]
    for f in fspec.grid:
        base = crossing_from(result, f, t0)
        for t in tspec.grid:
            result.metadata[f"crossing_w_f{f:g}_t{t:g}"] = repr(crossing_from(result, f, t))
            if t != t0:
                gain = (bench.frames(t) / bench.frames(t0)) ** 0.25
                result.metadata[f"predicted_w_f{f:g}_t{t:g}"] = repr(base / gain)
    return result


def crossing_from(result: SweepResult, freq_hz, integration_s, level=1.0) -> float:
    sel = (result.column("freq_hz") == freq_hz) & (result.column("integration_s") == integration_s)
    rows = result.rows[sel]
    rows = rows[np.argsort(rows[:, 0])]
    return threshold_crossing(rows[:, 0], rows[:, 3], level)
