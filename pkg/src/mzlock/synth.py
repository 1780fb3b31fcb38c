"""Sampled two-detector interferograms for a scene of lasers plus background."""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .drive import DriveWaveform, effective_retardance
from .model import BackgroundSource, LaserSource, MziConfig, detector_intensities

__all__ = [
    "DEFAULT_NOISE_RMS_W",
    "Interferogram",
    "NoiseModel",
    "OutOfBandWarning",
    "Scene",
    "dual_frequency_synthesize",
    "read_interferogram",
    "synthesize",
    "write_interferogram",
]



class OutOfBandWarning(UserWarning):
    """A source sits outside a modulator's band and is rendered unmodulated."""

# Places the 20 Hz / 1 s S:N = 1 crossing at 10 nW with the default pipeline.
# Regenerate with `mzlock calibrate`.
DEFAULT_NOISE_RMS_W = 1.6472722534446986e-07

BIN_MAGIC = b"MZLK"
BIN_VERSION = 1
_BIN_HEADER = struct.Struct("<4sId")


@dataclass(frozen=True)
class Scene:
    lasers: tuple[LaserSource, ...] = ()
    background: BackgroundSource | None = None

    def __post_init__(self):
        object.__setattr__(self, "lasers", tuple(self.lasers))

    def sources(self):
        out = list(self.lasers)
        if self.background is not None:
            out.append(self.background.as_source())
        return out


@dataclass(frozen=True)
class NoiseModel:
    """Additive white Gaussian detector noise, optional slow scintillation.

    Scintillation multiplies every source's power by ``1 + index * s(t)``
    where ``s`` is unit-variance noise low-passed at ``scintillation_cutoff_hz``.
    """

    rms_w: float = DEFAULT_NOISE_RMS_W
    seed: int = 0
    scintillation_enabled: bool = False
    scintillation_cutoff_hz: float = 5.0
    scintillation_index: float = 0.05

    def __post_init__(self):
        if not (math.isfinite(self.rms_w) and self.rms_w >= 0):
            raise ValueError("rms_w must be >= 0")
        if self.scintillation_cutoff_hz <= 0 or self.scintillation_index < 0:
            raise ValueError("scintillation cutoff must be > 0 and index >= 0")


@dataclass(frozen=True, eq=False)
class Interferogram:
    sample_rate_hz: float
    channel_1: np.ndarray
    channel_2: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ch1 = np.array(self.channel_1, dtype=float)
        ch2 = np.array(self.channel_2, dtype=float)
        if ch1.shape != ch2.shape or ch1.ndim != 1:
            raise ValueError("channels must be 1-D and of equal length")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        ch1.flags.writeable = False
        ch2.flags.writeable = False
        object.__setattr__(self, "channel_1", ch1)
        object.__setattr__(self, "channel_2", ch2)

    @property
    def n_samples(self) -> int:
        return self.channel_1.size

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz

    @property
    def balanced(self) -> np.ndarray:
        return self.channel_1 - self.channel_2


def _scintillation(noise, n, fs):
    rng = np.random.default_rng([noise.seed, 1])
    white = rng.standard_normal(n)
    cutoff = min(noise.scintillation_cutoff_hz, 0.45 * fs)
    sos = sps.butter(2, cutoff, fs=fs, output="sos")
    slow = sps.sosfiltfilt(sos, white)
    slow /= slow.std() or 1.0
    return np.clip(1.0 + noise.scintillation_index * slow, 0.0, None)


def _render(scene, config, drives, duration_s, sample_rate_hz, noise):
    if not (math.isfinite(duration_s) and duration_s > 0):
        raise ValueError("duration_s must be positive")
    carrier = max(d.carrier_freq_hz for d in drives.values())
    if not sample_rate_hz > 2.0 * carrier:
        raise ValueError(
            f"sample_rate_hz={sample_rate_hz} must exceed twice the carrier ({2 * carrier} Hz)"
        )
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise ValueError("duration too short for a single sample")
    t = np.arange(n) / sample_rate_hz
    ch1 = np.zeros(n)
    ch2 = np.zeros(n)
    diagnostics: set[str] = set()

    for source in scene.sources():
        lam = source.wavelength_nm
        v_a = _equivalent_voltage(config.modulator_a, drives["a"], lam, t, "a")
        v_b = 0.0
        if config.modulator_b is not None:
            v_b = _equivalent_voltage(config.modulator_b, drives["b"], lam, t, "b")
        out = detector_intensities(config, source, v_a, v_b)
        for label in out.out_of_band:
            diagnostics.add(f"{lam:g} nm outside band of modulator {label}")
        ch1 += out.i1
        ch2 += out.i2

    if noise.scintillation_enabled:
        factor = _scintillation(noise, n, sample_rate_hz)
        ch1 *= factor
        ch2 *= factor
    ch1 *= config.detector_responsivity
    ch2 *= config.detector_responsivity
    if noise.rms_w > 0:
        rng = np.random.default_rng(noise.seed)
        ch1 += rng.normal(0.0, noise.rms_w, n)
        ch2 += rng.normal(0.0, noise.rms_w, n)

    for msg in sorted(diagnostics):
        warnings.warn(f"no modulation: {msg}", OutOfBandWarning, stacklevel=3)
    meta = {
        "seed": noise.seed,
        "drive_mode": drives["a"].mode,
        "modulation_freq_a_hz": drives["a"].modulation_freq_hz,
        "modulation_freq_b_hz": drives["b"].modulation_freq_hz,
        "dual_modulator": config.dual,
        "n_lasers": len(scene.lasers),
        "diagnostics": tuple(sorted(diagnostics)),
    }
    return Interferogram(sample_rate_hz, ch1, ch2, meta)


def _equivalent_voltage(device, drive, wavelength_nm, t, modulator):
    phi = effective_retardance(device, drive, wavelength_nm, t, modulator)
    return np.asarray(phi) * device.v_pi_at(wavelength_nm) / math.pi


def synthesize(
    scene: Scene,
    config: MziConfig,
    drive: DriveWaveform,
    duration_s: float,
    sample_rate_hz: float,
    noise: NoiseModel | None = None,
) -> Interferogram:
    """Render ``duration_s`` of both detector channels.

    Sources add incoherently; each is evaluated through
    :func:`mzlock.model.detector_intensities` with the drive's retardance
    expressed as an equivalent voltage.
    """
    noise = noise or NoiseModel()
    return _render(scene, config, {"a": drive, "b": drive}, duration_s, sample_rate_hz, noise)


def dual_frequency_synthesize(
    scene: Scene,
    config: MziConfig,
    drive: DriveWaveform,
    drive_a_freq_hz: float,
    drive_b_freq_hz: float,
    duration_s: float,
    sample_rate_hz: float,
    noise: NoiseModel | None = None,
) -> Interferogram:
    """Like :func:`synthesize` with each modulator at its own frequency."""
    if config.modulator_b is None:
        raise ValueError("dual-frequency drive needs two modulators")
    if not abs(drive_a_freq_hz - drive_b_freq_hz) > 2.0 / duration_s:
        raise ValueError(
            f"{drive_a_freq_hz} Hz and {drive_b_freq_hz} Hz are not resolvable in {duration_s} s"
        )
    drives = {
        "a": replace(drive, modulation_freq_hz=drive_a_freq_hz),
        "b": replace(drive, modulation_freq_hz=drive_b_freq_hz, phase_offset_fraction=0.0),
    }
    return _render(scene, config, drives, duration_s, sample_rate_hz, noise or NoiseModel())


def write_interferogram(ifg: Interferogram, path, fmt: str | None = None) -> Path:
    """Write ``ifg`` as CSV (``# sample_rate_hz=`` header, ``t_s,ch1,ch2``) or raw binary."""
    path = Path(path)
    fmt = fmt or ("bin" if path.suffix == ".bin" else "csv")
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            fh.write(f"# sample_rate_hz={ifg.sample_rate_hz!r}\n")
            fh.write("t_s,ch1,ch2\n")
            data = np.column_stack([ifg.times(), ifg.channel_1, ifg.channel_2])
            np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    elif fmt == "bin":
        inter = np.empty(2 * ifg.n_samples, dtype="<f8")
        inter[0::2] = ifg.channel_1
        inter[1::2] = ifg.channel_2
        with path.open("wb") as fh:
            fh.write(_BIN_HEADER.pack(BIN_MAGIC, BIN_VERSION, float(ifg.sample_rate_hz)))
            fh.write(inter.tobytes())
    else:
        raise ValueError(f"unknown interferogram format {fmt!r}")
    return path


def read_interferogram(path) -> Interferogram:
    """Read a file written by :func:`write_interferogram`; format sniffed from the magic."""
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(_BIN_HEADER.size)
    if head[:4] == BIN_MAGIC:
        magic, version, fs = _BIN_HEADER.unpack(head)
        if version != BIN_VERSION:
            raise ValueError(f"unsupported interferogram version {version}")
        raw = np.frombuffer(path.read_bytes()[_BIN_HEADER.size:], dtype="<f8")
        if raw.size % 2:
            raise ValueError("truncated interferogram")
        return Interferogram(fs, raw[0::2], raw[1::2])

    fs = None
    with path.open() as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            if key.strip() == "sample_rate_hz":
                fs = float(value)
    if fs is None:
        raise ValueError(f"{path}: missing '# sample_rate_hz=' header")
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, usecols=(1, 2), ndmin=2)
    return Interferogram(fs, data[:, 0], data[:, 1])
