"""Drive waveforms for the liquid-crystal modulators.

The LC cell needs its drive polarity reversed at a few kHz (the carrier); the
optical modulation is carried by the carrier's amplitude.  Two schemes:

* analog: a square carrier whose amplitude is a raised sinusoid between 0 and
  ``amplitude_volts`` at the modulation frequency, updated once per carrier
  period as a DAQ output would be;
* digital: a 0/5 V square carrier whose phase is flipped by pi every half
  modulation period relative to the reference electrode, so the cell sees
  either no voltage or the full swing.

All voltages are per-electrode amplitudes.  The cell follows the rectified
envelope, not the carrier, so :func:`effective_retardance` is driven by the
envelope alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import LcmDevice, lcm_frequency_response

__all__ = [
    "DriveWaveform",
    "analog_drive",
    "digital_drive",
    "drive_envelope",
    "effective_retardance",
    "retardance_from_voltage",
]

MODES = ("analog", "digital")
MODULATORS = ("a", "b")

# Guards floor() against t * f landing a hair below an integer.
_EDGE_EPS = 1e-9


@dataclass(frozen=True)
class DriveWaveform:
    mode: str = "analog"
    carrier_freq_hz: float = 2000.0
    modulation_freq_hz: float = 20.0
    amplitude_volts: float = 2.5
    phase_offset_fraction: float = 0.0
    duty_levels: tuple[float, float] = (0.0, 5.0)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.carrier_freq_hz > 0 and self.modulation_freq_hz > 0):
            raise ValueError("carrier and modulation frequencies must be positive")
        if not self.modulation_freq_hz < self.carrier_freq_hz / 2:
            raise ValueError("modulation_freq_hz must be below half the carrier frequency")
        if not (math.isfinite(self.amplitude_volts) and self.amplitude_volts >= 0):
            raise ValueError("amplitude_volts must be >= 0")
        if not math.isfinite(self.phase_offset_fraction):
            raise ValueError("phase_offset_fraction must be finite")
        lo, hi = (float(v) for v in self.duty_levels)
        if not hi > lo:
            raise ValueError("duty_levels must be (low, high) with high > low")
        object.__setattr__(self, "duty_levels", (lo, hi))

    @property
    def envelope_peak_volts(self) -> float:
        if self.mode == "digital":
            lo, hi = self.duty_levels
            return 0.5 * (hi - lo)
        return self.amplitude_volts

    def with_frequency(self, modulation_freq_hz: float) -> DriveWaveform:
        return replace(self, modulation_freq_hz=modulation_freq_hz)


def _times(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0):
        raise ValueError("time must be finite and >= 0")
    return t


def _lag_fraction(w, modulator):
    if modulator not in MODULATORS:
        raise ValueError(f"modulator must be 'a' or 'b', got {modulator!r}")
    return w.phase_offset_fraction if modulator == "b" else 0.0


def _half_carrier_index(w, t):
    return np.floor(2.0 * w.carrier_freq_hz * t + _EDGE_EPS).astype(np.int64)


def _flipped(w, modulator, t):
    # A lag of f*pi is f half-periods of the modulation.
    u = 2.0 * w.modulation_freq_hz * t - _lag_fraction(w, modulator)
    return (np.floor(u + _EDGE_EPS).astype(np.int64) % 2).astype(bool)


def drive_envelope(w: DriveWaveform, modulator: str, t):
    """Rectified drive amplitude (per electrode) seen by the LC cell."""
    t = _times(t)
    lag = _lag_fraction(w, modulator)
    if w.mode == "analog":
        held = np.floor(w.carrier_freq_hz * t + _EDGE_EPS) / w.carrier_freq_hz
        phase = 2.0 * math.pi * w.modulation_freq_hz * held - lag * math.pi
        env = 0.5 * w.amplitude_volts * (1.0 - np.cos(phase))
    else:
        env = np.where(_flipped(w, modulator, t), w.envelope_peak_volts, 0.0)
    return env if env.ndim else float(env)


def analog_drive(w: DriveWaveform, modulator: str, t):
    """Amplitude-modulated square carrier, in volts."""
    if w.mode != "analog":
        raise ValueError("analog_drive needs an analog waveform")
    t = _times(t)
    polarity = np.where(_half_carrier_index(w, t) % 2 == 0, 1.0, -1.0)
    out = polarity * drive_envelope(w, modulator, t)
    return out if out.ndim else float(out)


def digital_drive(w: DriveWaveform, modulator: str, t):
    """Voltage on the switched electrode of a digitally driven cell.

    A square wave between the duty levels whose carrier phase is shifted by
    pi in alternate half modulation periods.
    """
    if w.mode != "digital":
        raise ValueError("digital_drive needs a digital waveform")
    t = _times(t)
    lo, hi = w.duty_levels
    high = (_half_carrier_index(w, t) + _flipped(w, modulator, t)) % 2 == 0
    out = np.where(high, hi, lo)
    return out if out.ndim else float(out)


def carrier_reference(w: DriveWaveform, t):
    """Voltage on the un-switched electrode of a digitally driven cell."""
    t = _times(t)
    lo, hi = w.duty_levels
    out = np.where(_half_carrier_index(w, t) % 2 == 0, hi, lo)
    return out if out.ndim else float(out)


def retardance_from_voltage(device: LcmDevice, volts, wavelength_nm: float, modulation_freq_hz: float):
    """Retardance in radians for a per-electrode drive amplitude ``volts``.

    Depends on ``|volts|`` only: the cell does not see carrier polarity.
    """
    gain = lcm_frequency_response(device, modulation_freq_hz)
    return math.pi * np.abs(volts) / device.v_pi_at(wavelength_nm) * gain


def effective_retardance(device: LcmDevice, w: DriveWaveform, source_wavelength_nm: float, t, modulator: str = "a"):
    """Retardance of ``device`` at time ``t`` under drive ``w``."""
    env = drive_envelope(w, modulator, t)
    out = retardance_from_voltage(device, env, source_wavelength_nm, w.modulation_freq_hz)
    return out if np.ndim(out) else float(out)
