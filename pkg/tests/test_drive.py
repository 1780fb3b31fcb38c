import math

import numpy as np
import pytest

from mzlock import dsp
from mzlock.drive import (
    DriveWaveform,
    analog_drive,
    carrier_reference,
    digital_drive,
    drive_envelope,
    effective_retardance,
    retardance_from_voltage,
)
from mzlock.model import LcmDevice, lcm_frequency_response

FS = 20000.0


def test_analog_peak_is_full_amplitude_square():
    w = DriveWaveform(modulation_freq_hz=20.0, amplitude_volts=2.5)
    # Envelope peaks at half a modulation period (t = 25 ms); sample both carrier half-cycles.
    t0 = 0.025
    first = analog_drive(w, "a", t0 + 0.1 / w.carrier_freq_hz)
    second = analog_drive(w, "a", t0 + 0.6 / w.carrier_freq_hz)
    assert first == pytest.approx(2.5, rel=1e-3)
    assert second == pytest.approx(-2.5, rel=1e-3)


def test_zero_offset_drives_match():
    w = DriveWaveform(phase_offset_fraction=0.0)
    t = np.arange(4000) / FS
    np.testing.assert_array_equal(analog_drive(w, "a", t), analog_drive(w, "b", t))
    d = DriveWaveform(mode="digital")
    np.testing.assert_array_equal(digital_drive(d, "a", t), digital_drive(d, "b", t))


@pytest.mark.parametrize("mode", ["analog", "digital"])
def test_envelope_periodic(mode):
    w = DriveWaveform(mode=mode, modulation_freq_hz=16.0, phase_offset_fraction=0.3)
    rng = np.random.default_rng(5)
    # Grid-aligned times keep carrier sample-and-hold edges away from rounding.
    t = rng.integers(0, 100000, 100) / FS
    for m in ("a", "b"):
        np.testing.assert_allclose(drive_envelope(w, m, t), drive_envelope(w, m, t + 1 / 16.0), atol=1e-12)


def test_digital_half_period_is_carrier_square():
    w = DriveWaveform(mode="digital", modulation_freq_hz=20.0)
    t = np.arange(0, 0.025, 1 / FS)
    v = digital_drive(w, "a", t)
    assert set(np.unique(v)) == {0.0, 5.0}
    spec = np.abs(np.fft.rfft(v - v.mean()))
    freqs = np.fft.rfftfreq(v.size, 1 / FS)
    assert freqs[np.argmax(spec)] == pytest.approx(2000.0, abs=freqs[1])


def test_digital_half_period_swaps_values():
    w = DriveWaveform(mode="digital", modulation_freq_hz=20.0)
    t = (np.arange(200) + 0.25) / FS
    half = 1 / (2 * w.modulation_freq_hz)
    a = digital_drive(w, "a", t)
    b = digital_drive(w, "a", t + half)
    np.testing.assert_array_equal(a, 5.0 - b)


def test_digital_envelope_and_reference_difference():
    w = DriveWaveform(mode="digital")
    t = (np.arange(20000) + 0.5) / FS
    diff = digital_drive(w, "a", t) - carrier_reference(w, t)
    assert set(np.unique(np.abs(diff))) == {0.0, 5.0}
    assert w.envelope_peak_volts == 2.5


def test_retardance_definitions():
    dev = LcmDevice()
    r = lcm_frequency_response(dev, 0.0)
    assert retardance_from_voltage(dev, 2.5, 635.0, 0.0) == pytest.approx(math.pi * r)
    assert retardance_from_voltage(dev, 0.0, 635.0, 20.0) == 0.0
    assert retardance_from_voltage(dev, -2.5, 635.0, 20.0) == retardance_from_voltage(dev, 2.5, 635.0, 20.0)
    w = DriveWaveform(amplitude_volts=2.5, modulation_freq_hz=20.0)
    t = np.arange(20000) / FS
    peak = effective_retardance(dev, w, 635.0, t).max()
    assert peak == pytest.approx(math.pi * lcm_frequency_response(dev, 20.0), rel=1e-3)


def test_digital_retardance_spectrum_peaks_at_modulation():
    dev = LcmDevice()
    w = DriveWaveform(mode="digital", modulation_freq_hz=32.0)
    t = np.arange(4096 * 4) / FS
    phi = effective_retardance(dev, w, 635.0, t)
    spec = dsp.power_spectrum(phi, FS, 4096 * 4)
    k = int(np.argmax(spec.bins[3:])) + 3
    assert spec.freqs[k] == pytest.approx(32.0, abs=spec.bin_width_hz)


def test_analog_carrier_has_no_mean():
    w = DriveWaveform(modulation_freq_hz=20.0)
    t = np.arange(20000) / FS
    assert abs(analog_drive(w, "a", t).mean()) < 1e-12


def test_validation():
    with pytest.raises(ValueError):
        DriveWaveform(mode="pwm")
    with pytest.raises(ValueError):
        DriveWaveform(modulation_freq_hz=1500.0)
    with pytest.raises(ValueError):
        DriveWaveform(duty_levels=(5.0, 0.0))
    w = DriveWaveform()
    with pytest.raises(ValueError):
        drive_envelope(w, "a", -1.0)
    with pytest.raises(ValueError):
        drive_envelope(w, "c", 0.0)
    with pytest.raises(ValueError):
        digital_drive(w, "a", 0.0)
    with pytest.raises(ValueError):
        analog_drive(DriveWaveform(mode="digital"), "a", 0.0)
