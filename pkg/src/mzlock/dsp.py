"""FFT detection chain: power spectra, accumulation, SNR and the detect decision.

Detection statistic
-------------------
Summing ``K`` noise-only power spectra leaves each bin with mean ``K mu`` and
standard deviation ``sqrt(K) mu`` (a Gamma(K) variate for Gaussian noise).  A
signal adds ``K s`` to its bin.  :func:`snr_at` reports

    signal_power = max(peak - mean_floor, 0)
    noise_floor  = floor_sigma * mean_floor / sqrt(K)
    snr          = signal_power / noise_floor

i.e. the excess power over the noise mean in units of ``floor_sigma``
standard deviations of the accumulated floor.  A fixed signal therefore gains
SNR as ``sqrt(K)``, and with the default ``floor_sigma=4`` a noise-only
spectrum rarely reaches S:N = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal as sps
from scipy import stats

from .synth import Interferogram

__all__ = [
    "DetectionResult",
    "PowerSpectrum",
    "accumulate",
    "balanced_spectrum",
    "detect",
    "frame_count",
    "power_spectrum",
    "snr_at",
]

WINDOWS = ("rect", "hann")
NOISE_ESTIMATORS = ("median", "mean_excluding")
DC_EXCLUSION_BINS = 3
FLOOR_EPS = 1e-30
CSV_HEADER = "target_hz,located_hz,signal_power,noise_floor,snr,detected"


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    """One-sided power spectrum; ``bins`` sum to the windowed-frame energy."""

    bin_width_hz: float
    bins: np.ndarray
    frames_accumulated: int = 1

    def __post_init__(self):
        bins = np.array(self.bins, dtype=float)
        if bins.ndim != 1 or bins.size < 2:
            raise ValueError("bins must be a 1-D sequence of length >= 2")
        if np.any(bins < 0):
            raise ValueError("power bins must be non-negative")
        if not self.bin_width_hz > 0 or self.frames_accumulated < 1:
            raise ValueError("bin_width_hz must be positive and frames_accumulated >= 1")
        bins.flags.writeable = False
        object.__setattr__(self, "bins", bins)

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.bins.size) * self.bin_width_hz

    @property
    def nyquist_hz(self) -> float:
        return (self.bins.size - 1) * self.bin_width_hz


@dataclass(frozen=True)
class DetectionResult:
    target_freq_hz: float
    signal_power: float
    noise_floor: float
    snr: float
    detected: bool
    located_freq_hz: float
    threshold: float = 1.0
    frames: int = 1

    def to_csv_row(self) -> str:
        vals = (self.target_freq_hz, self.located_freq_hz, self.signal_power, self.noise_floor, self.snr)
        return ",".join(repr(float(v)) for v in vals) + f",{str(self.detected).lower()}"


@lru_cache(maxsize=16)
def _window(kind, n):
    if kind == "rect":
        return np.ones(n)
    return sps.get_window("hann", n)  # periodic: DC leaks into bin 1 only


def _check_fft_length(n):
    if n < 2 or n & (n - 1):
        raise ValueError(f"fft_length must be a power of two, got {n}")


def _one_sided(frames, window):
    # frames: (..., n).  Doubling the interior bins makes the sum equal the energy.
    n = frames.shape[-1]
    spec = np.fft.rfft(frames * window, axis=-1)
    power = (spec.real**2 + spec.imag**2) / n
    power[..., 1:-1] *= 2.0
    return power


def power_spectrum(channel, sample_rate_hz: float, fft_length: int, window: str = "hann") -> PowerSpectrum:
    """Power spectrum of the first ``fft_length`` samples of ``channel``."""
    x = np.asarray(channel, dtype=float)
    _check_fft_length(fft_length)
    if window not in WINDOWS:
        raise ValueError(f"window must be one of {WINDOWS}")
    if x.size < fft_length:
        raise ValueError(f"need {fft_length} samples, got {x.size}")
    bins = _one_sided(x[:fft_length], _window(window, fft_length))
    return PowerSpectrum(sample_rate_hz / fft_length, bins)


def balanced_spectrum(ifg: Interferogram, fft_length: int, window: str = "hann") -> PowerSpectrum:
    """Spectrum of ``ch1 - ch2``: antiphase modulation doubles, common mode cancels."""
    return power_spectrum(ifg.balanced, ifg.sample_rate_hz, fft_length, window)


def accumulate(spectra) -> PowerSpectrum:
    """Bin-wise sum of spectra sharing one geometry."""
    spectra = list(spectra)
    if not spectra:
        raise ValueError("nothing to accumulate")
    first = spectra[0]
    total = np.zeros_like(first.bins)
    frames = 0
    for s in spectra:
        if s.bins.size != first.bins.size or not math.isclose(s.bin_width_hz, first.bin_width_hz):
            raise ValueError("cannot accumulate spectra with different bin geometry")
        total += s.bins
        frames += s.frames_accumulated
    return PowerSpectrum(first.bin_width_hz, total, frames)


def frame_count(n_samples: int, sample_rate_hz: float, integration_s: float, fft_length: int) -> int:
    """Consecutive non-overlapping frames that fit in ``integration_s``."""
    usable = min(n_samples, int(round(integration_s * sample_rate_hz)))
    return usable // fft_length


def framed_spectrum(x, sample_rate_hz, fft_length, n_frames, window="hann") -> PowerSpectrum:
    """Accumulated spectrum of ``n_frames`` consecutive frames of ``x``."""
    _check_fft_length(fft_length)
    x = np.asarray(x, dtype=float)
    if n_frames < 1 or n_frames * fft_length > x.size:
        raise ValueError(f"cannot take {n_frames} frames of {fft_length} from {x.size} samples")
    frames = x[: n_frames * fft_length].reshape(n_frames, fft_length)
    bins = _one_sided(frames, _window(window, fft_length)).sum(axis=0)
    return PowerSpectrum(sample_rate_hz / fft_length, bins, n_frames)


@lru_cache(maxsize=256)
def _median_to_mean(k):
    # Median of Gamma(k, 1) over its mean k.
    return float(stats.gamma.median(k)) / k


def _parabolic(bins, k):
    if 0 < k < bins.size - 1:
        a, b, c = bins[k - 1], bins[k], bins[k + 1]
        den = a - 2.0 * b + c
        if den < 0:
            return k + 0.5 * (a - c) / den
    return float(k)


def snr_at(
    spectrum: PowerSpectrum,
    target_freq_hz: float,
    guard_bins: int = 2,
    noise_estimator: str = "median",
    floor_sigma: float = 4.0,
    threshold: float = 1.0,
) -> DetectionResult:
    """Signal-to-noise ratio of the strongest bin within ``guard_bins`` of the target.

    The floor mean comes from all bins outside the DC region and outside
    ``3 * guard_bins`` of the target, either as their median (rescaled by the
    Gamma median-to-mean ratio for the accumulated frame count) or as their
    mean.  An all-zero spectrum yields ``snr = 0`` and no detection.
    """
    bw = spectrum.bin_width_hz
    if not bw <= target_freq_hz < spectrum.nyquist_hz:
        raise ValueError(f"target {target_freq_hz} Hz outside [{bw}, {spectrum.nyquist_hz}) Hz")
    if noise_estimator not in NOISE_ESTIMATORS:
        raise ValueError(f"noise_estimator must be one of {NOISE_ESTIMATORS}")
    if guard_bins < 0 or not floor_sigma > 0:
        raise ValueError("guard_bins must be >= 0 and floor_sigma > 0")

    bins = spectrum.bins
    k0 = int(round(target_freq_hz / bw))
    lo, hi = max(1, k0 - guard_bins), min(bins.size - 1, k0 + guard_bins + 1)
    kp = lo + int(np.argmax(bins[lo:hi]))

    idx = np.arange(bins.size)
    mask = (idx >= DC_EXCLUSION_BINS) & (np.abs(idx - k0) > 3 * guard_bins)
    floor_bins = bins[mask]
    if floor_bins.size == 0:
        raise ValueError("no bins left for the noise estimate")
    k = spectrum.frames_accumulated
    if noise_estimator == "median":
        mean_floor = float(np.median(floor_bins)) / _median_to_mean(k)
    else:
        mean_floor = float(floor_bins.mean())

    signal_power = max(float(bins[kp]) - mean_floor, 0.0)
    noise_floor = floor_sigma * mean_floor / math.sqrt(k)
    snr = signal_power / max(noise_floor, FLOOR_EPS)
    return DetectionResult(
        target_freq_hz=float(target_freq_hz),
        signal_power=signal_power,
        noise_floor=noise_floor,
        snr=snr,
        detected=bool(snr >= threshold),
        located_freq_hz=_parabolic(bins, kp) * bw,
        threshold=threshold,
        frames=k,
    )


def detect(
    ifg: Interferogram,
    target_freq_hz: float,
    threshold: float = 1.0,
    integration_s: float = 1.0,
    fft_length: int = 4096,
    window: str = "hann",
    guard_bins: int = 2,
    noise_estimator: str = "median",
    floor_sigma: float = 4.0,
) -> DetectionResult:
    """Detect modulation at ``target_freq_hz`` in the balanced channel.

    Uses the consecutive full frames inside the first ``integration_s``
    seconds, sums their spectra and applies :func:`snr_at`.
    """
    if integration_s > ifg.duration_s + 1e-12:
        raise ValueError(f"integration {integration_s} s exceeds recording of {ifg.duration_s} s")
    n_frames = frame_count(ifg.n_samples, ifg.sample_rate_hz, integration_s, fft_length)
    if n_frames < 1:
        raise ValueError(f"integration {integration_s} s is shorter than one {fft_length}-sample frame")
    spec = framed_spectrum(ifg.balanced, ifg.sample_rate_hz, fft_length, n_frames, window)
    return snr_at(spec, target_freq_hz, guard_bins, noise_estimator, floor_sigma, threshold)
