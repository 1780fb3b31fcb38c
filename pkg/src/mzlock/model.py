"""Closed-form intensities of a Mach-Zehnder interferometer with liquid-crystal
polarization modulators in its arms.

Light with linear polarization angle ``theta`` is split into the component
modulated by modulator ``a`` (weight ``sin^2(theta - axis_a)``) and the
complementary component (weight ``cos^2(theta - axis_a)``), which modulator
``b`` acts on when it is fitted.  Each component interferes independently:

    I1 = 2 I0 w B^2 (1 + V cos(pi v / V_pi)),  I2 = 2 I0 w B^2 (1 - V cos(pi v / V_pi))

with ``B`` the amplitude splitting ratio and ``V`` the fringe visibility set by
the arm asymmetry and the source coherence length.  Without modulator ``b`` the
complementary component is split evenly, ``2 I0 w B^2`` on each detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DEFAULT_ROLLOFF_COEFFS",
    "BackgroundSource",
    "DetectorIntensities",
    "LaserSource",
    "LcmDevice",
    "MziConfig",
    "balanced_modulation_depth",
    "detector_intensities",
    "fringe_visibility",
    "lcm_frequency_response",
]

# Quartic 1 - a f^2 + a f^4 / (2 f_max^2), f_max = 100 Hz; `a` solved by
# mzlock.calibration.calibrate_rolloff.  Regenerate with `mzlock calibrate`.
ROLLOFF_CURVATURE = 0.00017622653424532404
DEFAULT_MAX_MODULATION_HZ = 100.0
DEFAULT_ROLLOFF_COEFFS = (
    1.0,
    0.0,
    -ROLLOFF_CURVATURE,
    0.0,
    ROLLOFF_CURVATURE / (2.0 * DEFAULT_MAX_MODULATION_HZ**2),
)

ORTHOGONALITY_TOL_RAD = 1e-9


def _check_positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class LaserSource:
    """A linearly polarized CW source.

    ``polarization_angle_rad`` is only meaningful modulo pi.
    """

    wavelength_nm: float
    power_w: float
    polarization_angle_rad: float = 0.0
    coherence_length_m: float = 1e-2

    def __post_init__(self):
        _check_positive("wavelength_nm", self.wavelength_nm)
        _check_positive("coherence_length_m", self.coherence_length_m)
        if not (math.isfinite(self.power_w) and self.power_w >= 0):
            raise ValueError(f"power_w must be >= 0, got {self.power_w!r}")
        if not math.isfinite(self.polarization_angle_rad):
            raise ValueError("polarization_angle_rad must be finite")


@dataclass(frozen=True)
class BackgroundSource:
    """Broadband, unpolarized background light with a micron-scale coherence length."""

    power_w: float
    coherence_length_m: float = 1e-6
    wavelength_nm: float = 550.0

    def __post_init__(self):
        if not (math.isfinite(self.power_w) and self.power_w >= 0):
            raise ValueError(f"power_w must be >= 0, got {self.power_w!r}")
        _check_positive("coherence_length_m", self.coherence_length_m)
        _check_positive("wavelength_nm", self.wavelength_nm)

    def as_source(self) -> LaserSource:
        # Unpolarized light splits evenly between the two polarization channels.
        return LaserSource(self.wavelength_nm, self.power_w, math.pi / 4, self.coherence_length_m)


@dataclass(frozen=True)
class LcmDevice:
    """Liquid-crystal variable retarder.

    Voltages are per-electrode amplitudes, the scale on which ``v_pi_volts``
    is quoted.  ``rolloff_coeffs`` are the quartic coefficients ``c0..c4`` of
    the amplitude response against modulation frequency in Hz.
    """

    axis_angle_rad: float = 0.0
    v_pi_volts: float = 2.5
    v_pi_reference_wavelength_nm: float = 635.0
    rolloff_coeffs: tuple[float, ...] = DEFAULT_ROLLOFF_COEFFS
    degradation_factor: float = 1.0
    min_wavelength_nm: float = 450.0
    max_wavelength_nm: float = 700.0
    max_modulation_hz: float = DEFAULT_MAX_MODULATION_HZ

    def __post_init__(self):
        _check_positive("v_pi_volts", self.v_pi_volts)
        _check_positive("v_pi_reference_wavelength_nm", self.v_pi_reference_wavelength_nm)
        _check_positive("max_modulation_hz", self.max_modulation_hz)
        if not 0.0 <= self.degradation_factor <= 1.0:
            raise ValueError(f"degradation_factor must lie in [0, 1], got {self.degradation_factor!r}")
        if not 0 < self.min_wavelength_nm < self.max_wavelength_nm:
            raise ValueError("need 0 < min_wavelength_nm < max_wavelength_nm")
        coeffs = tuple(float(c) for c in self.rolloff_coeffs)
        if len(coeffs) != 5:
            raise ValueError(f"rolloff_coeffs needs 5 entries (c0..c4), got {len(coeffs)}")
        object.__setattr__(self, "rolloff_coeffs", coeffs)
        grid = np.linspace(0.0, self.max_modulation_hz, 401)
        response = lcm_frequency_response(self, grid)
        if np.any(np.diff(response) > 1e-12):
            raise ValueError("rolloff_coeffs give a response that increases inside the operating band")

    def v_pi_at(self, wavelength_nm: float) -> float:
        """Half-wave voltage at ``wavelength_nm``, scaled linearly from the reference."""
        return self.v_pi_volts * wavelength_nm / self.v_pi_reference_wavelength_nm

    def in_band(self, wavelength_nm: float) -> bool:
        return self.min_wavelength_nm <= wavelength_nm <= self.max_wavelength_nm


def _orthogonal_default():
    return LcmDevice(axis_angle_rad=math.pi / 2)


@dataclass(frozen=True)
class MziConfig:
    """Interferometer geometry.  ``modulator_b=None`` is the single-modulator system."""

    modulator_a: LcmDevice = field(default_factory=LcmDevice)
    modulator_b: LcmDevice | None = field(default_factory=_orthogonal_default)
    split_ratio: float = 0.5
    path_difference_m: float = 5e-6
    detector_responsivity: float = 1.0
    visibility_profile: str = "gaussian"
    allow_nonorthogonal: bool = False

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError(f"split_ratio must lie in (0, 1), got {self.split_ratio!r}")
        if not (math.isfinite(self.path_difference_m) and self.path_difference_m >= 0):
            raise ValueError("path_difference_m must be >= 0")
        _check_positive("detector_responsivity", self.detector_responsivity)
        if self.visibility_profile not in _VISIBILITY_PROFILES:
            raise ValueError(
                f"visibility_profile must be one of {sorted(_VISIBILITY_PROFILES)}, "
                f"got {self.visibility_profile!r}"
            )
        if self.modulator_b is not None and not self.allow_nonorthogonal:
            gap = (self.modulator_b.axis_angle_rad - self.modulator_a.axis_angle_rad) % math.pi
            if abs(gap - math.pi / 2) > ORTHOGONALITY_TOL_RAD:
                raise ValueError(
                    "modulator axes must be orthogonal; set allow_nonorthogonal to override"
                )

    @property
    def dual(self) -> bool:
        return self.modulator_b is not None


def _gaussian_visibility(x):
    return math.exp(-(x * x))


def _lorentzian_visibility(x):
    return math.exp(-x)


_VISIBILITY_PROFILES = {"gaussian": _gaussian_visibility, "lorentzian": _lorentzian_visibility}


def fringe_visibility(path_difference_m, coherence_length_m, profile="gaussian"):
    """Fringe contrast for an arm asymmetry ``path_difference_m``.

    The default Gaussian profile is ``exp(-(dL/Lc)^2)``; ``"lorentzian"``
    gives ``exp(-dL/Lc)``.
    """
    if not (math.isfinite(coherence_length_m) and coherence_length_m > 0):
        raise ValueError("coherence_length_m must be positive")
    if not (math.isfinite(path_difference_m) and path_difference_m >= 0):
        raise ValueError("path_difference_m must be >= 0")
    try:
        law = _VISIBILITY_PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown visibility profile {profile!r}") from None
    return law(path_difference_m / coherence_length_m)


def lcm_frequency_response(device: LcmDevice, modulation_freq_hz):
    """Relative retardance amplitude the device reaches at ``modulation_freq_hz``.

    The quartic is held at its band-edge value above ``max_modulation_hz``,
    clipped to [0, 1] and scaled by the device's degradation factor.
    Accepts scalars or arrays.
    """
    f = np.asarray(modulation_freq_hz, dtype=float)
    if np.any(~np.isfinite(f)) or np.any(f < 0):
        raise ValueError("modulation frequency must be finite and >= 0")
    f = np.minimum(f, device.max_modulation_hz)
    r = np.polynomial.polynomial.polyval(f, device.rolloff_coeffs)
    r = np.clip(r, 0.0, 1.0) * device.degradation_factor
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True)
class DetectorIntensities:
    i1: np.ndarray | float
    i2: np.ndarray | float
    components: tuple  # (I1x, I1y, I2x, I2y)
    out_of_band: tuple[str, ...] = ()


def _phase(device, wavelength_nm, volts, label, flags):
    if not device.in_band(wavelength_nm):
        flags.append(label)
        return np.zeros_like(volts)
    return math.pi * volts / device.v_pi_at(wavelength_nm)


def detector_intensities(config: MziConfig, source: LaserSource, v_a, v_b=0.0) -> DetectorIntensities:
    """Optical power on both detectors for modulator voltages ``v_a`` and ``v_b``.

    Voltages may be arrays (broadcast together).  ``v_b`` is ignored for a
    single-modulator system.  A modulator whose band excludes the source
    wavelength does not modulate; its label appears in ``out_of_band``.
    """
    v_a = np.asarray(v_a, dtype=float)
    v_b = np.asarray(v_b, dtype=float)
    if not (np.all(np.isfinite(v_a)) and np.all(np.isfinite(v_b))):
        raise ValueError("drive voltages must be finite")

    flags: list[str] = []
    lam = source.wavelength_nm
    rel = source.polarization_angle_rad - config.modulator_a.axis_angle_rad
    w_mod = math.sin(rel) ** 2
    w_comp = math.cos(rel) ** 2
    scale = 2.0 * source.power_w * config.split_ratio**2
    vis = fringe_visibility(config.path_difference_m, source.coherence_length_m, config.visibility_profile)

    fringe_a = vis * np.cos(_phase(config.modulator_a, lam, v_a, "a", flags))
    i1x = scale * w_mod * (1.0 + fringe_a)
    i2x = scale * w_mod * (1.0 - fringe_a)
    if config.modulator_b is None:
        i1y = i2y = np.full_like(i1x, scale * w_comp)
    else:
        fringe_b = vis * np.cos(_phase(config.modulator_b, lam, v_b, "b", flags))
        i1y = scale * w_comp * (1.0 + fringe_b)
        i2y = scale * w_comp * (1.0 - fringe_b)
        i1x, i2x, i1y, i2y = np.broadcast_arrays(i1x, i2x, i1y, i2y)

    if i1x.ndim == 0:
        i1x, i1y, i2x, i2y = (float(x) for x in (i1x, i1y, i2x, i2y))
    return DetectorIntensities(i1x + i1y, i2x + i2y, (i1x, i1y, i2x, i2y), tuple(flags))


def balanced_modulation_depth(
    config: MziConfig,
    source: LaserSource,
    amplitude_volts: float,
    phase_fraction_f: float,
    n_samples: int = 4096,
) -> float:
    """Peak-to-peak of ``i1 - i2`` over one cycle of a sinusoidal drive.

    Modulator ``a`` sees ``A (1 - cos tau) / 2`` and ``b`` the same envelope
    lagging by ``f * pi``.
    """
    if amplitude_volts < 0:
        raise ValueError("amplitude_volts must be >= 0")
    if not 0.0 <= phase_fraction_f <= 1.0:
        raise ValueError("phase_fraction_f must lie in [0, 1]")
    # Even n keeps tau = 0 and tau = pi (the envelope extremes of `a`) on the grid.
    n = n_samples + (n_samples % 2)
    tau = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    v_a = 0.5 * amplitude_volts * (1.0 - np.cos(tau))
    v_b = 0.5 * amplitude_volts * (1.0 - np.cos(tau - phase_fraction_f * math.pi))
    out = detector_intensities(config, source, v_a, v_b)
    diff = np.asarray(out.i1 - out.i2)
    return float(diff.max() - diff.min())
