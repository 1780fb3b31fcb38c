"""Simulation and detection chain for a liquid-crystal-modulated Mach-Zehnder laser detector."""

from .drive import DriveWaveform, analog_drive, digital_drive, effective_retardance
from .dsp import DetectionResult, PowerSpectrum, accumulate, balanced_spectrum, detect, power_spectrum, snr_at
from .model import (
    BackgroundSource,
    LaserSource,
    LcmDevice,
    MziConfig,
    balanced_modulation_depth,
    detector_intensities,
    fringe_visibility,
    lcm_frequency_response,
)
from .synth import Interferogram, NoiseModel, Scene, dual_frequency_synthesize, synthesize

__version__ = "0.1.0"
