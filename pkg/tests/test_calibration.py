import math

import numpy as np
import pytest

from mzlock.calibration import (
    REPORTED_THRESHOLDS_W,
    calibrate_noise,
    calibrate_rolloff,
    integration_gain,
    modulation_amplitude,
    noise_crossing,
    rolloff_coeffs,
    rolloff_target_ratio,
)
from mzlock.experiments import Bench, default_laser
from mzlock.model import DEFAULT_ROLLOFF_COEFFS, ROLLOFF_CURVATURE
from mzlock.synth import DEFAULT_NOISE_RMS_W, Scene


def test_frozen_rolloff_matches_fresh_calibration():
    assert calibrate_rolloff() == pytest.approx(ROLLOFF_CURVATURE, rel=1e-9)
    assert rolloff_coeffs(ROLLOFF_CURVATURE) == pytest.approx(DEFAULT_ROLLOFF_COEFFS, rel=1e-15)


def test_rolloff_ratio_hits_target():
    bench = Bench()
    ratio = modulation_amplitude(bench, 20.0) / modulation_amplitude(bench, 72.0)
    assert ratio == pytest.approx(rolloff_target_ratio(bench), rel=1e-6)


def test_integration_gain_is_fourth_root_of_frames():
    bench = Bench()
    assert bench.frames(1.0) == 4 and bench.frames(5.0) == 24
    assert integration_gain(bench) == pytest.approx(6 ** 0.25)


@pytest.mark.slow
def test_frozen_noise_matches_fresh_calibration():
    assert calibrate_noise(trials=100) == pytest.approx(DEFAULT_NOISE_RMS_W, rel=2e-3)


@pytest.mark.slow
def test_calibrated_crossing_and_threshold_snr():
    bench = Bench()
    target = REPORTED_THRESHOLDS_W[(20.0, 1.0)]
    assert noise_crossing(bench, trials=100) == pytest.approx(target, rel=0.01)
    scene = Scene((default_laser(target),))
    snr = [bench.detect(bench.synth(scene, 1.0, seed=s), 20.0, 1.0).snr for s in range(100)]
    assert 0.5 <= np.mean(snr) <= 2.0


def test_rolloff_coeffs_shape():
    c = rolloff_coeffs(1e-4, 50.0)
    assert c[0] == 1.0 and c[1] == c[3] == 0.0
    # Derivative vanishes at the band edge.
    f = 50.0
    assert 2 * c[2] * f + 4 * c[4] * f**3 == pytest.approx(0.0, abs=1e-15)
    assert math.isfinite(rolloff_target_ratio(Bench()))
