"""Run configuration: a TOML document with sections scene, mzi, drive,
acquisition, noise, dsp and sweep.  Every key carries its unit in its name.

Files are merged over the defaults below; unknown keys are rejected.
``--set section.key=value`` overrides use TOML literal syntax for the value
(bare words are taken as strings).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from .drive import DriveWaveform
from .experiments import DEFAULT_FREQUENCIES_HZ, DEFAULT_INTEGRATION_S, DEFAULT_POWERS_W, Bench
from .model import DEFAULT_ROLLOFF_COEFFS, BackgroundSource, LaserSource, LcmDevice, MziConfig
from .synth import DEFAULT_NOISE_RMS_W, NoiseModel, Scene

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "describe_keys", "load_config"]


class ConfigError(ValueError):
    """Bad configuration; ``key`` names the offending dotted key when known."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


def _modulator(axis_deg):
    return {
        "axis_deg": (axis_deg, "modulation axis orientation"),
        "v_pi_v": (2.5, "half-wave voltage (per electrode) at the reference wavelength"),
        "v_pi_reference_wavelength_nm": (635.0, "wavelength at which v_pi_v applies"),
        "rolloff_coeffs_per_hz_pow": (list(DEFAULT_ROLLOFF_COEFFS), "quartic rolloff c0..c4, f in Hz"),
        "degradation": (1.0, "response scale, 1 = new device"),
        "min_wavelength_nm": (450.0, "lower edge of the modulating band"),
        "max_wavelength_nm": (700.0, "upper edge of the modulating band"),
        "max_modulation_hz": (100.0, "upper edge of the characterized frequency band"),
    }


LASER_KEYS = {
    "wavelength_nm": (635.0, "laser wavelength"),
    "power_w": (1e-6, "optical power at the instrument"),
    "polarization_deg": (30.0, "linear polarization angle"),
    "coherence_length_m": (1e-2, "coherence length"),
}

# section -> key -> (default, help).  Nested dicts are sub-tables.
SCHEMA = {
    "scene": {
        "lasers": ([{k: v for k, (v, _) in LASER_KEYS.items()}], "array of laser tables: " + ", ".join(LASER_KEYS)),
        "background_power_w": (0.0, "broadband background power (0 = none)"),
        "background_coherence_length_m": (1e-6, "background coherence length"),
        "background_wavelength_nm": (550.0, "background centre wavelength"),
    },
    "mzi": {
        "split_ratio": (0.5, "amplitude splitting ratio B"),
        "path_difference_m": (5e-6, "arm length asymmetry"),
        "dual_modulator": (True, "use the second, orthogonal modulator"),
        "detector_responsivity_a_per_w": (1.0, "detector responsivity"),
        "visibility_profile": ("gaussian", "gaussian | lorentzian"),
        "allow_nonorthogonal": (False, "accept non-orthogonal modulator axes"),
        "modulator_a": _modulator(0.0),
        "modulator_b": _modulator(90.0),
    },
    "drive": {
        "mode": ("digital", "analog | digital"),
        "carrier_freq_hz": (2000.0, "polarity-reversal carrier"),
        "modulation_freq_hz": (20.0, "modulation frequency of modulator a"),
        "modulation_freq_b_hz": (0.0, "modulation frequency of modulator b (0 = same as a)"),
        "amplitude_v": (2.5, "analog envelope peak, per electrode"),
        "phase_offset_pi": (0.0, "lag of modulator b's envelope, in units of pi"),
        "digital_low_v": (0.0, "digital low level"),
        "digital_high_v": (5.0, "digital high level"),
    },
    "acquisition": {
        "duration_s": (2.0, "recording length"),
        "sample_rate_hz": (20000.0, "sampling rate per channel"),
    },
    "noise": {
        "rms_w": (DEFAULT_NOISE_RMS_W, "additive white noise per sample and channel"),
        "seed": (0, "RNG seed (MZLOCK_SEED overrides)"),
        "scintillation_enabled": (False, "multiply sources by slow intensity noise"),
        "scintillation_cutoff_hz": (5.0, "scintillation bandwidth"),
        "scintillation_index": (0.05, "relative rms of the scintillation"),
    },
    "dsp": {
        "fft_length": (4096, "frame length, power of two"),
        "window": ("hann", "hann | rect"),
        "guard_bins": (2, "peak search half-width in bins"),
        "noise_estimator": ("median", "median | mean_excluding"),
        "floor_sigma": (4.0, "noise floor in standard deviations of the accumulated floor"),
        "threshold": (1.0, "detection threshold on S:N"),
        "integration_s": (1.0, "spectra accumulated over this time"),
        "target_freq_hz": (0.0, "frequency to test (0 = drive modulation frequency)"),
    },
    "sweep": {
        "theta_step_deg": (5.0, "polarization grid step"),
        "phase_fractions": ([0.0, 0.25, 0.5, 0.75, 1.0], "fig3 offsets, units of pi"),
        "amplitude_step_v": (0.25, "fig7 amplitude step"),
        "amplitude_max_v": (5.0, "fig7 amplitude limit"),
        "wavelengths_nm": ([635.0, 532.0, 405.0], "fig7 wavelengths"),
        "fig7_power_w": (1e-5, "fig7 laser power"),
        "fig8_power_w": (1e-6, "fig8 laser power"),
        "fig8_mod_freq_hz": (20.0, "fig8 modulation frequency"),
        "response_freq_step_hz": (2.0, "fig5 frequency step"),
        "frequencies_hz": (list(DEFAULT_FREQUENCIES_HZ), "fig9 modulation frequencies"),
        "powers_w": (list(DEFAULT_POWERS_W), "fig9 laser powers"),
        "integration_times_s": (list(DEFAULT_INTEGRATION_S), "fig9 integration times"),
        "trials": (20, "fig9 Monte-Carlo trials per point"),
    },
}


def _defaults(schema):
    return {k: _defaults(v) if isinstance(v, dict) else copy.deepcopy(v[0]) for k, v in schema.items()}


def describe_keys() -> str:
    """One line per config key with default and meaning (for ``--help``)."""
    lines = []

    def walk(schema, prefix):
        for k, v in schema.items():
            if isinstance(v, dict):
                walk(v, f"{prefix}{k}.")
                continue
            default, text = v
            shown = "[...]" if isinstance(default, list) and len(default) > 6 else json.dumps(default)
            lines.append(f"  {prefix}{k} = {shown}  # {text}")

    walk(SCHEMA, "")
    return "\n".join(lines)


def _coerce(value, default, key):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        if not math.isfinite(value):
            raise ConfigError("must be finite", key)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"expected an array, got {value!r}", key)
        if key == "scene.lasers":
            return [_laser_table(item, f"{key}.{i}") for i, item in enumerate(value)]
        return [_coerce(v, 0.0, f"{key}.{i}") for i, v in enumerate(value)]
    raise ConfigError("unsupported value", key)


def _laser_table(item, key):
    if not isinstance(item, dict):
        raise ConfigError("each laser must be a table", key)
    out = {}
    for k, (default, _) in LASER_KEYS.items():
        out[k] = _coerce(item.get(k, default), default, f"{key}.{k}")
    for k in item:
        if k not in LASER_KEYS:
            raise ConfigError("unknown key", f"{key}.{k}")
    return out


def _merge(base, incoming, schema, prefix=""):
    for k, v in incoming.items():
        key = f"{prefix}{k}"
        if k not in schema:
            raise ConfigError("unknown key", key)
        if isinstance(schema[k], dict):
            if not isinstance(v, dict):
                raise ConfigError("expected a table", key)
            _merge(base[k], v, schema[k], key + ".")
        else:
            base[k] = _coerce(v, schema[k][0], key)


def _parse_override(text):
    path, sep, raw = text.partition("=")
    if not sep or not path.strip():
        raise ConfigError(f"override {text!r} is not section.key=value")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return [p.strip() for p in path.split(".")], value


def _apply_override(data, parts, value):
    key = ".".join(parts)
    if parts[:2] == ["scene", "lasers"] and len(parts) == 4 and parts[2].isdigit():
        idx = int(parts[2])
        lasers = data["scene"]["lasers"]
        if idx > len(lasers):
            raise ConfigError("laser index out of range", key)
        if idx == len(lasers):
            lasers.append({k: v for k, (v, _) in LASER_KEYS.items()})
        if parts[3] not in LASER_KEYS:
            raise ConfigError("unknown key", key)
        lasers[idx][parts[3]] = _coerce(value, LASER_KEYS[parts[3]][0], key)
        return
    nested = value
    for p in reversed(parts):
        nested = {p: nested}
    _merge(data, nested, SCHEMA)


@dataclass
class RunConfig:
    data: dict

    @property
    def seed(self) -> int:
        return self.data["noise"]["seed"]

    def digest(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def scene(self) -> Scene:
        s = self.data["scene"]
        lasers = [
            LaserSource(l["wavelength_nm"], l["power_w"], math.radians(l["polarization_deg"]), l["coherence_length_m"])
            for l in s["lasers"]
        ]
        bg = None
        if s["background_power_w"] > 0:
            bg = BackgroundSource(s["background_power_w"], s["background_coherence_length_m"], s["background_wavelength_nm"])
        return Scene(tuple(lasers), bg)

    def laser(self) -> LaserSource:
        lasers = self.scene().lasers
        if not lasers:
            raise ConfigError("at least one laser is needed", "scene.lasers")
        return lasers[0]

    def _device(self, name):
        m = self.data["mzi"][name]
        return LcmDevice(
            axis_angle_rad=math.radians(m["axis_deg"]),
            v_pi_volts=m["v_pi_v"],
            v_pi_reference_wavelength_nm=m["v_pi_reference_wavelength_nm"],
            rolloff_coeffs=tuple(m["rolloff_coeffs_per_hz_pow"]),
            degradation_factor=m["degradation"],
            min_wavelength_nm=m["min_wavelength_nm"],
            max_wavelength_nm=m["max_wavelength_nm"],
            max_modulation_hz=m["max_modulation_hz"],
        )

    def mzi(self) -> MziConfig:
        m = self.data["mzi"]
        return MziConfig(
            modulator_a=self._device("modulator_a"),
            modulator_b=self._device("modulator_b") if m["dual_modulator"] else None,
            split_ratio=m["split_ratio"],
            path_difference_m=m["path_difference_m"],
            detector_responsivity=m["detector_responsivity_a_per_w"],
            visibility_profile=m["visibility_profile"],
            allow_nonorthogonal=m["allow_nonorthogonal"],
        )

    def drive(self) -> DriveWaveform:
        d = self.data["drive"]
        return DriveWaveform(
            mode=d["mode"],
            carrier_freq_hz=d["carrier_freq_hz"],
            modulation_freq_hz=d["modulation_freq_hz"],
            amplitude_volts=d["amplitude_v"],
            phase_offset_fraction=d["phase_offset_pi"],
            duty_levels=(d["digital_low_v"], d["digital_high_v"]),
        )

    def noise(self) -> NoiseModel:
        n = self.data["noise"]
        return NoiseModel(n["rms_w"], n["seed"], n["scintillation_enabled"], n["scintillation_cutoff_hz"],
                          n["scintillation_index"])

    def bench(self) -> Bench:
        d = self.data["dsp"]
        return Bench(
            config=self.mzi(),
            drive=self.drive(),
            noise=self.noise(),
            sample_rate_hz=self.data["acquisition"]["sample_rate_hz"],
            fft_length=d["fft_length"],
            window=d["window"],
            guard_bins=d["guard_bins"],
            noise_estimator=d["noise_estimator"],
            floor_sigma=d["floor_sigma"],
            threshold=d["threshold"],
        )

    def validate(self):
        """Build every domain object once so bad values surface as ConfigError."""
        builders = [("scene", self.scene), ("mzi", self.mzi), ("drive", self.drive), ("noise", self.noise),
                    ("dsp", self.bench)]
        for section, build in builders:
            try:
                build()
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(str(exc), section) from exc
        d = self.data["dsp"]
        fft = d["fft_length"]
        if fft < 2 or fft & (fft - 1):
            raise ConfigError("must be a power of two", "dsp.fft_length")
        if d["window"] not in ("hann", "rect"):
            raise ConfigError("must be hann or rect", "dsp.window")
        if d["noise_estimator"] not in ("median", "mean_excluding"):
            raise ConfigError("must be median or mean_excluding", "dsp.noise_estimator")
        if self.data["acquisition"]["duration_s"] <= 0:
            raise ConfigError("must be positive", "acquisition.duration_s")
        return self


def load_config(paths=(), overrides=(), env=None) -> RunConfig:
    """Defaults, then each TOML file in order, then ``--set`` overrides, then ``MZLOCK_SEED``."""
    data = _defaults(SCHEMA)
    for path in paths:
        path = Path(path)
        text = path.read_text()
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        _merge(data, doc, SCHEMA)
    for text in overrides:
        parts, value = _parse_override(text)
        _apply_override(data, parts, value)
    seed = (env or {}).get("MZLOCK_SEED")
    if seed is not None:
        try:
            data["noise"]["seed"] = int(seed)
        except ValueError:
            raise ConfigError(f"MZLOCK_SEED must be an integer, got {seed!r}", "noise.seed") from None
    return RunConfig(data).validate()


def to_toml(sections: dict) -> str:
    """Minimal TOML writer for the flat/nested numeric tables ``calibrate`` emits."""
    out = []

    def emit(table, prefix):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
        if scalars:
            out.append(f"[{prefix}]")
            for k, v in scalars.items():
                out.append(f"{k} = {json.dumps(v)}")
            out.append("")
        for k, v in table.items():
            if isinstance(v, dict):
                emit(v, f"{prefix}.{k}" if prefix else k)

    emit(sections, "")
    return "\n".join(out)
