"""Flat key=value config files and reproducibility manifests.

Config files hold one ``key = value`` pair per line with ``#`` comments.
Keys mirror the config dataclass field names; array geometry is specified
either as a uniform linear array (mic_count / mic_spacing) or as explicit
semicolon-separated mic_positions.
"""

import hashlib
import json
import math
import time
from dataclasses import asdict

import numpy as np

from .pipeline import PipelineConfig
from .scene import SceneSpec
from .spatial import ArrayGeometry, uniform_linear_array
from .stft import StftConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input."""


def parse_config_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def read_config_file(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _parse_float(value: str) -> float:
    if value.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(value)


def _parse_geometry(entries: dict[str, str]) -> ArrayGeometry:
    reference = int(entries.pop("reference_index", 0))
    speed = _parse_float(entries.pop("speed_of_sound", "343.0"))
    if "mic_positions" in entries:
        rows = []
        for chunk in entries.pop("mic_positions").split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            coords = [float(c) for c in chunk.split(",")]
            if len(coords) != 3:
                raise ConfigError("each mic position needs 3 coordinates")
            rows.append(coords)
        entries.pop("mic_count", None)
        entries.pop("mic_spacing", None)
        return ArrayGeometry(mic_positions=np.array(rows),
                             reference_index=reference, speed_of_sound=speed)
    count = int(entries.pop("mic_count", 8))
    spacing = _parse_float(entries.pop("mic_spacing", "0.04"))
    geom = uniform_linear_array(count, spacing, reference_index=reference)
    return ArrayGeometry(mic_positions=geom.mic_positions,
                         reference_index=reference, speed_of_sound=speed)


def _parse_stft(entries: dict[str, str]) -> StftConfig:
    return StftConfig(
        frame_len=int(entries.pop("frame_len", 512)),
        hop=int(entries.pop("hop", 256)),
        fft_len=int(entries.pop("fft_len", 512)),
        sample_rate=int(entries.pop("sample_rate", 16000)),
    )


_PIPELINE_FLOATS = ("doa_azimuth", "doa_elevation", "fusion_weight",
                    "psd_smoothing", "transition_factor", "diagonal_loading",
                    "kalman_initial_cov")
_PIPELINE_INTS = ("prediction_delay", "prediction_order",
                  "diagnostics_decimation")


def pipeline_config_from_entries(entries: dict[str, str]) -> PipelineConfig:
    entries = dict(entries)
    try:
        stft = _parse_stft(entries)
        geometry = _parse_geometry(entries)
        kwargs = {"stft": stft, "geometry": geometry}
        for name in _PIPELINE_FLOATS:
            if name in entries:
                kwargs[name] = _parse_float(entries.pop(name))
        for name in _PIPELINE_INTS:
            if name in entries:
                kwargs[name] = int(entries.pop(name))
        if "process_noise_var" in entries:
            raw = entries.pop("process_noise_var")
            kwargs["process_noise_var"] = (None if raw.lower() == "none"
                                           else _parse_float(raw))
        if "mode" in entries:
            kwargs["mode"] = entries.pop("mode")
        if entries:
            raise ConfigError(f"unknown config keys: {sorted(entries)}")
        return PipelineConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


_SCENE_FLOATS = ("t60", "snr_db", "doa_azimuth", "doa_elevation", "duration",
                 "early_window_ms")
_SCENE_INTS = ("seed", "early_taps")


def scene_spec_from_entries(entries: dict[str, str]):
    """Returns (SceneSpec, ArrayGeometry, sample_rate, extras) from raw keys.

    extras carries optional source_wav / noise_wav paths.
    """
    entries = dict(entries)
    try:
        sample_rate = int(entries.pop("sample_rate", 16000))
        geometry = _parse_geometry(entries)
        extras = {
            "source_wav": entries.pop("source_wav", None),
            "noise_wav": entries.pop("noise_wav", None),
        }
        kwargs = {}
        for name in _SCENE_FLOATS:
            if name in entries:
                kwargs[name] = _parse_float(entries.pop(name))
        for name in _SCENE_INTS:
            if name in entries:
                kwargs[name] = int(entries.pop(name))
        if entries:
            raise ConfigError(f"unknown scene keys: {sorted(entries)}")
        return SceneSpec(**kwargs), geometry, sample_rate, extras
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_snapshot(obj) -> dict:
    """JSON-ready snapshot of a config dataclass."""

    def clean(value):
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, dict):
            return {k: clean(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [clean(v) for v in value]
        if isinstance(value, float) and math.isinf(value):
            return "inf"
        return value

    return clean(asdict(obj))


class ManifestWriter:
    """Collects everything needed to reproduce a command bit-exactly."""

    def __init__(self, command: str, version: str):
        self.data = {
            "tool": "derev",
            "version": version,
            "command": command,
            "config": {},
            "seed": None,
            "inputs": {},
            "outputs": [],
            "timings_s": {},
        }
        self._stage_start = None
        self._stage_name = None

    def set_config(self, **kwargs) -> None:
        self.data["config"].update({k: v for k, v in kwargs.items()})

    def set_seed(self, seed) -> None:
        self.data["seed"] = seed

    def add_input(self, path) -> None:
        self.data["inputs"][str(path)] = sha256_file(path)

    def add_output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def start_stage(self, name: str) -> None:
        self._stage_name = name
        self._stage_start = time.perf_counter()

    def end_stage(self) -> None:
        if self._stage_name is not None:
            elapsed = time.perf_counter() - self._stage_start
            self.data["timings_s"][self._stage_name] = round(elapsed, 6)
            self._stage_name = None

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
