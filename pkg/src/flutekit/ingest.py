"""Input parsing and hop-grid placement.

Two parallel streams enter the pipeline: a time-coded breath-pressure log
(irregular sample times, as fast as the sensor rig could push them) and a
mono audio recording.  Everything downstream works on a fixed-rate hop
grid, so this module resamples both streams onto it: the pressure by
linear interpolation at hop times, the audio by polyphase windowed-sinc
resampling to the grid's sample rate.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly


class LogFormatError(ValueError):
    """Pressure log is malformed (bad header, bad row, bad ordering)."""


class AudioFormatError(ValueError):
    """Audio input could not be decoded as a supported WAV stream."""


@dataclass(frozen=True)
class PressureSample:
    """One sensor reading: elapsed time in ms, absolute pressure in Pa."""

    t_ms: float
    p_pa: float


@dataclass
class PressureSeries:
    """Ordered, time-coded absolute-pressure readings."""

    samples: list[PressureSample]

    def __post_init__(self) -> None:
        if len(self.samples) < 2:
            raise LogFormatError("pressure series needs at least 2 samples")
        t = self.t_ms
        if not np.all(np.isfinite(t)) or t[0] < 0:
            raise LogFormatError("timestamps must be finite and non-negative")
        if np.any(np.diff(t) < 0):
            raise LogFormatError("timestamps must be non-decreasing")
        if np.any(self.p_pa <= 0) or not np.all(np.isfinite(self.p_pa)):
            raise LogFormatError("absolute pressure must be positive and finite")

    @property
    def t_ms(self) -> np.ndarray:
        return np.array([s.t_ms for s in self.samples])

    @property
    def p_pa(self) -> np.ndarray:
        return np.array([s.p_pa for s in self.samples])


@dataclass(frozen=True)
class HopGrid:
    """Fixed analysis grid: audio rate, hop stride, and page (window) size."""

    sample_rate: int = 22050
    hop: int = 512
    window: int = 2048

    def __post_init__(self) -> None:
        if not (self.window >= self.hop > 0):
            raise ValueError("need window >= hop > 0")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def hop_rate(self) -> float:
        """Hops per second (22050/512 = 43.06640625 at defaults)."""
        return self.sample_rate / self.hop

    @property
    def hop_period_s(self) -> float:
        return self.hop / self.sample_rate

    def hop_times_s(self, n_hops: int) -> np.ndarray:
        return np.arange(n_hops) * self.hop_period_s


@dataclass
class AudioBuffer:
    """Mono audio at the grid sample rate, nominal range [-1, 1]."""

    samples: np.ndarray
    rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioFormatError("audio buffer must be mono (1-D)")
        if not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("audio contains non-finite samples")
        if self.rate <= 0:
            raise AudioFormatError("sample rate must be positive")


def parse_pressure_log(data: bytes | str) -> PressureSeries:
    """Parse a pressure log: UTF-8 CSV with header ``t_ms,p_pa``.

    Rows must be ordered by non-decreasing timestamp.  Row numbers in error
    messages are 1-based and include the header row.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise LogFormatError(f"log is not UTF-8: {exc}") from exc
    lines = data.replace("\r\n", "\n").split("\n")
    if not lines or lines[0].strip() != "t_ms,p_pa":
        raise LogFormatError("expected header 't_ms,p_pa' on row 1")

    samples: list[PressureSample] = []
    prev_t = -math.inf
    for row_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise LogFormatError(f"malformed row {row_no}: {line!r}")
        try:
            t_ms, p_pa = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise LogFormatError(f"malformed row {row_no}: {line!r}") from exc
        if not (math.isfinite(t_ms) and t_ms >= 0):
            raise LogFormatError(f"bad timestamp at row {row_no}: {parts[0]}")
        if t_ms < prev_t:
            raise LogFormatError(f"decreasing timestamp at row {row_no}")
        if not (math.isfinite(p_pa) and p_pa > 0):
            raise LogFormatError(f"non-positive pressure at row {row_no}")
        samples.append(PressureSample(t_ms, p_pa))
        prev_t = t_ms
    if len(samples) < 2:
        raise LogFormatError("log has fewer than 2 samples")
    return PressureSeries(samples)


def serialize_pressure_log(series: PressureSeries) -> str:
    """Inverse of :func:`parse_pressure_log` (value-identical round trip)."""
    out = ["t_ms,p_pa"]
    out.extend(f"{s.t_ms!r},{s.p_pa!r}" for s in series.samples)
    return "\n".join(out) + "\n"


def resample_pressure(
    series: PressureSeries, grid: HopGrid, n_hops: int, phase_hops: float = 0.0
) -> np.ndarray:
    """Linearly resample the irregular series at hop times k*hop/sample_rate.

    Hops before the first / after the last logged sample hold the boundary
    value rather than extrapolating (those hops fall in silence anyway).
    `phase_hops` shifts every evaluation time by a fixed fraction of a hop;
    feature extraction uses it to read pressure at page centers.
    """
    if n_hops < 1:
        raise ValueError("n_hops must be >= 1")
    t_hop_ms = (np.arange(n_hops) + phase_hops) * grid.hop_period_s * 1000.0
    return np.interp(t_hop_ms, series.t_ms, series.p_pa)


def load_audio(data: bytes, grid: HopGrid) -> AudioBuffer:
    """Decode a PCM WAV (16-bit int or 32-bit float) onto the grid rate.

    Stereo is averaged to mono.  A differing source rate is converted with
    polyphase windowed-sinc resampling.
    """
    try:
        rate, raw = wavfile.read(io.BytesIO(data))
    except Exception as exc:
        raise AudioFormatError(f"could not decode WAV: {exc}") from exc
    if raw.size == 0:
        raise AudioFormatError("zero-length audio")

    x = raw.astype(np.float64)
    if raw.dtype == np.int16:
        x /= 32768.0
    elif raw.dtype == np.int32:
        x /= 2147483648.0
    elif raw.dtype == np.uint8:
        x = (x - 128.0) / 128.0
    elif raw.dtype not in (np.float32, np.float64):
        raise AudioFormatError(f"unsupported sample format: {raw.dtype}")

    if x.ndim == 2:
        x = x.mean(axis=1)
    elif x.ndim != 1:
        raise AudioFormatError("unsupported channel layout")

    if rate != grid.sample_rate:
        g = math.gcd(int(rate), grid.sample_rate)
        x = resample_poly(x, grid.sample_rate // g, int(rate) // g)
    return AudioBuffer(samples=x, rate=grid.sample_rate)
