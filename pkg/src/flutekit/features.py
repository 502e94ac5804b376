"""Per-hop feature extraction: fundamental frequency, amplitude, pitch.

Audio is sliced into overlapping pages on the hop grid.  Each page yields
an f0 estimate (YIN: difference function, cumulative-mean-normalized
difference, absolute-threshold dip picking, parabolic refinement) and an
amplitude (periodogram bin sum over the page size, i.e. the page's mean
square by Parseval).  The resampled pressure joins the same grid so every
hop carries (pressure, f0, pitch, amplitude) plus voicing/discard flags.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .ingest import AudioBuffer, HopGrid, PressureSeries, resample_pressure

# Discard-reason codes used in the table's `discard` column.
DISCARD_NONE = 0
DISCARD_SILENT = 1
DISCARD_DISEQUILIBRIUM = 2

_DISCARD_NAMES = {DISCARD_NONE: "none", DISCARD_SILENT: "silent",
                  DISCARD_DISEQUILIBRIUM: "disequilibrium"}
_DISCARD_CODES = {v: k for k, v in _DISCARD_NAMES.items()}

FEATURES_CSV_HEADER = "index,time_s,pressure_pa,f0_hz,pitch_midi,amplitude,voiced,discard"

DEFAULT_YIN_THRESHOLD = 0.1
DEFAULT_F_MIN = 200.0
DEFAULT_F_MAX = 3000.0


def hz_to_midi(f: float) -> float:
    """Frequency in Hz to MIDI note number (440 Hz -> 69)."""
    if f <= 0:
        raise ValueError("frequency must be positive")
    return 69.0 + 12.0 * math.log2(f / 440.0)


def page_amplitude(page: np.ndarray) -> float:
    """Periodogram bin sum divided by the page size.

    The periodogram is taken without a window function and normalized so
    that its bin sum equals the page's total sample energy, which makes the
    returned amplitude the page's mean square.
    """
    page = np.asarray(page, dtype=np.float64)
    n = page.size
    spec = np.fft.rfft(page)
    power = spec.real**2 + spec.imag**2
    # Reassemble the full-spectrum sum from the one-sided transform.
    total = 2.0 * power.sum() - power[0]
    if n % 2 == 0:
        total -= power[-1]
    periodogram_sum = total / n
    return float(periodogram_sum / n)


def _difference_function(page: np.ndarray, tau_max: int) -> np.ndarray:
    """YIN difference function d(tau) for tau = 0..tau_max, via FFT.

    d(tau) = sum_{j<W} (x[j] - x[j+tau])^2 with a fixed integration window
    W = page size - tau_max, so every lag sums the same number of terms (a
    varying window tilts the dip floor and biases the interpolated minimum).
    The cross term is a correlation of the window against the whole page,
    computed with a zero-padded FFT.
    """
    n = page.size
    w = n - tau_max
    size = 1 << (n + w).bit_length()
    spec_page = np.fft.rfft(page, size)
    spec_win = np.fft.rfft(page[:w], size)
    cross = np.fft.irfft(spec_page * spec_win.conj())[: tau_max + 1]
    cum = np.concatenate(([0.0], np.cumsum(page * page)))
    taus = np.arange(tau_max + 1)
    # energy of x[0:w] + energy of x[tau:tau+w] - 2 * cross-correlation
    return cum[w] + (cum[taus + w] - cum[taus]) - 2.0 * cross


def _cmndf(d: np.ndarray) -> np.ndarray:
    """Cumulative-mean-normalized difference; defined as 1 at lag 0."""
    out = np.ones_like(d)
    cs = np.cumsum(d[1:])
    np.divide(d[1:] * np.arange(1, d.size), cs, out=out[1:], where=cs > 0)
    out[1:][cs <= 0] = 1.0
    return out


def _parabolic_min(y: np.ndarray, i: int) -> float:
    """Fractional abscissa of the parabola through (i-1, i, i+1)."""
    if i <= 0 or i >= y.size - 1:
        return float(i)
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if denom == 0.0:
        return float(i)
    return i + 0.5 * (y[i - 1] - y[i + 1]) / denom


def _cosine_min(y: np.ndarray, i: int, period: float) -> float:
    """Fractional abscissa of the dip, modeling it as C - B*cos(w(x - x0)).

    The difference function of a sinusoid is exactly this shape with
    w = 2*pi/period, so fitting it through three points removes the
    curvature mismatch a parabola leaves at small lags.  Falls back to the
    parabola when the local shape contradicts the model.
    """
    if i <= 0 or i >= y.size - 1 or period <= 0:
        return _parabolic_min(y, i)
    w = 2.0 * math.pi / period
    if w >= math.pi:
        return _parabolic_min(y, i)
    odd = y[i + 1] - y[i - 1]
    even = y[i + 1] + y[i - 1] - 2.0 * y[i]
    if even <= 0.0:
        return _parabolic_min(y, i)
    delta = math.atan2(-odd * (1.0 - math.cos(w)), even * math.sin(w)) / w
    if abs(delta) > 1.0:
        return _parabolic_min(y, i)
    return i + delta


def yin_f0(
    page: np.ndarray,
    rate: float,
    f_min: float = DEFAULT_F_MIN,
    f_max: float = DEFAULT_F_MAX,
    threshold: float = DEFAULT_YIN_THRESHOLD,
) -> float | None:
    """Estimate the fundamental of one audio page; None when unvoiced.

    Picks the first CMNDF dip below `threshold` in the lag range, walks to
    its local minimum, then refines the lag by parabolic interpolation of
    the raw difference function.  No qualifying dip, or a refined frequency
    outside [f_min, f_max], reports unvoiced.
    """
    if not (0 < f_min < f_max < rate / 2):
        raise ValueError("need 0 < f_min < f_max < rate/2")
    page = np.asarray(page, dtype=np.float64)
    tau_min = max(2, int(math.ceil(rate / f_max)))
    tau_max = int(rate / f_min)
    if tau_max + 1 >= page.size:
        raise ValueError("page too short for requested f_min")

    # One lag beyond tau_max so the refinement can interpolate at the edge.
    d = _difference_function(page, tau_max + 1)
    cm = _cmndf(d)

    tau = tau_min
    while tau <= tau_max:
        if cm[tau] < threshold:
            while tau + 1 <= tau_max and cm[tau + 1] < cm[tau]:
                tau += 1
            break
        tau += 1
    else:
        return None

    tau_hat = _cosine_min(d, tau, float(tau))
    if tau_hat <= 0:
        return None
    f = rate / tau_hat
    if not (f_min <= f <= f_max):
        return None
    return float(f)


@dataclass(frozen=True)
class HopRecord:
    """One aligned hop: pressure, f0/pitch when voiced, amplitude, flags."""

    index: int
    time_s: float
    pressure_pa: float
    f0_hz: float | None
    pitch_midi: float | None
    amplitude: float
    voiced: bool
    discard: str  # "none" | "silent" | "disequilibrium"


@dataclass
class TableMeta:
    """Bookkeeping applied to the table: alignment shift and pressure zero."""

    offset_hops: int = 0
    baseline_pa: float | None = None


@dataclass
class FeatureTable:
    """Dense per-hop records on a hop grid, column-oriented.

    `f0_hz` and `pitch_midi` hold NaN on unvoiced hops.  `discard` holds
    the integer codes DISCARD_*.
    """

    grid: HopGrid
    pressure_pa: np.ndarray
    f0_hz: np.ndarray
    pitch_midi: np.ndarray
    amplitude: np.ndarray
    voiced: np.ndarray
    discard: np.ndarray
    meta: TableMeta = field(default_factory=TableMeta)

    def __len__(self) -> int:
        return self.pressure_pa.size

    @property
    def index(self) -> np.ndarray:
        return np.arange(len(self))

    @property
    def time_s(self) -> np.ndarray:
        return self.grid.hop_times_s(len(self))

    def copy(self) -> "FeatureTable":
        return FeatureTable(
            grid=self.grid,
            pressure_pa=self.pressure_pa.copy(),
            f0_hz=self.f0_hz.copy(),
            pitch_midi=self.pitch_midi.copy(),
            amplitude=self.amplitude.copy(),
            voiced=self.voiced.copy(),
            discard=self.discard.copy(),
            meta=TableMeta(self.meta.offset_hops, self.meta.baseline_pa),
        )

    def records(self) -> Iterator[HopRecord]:
        times = self.time_s
        for i in range(len(self)):
            voiced = bool(self.voiced[i])
            yield HopRecord(
                index=i,
                time_s=float(times[i]),
                pressure_pa=float(self.pressure_pa[i]),
                f0_hz=float(self.f0_hz[i]) if voiced else None,
                pitch_midi=float(self.pitch_midi[i]) if voiced else None,
                amplitude=float(self.amplitude[i]),
                voiced=voiced,
                discard=_DISCARD_NAMES[int(self.discard[i])],
            )


def n_pages(n_samples: int, grid: HopGrid) -> int:
    """Number of full analysis pages in an audio stream."""
    if n_samples < grid.window:
        raise ValueError("audio shorter than one analysis page")
    return (n_samples - grid.window) // grid.hop + 1


def extract_features(
    audio: AudioBuffer,
    pressure: PressureSeries,
    grid: HopGrid,
    f_min: float = DEFAULT_F_MIN,
    f_max: float = DEFAULT_F_MAX,
    yin_threshold: float = DEFAULT_YIN_THRESHOLD,
) -> FeatureTable:
    """Compute one record per full page and join the resampled pressure.

    The voiced flag reflects YIN alone at this stage; the amplitude gate is
    applied later by silence detection.  Pressure is raw (absolute), not
    yet zeroed to atmosphere.

    A page's f0 and amplitude describe the window [k*hop, k*hop + window),
    whose effective center sits window/(2*hop) hops after the hop stamp, so
    the pressure is read there rather than at the page start.
    """
    if audio.rate != grid.sample_rate:
        raise ValueError("audio buffer is not on the grid sample rate")
    x = audio.samples
    count = n_pages(x.size, grid)

    f0 = np.full(count, np.nan)
    amp = np.empty(count)
    for k in range(count):
        page = x[k * grid.hop : k * grid.hop + grid.window]
        amp[k] = page_amplitude(page)
        est = yin_f0(page, grid.sample_rate, f_min, f_max, yin_threshold)
        if est is not None:
            f0[k] = est

    voiced = np.isfinite(f0)
    pitch = np.full(count, np.nan)
    pitch[voiced] = 69.0 + 12.0 * np.log2(f0[voiced] / 440.0)

    page_center = grid.window / (2.0 * grid.hop)
    return FeatureTable(
        grid=grid,
        pressure_pa=resample_pressure(pressure, grid, count, phase_hops=page_center),
        f0_hz=f0,
        pitch_midi=pitch,
        amplitude=amp,
        voiced=voiced,
        discard=np.zeros(count, dtype=np.int8),
    )


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_features(table: FeatureTable) -> str:
    """Features CSV: one row per hop, absent values empty, flags 0/1."""
    lines = [FEATURES_CSV_HEADER]
    times = table.time_s
    for i in range(len(table)):
        voiced = bool(table.voiced[i])
        f0 = _fmt(table.f0_hz[i]) if voiced else ""
        pitch = _fmt(table.pitch_midi[i]) if voiced else ""
        lines.append(
            f"{i},{_fmt(times[i])},{_fmt(table.pressure_pa[i])},{f0},{pitch},"
            f"{_fmt(table.amplitude[i])},{int(voiced)},"
            f"{_DISCARD_NAMES[int(table.discard[i])]}"
        )
    return "\n".join(lines) + "\n"


def parse_features(text: str, grid: HopGrid | None = None,
                   meta: TableMeta | None = None) -> FeatureTable:
    """Parse a features CSV back into a table (inverse of serialize)."""
    lines = [ln for ln in text.replace("\r\n", "\n").split("\n") if ln.strip()]
    if not lines or lines[0] != FEATURES_CSV_HEADER:
        raise ValueError("bad features CSV header")
    n = len(lines) - 1
    pressure = np.empty(n)
    f0 = np.full(n, np.nan)
    pitch = np.full(n, np.nan)
    amp = np.empty(n)
    voiced = np.zeros(n, dtype=bool)
    discard = np.zeros(n, dtype=np.int8)
    for i, line in enumerate(lines[1:]):
        cols = line.split(",")
        if len(cols) != 8:
            raise ValueError(f"bad features CSV row {i + 2}")
        pressure[i] = float(cols[2])
        if cols[3]:
            f0[i] = float(cols[3])
        if cols[4]:
            pitch[i] = float(cols[4])
        amp[i] = float(cols[5])
        voiced[i] = cols[6] == "1"
        discard[i] = _DISCARD_CODES[cols[7]]
    return FeatureTable(
        grid=grid or HopGrid(),
        pressure_pa=pressure,
        f0_hz=f0,
        pitch_midi=pitch,
        amplitude=amp,
        voiced=voiced,
        discard=discard,
        meta=meta or TableMeta(),
    )
