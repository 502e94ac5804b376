"""Time alignment of the pressure stream against the audio features.

The session preamble carries two groups of five fast impulses, visible as
amplitude spikes on the audio side and as first-difference spikes on the
pressure side.  Matching the two onset trains over integer hop shifts
yields the stream offset; re-estimating it from the last note attacks of
the session checks that the two clocks did not drift apart.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .features import FeatureTable

DEFAULT_REL_THRESHOLD = 0.3
DEFAULT_MAX_LAG = 400
# Onsets from the same physical event land within one hop of each other.
MATCH_TOLERANCE_HOPS = 1
DEBOUNCE_HOPS = 3


class AlignmentError(RuntimeError):
    """No workable offset found between the two onset trains."""


@dataclass
class AlignmentResult:
    """Offset of the pressure stream relative to audio, in hops.

    Positive offset means pressure lags audio.  `score` is the matched
    fraction of onsets at the optimum, in [0, 1].  `drift_hops` is filled
    in by :func:`check_drift` when the session allows it.
    """

    offset_hops: int
    score: float
    drift_hops: float | None = None


def detect_onsets(signal: np.ndarray, rel_threshold: float = DEFAULT_REL_THRESHOLD) -> list[int]:
    """Hops where `signal` crosses rel_threshold * max(signal) upward.

    Crossings closer than DEBOUNCE_HOPS to the previous kept onset are
    dropped.  A signal with no positive peak has no onsets.
    """
    if not (0 < rel_threshold < 1):
        raise ValueError("rel_threshold must be in (0, 1)")
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size < 2:
        raise ValueError("signal too short")
    peak = signal.max()
    if peak <= 0:
        return []
    thr = rel_threshold * peak
    above = signal >= thr
    crossings = np.flatnonzero(above & ~np.concatenate(([False], above[:-1])))
    onsets: list[int] = []
    for k in crossings:
        if not onsets or k - onsets[-1] >= DEBOUNCE_HOPS:
            onsets.append(int(k))
    return onsets


def _match_count(
    audio_onsets: np.ndarray, pressure_onsets: np.ndarray, offset: int
) -> tuple[int, int]:
    """Greedy one-to-one pairing of onsets within MATCH_TOLERANCE_HOPS.

    Returns (matched count, total |residual| of the matches).
    """
    count = i = j = residual = 0
    shifted = audio_onsets + offset
    while i < shifted.size and j < pressure_onsets.size:
        d = pressure_onsets[j] - shifted[i]
        if d < -MATCH_TOLERANCE_HOPS:
            j += 1
        elif d > MATCH_TOLERANCE_HOPS:
            i += 1
        else:
            count += 1
            residual += abs(int(d))
            i += 1
            j += 1
    return count, residual


def estimate_offset(
    audio_onsets: list[int],
    pressure_onsets: list[int],
    max_lag: int = DEFAULT_MAX_LAG,
) -> AlignmentResult:
    """Offset maximizing the matched-onset count over integer shifts.

    Equal counts rank by total pairing residual, then toward smaller
    |offset| (a physical rig has small latency), then toward a lagging
    pressure stream between +k and -k.
    """
    if not audio_onsets or not pressure_onsets:
        raise AlignmentError("alignment failed: empty onset list")
    a = np.asarray(audio_onsets, dtype=np.int64)
    p = np.asarray(pressure_onsets, dtype=np.int64)

    best_offset = 0
    best = (-1, 0)  # (count, -residual), larger is better
    for mag in range(max_lag + 1):
        candidates = (mag,) if mag == 0 else (mag, -mag)
        for off in candidates:
            count, residual = _match_count(a, p, off)
            if (count, -residual) > best:
                best = (count, -residual)
                best_offset = off
    if best[0] <= 0:
        raise AlignmentError(f"alignment failed: no onset overlap within {max_lag} hops")
    score = best[0] / max(a.size, p.size)
    return AlignmentResult(offset_hops=best_offset, score=score)


def _pressure_onset_signal(table: FeatureTable) -> np.ndarray:
    p = table.pressure_pa
    return np.diff(p, prepend=p[0])


def check_drift(
    table: FeatureTable,
    result: AlignmentResult,
    n_impulse_onsets: int = 10,
    search_slack_hops: int = 25,
) -> float | None:
    """Offset discrepancy at the session end, from the last two note attacks.

    Audio attacks are the last two amplitude onsets after the impulse
    preamble; each is matched to the nearest pressure-difference onset
    around the expected (already-estimated) offset.  Returns
    late_offset - result.offset_hops, or None (with a warning) when the
    session has fewer than two late attacks.
    """
    audio_onsets = detect_onsets(table.amplitude)
    late_attacks = audio_onsets[n_impulse_onsets:]
    if len(late_attacks) < 2:
        warnings.warn("drift unavailable: fewer than two note attacks after the impulses")
        return None
    # Low threshold: note attacks are much gentler than the sync impulses.
    pressure_onsets = detect_onsets(_pressure_onset_signal(table), rel_threshold=0.02)
    if not pressure_onsets:
        warnings.warn("drift unavailable: no pressure onsets")
        return None
    p = np.asarray(pressure_onsets, dtype=np.int64)

    late_offsets = []
    for attack in late_attacks[-2:]:
        expected = attack + result.offset_hops
        nearest = p[np.argmin(np.abs(p - expected))]
        if abs(nearest - expected) <= search_slack_hops:
            late_offsets.append(nearest - attack)
    if len(late_offsets) < 2:
        warnings.warn("drift unavailable: late attacks not found in pressure stream")
        return None
    late = float(np.mean(late_offsets))
    drift = late - result.offset_hops
    result.drift_hops = drift
    return drift


def apply_offset(table: FeatureTable, offset_hops: int) -> FeatureTable:
    """Shift the pressure column so hop k reads pressure[k + offset].

    Out-of-range hops hold the boundary value.  The cumulative shift is
    recorded in the table meta.
    """
    n = len(table)
    if abs(offset_hops) >= n:
        raise ValueError("offset exceeds table length")
    out = table.copy()
    src = np.clip(np.arange(n) + offset_hops, 0, n - 1)
    out.pressure_pa = table.pressure_pa[src]
    out.meta.offset_hops = table.meta.offset_hops + offset_hops
    return out
