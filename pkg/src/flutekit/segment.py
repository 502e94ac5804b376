"""Session cleanup: zeroing, silence, note/sweep structure, jump removal.

Pressure is zeroed to atmosphere using the silent hops.  Maximal non-silent
runs long enough to be deliberate notes become segments; each is split into
a rising- and a falling-pressure sweep at its smoothed-pressure apex.
Octave jumps (>= 6 semitone steps between consecutive voiced hops) disrupt
the fluid flow for roughly 300 ms, so every hop within that window of a
jump is discarded before any fitting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import (
    DISCARD_DISEQUILIBRIUM,
    DISCARD_NONE,
    DISCARD_SILENT,
    FeatureTable,
)

DEFAULT_SILENCE_FRACTION = 0.02
MIN_NOTE_SECONDS = 0.5
# Unvoiced blips shorter than this (register-change transients, dropouts)
# do not split a note; the player's rests between fingerings are far longer.
MAX_INTRA_NOTE_GAP_S = 0.25
JUMP_GATE_SEMITONES = 6.0
DEFAULT_JUMP_WINDOW_MS = 300.0
SWEEP_SMOOTH_HOPS = 5
# Register split inside one note: pitches this far above the run minimum
# belong to the upper octave.
REGISTER_SPLIT_SEMITONES = 6.0
MIN_SILENT_HOPS_FOR_BASELINE = 10


class SegmentationError(RuntimeError):
    """The table cannot support the requested segmentation step."""


@dataclass(frozen=True)
class NoteSegment:
    """A fingering's voiced region: half-open hop range plus identity."""

    id: int
    hop_range: tuple[int, int]
    base_pitch_midi: int
    repetition: int

    @property
    def start(self) -> int:
        return self.hop_range[0]

    @property
    def end(self) -> int:
        return self.hop_range[1]


@dataclass(frozen=True)
class Sweep:
    """Rising (up) or falling (down) half of a note's pressure profile."""

    note_id: int
    direction: str  # "up" | "down"
    hop_range: tuple[int, int]


@dataclass(frozen=True)
class JumpEvent:
    """Octave register change: first hop after the jump.

    `ln_pressure` is ln of the geometric mean of the gauge pressures at the
    two bracketing hops, or None when either pressure is non-positive.
    """

    hop: int
    direction: str  # "up" | "down"
    ln_pressure: float | None


def detect_silence(table: FeatureTable, amp_threshold: float = DEFAULT_SILENCE_FRACTION) -> FeatureTable:
    """Flag silent hops: amplitude below the session-relative floor, or unvoiced.

    Silent hops are also marked unvoiced so no downstream consumer reads
    pitch out of noise.
    """
    if len(table) == 0:
        raise ValueError("empty feature table")
    out = table.copy()
    floor = amp_threshold * out.amplitude.max()
    silent = (out.amplitude < floor) | ~out.voiced
    fresh = out.discard == DISCARD_NONE
    out.discard[silent & fresh] = DISCARD_SILENT
    out.voiced &= ~silent
    out.f0_hz[silent] = np.nan
    out.pitch_midi[silent] = np.nan
    return out


def zero_pressure(table: FeatureTable) -> FeatureTable:
    """Subtract the atmospheric baseline: median pressure over silent hops."""
    silent = table.discard == DISCARD_SILENT
    if silent.sum() < MIN_SILENT_HOPS_FOR_BASELINE:
        raise SegmentationError(
            "cannot estimate atmosphere: fewer than "
            f"{MIN_SILENT_HOPS_FOR_BASELINE} silent hops"
        )
    baseline = float(np.median(table.pressure_pa[silent]))
    out = table.copy()
    out.pressure_pa = table.pressure_pa - baseline
    prior = table.meta.baseline_pa or 0.0
    out.meta.baseline_pa = prior + baseline
    return out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) ranges of consecutive True values."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def _mode_int(values: np.ndarray) -> int:
    uniq, counts = np.unique(values, return_counts=True)
    return int(uniq[np.argmax(counts)])  # ties resolve to the smallest


def segment_notes(table: FeatureTable) -> list[NoteSegment]:
    """Maximal non-silent runs at least MIN_NOTE_SECONDS long, as notes.

    Runs separated by less than MAX_INTRA_NOTE_GAP_S of silence merge into
    one note first.  The base pitch is the mode of the rounded pitch over
    the run's lower-octave hops; repetitions are numbered in time order
    per base pitch, starting at 1.
    """
    min_hops = math.ceil(MIN_NOTE_SECONDS * table.grid.hop_rate)
    max_gap = math.ceil(MAX_INTRA_NOTE_GAP_S * table.grid.hop_rate)
    non_silent = table.discard != DISCARD_SILENT
    merged: list[tuple[int, int]] = []
    for start, end in _runs(non_silent):
        if merged and start - merged[-1][1] < max_gap:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))
    segments: list[NoteSegment] = []
    rep_counter: dict[int, int] = {}
    for start, end in merged:
        if end - start < min_hops:
            continue
        pitches = table.pitch_midi[start:end]
        pitches = pitches[np.isfinite(pitches)]
        if pitches.size == 0:
            continue
        lower = pitches[pitches < pitches.min() + REGISTER_SPLIT_SEMITONES]
        base = _mode_int(np.round(lower).astype(np.int64))
        rep_counter[base] = rep_counter.get(base, 0) + 1
        segments.append(
            NoteSegment(
                id=len(segments),
                hop_range=(start, end),
                base_pitch_midi=base,
                repetition=rep_counter[base],
            )
        )
    return segments


def detect_octave_jumps(table: FeatureTable, segments: list[NoteSegment]) -> list[JumpEvent]:
    """Steps of >= JUMP_GATE_SEMITONES between consecutive voiced hops.

    The pressures bracketing the step combine as a geometric mean (the jump
    happens between hops; the mean is natural in ln-pressure space).  A
    register change cannot recur within a couple of hops, so a same-
    direction event right after another is treated as the same jump.
    """
    events: list[JumpEvent] = []
    for seg in segments:
        idx = np.flatnonzero(table.voiced[seg.start : seg.end]) + seg.start
        if idx.size < 2:
            continue
        last: JumpEvent | None = None
        for i, j in zip(idx[:-1], idx[1:]):
            step = table.pitch_midi[j] - table.pitch_midi[i]
            if abs(step) < JUMP_GATE_SEMITONES:
                continue
            direction = "up" if step > 0 else "down"
            if last is not None and last.direction == direction and j - last.hop <= 3:
                continue
            p_before = table.pressure_pa[i]
            p_after = table.pressure_pa[j]
            if p_before > 0 and p_after > 0:
                ln_p = 0.5 * (math.log(p_before) + math.log(p_after))
            else:
                ln_p = None
            last = JumpEvent(hop=int(j), direction=direction, ln_pressure=ln_p)
            events.append(last)
    return events


def jump_window_hops(grid_hop_rate: float, window_ms: float = DEFAULT_JUMP_WINDOW_MS) -> int:
    """Half-width of the discard window around a jump, in hops (13 at defaults)."""
    return math.ceil(window_ms / 1000.0 * grid_hop_rate)


def discard_disequilibrium(
    table: FeatureTable,
    events: list[JumpEvent],
    window_ms: float = DEFAULT_JUMP_WINDOW_MS,
) -> FeatureTable:
    """Flag every hop within the window of any jump event as disequilibrium.

    Hops already discarded as silent keep their reason.
    """
    out = table.copy()
    if not events:
        return out
    half = jump_window_hops(table.grid.hop_rate, window_ms)
    n = len(table)
    in_window = np.zeros(n, dtype=bool)
    for ev in events:
        in_window[max(0, ev.hop - half) : min(n, ev.hop + half + 1)] = True
    fresh = out.discard == DISCARD_NONE
    out.discard[in_window & fresh] = DISCARD_DISEQUILIBRIUM
    return out


def tag_sweeps(table: FeatureTable, segments: list[NoteSegment]) -> list[Sweep]:
    """Split each note at its smoothed-pressure apex: before = up, after = down.

    The apex hop belongs to the up-sweep, so a monotone-rising note has an
    empty down-sweep.  Smoothing over SWEEP_SMOOTH_HOPS keeps sensor noise
    from moving the apex.
    """
    sweeps: list[Sweep] = []
    for seg in segments:
        p = table.pressure_pa[seg.start : seg.end]
        kernel = np.ones(SWEEP_SMOOTH_HOPS)
        smooth = np.convolve(p, kernel, mode="same") / np.convolve(
            np.ones_like(p), kernel, mode="same"
        )
        apex = seg.start + int(np.argmax(smooth))
        sweeps.append(Sweep(note_id=seg.id, direction="up", hop_range=(seg.start, apex + 1)))
        sweeps.append(Sweep(note_id=seg.id, direction="down", hop_range=(apex + 1, seg.end)))
    return sweeps
