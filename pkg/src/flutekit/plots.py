"""Deterministic SVG figures for the analysis outputs.

Hand-rolled SVG primitives rather than a charting dependency: the figures
are for human inspection of the pipeline stages (timelines, bend scatter in
raw and linearized coordinates, per-note hysteresis loops, threshold
labels) and must be byte-identical across runs on identical inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .features import DISCARD_NONE, DISCARD_SILENT, FeatureTable
from .fit import FluteModel, ThresholdLabel
from .model import bend_at, thresholds_at, x_intercept_at
from .segment import NoteSegment, Sweep

PLOT_KINDS = (
    "timeline",
    "bend_scatter",
    "bend_linear",
    "xintercepts",
    "model_overlay",
    "hysteresis",
    "thresholds",
    "amplitude",
)

# Okabe-Ito palette: distinguishable and print-safe.
PALETTE = ("#0072B2", "#D55E00", "#009E73", "#CC79A7",
           "#E69F00", "#56B4E9", "#F0E442", "#000000")

UP_COLOR = "#0072B2"    # rising sweep / up thresholds
DOWN_COLOR = "#D55E00"  # falling sweep / down thresholds
DISCARD_COLOR = "#333333"
REMOVED_BAND_COLOR = "#f6c8d0"


def _fmt(v: float) -> str:
    return f"{v:.3f}"


class _Canvas:
    def __init__(self, width: int, height: int) -> None:
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def rect(self, x, y, w, h, fill, opacity=1.0) -> None:
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}" opacity="{_fmt(opacity)}"/>'
        )

    def line(self, x1, y1, x2, y2, stroke, width=1.0, dash: str | None = None) -> None:
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{_fmt(width)}"{dash_attr}/>'
        )

    def polyline(self, pts: list[tuple[float, float]], stroke, width=1.0) -> None:
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}"/>'
        )

    def circle(self, x, y, r, fill, opacity=1.0) -> None:
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{fill}" '
            f'opacity="{_fmt(opacity)}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start", fill="#000000") -> None:
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}" fill="{fill}">{s}</text>'
        )

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>\n'
            f"{body}\n</svg>\n"
        )


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mult * mag
        if raw <= step:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * abs(step):
        ticks.append(round(t, 12))
        t += step
    return ticks


@dataclass
class _Axes:
    """Maps data coordinates onto a pixel box and draws the frame."""

    canvas: _Canvas
    x0: float
    y0: float
    w: float
    h: float
    xlim: tuple[float, float]
    ylim: tuple[float, float]

    def px(self, x: float) -> float:
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * self.w

    def py(self, y: float) -> float:
        lo, hi = self.ylim
        return self.y0 + self.h - (y - lo) / (hi - lo) * self.h

    def frame(self, xlabel: str, ylabel: str, title: str = "") -> None:
        c = self.canvas
        c.rect(self.x0, self.y0, self.w, self.h, "none")
        c.line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h, "#000000")
        c.line(self.x0, self.y0, self.x0, self.y0 + self.h, "#000000")
        for t in _nice_ticks(*self.xlim):
            x = self.px(t)
            c.line(x, self.y0 + self.h, x, self.y0 + self.h + 4, "#000000")
            c.text(x, self.y0 + self.h + 16, f"{t:g}", size=10, anchor="middle")
        for t in _nice_ticks(*self.ylim):
            y = self.py(t)
            c.line(self.x0 - 4, y, self.x0, y, "#000000")
            c.text(self.x0 - 6, y + 3, f"{t:g}", size=10, anchor="end")
        c.text(self.x0 + self.w / 2, self.y0 + self.h + 32, xlabel, anchor="middle")
        c.text(self.x0 + 4, self.y0 - 6, ylabel)
        if title:
            c.text(self.x0 + self.w / 2, self.y0 - 6, title, size=12, anchor="middle")


def _pad(lo: float, hi: float, frac: float = 0.05) -> tuple[float, float]:
    if hi <= lo:
        return lo - 1.0, hi + 1.0
    span = hi - lo
    return lo - frac * span, hi + frac * span


def _segment_of(hop: int, segments: list[NoteSegment]) -> NoteSegment | None:
    for seg in segments:
        if seg.start <= hop < seg.end:
            return seg
    return None


def _bend_points(
    table: FeatureTable, segments: list[NoteSegment], include_discarded: bool
) -> list[tuple[float, float, int, bool]]:
    """(gauge_pa, bend rel. base, base pitch, discarded) per plottable hop."""
    pts = []
    for seg in segments:
        for hop in range(seg.start, seg.end):
            if not table.voiced[hop]:
                continue
            discarded = table.discard[hop] != DISCARD_NONE
            if discarded and not include_discarded:
                continue
            p = table.pressure_pa[hop]
            if p <= 0:
                continue
            bend = table.pitch_midi[hop] - seg.base_pitch_midi
            pts.append((float(p), float(bend), seg.base_pitch_midi, discarded))
    return pts


def plot_timeline(table: FeatureTable) -> str:
    """Stacked pressure / amplitude / pitch curves over session time, with
    removed (discarded) stretches shaded."""
    c = _Canvas(900, 560)
    t = table.time_s
    panels = [
        ("pressure (Pa)", table.pressure_pa, None),
        ("amplitude", table.amplitude, None),
        ("pitch (MIDI)", table.pitch_midi, table.voiced),
    ]
    removed = table.discard != DISCARD_NONE
    for i, (label, series, mask) in enumerate(panels):
        vals = series[mask] if mask is not None else series
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            vals = np.array([0.0, 1.0])
        ax = _Axes(c, 60, 30 + i * 175, 810, 140,
                   _pad(float(t[0]), float(t[-1]), 0.01),
                   _pad(float(vals.min()), float(vals.max())))
        for start, end in _mask_runs(removed):
            ax.canvas.rect(ax.px(t[start]), ax.y0,
                           max(ax.px(t[min(end, len(t) - 1)]) - ax.px(t[start]), 1.0),
                           ax.h, REMOVED_BAND_COLOR, opacity=0.6)
        if mask is None:
            ax.canvas.polyline(
                [(ax.px(tv), ax.py(v)) for tv, v in zip(t, series)], PALETTE[0]
            )
        else:
            for hop in np.flatnonzero(mask):
                ax.canvas.circle(ax.px(t[hop]), ax.py(series[hop]), 1.2, PALETTE[0])
        ax.frame("time (s)" if i == 2 else "", label)
    return c.render()


def _mask_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def plot_bend_scatter(table: FeatureTable, segments: list[NoteSegment]) -> str:
    """Bend (semitones above the fingering's low pitch) against gauge Pa,
    one color per base pitch, retained hops only."""
    pts = _bend_points(table, segments, include_discarded=False)
    c = _Canvas(760, 520)
    if not pts:
        c.text(380, 260, "no data", anchor="middle")
        return c.render()
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    ax = _Axes(c, 60, 30, 660, 430, _pad(min(xs), max(xs)), _pad(min(ys), max(ys)))
    bases = sorted({p[2] for p in pts})
    for x, y, base, _ in pts:
        ax.canvas.circle(ax.px(x), ax.py(y), 1.6, PALETTE[bases.index(base) % len(PALETTE)], 0.7)
    for i, base in enumerate(bases):
        ax.canvas.text(630, 46 + 14 * i, f"pitch {base}", size=10,
                       fill=PALETTE[i % len(PALETTE)])
    ax.frame("gauge pressure (Pa)", "bend (semitones)")
    return c.render()


def plot_bend_linear(
    table: FeatureTable,
    segments: list[NoteSegment],
    sweeps: list[Sweep],
    power: float,
    model: FluteModel | None = None,
) -> str:
    """Linearized view: q^power - 1 against ln pressure per sounding pitch,
    with the model's common-slope lines overlaid when given."""
    from .fit import build_bend_samples

    data = build_bend_samples(table, segments, sweeps)
    c = _Canvas(760, 520)
    if not data.groups:
        c.text(380, 260, "no data", anchor="middle")
        return c.render()
    xs, ys = [], []
    for samples in data.groups.values():
        xs.extend(s.ln_pressure for s in samples)
        ys.extend(s.q**power - 1.0 for s in samples)
    ax = _Axes(c, 60, 30, 660, 430, _pad(min(xs), max(xs)), _pad(min(ys), max(ys)))
    pitches = sorted(data.groups)
    for i, pitch in enumerate(pitches):
        color = PALETTE[i % len(PALETTE)]
        for s in data.groups[pitch]:
            ax.canvas.circle(ax.px(s.ln_pressure), ax.py(s.q**power - 1.0), 1.6, color, 0.7)
        if model is not None:
            x_lo, x_hi = ax.xlim
            slope = model.bend.common_slope
            xint = x_intercept_at(model, pitch)
            ax.canvas.polyline(
                [(ax.px(x_lo), ax.py(slope * (x_lo - xint))),
                 (ax.px(x_hi), ax.py(slope * (x_hi - xint)))],
                color, 0.8,
            )
    ax.frame("ln pressure (ln Pa)", f"q^{power:g} - 1")
    return c.render()


def plot_xintercepts(pairs: list[tuple[int, float]], meta: tuple[float, float] | None) -> str:
    """Per-pitch in-tune ln-pressure with the meta regression line."""
    c = _Canvas(640, 460)
    if not pairs:
        c.text(320, 230, "no data", anchor="middle")
        return c.render()
    xs = [float(p) for p, _ in pairs]
    ys = [v for _, v in pairs]
    ax = _Axes(c, 60, 30, 540, 370, _pad(min(xs) - 1, max(xs) + 1), _pad(min(ys), max(ys)))
    for p, v in pairs:
        ax.canvas.circle(ax.px(p), ax.py(v), 3.0, PALETTE[0])
    if meta is not None:
        a, b = meta
        x_lo, x_hi = ax.xlim
        ax.canvas.polyline(
            [(ax.px(x_lo), ax.py(a * x_lo + b)), (ax.px(x_hi), ax.py(a * x_hi + b))],
            PALETTE[1], 1.2,
        )
    ax.frame("sounding pitch (MIDI)", "in-tune ln pressure")
    return c.render()


def plot_model_overlay(
    table: FeatureTable, segments: list[NoteSegment], model: FluteModel
) -> str:
    """Bend-vs-pressure data with the fitted model's curves per pitch."""
    pts = _bend_points(table, segments, include_discarded=False)
    c = _Canvas(760, 520)
    if not pts:
        c.text(380, 260, "no data", anchor="middle")
        return c.render()
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    ax = _Axes(c, 60, 30, 660, 430, _pad(min(xs), max(xs)), _pad(min(ys), max(ys)))
    bases = sorted({p[2] for p in pts})
    for x, y, base, _ in pts:
        ax.canvas.circle(ax.px(x), ax.py(y), 1.4, PALETTE[bases.index(base) % len(PALETTE)], 0.5)
    p_lo = max(ax.xlim[0], 1e-2)
    grid_p = np.geomspace(p_lo, ax.xlim[1], 160)
    for i, base in enumerate(bases):
        color = PALETTE[i % len(PALETTE)]
        for octave in (0, 12):
            pts_line = []
            for p in grid_p:
                point = bend_at(model, base + octave, float(p))
                if point.valid:
                    pts_line.append((ax.px(float(p)), ax.py(point.bend_semitones + octave)))
            if len(pts_line) > 1:
                ax.canvas.polyline(pts_line, color, 1.0)
    ax.frame("gauge pressure (Pa)", "bend (semitones)")
    return c.render()


def plot_hysteresis(
    table: FeatureTable,
    segment: NoteSegment,
    sweeps: list[Sweep],
    labels: list[ThresholdLabel] | None = None,
) -> str:
    """One note's loop: up-sweep and down-sweep hops in different colors,
    discarded hops dark, threshold labels as vertical guides."""
    up = next((s for s in sweeps if s.note_id == segment.id and s.direction == "up"), None)
    c = _Canvas(760, 520)
    pts = []
    for hop in range(segment.start, segment.end):
        if not table.voiced[hop] or table.pressure_pa[hop] <= 0:
            continue
        rising = up is not None and up.hop_range[0] <= hop < up.hop_range[1]
        pts.append((
            float(table.pressure_pa[hop]),
            float(table.pitch_midi[hop] - segment.base_pitch_midi),
            rising,
            table.discard[hop] != DISCARD_NONE,
        ))
    if not pts:
        c.text(380, 260, "no data", anchor="middle")
        return c.render()
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    ax = _Axes(c, 60, 30, 660, 430, _pad(min(xs), max(xs)), _pad(min(ys), max(ys)))
    for x, y, rising, discarded in pts:
        color = DISCARD_COLOR if discarded else (UP_COLOR if rising else DOWN_COLOR)
        ax.canvas.circle(ax.px(x), ax.py(y), 1.8, color, 0.8)
    for lb in labels or []:
        if lb.note_id != segment.id:
            continue
        x = ax.px(math.exp(lb.ln_pressure))
        color = UP_COLOR if lb.direction == "up" else DOWN_COLOR
        ax.canvas.line(x, ax.y0, x, ax.y0 + ax.h, color, 1.0, dash="4,3")
    ax.canvas.text(630, 46, "rising", size=10, fill=UP_COLOR)
    ax.canvas.text(630, 60, "falling", size=10, fill=DOWN_COLOR)
    ax.canvas.text(630, 74, "discarded", size=10, fill=DISCARD_COLOR)
    ax.frame("gauge pressure (Pa)", "bend (semitones)",
             title=f"note {segment.id} (pitch {segment.base_pitch_midi})")
    return c.render()


def plot_thresholds(labels: list[ThresholdLabel], model: FluteModel | None = None) -> str:
    """Jump-pressure labels against pitch with the categorical fit lines."""
    c = _Canvas(640, 460)
    if not labels:
        c.text(320, 230, "no data", anchor="middle")
        return c.render()
    xs = [float(lb.pitch_midi) for lb in labels]
    ys = [lb.ln_pressure for lb in labels]
    ax = _Axes(c, 60, 30, 540, 370, _pad(min(xs) - 1, max(xs) + 1), _pad(min(ys), max(ys)))
    for lb in labels:
        color = UP_COLOR if lb.direction == "up" else DOWN_COLOR
        ax.canvas.circle(ax.px(lb.pitch_midi), ax.py(lb.ln_pressure), 3.0, color, 0.8)
    if model is not None:
        x_lo, x_hi = ax.xlim
        t = model.thresholds
        for intercept, color in ((t.up_intercept, UP_COLOR), (t.down_intercept, DOWN_COLOR)):
            ax.canvas.polyline(
                [(ax.px(x_lo), ax.py(t.slope * x_lo + intercept)),
                 (ax.px(x_hi), ax.py(t.slope * x_hi + intercept))],
                color, 1.2,
            )
    ax.canvas.text(520, 46, "up", size=10, fill=UP_COLOR)
    ax.canvas.text(520, 60, "down", size=10, fill=DOWN_COLOR)
    ax.frame("base pitch (MIDI)", "ln threshold pressure")
    return c.render()


def plot_amplitude(table: FeatureTable, segments: list[NoteSegment]) -> str:
    """Amplitude against gauge pressure for retained voiced hops."""
    c = _Canvas(760, 520)
    pts = []
    for seg in segments:
        for hop in range(seg.start, seg.end):
            if not table.voiced[hop] or table.discard[hop] != DISCARD_NONE:
                continue
            p = table.pressure_pa[hop]
            if p > 0:
                pts.append((float(p), float(table.amplitude[hop]), seg.base_pitch_midi))
    if not pts:
        c.text(380, 260, "no data", anchor="middle")
        return c.render()
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    ax = _Axes(c, 60, 30, 660, 430, _pad(min(xs), max(xs)), _pad(min(ys), max(ys)))
    bases = sorted({p[2] for p in pts})
    for x, y, base in pts:
        ax.canvas.circle(ax.px(x), ax.py(y), 1.6, PALETTE[bases.index(base) % len(PALETTE)], 0.6)
    ax.frame("gauge pressure (Pa)", "amplitude (mean square)")
    return c.render()
