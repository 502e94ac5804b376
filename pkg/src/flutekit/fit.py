"""Model fitting: pitch-bend two-layer regression and octave thresholds.

The bend side works in transformed coordinates x = ln(gauge pressure),
y = q^power - 1 with q the frequency quotient, where each note is close to
a line.  All notes share one slope; the per-note x-intercepts (the
ln-pressure of the in-tune moment) are then explained by a second, meta
regression against pitch.  The threshold side regresses labeled jump
ln-pressures on pitch with the jump direction as a categorical input:
one shared slope, separate up/down intercepts.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .features import DISCARD_NONE, FeatureTable
from .model import midi_to_hz
from .segment import (
    REGISTER_SPLIT_SEMITONES,
    JumpEvent,
    NoteSegment,
    Sweep,
)

DEFAULT_POWER = 10.0
# Hops at either end of a segment whose analysis pages straddle the attack
# or release: the page's f0 comes from the tone while the hop's paired
# pressure sits partly outside it.
EDGE_GUARD_HOPS = 5

MODEL_PITCH_CONVENTION = "midi"
MODEL_PRESSURE_CONVENTION = "pa_gauge"


class FitDegenerateError(RuntimeError):
    """The sample layout cannot support the requested fit."""


class InvalidModelError(ValueError):
    """Assembled or loaded model violates its own invariants."""


@dataclass(frozen=True)
class BendSample:
    """One retained voiced hop in fit coordinates."""

    ln_pressure: float
    q: float
    sounding_pitch_midi: int


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    n: int
    rss: float


@dataclass(frozen=True)
class BendModel:
    """Bend response: q^power = 1 + common_slope * (ln P - x_intercept(pitch))
    with x_intercept(pitch) = meta_slope * pitch + meta_intercept."""

    power: float
    common_slope: float
    meta_slope: float
    meta_intercept: float


@dataclass(frozen=True)
class ThresholdLabel:
    note_id: int
    pitch_midi: int
    direction: str  # "up" | "down"
    ln_pressure: float
    source: str = "auto"  # "auto" | "manual"


@dataclass(frozen=True)
class ThresholdModel:
    """ln P_threshold = slope * pitch + (up|down) intercept."""

    slope: float
    up_intercept: float
    down_intercept: float


@dataclass(frozen=True)
class FluteModel:
    bend: BendModel
    thresholds: ThresholdModel


@dataclass
class BendData:
    """Bend samples grouped by sounding pitch, plus exclusion counters."""

    groups: dict[int, list[BendSample]] = field(default_factory=dict)
    n_excluded_nonpositive: int = 0
    n_excluded_edge: int = 0


def build_bend_samples(
    table: FeatureTable,
    segments: list[NoteSegment],
    sweeps: list[Sweep] | None = None,
    edge_guard_hops: int = EDGE_GUARD_HOPS,
) -> BendData:
    """Collect (ln P, q) per retained voiced hop, grouped by sounding pitch.

    The register of a hop follows from its pitch relative to the segment
    base; the upper octave is grouped under base + 12.  Hops with
    non-positive gauge pressure are excluded and counted, as are the first
    and last few hops of each segment (attack/release transients, see
    EDGE_GUARD_HOPS) and the hops whose page straddles the sweep apex
    (the pressure there is neither rising nor falling cleanly).
    """
    apex_of: dict[int, int] = {}
    for sw in sweeps or []:
        if sw.direction == "up":
            apex_of[sw.note_id] = sw.hop_range[1]
    data = BendData()
    for seg in segments:
        apex = apex_of.get(seg.id)
        for hop in range(seg.start, seg.end):
            if not table.voiced[hop] or table.discard[hop] != DISCARD_NONE:
                continue
            if hop - seg.start < edge_guard_hops or seg.end - hop <= edge_guard_hops:
                data.n_excluded_edge += 1
                continue
            if apex is not None and abs(hop - apex) <= edge_guard_hops:
                data.n_excluded_edge += 1
                continue
            pressure = table.pressure_pa[hop]
            if pressure <= 0:
                data.n_excluded_nonpositive += 1
                continue
            pitch = table.pitch_midi[hop]
            high = pitch >= seg.base_pitch_midi + REGISTER_SPLIT_SEMITONES
            sounding = seg.base_pitch_midi + (12 if high else 0)
            sample = BendSample(
                ln_pressure=math.log(pressure),
                q=table.f0_hz[hop] / midi_to_hz(sounding),
                sounding_pitch_midi=sounding,
            )
            data.groups.setdefault(sounding, []).append(sample)
    return data


def _group_xy(samples: list[BendSample], power: float) -> tuple[np.ndarray, np.ndarray]:
    x = np.array([s.ln_pressure for s in samples])
    y = np.array([s.q for s in samples]) ** power - 1.0
    return x, y


def _ols(x: np.ndarray, y: np.ndarray) -> LineFit:
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    sxy = float(((x - xm) * (y - ym)).sum())
    syy = float(((y - ym) ** 2).sum())
    slope = sxy / sxx
    intercept = ym - slope * xm
    rss = max(syy - slope * sxy, 0.0)
    return LineFit(slope=slope, intercept=intercept, n=x.size, rss=rss)


def fit_per_note_lines(
    groups: dict[int, list[BendSample]], power: float = DEFAULT_POWER
) -> dict[int, LineFit]:
    """Ordinary least squares per sounding pitch on (ln P, q^power - 1).

    Groups without two distinct abscissae are skipped with a warning.
    """
    fits: dict[int, LineFit] = {}
    for pitch in sorted(groups):
        x, y = _group_xy(groups[pitch], power)
        if x.size < 2 or np.ptp(x) == 0:
            warnings.warn(f"skipping degenerate bend group at pitch {pitch}")
            continue
        fits[pitch] = _ols(x, y)
    return fits


def _shared_slope(xs: list[np.ndarray], ys: list[np.ndarray]) -> tuple[float, list[float]]:
    """Joint least squares: one slope, one intercept per group (closed form)."""
    num = 0.0
    den = 0.0
    for x, y in zip(xs, ys):
        xm, ym = x.mean(), y.mean()
        num += float(((x - xm) * (y - ym)).sum())
        den += float(((x - xm) ** 2).sum())
    if den == 0.0:
        raise FitDegenerateError("all groups degenerate: no abscissa spread")
    slope = num / den
    intercepts = [float(y.mean() - slope * x.mean()) for x, y in zip(xs, ys)]
    return slope, intercepts


def fit_common_slope(
    groups: dict[int, list[BendSample]], power: float = DEFAULT_POWER
) -> tuple[float, dict[int, float]]:
    """Refit all bend groups with a single shared slope.

    Returns the common slope and the per-pitch intercepts of the refit
    lines (in y = q^power - 1 coordinates).
    """
    pitches = sorted(groups)
    if not pitches:
        raise FitDegenerateError("no bend groups")
    xys = [_group_xy(groups[p], power) for p in pitches]
    slope, intercepts = _shared_slope([xy[0] for xy in xys], [xy[1] for xy in xys])
    return slope, dict(zip(pitches, intercepts))


def x_intercepts(slope: float, intercepts: dict[int, float]) -> list[tuple[int, float]]:
    """Per-pitch ln-pressure where y = 0, i.e. where the note is in tune."""
    if slope == 0.0:
        raise FitDegenerateError("zero common slope has no x-intercepts")
    return [(pitch, -b / slope) for pitch, b in sorted(intercepts.items())]


def fit_meta_line(pairs: list[tuple[int, float]]) -> tuple[float, float]:
    """OLS of x-intercept on pitch: the second regression layer."""
    if len({p for p, _ in pairs}) < 2:
        raise FitDegenerateError("meta fit needs at least 2 distinct pitches")
    x = np.array([float(p) for p, _ in pairs])
    y = np.array([v for _, v in pairs])
    line = _ols(x, y)
    return line.slope, line.intercept


def auto_label_thresholds(
    events: list[JumpEvent],
    segments: list[NoteSegment],
    sweeps: list[Sweep],
) -> list[ThresholdLabel]:
    """Turn jump events into threshold labels.

    An up event inside its note's up-sweep labels the up threshold; a down
    event inside the down-sweep labels the down threshold.  Events with an
    invalid jump pressure, or on the wrong sweep, are skipped.
    """
    sweep_ranges = {(sw.note_id, sw.direction): sw.hop_range for sw in sweeps}
    labels: list[ThresholdLabel] = []
    for ev in events:
        if ev.ln_pressure is None:
            continue
        seg = next((s for s in segments if s.start <= ev.hop < s.end), None)
        if seg is None:
            continue
        rng = sweep_ranges.get((seg.id, ev.direction))
        if rng is None or not (rng[0] <= ev.hop < rng[1]):
            continue
        labels.append(
            ThresholdLabel(
                note_id=seg.id,
                pitch_midi=seg.base_pitch_midi,
                direction=ev.direction,
                ln_pressure=ev.ln_pressure,
                source="auto",
            )
        )
    return labels


def merge_labels(
    auto: list[ThresholdLabel], manual: list[ThresholdLabel]
) -> list[ThresholdLabel]:
    """Manual labels replace auto labels for the same (note_id, direction)."""
    overridden = {(lb.note_id, lb.direction) for lb in manual if lb.source == "manual"}
    kept = [lb for lb in auto if (lb.note_id, lb.direction) not in overridden]
    return kept + [lb for lb in manual if lb.source == "manual"]


def fit_threshold_model(labels: list[ThresholdLabel]) -> ThresholdModel:
    """Least squares of ln P on pitch with direction as a categorical input.

    Equivalent to a design matrix (pitch, up indicator, down indicator):
    one shared slope, one intercept per direction.
    """
    ups = [lb for lb in labels if lb.direction == "up"]
    downs = [lb for lb in labels if lb.direction == "down"]
    if not ups or not downs:
        raise FitDegenerateError("threshold fit needs labels in both directions")
    if len({lb.pitch_midi for lb in labels}) < 2:
        raise FitDegenerateError("threshold fit needs at least 2 distinct pitches")
    xs = [np.array([float(lb.pitch_midi) for lb in grp]) for grp in (ups, downs)]
    ys = [np.array([lb.ln_pressure for lb in grp]) for grp in (ups, downs)]
    slope, (d_up, d_down) = _shared_slope(xs, ys)
    return ThresholdModel(slope=slope, up_intercept=d_up, down_intercept=d_down)


def assemble_model(bend: BendModel, thresholds: ThresholdModel) -> FluteModel:
    """Combine the fitted parts, enforcing a real hysteresis band."""
    if bend.power <= 0:
        raise InvalidModelError("power must be positive")
    if not (thresholds.down_intercept < thresholds.up_intercept):
        raise InvalidModelError(
            "inverted hysteresis band: down intercept must lie below up intercept"
        )
    return FluteModel(bend=bend, thresholds=thresholds)


def default_model() -> FluteModel:
    """Reference model measured on one plastic soprano-style flute.

    The meta line and both threshold intercepts come from a measured
    instrument; the common slope is a placeholder (1.0) that any serious
    use should refit from its own session, since the source measurement
    did not publish it.
    """
    return FluteModel(
        bend=BendModel(
            power=10.0,
            common_slope=1.0,
            meta_slope=0.09498625513471028,
            meta_intercept=-3.177222804229106,
        ),
        thresholds=ThresholdModel(
            slope=0.12067771159663639,
            up_intercept=-3.0908617599208004,
            down_intercept=-3.289717945484731,
        ),
    )


def model_to_json(model: FluteModel) -> str:
    payload = {
        "power": model.bend.power,
        "common_slope": model.bend.common_slope,
        "meta_slope": model.bend.meta_slope,
        "meta_intercept": model.bend.meta_intercept,
        "thr_slope": model.thresholds.slope,
        "thr_up_intercept": model.thresholds.up_intercept,
        "thr_down_intercept": model.thresholds.down_intercept,
        "pitch_convention": MODEL_PITCH_CONVENTION,
        "pressure_convention": MODEL_PRESSURE_CONVENTION,
    }
    return json.dumps(payload, indent=2) + "\n"


def model_from_json(text: str) -> FluteModel:
    obj = json.loads(text)
    if obj.get("pitch_convention") != MODEL_PITCH_CONVENTION:
        raise InvalidModelError("unsupported pitch convention")
    if obj.get("pressure_convention") != MODEL_PRESSURE_CONVENTION:
        raise InvalidModelError("unsupported pressure convention")
    bend = BendModel(
        power=float(obj["power"]),
        common_slope=float(obj["common_slope"]),
        meta_slope=float(obj["meta_slope"]),
        meta_intercept=float(obj["meta_intercept"]),
    )
    thresholds = ThresholdModel(
        slope=float(obj["thr_slope"]),
        up_intercept=float(obj["thr_up_intercept"]),
        down_intercept=float(obj["thr_down_intercept"]),
    )
    return assemble_model(bend, thresholds)


def labels_to_json(labels: list[ThresholdLabel]) -> str:
    payload = [
        {
            "note_id": lb.note_id,
            "pitch_midi": lb.pitch_midi,
            "direction": lb.direction,
            "ln_pressure": lb.ln_pressure,
            "source": lb.source,
        }
        for lb in labels
    ]
    return json.dumps(payload, indent=2) + "\n"


def labels_from_json(text: str) -> list[ThresholdLabel]:
    raw = json.loads(text)
    if not isinstance(raw, list):
        raise ValueError("labels file must hold a JSON array")
    labels = []
    for i, obj in enumerate(raw):
        direction = obj.get("direction")
        source = obj.get("source", "manual")
        ln_pressure = obj.get("ln_pressure")
        if direction not in ("up", "down"):
            raise ValueError(f"label {i}: bad direction {direction!r}")
        if source not in ("auto", "manual"):
            raise ValueError(f"label {i}: bad source {source!r}")
        if not isinstance(ln_pressure, (int, float)) or not math.isfinite(ln_pressure):
            raise ValueError(f"label {i}: ln_pressure must be finite")
        labels.append(
            ThresholdLabel(
                note_id=int(obj["note_id"]),
                pitch_midi=int(obj["pitch_midi"]),
                direction=direction,
                ln_pressure=float(ln_pressure),
                source=source,
            )
        )
    return labels
