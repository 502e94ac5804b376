"""Forward model evaluation and synthetic session generation.

The fitted model runs forward as a hysteresis state machine: the octave
register sticks until the breath pressure crosses the pitch-dependent up
threshold (from below) or down threshold (from above), and the microtonal
bend follows the two-layer power-law curve at the sounding pitch.

The generator inverts the whole measurement pipeline: given a model and a
session script it synthesizes the audio and the time-coded pressure log a
real session would have produced, plus a ground-truth record, so the
pipeline can be verified end to end against known parameters.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.io import wavfile

from .ingest import HopGrid

if TYPE_CHECKING:  # pragma: no cover
    from .fit import FluteModel

# Physically-invalid bend evaluations clamp q to CLAMP_EPS**(1/power) so
# trace simulation never aborts mid-stream.
CLAMP_EPS = 1e-6
LOW = "low"
HIGH = "high"

# The synthetic flute stops speaking once the bend drops below this many
# semitones; keeps the generator away from the q -> 0 blow-up at tiny
# pressures.
SPEAK_BEND_SEMITONES = -1.0

# Impulse and note attack shapes.  Rise/fall times are chosen so that the
# audio-amplitude onset detector (which sees a whole page ahead of the hop
# stamp) and the pressure-difference detector fire on the same hop; the
# alignment tests pin this calibration down.
PUFF_RISE_S = 0.06
PUFF_FALL_S = 0.14
PUFF_PA = 150.0
BURST_RISE_S = 0.13
BURST_FALL_S = 0.07
BURST_AMPLITUDE = 0.85
BURST_HZ = 1174.659  # D6
IMPULSE_SPACING_S = 0.60
GROUP_GAP_S = 1.2
PREAMBLE_GAP_S = 1.5

NOTE_ATTACK_S = 0.02
NOTE_RELEASE_S = 0.12
NOTE_AMPLITUDE = 0.5
# Sweeps slow down while crossing the octave-threshold region (the player
# feeling for the jump point); the band is relative to the threshold.
CROSSING_BAND = 0.08
CROSSING_SECONDS = 0.7

PERTURB_SEMITONES = 0.35
PERTURB_SECONDS = 0.22
PERTURB_HZ = 3.5
PERTURB_DECAY_S = 0.05


class ScriptError(ValueError):
    """Session script is internally inconsistent."""


@dataclass(frozen=True)
class HysteresisState:
    """Current octave register of the forward simulator."""

    register: str = LOW

    def __post_init__(self) -> None:
        if self.register not in (LOW, HIGH):
            raise ValueError(f"register must be {LOW!r} or {HIGH!r}")

    @property
    def is_high(self) -> bool:
        return self.register == HIGH


def midi_to_hz(pitch: float) -> float:
    """MIDI note number to equal-tempered frequency (69 -> 440 Hz)."""
    return 440.0 * 2.0 ** ((pitch - 69.0) / 12.0)


def x_intercept_at(model: "FluteModel", sounding_pitch: float) -> float:
    """ln-pressure of the in-tune moment for a sounding pitch."""
    return model.bend.meta_slope * sounding_pitch + model.bend.meta_intercept


def thresholds_at(model: "FluteModel", base_pitch: float) -> tuple[float, float]:
    """(P_up, P_down) in gauge Pa for a fingering's base pitch."""
    t = model.thresholds
    p_up = math.exp(t.slope * base_pitch + t.up_intercept)
    p_down = math.exp(t.slope * base_pitch + t.down_intercept)
    return p_up, p_down


@dataclass(frozen=True)
class BendPoint:
    q: float
    bend_semitones: float
    valid: bool


def bend_at(model: "FluteModel", sounding_pitch: float, gauge_pressure: float) -> BendPoint:
    """Frequency quotient and bend at a sounding pitch and gauge pressure.

    Below the speaking domain (where the power-law argument goes
    non-positive) the point is flagged invalid and q is clamped.
    """
    if gauge_pressure <= 0:
        raise ValueError("gauge pressure must be positive")
    b = model.bend
    u = 1.0 + b.common_slope * (math.log(gauge_pressure) - x_intercept_at(model, sounding_pitch))
    if u <= 0.0:
        q = CLAMP_EPS ** (1.0 / b.power)
        return BendPoint(q=q, bend_semitones=12.0 * math.log2(q), valid=False)
    q = u ** (1.0 / b.power)
    return BendPoint(q=q, bend_semitones=12.0 * math.log2(q), valid=True)


def step_hysteresis(
    model: "FluteModel",
    state: HysteresisState,
    base_pitch: float,
    gauge_pressure: float,
) -> tuple[HysteresisState, str | None]:
    """Advance the register state machine by one pressure reading."""
    if gauge_pressure <= 0:
        raise ValueError("gauge pressure must be positive")
    p_up, p_down = thresholds_at(model, base_pitch)
    if not state.is_high and gauge_pressure > p_up:
        return HysteresisState(HIGH), "up"
    if state.is_high and gauge_pressure < p_down:
        return HysteresisState(LOW), "down"
    return state, None


@dataclass
class TraceResult:
    """Per-hop output of a simulated pressure trace."""

    register: list[str]
    sounding_pitch_midi: np.ndarray
    q: np.ndarray
    bend_semitones: np.ndarray
    f_hz: np.ndarray
    valid: np.ndarray
    jumps: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.register)


def simulate_trace(
    model: "FluteModel",
    base_pitch: float,
    pressure_trace: np.ndarray,
    initial_state: HysteresisState = HysteresisState(LOW),
) -> TraceResult:
    """Fold the hysteresis machine over a per-hop gauge-pressure trace.

    Each hop first steps the register, then evaluates the bend curve at
    the resulting sounding pitch.
    """
    trace = np.asarray(pressure_trace, dtype=np.float64)
    n = trace.size
    out = TraceResult(
        register=[],
        sounding_pitch_midi=np.empty(n),
        q=np.empty(n),
        bend_semitones=np.empty(n),
        f_hz=np.empty(n),
        valid=np.zeros(n, dtype=bool),
    )
    state = initial_state
    for k in range(n):
        state, jumped = step_hysteresis(model, state, base_pitch, trace[k])
        if jumped is not None:
            out.jumps.append((k, jumped))
        sounding = base_pitch + (12.0 if state.is_high else 0.0)
        point = bend_at(model, sounding, trace[k])
        out.register.append(state.register)
        out.sounding_pitch_midi[k] = sounding
        out.q[k] = point.q
        out.bend_semitones[k] = point.bend_semitones
        out.f_hz[k] = midi_to_hz(sounding) * point.q
        out.valid[k] = point.valid
    return out


@dataclass(frozen=True)
class NoteScript:
    """One scripted fingering: dwell near in-tune, sweep up, sweep down."""

    base_pitch_midi: int
    repetitions: int = 1
    apex_pa: float = 300.0
    dwell_s: float = 1.8
    rise_s: float = 2.4
    fall_s: float = 2.2
    rest_s: float = 1.0

    def validate(self) -> None:
        if self.repetitions < 1:
            raise ScriptError("repetitions must be >= 1")
        if self.apex_pa <= 0:
            raise ScriptError("apex pressure must be positive")
        for name in ("dwell_s", "rise_s", "fall_s", "rest_s"):
            if getattr(self, name) <= 0:
                raise ScriptError(f"{name} must be positive")


@dataclass(frozen=True)
class ImpulsePreamble:
    groups: int = 2
    per_group: int = 5


@dataclass(frozen=True)
class SessionScript:
    """Everything the generator needs to synthesize one session."""

    notes: tuple[NoteScript, ...]
    impulses: ImpulsePreamble = ImpulsePreamble()
    lag_hops: float = 0.0
    drift_hops: float = 0.0
    baseline_pa: float = 101325.0
    pressure_noise_pa: float = 0.0
    audio_noise: float = 0.0
    pressure_rate_hz: float = 100.0
    lead_s: float = 1.0
    tail_s: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if not self.notes:
            raise ScriptError("script has no notes")
        for note in self.notes:
            note.validate()
        if self.baseline_pa <= 0:
            raise ScriptError("baseline must be positive (absolute Pa)")
        if self.pressure_rate_hz <= 0:
            raise ScriptError("pressure rate must be positive")


def script_to_json(script: SessionScript) -> str:
    payload = {
        "notes": [
            {
                "base_pitch_midi": n.base_pitch_midi,
                "repetitions": n.repetitions,
                "apex_pa": n.apex_pa,
                "dwell_s": n.dwell_s,
                "rise_s": n.rise_s,
                "fall_s": n.fall_s,
                "rest_s": n.rest_s,
            }
            for n in script.notes
        ],
        "impulses": {"groups": script.impulses.groups, "per_group": script.impulses.per_group},
        "lag_hops": script.lag_hops,
        "drift_hops": script.drift_hops,
        "baseline_pa": script.baseline_pa,
        "pressure_noise_pa": script.pressure_noise_pa,
        "audio_noise": script.audio_noise,
        "pressure_rate_hz": script.pressure_rate_hz,
        "lead_s": script.lead_s,
        "tail_s": script.tail_s,
        "seed": script.seed,
    }
    return json.dumps(payload, indent=2) + "\n"


def script_from_json(text: str) -> SessionScript:
    obj = json.loads(text)
    notes = tuple(NoteScript(**n) for n in obj["notes"])
    imp = ImpulsePreamble(**obj.get("impulses", {}))
    script = SessionScript(
        notes=notes,
        impulses=imp,
        **{
            k: obj[k]
            for k in (
                "lag_hops", "drift_hops", "baseline_pa", "pressure_noise_pa",
                "audio_noise", "pressure_rate_hz", "lead_s", "tail_s", "seed",
            )
            if k in obj
        },
    )
    script.validate()
    return script


def build_default_script(
    model: "FluteModel",
    bases: tuple[int, ...] = (60, 62, 64, 65, 67, 69, 71),
    repetitions: int = 4,
    apex_margin: float = 1.3,
    **overrides,
) -> SessionScript:
    """Script mirroring the measurement protocol: each fingering swept
    through both octave thresholds, repeated."""
    notes = []
    for base in bases:
        p_up, _ = thresholds_at(model, base)
        notes.append(NoteScript(base_pitch_midi=base, repetitions=repetitions,
                                apex_pa=apex_margin * p_up))
    return SessionScript(notes=tuple(notes), **overrides)


@dataclass
class GeneratedSession:
    audio_wav: bytes
    pressure_log: str
    truth: dict


# Gauge pressure representing "not blowing"; the profile interpolates in
# ln-pressure (ramps are exponential, i.e. constant relative rate), so true
# zero is unrepresentable and this stands in for it.
SILENCE_PA = 0.02


class _Profile:
    """Piecewise-exponential gauge-pressure profile under construction.

    Breakpoints are stored in ln-pressure so that every ramp is linear in
    ln P: a page-centered reading of a ramp is then exact, with no
    curvature bias at low pressures.
    """

    def __init__(self) -> None:
        self.t: list[float] = [0.0]
        self.lnp: list[float] = [math.log(SILENCE_PA)]

    def hold(self, duration: float) -> None:
        self.t.append(self.t[-1] + duration)
        self.lnp.append(self.lnp[-1])

    def ramp(self, duration: float, target_pa: float) -> None:
        self.t.append(self.t[-1] + duration)
        self.lnp.append(math.log(max(target_pa, SILENCE_PA)))

    @property
    def now(self) -> float:
        return self.t[-1]


def generate_session(
    script: SessionScript, model: "FluteModel", grid: HopGrid
) -> GeneratedSession:
    """Synthesize (audio WAV, pressure log, ground truth) for a script.

    Audio is a pure sine following the simulated register and bend curve,
    gated by the speaking domain; both streams carry the impulse preamble.
    Lag and drift are injected into the pressure time axis.
    """
    script.validate()
    rng = np.random.default_rng(script.seed)
    sr = grid.sample_rate
    hop_rate = grid.hop_rate

    profile = _Profile()
    impulse_times: list[float] = []
    profile.hold(script.lead_s)
    for g in range(script.impulses.groups):
        for _ in range(script.impulses.per_group):
            impulse_times.append(profile.now)
            profile.ramp(PUFF_RISE_S, PUFF_PA)
            profile.ramp(PUFF_FALL_S, 0.0)
            profile.hold(max(IMPULSE_SPACING_S - PUFF_RISE_S - PUFF_FALL_S, 0.01))
        if g < script.impulses.groups - 1:
            profile.hold(GROUP_GAP_S)
    if impulse_times:
        profile.hold(PREAMBLE_GAP_S)

    # Expand note entries into individual played notes.  Each note starts
    # at a random sub-hop phase, as a human player's timing would; repeated
    # identical phases would keep hop-quantization effects from averaging
    # out downstream.  Sweeps decelerate through the octave-threshold band,
    # and the note ends while the flute still speaks (the speaking limit
    # depends on the model's bend slope).
    b = model.bend
    u_speak = 2.0 ** (SPEAK_BEND_SEMITONES * b.power / 12.0)
    played: list[dict] = []
    for entry in script.notes:
        p_start = math.exp(x_intercept_at(model, entry.base_pitch_midi))
        p_up, p_down = thresholds_at(model, entry.base_pitch_midi)
        end_frac = min(math.exp((u_speak - 1.0) / b.common_slope) * 1.08, 0.9)
        p_end = end_frac * p_start
        for _ in range(entry.repetitions):
            profile.hold(rng.uniform(0.0, grid.hop_period_s))
            start = profile.now
            profile.ramp(NOTE_ATTACK_S, p_start)
            profile.hold(entry.dwell_s)
            lo, hi = (1.0 - CROSSING_BAND) * p_up, (1.0 + CROSSING_BAND) * p_up
            if p_start < lo and hi < entry.apex_pa:
                profile.ramp(0.55 * entry.rise_s, lo)
                profile.ramp(CROSSING_SECONDS, hi)
                profile.ramp(0.45 * entry.rise_s, entry.apex_pa)
            else:
                profile.ramp(entry.rise_s, entry.apex_pa)
            apex_time = profile.now
            lo, hi = (1.0 - CROSSING_BAND) * p_down, (1.0 + CROSSING_BAND) * p_down
            if p_end < lo and hi < entry.apex_pa:
                profile.ramp(0.5 * entry.fall_s, hi)
                profile.ramp(CROSSING_SECONDS, lo)
                profile.ramp(0.5 * entry.fall_s, p_end)
            else:
                profile.ramp(entry.fall_s, p_end)
            profile.ramp(NOTE_RELEASE_S, 0.0)
            end = profile.now
            profile.hold(entry.rest_s)
            played.append(
                {
                    "base_pitch_midi": entry.base_pitch_midi,
                    "start_s": start,
                    "end_s": end,
                    "apex_s": apex_time,
                    "apex_pa": entry.apex_pa,
                }
            )
    profile.hold(script.tail_s)

    total_s = profile.now
    n_samples = int(round(total_s * sr))
    bp_t = np.asarray(profile.t)
    bp_lnp = np.asarray(profile.lnp)

    tt = np.arange(n_samples) / sr
    gauge = np.exp(np.interp(tt, bp_t, bp_lnp))

    audio = np.zeros(n_samples)

    # Register-decision probe phases, in hops relative to the waveform
    # switch.  The analysis pairs a page's f0 with the pressure at its
    # center (half a window past the hop stamp) and detects an upward flip
    # on the first all-new page, but a downward flip three pages early (the
    # outgoing register's sub-octave dip merges with the incoming
    # fundamental).  Probing the profile at these phases makes the
    # pressure bracketing a *detected* flip agree with the true crossing.
    up_probe_hops = grid.window / (2.0 * grid.hop)
    down_probe_hops = up_probe_hops - 3.0

    note_truth = []
    for note in played:
        base = note["base_pitch_midi"]
        h0 = int(math.floor(note["start_s"] * hop_rate))
        h1 = int(math.ceil(note["end_s"] * hop_rate)) + 1
        hops = np.arange(h0, h1)
        p_up_probe = np.exp(np.interp((hops + up_probe_hops) / hop_rate, bp_t, bp_lnp))
        p_down_probe = np.exp(np.interp((hops + down_probe_hops) / hop_rate, bp_t, bp_lnp))
        p_up, p_down = thresholds_at(model, base)
        reg_high = np.zeros(hops.size, dtype=bool)
        jumps: list[tuple[int, str]] = []
        high = False
        for k in range(hops.size):
            if not high and p_up_probe[k] > p_up:
                high = True
                jumps.append((k, "up"))
            elif high and p_down_probe[k] < p_down:
                high = False
                jumps.append((k, "down"))
            reg_high[k] = high

        s0 = int(round(note["start_s"] * sr))
        s1 = min(int(round(note["end_s"] * sr)) + 1, n_samples)
        seg_t = tt[s0:s1]
        seg_p = gauge[s0:s1]
        hop_of_sample = np.minimum(
            (seg_t * hop_rate).astype(np.int64) - h0, reg_high.size - 1
        )
        high = reg_high[hop_of_sample]

        with np.errstate(divide="ignore", invalid="ignore"):
            ln_p = np.where(seg_p > 0, np.log(np.maximum(seg_p, 1e-300)), -np.inf)
        pitches = base + 12.0 * high
        u = 1.0 + b.common_slope * (
            ln_p - (b.meta_slope * pitches + b.meta_intercept)
        )
        voiced = (seg_p > 0) & (u >= u_speak)
        f = midi_to_hz(base) * np.where(high, 2.0, 1.0) * np.where(
            voiced, np.maximum(u, CLAMP_EPS), 1.0
        ) ** (1.0 / b.power)

        # Brief scripted pitch wobble right after each register change, so
        # the post-jump discard logic has something real to remove.
        jump_hops_abs = [(h0 + k, d) for k, d in jumps]
        for hop_abs, _ in jump_hops_abs:
            j0 = int(round(hop_abs * grid.hop))
            dt = tt[max(j0, s0) : min(j0 + int(PERTURB_SECONDS * sr), s1)] - j0 / sr
            if dt.size == 0:
                continue
            wobble = PERTURB_SEMITONES * np.sin(2 * np.pi * PERTURB_HZ * dt) * np.exp(
                -dt / PERTURB_DECAY_S
            )
            lo = max(j0, s0) - s0
            f[lo : lo + dt.size] *= 2.0 ** (wobble / 12.0)

        phase = 2.0 * np.pi * np.cumsum(f) / sr
        audio[s0:s1] += NOTE_AMPLITUDE * np.sin(phase) * voiced

        up_hop = next((h for h, d in jump_hops_abs if d == "up"), None)
        down_hop = next((h for h, d in jump_hops_abs if d == "down"), None)
        note_truth.append(
            {
                "base_pitch_midi": base,
                "start_hop": note["start_s"] * hop_rate,
                "end_hop": note["end_s"] * hop_rate,
                "apex_hop": note["apex_s"] * hop_rate,
                "in_tune_pa": math.exp(x_intercept_at(model, base)),
                "p_up": p_up,
                "p_down": p_down,
                "up_jump_hop": up_hop,
                "down_jump_hop": down_hop,
            }
        )

    burst_env_t = np.array([0.0, BURST_RISE_S, BURST_RISE_S + BURST_FALL_S])
    burst_env = np.array([0.0, BURST_AMPLITUDE, 0.0])
    for ti in impulse_times:
        s0 = int(round(ti * sr))
        s1 = min(s0 + int((BURST_RISE_S + BURST_FALL_S) * sr), n_samples)
        dt = tt[s0:s1] - ti
        env = np.interp(dt, burst_env_t, burst_env)
        audio[s0:s1] += env * np.sin(2 * np.pi * BURST_HZ * dt)

    if script.audio_noise > 0:
        audio += rng.normal(0.0, script.audio_noise, size=n_samples)
    np.clip(audio, -1.0, 1.0, out=audio)
    wav_io = io.BytesIO()
    wavfile.write(wav_io, sr, np.round(audio * 32767.0).astype(np.int16))

    # Pressure log: irregular sampling, with lag and drift injected by
    # evaluating the profile on a warped time axis.
    mean_dt_ms = 1000.0 / script.pressure_rate_hz
    steps = rng.uniform(0.5 * mean_dt_ms, 1.5 * mean_dt_ms, size=int(total_s * script.pressure_rate_hz * 2.2) + 4)
    t_log_ms = np.concatenate(([0.0], np.cumsum(steps)))
    t_log_ms = t_log_ms[t_log_ms <= total_s * 1000.0]
    lag_s = script.lag_hops * grid.hop_period_s
    drift_rate = (script.drift_hops * grid.hop_period_s) / total_s
    t_source_s = t_log_ms / 1000.0 * (1.0 - drift_rate) - lag_s
    values = script.baseline_pa + np.exp(np.interp(t_source_s, bp_t, bp_lnp))
    if script.pressure_noise_pa > 0:
        values = values + rng.normal(0.0, script.pressure_noise_pa, size=values.size)
    lines = ["t_ms,p_pa"]
    lines.extend(f"{float(t)!r},{float(v)!r}" for t, v in zip(t_log_ms, values))
    log_text = "\n".join(lines) + "\n"

    truth = {
        "baseline_pa": script.baseline_pa,
        "lag_hops": script.lag_hops,
        "drift_hops": script.drift_hops,
        "impulse_hops": [ti * hop_rate for ti in impulse_times],
        "n_notes": len(played),
        "notes": note_truth,
        "total_s": total_s,
    }
    return GeneratedSession(audio_wav=wav_io.getvalue(), pressure_log=log_text, truth=truth)
