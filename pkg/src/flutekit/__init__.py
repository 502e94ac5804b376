"""Measurement-to-model toolkit for a six-hole recorder flute.

Ingests parallel audio and breath-pressure logs, extracts aligned per-hop
features, cleans octave-jump disequilibrium, fits the pitch-bend and
octave-threshold model, and evaluates it forward as a hysteresis state
machine.  A synthetic-session generator closes the loop for verification.
"""

from .align import AlignmentError, AlignmentResult
from .features import FeatureTable, hz_to_midi, page_amplitude, yin_f0
from .fit import (
    BendModel,
    FitDegenerateError,
    FluteModel,
    InvalidModelError,
    ThresholdLabel,
    ThresholdModel,
)
from .ingest import AudioBuffer, HopGrid, PressureSeries
from .model import (
    HysteresisState,
    SessionScript,
    bend_at,
    generate_session,
    midi_to_hz,
    simulate_trace,
    step_hysteresis,
)
from .segment import JumpEvent, NoteSegment, Sweep

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "AlignmentResult",
    "AudioBuffer",
    "BendModel",
    "FeatureTable",
    "FitDegenerateError",
    "FluteModel",
    "HopGrid",
    "HysteresisState",
    "InvalidModelError",
    "JumpEvent",
    "NoteSegment",
    "PressureSeries",
    "SessionScript",
    "Sweep",
    "ThresholdLabel",
    "ThresholdModel",
    "bend_at",
    "generate_session",
    "hz_to_midi",
    "midi_to_hz",
    "page_amplitude",
    "simulate_trace",
    "step_hysteresis",
    "yin_f0",
    "__version__",
]
