"""Command-line entry point wiring the measurement-to-model pipeline.

Subcommands:

    analyze   audio + pressure log -> features CSV + sidecar JSON
    align     alignment only: print stream offset, score, drift
    fit       features (+ optional manual labels) -> model JSON + report
    simulate  model + per-hop pressure trace -> per-hop response CSV
    synth     model + session script -> WAV + pressure log + ground truth
    plot      features/sidecar/model -> SVG figure
    label     serve the labeling UI + API for one analyzed session

Exit codes: 0 ok, 2 input error, 3 alignment failure, 4 degenerate fit,
5 invalid model.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import align, features, fit, ingest, model, plots, segment, server

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ALIGNMENT = 3
EXIT_FIT = 4
EXIT_MODEL = 5


@dataclass(frozen=True)
class PipelineConfig:
    sample_rate: int = 22050
    hop: int = 512
    window: int = 2048
    yin_threshold: float = features.DEFAULT_YIN_THRESHOLD
    f_min: float = features.DEFAULT_F_MIN
    f_max: float = features.DEFAULT_F_MAX
    silence_threshold: float = segment.DEFAULT_SILENCE_FRACTION
    jump_window_ms: float = segment.DEFAULT_JUMP_WINDOW_MS
    power: float = fit.DEFAULT_POWER
    rel_threshold: float = align.DEFAULT_REL_THRESHOLD
    max_lag: int = align.DEFAULT_MAX_LAG

    @property
    def grid(self) -> ingest.HopGrid:
        return ingest.HopGrid(self.sample_rate, self.hop, self.window)


@dataclass
class AnalysisResult:
    table: features.FeatureTable
    segments: list
    sweeps: list
    events: list
    alignment: align.AlignmentResult


def analyze_session(
    audio_bytes: bytes, log_text: str | bytes, config: PipelineConfig
) -> AnalysisResult:
    """Full preparation chain: ingest, extract, align, zero, segment, clean."""
    grid = config.grid
    audio = ingest.load_audio(audio_bytes, grid)
    series = ingest.parse_pressure_log(log_text)
    table = features.extract_features(
        audio, series, grid, config.f_min, config.f_max, config.yin_threshold
    )
    audio_onsets = align.detect_onsets(table.amplitude, config.rel_threshold)
    pressure_sig = np.diff(table.pressure_pa, prepend=table.pressure_pa[0])
    pressure_onsets = align.detect_onsets(pressure_sig, config.rel_threshold)
    result = align.estimate_offset(audio_onsets, pressure_onsets, config.max_lag)
    align.check_drift(table, result)
    table = align.apply_offset(table, result.offset_hops)
    table = segment.detect_silence(table, config.silence_threshold)
    table = segment.zero_pressure(table)
    segments = segment.segment_notes(table)
    events = segment.detect_octave_jumps(table, segments)
    table = segment.discard_disequilibrium(table, events, config.jump_window_ms)
    sweeps = segment.tag_sweeps(table, segments)
    return AnalysisResult(table, segments, sweeps, events, result)


def sidecar_payload(result: AnalysisResult) -> dict:
    return {
        "alignment": {
            "offset_hops": result.alignment.offset_hops,
            "score": result.alignment.score,
            "drift_hops": result.alignment.drift_hops,
        },
        "baseline_pa": result.table.meta.baseline_pa,
        "segments": [
            {
                "id": s.id,
                "start": s.start,
                "end": s.end,
                "base_pitch_midi": s.base_pitch_midi,
                "repetition": s.repetition,
            }
            for s in result.segments
        ],
        "sweeps": [
            {
                "note_id": s.note_id,
                "direction": s.direction,
                "start": s.hop_range[0],
                "end": s.hop_range[1],
            }
            for s in result.sweeps
        ],
        "events": [
            {"hop": e.hop, "direction": e.direction, "ln_pressure": e.ln_pressure}
            for e in result.events
        ],
    }


def parse_sidecar(text: str) -> tuple[list, list, list]:
    obj = json.loads(text)
    segments = [
        segment.NoteSegment(
            id=s["id"],
            hop_range=(s["start"], s["end"]),
            base_pitch_midi=s["base_pitch_midi"],
            repetition=s["repetition"],
        )
        for s in obj["segments"]
    ]
    sweeps = [
        segment.Sweep(note_id=s["note_id"], direction=s["direction"],
                      hop_range=(s["start"], s["end"]))
        for s in obj["sweeps"]
    ]
    events = [
        segment.JumpEvent(hop=e["hop"], direction=e["direction"],
                          ln_pressure=e["ln_pressure"])
        for e in obj["events"]
    ]
    return segments, sweeps, events


def sidecar_path_for(features_path: Path) -> Path:
    return features_path.with_name(features_path.name + ".sidecar.json")


def cmd_analyze(args: argparse.Namespace, config: PipelineConfig) -> int:
    audio_bytes = Path(args.audio).read_bytes()
    log_text = Path(args.pressure).read_text(encoding="utf-8")
    result = analyze_session(audio_bytes, log_text, config)
    out = Path(args.out)
    out.write_text(features.serialize_features(result.table), encoding="utf-8")
    sidecar = args.sidecar or sidecar_path_for(out)
    Path(sidecar).write_text(
        json.dumps(sidecar_payload(result), indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"analyze: {len(result.table)} hops, {len(result.segments)} segments, "
        f"{len(result.events)} jump events, offset {result.alignment.offset_hops} hops "
        f"(score {result.alignment.score:.3f}, drift {result.alignment.drift_hops})"
    )
    return EXIT_OK


def fit_from_tables(
    table: features.FeatureTable,
    segments: list,
    sweeps: list,
    events: list,
    power: float,
    manual_labels: list | None = None,
) -> tuple[fit.FluteModel, dict]:
    """Bend + threshold fits with a report of the intermediate quantities."""
    data = fit.build_bend_samples(table, segments, sweeps)
    if not data.groups:
        raise fit.FitDegenerateError("no bend samples survived cleaning")
    per_note = fit.fit_per_note_lines(data.groups, power)
    slope, intercepts = fit.fit_common_slope(data.groups, power)
    pairs = fit.x_intercepts(slope, intercepts)
    meta_slope, meta_intercept = fit.fit_meta_line(pairs)
    auto = fit.auto_label_thresholds(events, segments, sweeps)
    labels = fit.merge_labels(auto, manual_labels or [])
    thresholds = fit.fit_threshold_model(labels)
    bend = fit.BendModel(
        power=power,
        common_slope=slope,
        meta_slope=meta_slope,
        meta_intercept=meta_intercept,
    )
    flute = fit.assemble_model(bend, thresholds)
    report = {
        "n_groups": len(data.groups),
        "n_samples": sum(len(g) for g in data.groups.values()),
        "n_excluded_nonpositive": data.n_excluded_nonpositive,
        "n_excluded_edge": data.n_excluded_edge,
        "per_note_lines": {
            str(pitch): {"slope": lf.slope, "intercept": lf.intercept,
                         "n": lf.n, "rss": lf.rss}
            for pitch, lf in per_note.items()
        },
        "x_intercepts": {str(p): v for p, v in pairs},
        "n_auto_labels": len(auto),
        "n_manual_labels": len(manual_labels or []),
        "n_labels_used": len(labels),
    }
    return flute, report


def cmd_align(args: argparse.Namespace, config: PipelineConfig) -> int:
    """Alignment only: estimate the stream offset and report drift."""
    grid = config.grid
    audio = ingest.load_audio(Path(args.audio).read_bytes(), grid)
    series = ingest.parse_pressure_log(Path(args.pressure).read_text(encoding="utf-8"))
    table = features.extract_features(
        audio, series, grid, config.f_min, config.f_max, config.yin_threshold
    )
    audio_onsets = align.detect_onsets(table.amplitude, config.rel_threshold)
    pressure_sig = np.diff(table.pressure_pa, prepend=table.pressure_pa[0])
    pressure_onsets = align.detect_onsets(pressure_sig, config.rel_threshold)
    result = align.estimate_offset(audio_onsets, pressure_onsets, config.max_lag)
    drift = align.check_drift(table, result)
    print(f"offset_hops: {result.offset_hops}")
    print(f"score: {result.score:.4f}")
    print(f"drift_hops: {drift if drift is not None else 'unavailable'}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace, config: PipelineConfig) -> int:
    features_path = Path(args.features)
    table = features.parse_features(
        features_path.read_text(encoding="utf-8"), config.grid
    )
    sidecar = Path(args.sidecar) if args.sidecar else sidecar_path_for(features_path)
    segments, sweeps, events = parse_sidecar(sidecar.read_text(encoding="utf-8"))
    manual = []
    if args.labels:
        manual = fit.labels_from_json(Path(args.labels).read_text(encoding="utf-8"))
    flute, report = fit_from_tables(
        table, segments, sweeps, events, args.power, manual
    )
    Path(args.out).write_text(fit.model_to_json(flute), encoding="utf-8")
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(
        f"fit: common slope {flute.bend.common_slope:.6g}, "
        f"meta {flute.bend.meta_slope:.6g}*pitch{flute.bend.meta_intercept:+.6g}, "
        f"thresholds {flute.thresholds.slope:.6g}*pitch "
        f"+ ({flute.thresholds.up_intercept:.6g} up / "
        f"{flute.thresholds.down_intercept:.6g} down), "
        f"labels {report['n_labels_used']}"
    )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, config: PipelineConfig) -> int:
    flute = fit.model_from_json(Path(args.model).read_text(encoding="utf-8"))
    trace_lines = Path(args.trace).read_text(encoding="utf-8").strip().splitlines()
    if trace_lines and trace_lines[0].strip() == "pressure_pa":
        trace_lines = trace_lines[1:]
    trace = np.array([float(v) for v in trace_lines])
    result = model.simulate_trace(flute, args.pitch, trace)
    lines = ["hop,register,sounding_pitch_midi,q,bend_semitones,f_hz,valid"]
    for k in range(len(result)):
        lines.append(
            f"{k},{result.register[k]},{float(result.sounding_pitch_midi[k])!r},"
            f"{float(result.q[k])!r},{float(result.bend_semitones[k])!r},"
            f"{float(result.f_hz[k])!r},{int(result.valid[k])}"
        )
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    jumps = ", ".join(f"{d} at hop {k}" for k, d in result.jumps) or "none"
    print(f"simulate: {len(result)} hops, jumps: {jumps}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, config: PipelineConfig) -> int:
    flute = fit.model_from_json(Path(args.model).read_text(encoding="utf-8"))
    if args.script:
        script = model.script_from_json(Path(args.script).read_text(encoding="utf-8"))
    else:
        script = model.build_default_script(flute, seed=args.seed)
    session = model.generate_session(script, flute, config.grid)
    Path(args.out_audio).write_bytes(session.audio_wav)
    Path(args.out_pressure).write_text(session.pressure_log, encoding="utf-8")
    Path(args.out_truth).write_text(
        json.dumps(session.truth, indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"synth: {session.truth['n_notes']} notes, "
        f"{session.truth['total_s']:.1f} s session"
    )
    return EXIT_OK


def cmd_plot(args: argparse.Namespace, config: PipelineConfig) -> int:
    which = args.which
    table = segments = sweeps = events = None
    if args.features:
        features_path = Path(args.features)
        table = features.parse_features(
            features_path.read_text(encoding="utf-8"), config.grid
        )
        sidecar = Path(args.sidecar) if args.sidecar else sidecar_path_for(features_path)
        if sidecar.exists():
            segments, sweeps, events = parse_sidecar(sidecar.read_text(encoding="utf-8"))
    flute = None
    if args.model:
        flute = fit.model_from_json(Path(args.model).read_text(encoding="utf-8"))

    def need(cond, what):
        if not cond:
            raise FileNotFoundError(f"plot '{which}' needs {what}")

    if which == "timeline":
        need(table is not None, "--features")
        svg = plots.plot_timeline(table)
    elif which == "bend_scatter":
        need(table is not None and segments is not None, "--features with sidecar")
        svg = plots.plot_bend_scatter(table, segments)
    elif which == "bend_linear":
        need(table is not None and segments is not None, "--features with sidecar")
        svg = plots.plot_bend_linear(table, segments, sweeps, args.power, flute)
    elif which == "xintercepts":
        need(table is not None and segments is not None, "--features with sidecar")
        data = fit.build_bend_samples(table, segments, sweeps)
        slope, intercepts = fit.fit_common_slope(data.groups, args.power)
        pairs = fit.x_intercepts(slope, intercepts)
        meta = fit.fit_meta_line(pairs)
        svg = plots.plot_xintercepts(pairs, meta)
    elif which == "model_overlay":
        need(table is not None and segments is not None and flute is not None,
             "--features with sidecar and --model")
        svg = plots.plot_model_overlay(table, segments, flute)
    elif which == "hysteresis":
        need(table is not None and segments is not None, "--features with sidecar")
        seg = next((s for s in segments if s.id == args.note), None)
        need(seg is not None, f"a note with id {args.note}")
        labels = fit.auto_label_thresholds(events, segments, sweeps)
        svg = plots.plot_hysteresis(table, seg, sweeps, labels)
    elif which == "thresholds":
        need(table is not None and segments is not None, "--features with sidecar")
        labels = fit.auto_label_thresholds(events, segments, sweeps)
        if args.labels:
            manual = fit.labels_from_json(Path(args.labels).read_text(encoding="utf-8"))
            labels = fit.merge_labels(labels, manual)
        svg = plots.plot_thresholds(labels, flute)
    elif which == "amplitude":
        need(table is not None and segments is not None, "--features with sidecar")
        svg = plots.plot_amplitude(table, segments)
    else:
        raise ValueError(f"unknown plot kind {which!r}")
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"plot: wrote {which} to {args.out}")
    return EXIT_OK


def cmd_label(args: argparse.Namespace, config: PipelineConfig) -> int:
    features_path = Path(args.features)
    table = features.parse_features(
        features_path.read_text(encoding="utf-8"), config.grid
    )
    sidecar = Path(args.sidecar) if args.sidecar else sidecar_path_for(features_path)
    segments, sweeps, events = parse_sidecar(sidecar.read_text(encoding="utf-8"))
    data = server.build_session_data(
        table, segments, sweeps, events, Path(args.labels)
    )
    httpd = server.make_server(data, args.port, host=args.host)
    host, port = httpd.server_address[:2]
    print(f"labeler at http://{host}:{port}/ (labels -> {args.labels}); Ctrl-C stops")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sr", type=int, default=22050, help="audio sample rate")
    p.add_argument("--hop", type=int, default=512, help="hop length in samples")
    p.add_argument("--window", type=int, default=2048, help="analysis page in samples")
    p.add_argument("--yin-threshold", type=float, default=features.DEFAULT_YIN_THRESHOLD)
    p.add_argument("--f-min", type=float, default=features.DEFAULT_F_MIN)
    p.add_argument("--f-max", type=float, default=features.DEFAULT_F_MAX)
    p.add_argument("--silence-threshold", type=float,
                   default=segment.DEFAULT_SILENCE_FRACTION)
    p.add_argument("--jump-window-ms", type=float,
                   default=segment.DEFAULT_JUMP_WINDOW_MS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flutekit",
        description="Breath-pressure response measurement and modeling for a "
        "six-hole recorder flute",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="audio + pressure log -> features CSV")
    p.add_argument("--audio", required=True)
    p.add_argument("--pressure", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("align", help="report stream offset, score, and drift")
    p.add_argument("--audio", required=True)
    p.add_argument("--pressure", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("fit", help="features -> model JSON")
    p.add_argument("--features", required=True)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--labels", default=None, help="manual labels JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--power", type=float, default=fit.DEFAULT_POWER)
    _add_config_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="model + pressure trace -> response CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--pitch", type=int, required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="model + script -> synthetic session")
    p.add_argument("--model", required=True)
    p.add_argument("--script", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-audio", required=True)
    p.add_argument("--out-pressure", required=True)
    p.add_argument("--out-truth", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plot", help="render an SVG figure")
    p.add_argument("--which", required=True, choices=plots.PLOT_KINDS)
    p.add_argument("--features", default=None)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--note", type=int, default=0)
    p.add_argument("--power", type=float, default=fit.DEFAULT_POWER)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("label", help="serve the labeling UI for a session")
    p.add_argument("--features", required=True)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--labels", required=True)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    _add_config_flags(p)
    p.set_defaults(func=cmd_label)
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if hasattr(args, "sr"):
        cfg = replace(
            cfg,
            sample_rate=args.sr,
            hop=args.hop,
            window=args.window,
            yin_threshold=args.yin_threshold,
            f_min=args.f_min,
            f_max=args.f_max,
            silence_threshold=args.silence_threshold,
            jump_window_ms=args.jump_window_ms,
        )
    if hasattr(args, "power"):
        cfg = replace(cfg, power=args.power)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return args.func(args, config)
    except align.AlignmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALIGNMENT
    except (fit.FitDegenerateError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (fit.InvalidModelError, model.ScriptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (
        OSError,
        ValueError,
        KeyError,
        json.JSONDecodeError,
        segment.SegmentationError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
