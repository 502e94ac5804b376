from __future__ import annotations

import io
import json
import math
import threading
import urllib.error
import urllib.request
from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from flutekit.cli import (
    EXIT_ALIGNMENT,
    EXIT_FIT,
    EXIT_INPUT,
    EXIT_MODEL,
    EXIT_OK,
    main,
)
from flutekit.fit import default_model, model_from_json, model_to_json
from flutekit.model import build_default_script, generate_session, script_to_json


@pytest.fixture(scope="module")
def session_dir(tmp_path_factory, ref_model, grid):
    """Synthetic 2-pitch session written to disk, for CLI runs."""
    d = tmp_path_factory.mktemp("cli_session")
    script = build_default_script(
        ref_model, bases=(60, 67), repetitions=2, lag_hops=7,
        baseline_pa=101300.0, pressure_noise_pa=0.6, audio_noise=2e-4, seed=6,
    )
    session = generate_session(script, ref_model, grid)
    (d / "audio.wav").write_bytes(session.audio_wav)
    (d / "pressure.csv").write_text(session.pressure_log, encoding="utf-8")
    (d / "model.json").write_text(model_to_json(ref_model), encoding="utf-8")
    (d / "truth.json").write_text(json.dumps(session.truth), encoding="utf-8")
    return d


@pytest.fixture(scope="module")
def analyzed_dir(session_dir):
    code = main([
        "analyze",
        "--audio", str(session_dir / "audio.wav"),
        "--pressure", str(session_dir / "pressure.csv"),
        "--out", str(session_dir / "features.csv"),
    ])
    assert code == EXIT_OK
    return session_dir


class TestAnalyze:
    def test_missing_file_exit_code(self, tmp_path):
        code = main([
            "analyze", "--audio", str(tmp_path / "nope.wav"),
            "--pressure", str(tmp_path / "nope.csv"),
            "--out", str(tmp_path / "out.csv"),
        ])
        assert code == EXIT_INPUT

    def test_silent_audio_fails_with_code(self, tmp_path):
        # a silent session has no sync impulses, so it dies at alignment
        buf = io.BytesIO()
        wavfile.write(buf, 22050, np.zeros(44100, dtype=np.int16))
        (tmp_path / "silent.wav").write_bytes(buf.getvalue())
        (tmp_path / "p.csv").write_text("t_ms,p_pa\n0,101325\n2000,101325\n")
        code = main([
            "analyze", "--audio", str(tmp_path / "silent.wav"),
            "--pressure", str(tmp_path / "p.csv"),
            "--out", str(tmp_path / "out.csv"),
        ])
        assert code == EXIT_ALIGNMENT

    def test_sidecar_written(self, analyzed_dir):
        sidecar = json.loads(
            (analyzed_dir / "features.csv.sidecar.json").read_text()
        )
        assert sidecar["alignment"]["offset_hops"] == 7
        assert len(sidecar["segments"]) == 4
        assert len(sidecar["events"]) == 8
        assert sidecar["baseline_pa"] == pytest.approx(101300.0, abs=1.0)

    def test_deterministic_output(self, session_dir, tmp_path):
        outs = []
        for name in ("a.csv", "b.csv"):
            code = main([
                "analyze", "--audio", str(session_dir / "audio.wav"),
                "--pressure", str(session_dir / "pressure.csv"),
                "--out", str(tmp_path / name),
            ])
            assert code == EXIT_OK
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]


class TestFit:
    def test_fit_recovers_model(self, analyzed_dir, ref_model):
        code = main([
            "fit", "--features", str(analyzed_dir / "features.csv"),
            "--out", str(analyzed_dir / "fitted.json"),
            "--report", str(analyzed_dir / "report.json"),
        ])
        assert code == EXIT_OK
        fitted = model_from_json((analyzed_dir / "fitted.json").read_text())
        assert fitted.bend.meta_slope == pytest.approx(
            ref_model.bend.meta_slope, rel=0.05
        )
        report = json.loads((analyzed_dir / "report.json").read_text())
        assert report["n_auto_labels"] == 8

    def test_manual_label_shifts_up_intercept(self, analyzed_dir, tmp_path):
        assert main([
            "fit", "--features", str(analyzed_dir / "features.csv"),
            "--out", str(tmp_path / "auto.json"),
        ]) == EXIT_OK
        auto_model = model_from_json((tmp_path / "auto.json").read_text())
        labels = [{
            "note_id": 0, "pitch_midi": 60, "direction": "up",
            "ln_pressure": 4.4, "source": "manual",
        }]
        (tmp_path / "manual.json").write_text(json.dumps(labels))
        code = main([
            "fit", "--features", str(analyzed_dir / "features.csv"),
            "--labels", str(tmp_path / "manual.json"),
            "--out", str(tmp_path / "fitted_manual.json"),
        ])
        assert code == EXIT_OK
        shifted = model_from_json((tmp_path / "fitted_manual.json").read_text())
        # the override moves the up intercept (and, through the shared
        # slope, the rest of the threshold fit)
        assert shifted.thresholds.up_intercept != auto_model.thresholds.up_intercept
        assert shifted.bend == auto_model.bend

    def test_single_pitch_class_degenerate(self, ref_model, grid, tmp_path):
        script = build_default_script(ref_model, bases=(60,), repetitions=2,
                                      baseline_pa=101300.0, seed=7)
        session = generate_session(script, ref_model, grid)
        (tmp_path / "a.wav").write_bytes(session.audio_wav)
        (tmp_path / "p.csv").write_text(session.pressure_log)
        assert main(["analyze", "--audio", str(tmp_path / "a.wav"),
                     "--pressure", str(tmp_path / "p.csv"),
                     "--out", str(tmp_path / "f.csv")]) == EXIT_OK
        code = main(["fit", "--features", str(tmp_path / "f.csv"),
                     "--out", str(tmp_path / "m.json")])
        assert code == EXIT_FIT


class TestSimulateSynth:
    def test_simulate_canonical_trace(self, tmp_path):
        # 145/105 Pa thresholds, triangular trace -> one up, one down
        model = default_model()
        obj = json.loads(model_to_json(model))
        obj["thr_slope"] = 0.0
        obj["thr_up_intercept"] = math.log(145.0)
        obj["thr_down_intercept"] = math.log(105.0)
        (tmp_path / "m.json").write_text(json.dumps(obj))
        trace = np.concatenate([np.linspace(40, 180, 30), np.linspace(180, 40, 30)])
        (tmp_path / "trace.csv").write_text(
            "pressure_pa\n" + "\n".join(str(v) for v in trace)
        )
        code = main(["simulate", "--model", str(tmp_path / "m.json"),
                     "--pitch", "66", "--trace", str(tmp_path / "trace.csv"),
                     "--out", str(tmp_path / "sim.csv")])
        assert code == EXIT_OK
        rows = (tmp_path / "sim.csv").read_text().strip().splitlines()[1:]
        registers = [r.split(",")[1] for r in rows]
        flips = [i for i in range(1, len(registers)) if registers[i] != registers[i - 1]]
        assert len(flips) == 2
        assert registers[0] == "low" and registers[flips[0]] == "high"

    def test_inverted_band_refused(self, tmp_path):
        obj = json.loads(model_to_json(default_model()))
        obj["thr_down_intercept"] = obj["thr_up_intercept"]
        (tmp_path / "bad.json").write_text(json.dumps(obj))
        (tmp_path / "trace.csv").write_text("pressure_pa\n100\n")
        code = main(["simulate", "--model", str(tmp_path / "bad.json"),
                     "--pitch", "60", "--trace", str(tmp_path / "trace.csv"),
                     "--out", str(tmp_path / "sim.csv")])
        assert code == EXIT_MODEL

    def test_synth_output_feeds_analyze(self, tmp_path, session_dir):
        script_path = tmp_path / "script.json"
        model = default_model()
        script = build_default_script(model, bases=(64,), repetitions=1,
                                      baseline_pa=101300.0, seed=9)
        script_path.write_text(script_to_json(script))
        assert main(["synth", "--model", str(session_dir / "model.json"),
                     "--script", str(script_path),
                     "--out-audio", str(tmp_path / "s.wav"),
                     "--out-pressure", str(tmp_path / "s.csv"),
                     "--out-truth", str(tmp_path / "t.json")]) == EXIT_OK
        assert main(["analyze", "--audio", str(tmp_path / "s.wav"),
                     "--pressure", str(tmp_path / "s.csv"),
                     "--out", str(tmp_path / "f.csv")]) == EXIT_OK
        sidecar = json.loads((tmp_path / "f.csv.sidecar.json").read_text())
        assert len(sidecar["segments"]) == 1


class TestPlots:
    @pytest.mark.parametrize("which", ["timeline", "bend_scatter", "bend_linear",
                                       "xintercepts", "hysteresis", "thresholds",
                                       "amplitude"])
    def test_kinds_render(self, analyzed_dir, tmp_path, which):
        code = main(["plot", "--which", which,
                     "--features", str(analyzed_dir / "features.csv"),
                     "--note", "0",
                     "--out", str(tmp_path / f"{which}.svg")])
        assert code == EXIT_OK
        svg = (tmp_path / f"{which}.svg").read_text()
        assert svg.startswith("<svg")
        assert svg.rstrip().endswith("</svg>")

    def test_model_overlay(self, analyzed_dir, tmp_path):
        code = main(["plot", "--which", "model_overlay",
                     "--features", str(analyzed_dir / "features.csv"),
                     "--model", str(analyzed_dir / "model.json"),
                     "--out", str(tmp_path / "overlay.svg")])
        assert code == EXIT_OK

    def test_deterministic_svg(self, analyzed_dir, tmp_path):
        outs = []
        for name in ("p1.svg", "p2.svg"):
            assert main(["plot", "--which", "hysteresis",
                         "--features", str(analyzed_dir / "features.csv"),
                         "--note", "1",
                         "--out", str(tmp_path / name)]) == EXIT_OK
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]

    def test_missing_inputs(self, tmp_path):
        code = main(["plot", "--which", "timeline",
                     "--out", str(tmp_path / "x.svg")])
        assert code == EXIT_INPUT


@pytest.fixture()
def label_server(analyzed_dir, tmp_path):
    from flutekit import features as feat
    from flutekit import server as srv
    from flutekit.cli import PipelineConfig, parse_sidecar

    table = feat.parse_features(
        (analyzed_dir / "features.csv").read_text(), PipelineConfig().grid
    )
    segments, sweeps, events = parse_sidecar(
        (analyzed_dir / "features.csv.sidecar.json").read_text()
    )
    labels_path = tmp_path / "labels.json"
    data = srv.build_session_data(table, segments, sweeps, events, labels_path)
    httpd = srv.make_server(data, 0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield base, labels_path
    httpd.shutdown()
    httpd.server_close()
    thread.join(timeout=5)


def _get(url: str):
    with urllib.request.urlopen(url) as resp:
        return resp.status, json.loads(resp.read().decode())


def _put(url: str, payload) -> int:
    body = json.dumps(payload).encode()
    req = urllib.request.Request(url, data=body, method="PUT",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status
    except urllib.error.HTTPError as exc:
        return exc.code


class TestLabelServer:
    def test_notes_endpoint(self, label_server):
        base, _ = label_server
        status, notes = _get(base + "/api/notes")
        assert status == 200
        assert len(notes) == 4
        assert {n["base_pitch_midi"] for n in notes} == {60, 67}

    def test_scatter_endpoint(self, label_server):
        base, _ = label_server
        status, scatter = _get(base + "/api/note/0/scatter")
        assert status == 200
        assert scatter["note_id"] == 0
        assert len(scatter["points"]) > 50
        pt = scatter["points"][0]
        assert set(pt) == {"hop", "ln_pressure", "bend", "direction", "discarded"}
        assert scatter["auto"]["up"] is not None
        assert scatter["auto"]["down"] is not None

    def test_unknown_note_404(self, label_server):
        base, _ = label_server
        try:
            urllib.request.urlopen(base + "/api/note/99/scatter")
            raise AssertionError("expected 404")
        except urllib.error.HTTPError as exc:
            assert exc.code == 404

    def test_labels_round_trip(self, label_server):
        base, labels_path = label_server
        payload = [{"note_id": 0, "pitch_midi": 60, "direction": "up",
                    "ln_pressure": 4.98, "source": "manual"}]
        assert _put(base + "/api/labels", payload) == 204
        assert json.loads(labels_path.read_text())[0]["ln_pressure"] == 4.98
        status, echoed = _get(base + "/api/labels")
        assert status == 200
        assert echoed == payload

    def test_put_non_finite_rejected(self, label_server):
        base, labels_path = label_server
        good = [{"note_id": 0, "pitch_midi": 60, "direction": "up",
                 "ln_pressure": 5.0, "source": "manual"}]
        assert _put(base + "/api/labels", good) == 204
        before = labels_path.read_text()
        bad = '[{"note_id": 0, "pitch_midi": 60, "direction": "up", ' \
              '"ln_pressure": Infinity, "source": "manual"}]'
        req = urllib.request.Request(base + "/api/labels", data=bad.encode(),
                                     method="PUT")
        try:
            urllib.request.urlopen(req)
            raise AssertionError("expected 400")
        except urllib.error.HTTPError as exc:
            assert exc.code == 400
        # rejected write never touches the stored file
        assert labels_path.read_text() == before

    def test_no_temp_litter(self, label_server):
        base, labels_path = label_server
        for i in range(5):
            payload = [{"note_id": 0, "pitch_midi": 60, "direction": "down",
                        "ln_pressure": 4.0 + i / 10, "source": "manual"}]
            assert _put(base + "/api/labels", payload) == 204
        leftovers = list(labels_path.parent.glob("*.tmp"))
        assert leftovers == []

    def test_ui_served(self, label_server):
        base, _ = label_server
        with urllib.request.urlopen(base + "/") as resp:
            assert resp.status == 200
            assert resp.headers["Content-Type"].startswith("text/html")
            assert len(resp.read()) > 0
