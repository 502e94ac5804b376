"""HTTP server hosting the threshold-labeling UI and its persistence API.

Serves the static labeler page at ``/`` and a small JSON API:

    GET  /api/notes              note list with ranges and base pitches
    GET  /api/note/{id}/scatter  per-hop points for one note
    GET  /api/labels             current labels (the labels file)
    PUT  /api/labels             replace the labels file (validated, atomic)

Label writes go through a temp-file rename so a killed server never leaves
a truncated labels file.  Reads are served concurrently; writes serialize
on a lock.  Single-user tool: last write wins.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path

from .features import DISCARD_NONE, FeatureTable
from .fit import ThresholdLabel, auto_label_thresholds, labels_from_json, labels_to_json
from .segment import JumpEvent, NoteSegment, Sweep


@dataclass
class LabelStore:
    """Labels file with atomic replacement semantics."""

    path: Path
    lock: threading.Lock

    def read(self) -> list[ThresholdLabel]:
        if not self.path.exists():
            return []
        return labels_from_json(self.path.read_text(encoding="utf-8"))

    def write(self, labels: list[ThresholdLabel]) -> None:
        with self.lock:
            fd, tmp = tempfile.mkstemp(dir=str(self.path.parent), suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(labels_to_json(labels))
                os.replace(tmp, self.path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


@dataclass
class SessionData:
    """Everything the API serves, loaded once at startup."""

    table: FeatureTable
    segments: list[NoteSegment]
    sweeps: list[Sweep]
    events: list[JumpEvent]
    store: LabelStore

    def notes_payload(self) -> list[dict]:
        return [
            {
                "id": seg.id,
                "base_pitch_midi": seg.base_pitch_midi,
                "repetition": seg.repetition,
                "start_hop": seg.start,
                "end_hop": seg.end,
            }
            for seg in self.segments
        ]

    def scatter_payload(self, note_id: int) -> dict | None:
        seg = next((s for s in self.segments if s.id == note_id), None)
        if seg is None:
            return None
        up = next(
            (s for s in self.sweeps if s.note_id == note_id and s.direction == "up"),
            None,
        )
        points = []
        for hop in range(seg.start, seg.end):
            if not self.table.voiced[hop]:
                continue
            pressure = self.table.pressure_pa[hop]
            if pressure <= 0:
                continue
            rising = up is not None and up.hop_range[0] <= hop < up.hop_range[1]
            points.append(
                {
                    "hop": int(hop),
                    "ln_pressure": math.log(float(pressure)),
                    "bend": float(self.table.pitch_midi[hop] - seg.base_pitch_midi),
                    "direction": "up" if rising else "down",
                    "discarded": bool(self.table.discard[hop] != DISCARD_NONE),
                }
            )
        auto = {
            lb.direction: lb.ln_pressure
            for lb in auto_label_thresholds(self.events, [seg], self.sweeps)
        }
        return {
            "note_id": seg.id,
            "base_pitch_midi": seg.base_pitch_midi,
            "points": points,
            "auto": {"up": auto.get("up"), "down": auto.get("down")},
        }


def _default_ui_html() -> bytes:
    ref = resources.files("flutekit").joinpath("ui/index.html")
    if ref.is_file():
        return ref.read_bytes()
    return (
        b"<!doctype html><meta charset='utf-8'><title>labeler</title>"
        b"<p>Labeler UI assets not built; the API under /api is live.</p>"
    )


class LabelRequestHandler(BaseHTTPRequestHandler):
    """Routes; the session data hangs off the server instance."""

    server_version = "flutekit-labeler"

    @property
    def data(self) -> SessionData:
        return self.server.session_data  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, payload, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status=status)

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        path = self.path.split("?", 1)[0]
        if path == "/" or path == "/index.html":
            body = self.server.ui_html  # type: ignore[attr-defined]
            self.send_response(200)
            self.send_header("Content-Type", "text/html; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        if path == "/api/notes":
            self._send_json(self.data.notes_payload())
            return
        if path.startswith("/api/note/") and path.endswith("/scatter"):
            mid = path[len("/api/note/") : -len("/scatter")]
            try:
                note_id = int(mid)
            except ValueError:
                self._send_error_json(400, "bad note id")
                return
            payload = self.data.scatter_payload(note_id)
            if payload is None:
                self._send_error_json(404, "unknown note")
                return
            self._send_json(payload)
            return
        if path == "/api/labels":
            self._send_json([
                {
                    "note_id": lb.note_id,
                    "pitch_midi": lb.pitch_midi,
                    "direction": lb.direction,
                    "ln_pressure": lb.ln_pressure,
                    "source": lb.source,
                }
                for lb in self.data.store.read()
            ])
            return
        self._send_error_json(404, "not found")

    def do_PUT(self) -> None:  # noqa: N802
        if self.path.split("?", 1)[0] != "/api/labels":
            self._send_error_json(404, "not found")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length).decode("utf-8")
            labels = labels_from_json(raw)
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_error_json(400, f"invalid labels: {exc}")
            return
        self.data.store.write(labels)
        self.send_response(204)
        self.send_header("Content-Length", "0")
        self.end_headers()


def make_server(
    data: SessionData,
    port: int,
    host: str = "127.0.0.1",
    ui_html: bytes | None = None,
) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), LabelRequestHandler)
    server.session_data = data  # type: ignore[attr-defined]
    server.ui_html = ui_html if ui_html is not None else _default_ui_html()  # type: ignore[attr-defined]
    return server


def build_session_data(
    table: FeatureTable,
    segments: list[NoteSegment],
    sweeps: list[Sweep],
    events: list[JumpEvent],
    labels_path: Path,
) -> SessionData:
    return SessionData(
        table=table,
        segments=segments,
        sweeps=sweeps,
        events=events,
        store=LabelStore(path=labels_path, lock=threading.Lock()),
    )
