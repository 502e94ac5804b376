// Labeler single-page app: browse notes, inspect each bend-vs-pressure
// scatter, click to place octave-threshold labels, drag guides to adjust.
// Labels persist through PUT /api/labels with optimistic UI and rollback.

import {
    fetchLabels,
    fetchNotes,
    fetchScatter,
    putLabels,
    type Label,
    type NoteInfo,
    type ScatterView,
} from "./api.js";
import { labelFor, progressByNote, removeLabel, upsertManualLabel } from "./labels.js";
import {
    makeLayout,
    pxToX,
    renderScatter,
    snapToPoint,
    xToPx,
    type Guide,
} from "./scatter.js";

const SNAP_TOLERANCE_PX = 14;

interface AppState {
    notes: NoteInfo[];
    labels: Label[];
    current: number; // index into notes
    scatter: ScatterView | null;
    direction: "up" | "down";
    status: string;
}

const state: AppState = {
    notes: [],
    labels: [],
    current: 0,
    scatter: null,
    direction: "up",
    status: "loading…",
};

function $(id: string): HTMLElement {
    const el = document.getElementById(id);
    if (!el) {
        throw new Error(`missing element #${id}`);
    }
    return el;
}

function currentNote(): NoteInfo | null {
    return state.notes[state.current] ?? null;
}

function guidesFor(view: ScatterView): Guide[] {
    const guides: Guide[] = [];
    for (const direction of ["up", "down"] as const) {
        const manual = labelFor(state.labels, view.note_id, direction);
        if (manual) {
            guides.push({ direction, ln_pressure: manual.ln_pressure, manual: true });
        } else if (view.auto[direction] !== null) {
            guides.push({ direction, ln_pressure: view.auto[direction]!, manual: false });
        }
    }
    return guides;
}

async function persist(next: Label[], undo: Label[], action: string): Promise<void> {
    state.labels = next;
    renderAll();
    try {
        await putLabels(next);
        state.status = action;
    } catch (err) {
        state.labels = undo; // roll back on server rejection
        state.status = `server rejected ${action}: ${err}`;
    }
    renderAll();
}

function placeLabel(lnPressure: number, snap: boolean): void {
    const note = currentNote();
    const view = state.scatter;
    if (!note || !view) {
        return;
    }
    let value = lnPressure;
    if (snap) {
        const layout = makeLayout(view);
        const tolerance =
            Math.abs(pxToX(layout, SNAP_TOLERANCE_PX + layout.margin.left) - layout.xMin);
        const snapped = snapToPoint(view.points, lnPressure, state.direction, tolerance);
        if (snapped !== null) {
            value = snapped;
        }
    }
    const label: Label = {
        note_id: note.id,
        pitch_midi: note.base_pitch_midi,
        direction: state.direction,
        ln_pressure: value,
        source: "manual",
    };
    const undo = state.labels;
    void persist(
        upsertManualLabel(state.labels, label),
        undo,
        `${state.direction} label at ${Math.exp(value).toFixed(1)} Pa`,
    );
}

function deleteCurrentLabel(): void {
    const note = currentNote();
    if (!note) {
        return;
    }
    const undo = state.labels;
    void persist(
        removeLabel(state.labels, note.id, state.direction),
        undo,
        `removed ${state.direction} label (auto suggestion returns on next fit)`,
    );
}

function renderNoteList(): void {
    const list = $("notes");
    const progress = progressByNote(state.notes.map((n) => n.id), state.labels);
    list.innerHTML = state.notes
        .map((n, i) => {
            const p = progress.get(n.id)!;
            const marks = `${p.up ? "▲" : "△"}${p.down ? "▼" : "▽"}`;
            const cls = i === state.current ? "note current" : "note";
            return (
                `<div class="${cls}" data-index="${i}">` +
                `#${n.id} pitch ${n.base_pitch_midi} rep ${n.repetition} ` +
                `<span class="marks">${marks}</span></div>`
            );
        })
        .join("");
    const done = [...progress.values()].filter((p) => p.up && p.down).length;
    $("progress").textContent = `${done}/${state.notes.length} notes fully labeled`;
}

function renderPlot(): void {
    const host = $("plot");
    if (!state.scatter) {
        host.innerHTML = "<p>no note selected</p>";
        return;
    }
    host.innerHTML = renderScatter(state.scatter, guidesFor(state.scatter)).svg;
}

function renderAll(): void {
    renderNoteList();
    renderPlot();
    $("status").textContent = state.status;
    ($("dir-up") as HTMLInputElement).checked = state.direction === "up";
    ($("dir-down") as HTMLInputElement).checked = state.direction === "down";
}

async function selectNote(index: number): Promise<void> {
    if (index < 0 || index >= state.notes.length) {
        return;
    }
    state.current = index;
    const note = state.notes[index];
    state.status = `loading note ${note.id}…`;
    renderAll();
    try {
        state.scatter = await fetchScatter(note.id);
        state.status = `note ${note.id}: pitch ${note.base_pitch_midi}, ` +
            `${state.scatter.points.length} points`;
    } catch (err) {
        state.scatter = null;
        state.status = `failed to load note ${note.id}: ${err}`;
    }
    renderAll();
}

function wireEvents(): void {
    $("notes").addEventListener("click", (ev) => {
        const target = (ev.target as HTMLElement).closest(".note") as HTMLElement | null;
        if (target?.dataset.index) {
            void selectNote(Number(target.dataset.index));
        }
    });

    const plot = $("plot");
    let dragging: "up" | "down" | null = null;

    function eventLnPressure(ev: MouseEvent): number | null {
        const svg = plot.querySelector("svg");
        if (!svg || !state.scatter) {
            return null;
        }
        const rect = svg.getBoundingClientRect();
        const layout = makeLayout(state.scatter);
        const px = ((ev.clientX - rect.left) / rect.width) * layout.width;
        return pxToX(layout, px);
    }

    plot.addEventListener("mousedown", (ev) => {
        const guide = (ev.target as Element).closest?.(".guide");
        if (guide) {
            dragging = guide.getAttribute("data-direction") as "up" | "down";
            ev.preventDefault();
        }
    });
    plot.addEventListener("mousemove", (ev) => {
        if (!dragging || !state.scatter) {
            return;
        }
        const x = eventLnPressure(ev);
        if (x === null) {
            return;
        }
        const note = currentNote()!;
        state.labels = upsertManualLabel(state.labels, {
            note_id: note.id,
            pitch_midi: note.base_pitch_midi,
            direction: dragging,
            ln_pressure: x,
            source: "manual",
        });
        renderPlot();
    });
    plot.addEventListener("mouseup", (ev) => {
        if (dragging) {
            const direction = dragging;
            dragging = null;
            state.direction = direction;
            const x = eventLnPressure(ev);
            if (x !== null) {
                placeLabel(x, false);
            }
            return;
        }
        const x = eventLnPressure(ev);
        if (x !== null) {
            // plain click snaps to the nearest sweep point; Alt places freely
            placeLabel(x, !ev.altKey);
        }
    });

    $("dir-up").addEventListener("change", () => {
        state.direction = "up";
        renderAll();
    });
    $("dir-down").addEventListener("change", () => {
        state.direction = "down";
        renderAll();
    });
    $("delete").addEventListener("click", deleteCurrentLabel);

    document.addEventListener("keydown", (ev) => {
        if (ev.key === "ArrowRight" || ev.key === "n") {
            void selectNote(state.current + 1);
        } else if (ev.key === "ArrowLeft" || ev.key === "p") {
            void selectNote(state.current - 1);
        } else if (ev.key === "u") {
            state.direction = "up";
            renderAll();
        } else if (ev.key === "d") {
            state.direction = "down";
            renderAll();
        } else if (ev.key === "Delete" || ev.key === "Backspace") {
            deleteCurrentLabel();
        }
    });
}

async function start(): Promise<void> {
    wireEvents();
    try {
        [state.notes, state.labels] = await Promise.all([fetchNotes(), fetchLabels()]);
        state.status = `${state.notes.length} notes`;
        renderAll();
        if (state.notes.length > 0) {
            await selectNote(0);
        }
    } catch (err) {
        state.status = `failed to load session: ${err}`;
        renderAll();
    }
}

void start();
