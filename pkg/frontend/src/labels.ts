// Label-set edit semantics: at most one manual label per (note, direction),
// re-placing replaces, deleting restores the auto suggestion on next fit.

import type { Label } from "./api.js";

export function upsertManualLabel(labels: Label[], label: Label): Label[] {
    const kept = labels.filter(
        (l) => !(l.note_id === label.note_id && l.direction === label.direction),
    );
    kept.push({ ...label, source: "manual" });
    return kept;
}

export function removeLabel(
    labels: Label[],
    noteId: number,
    direction: "up" | "down",
): Label[] {
    return labels.filter(
        (l) => !(l.note_id === noteId && l.direction === direction),
    );
}

export function labelFor(
    labels: Label[],
    noteId: number,
    direction: "up" | "down",
): Label | undefined {
    return labels.find((l) => l.note_id === noteId && l.direction === direction);
}

export interface NoteProgress {
    up: boolean;
    down: boolean;
}

/** Per-note labeled/unlabeled state for the navigation list. */
export function progressByNote(
    noteIds: number[],
    labels: Label[],
): Map<number, NoteProgress> {
    const out = new Map<number, NoteProgress>();
    for (const id of noteIds) {
        out.set(id, {
            up: labels.some((l) => l.note_id === id && l.direction === "up"),
            down: labels.some((l) => l.note_id === id && l.direction === "down"),
        });
    }
    return out;
}
