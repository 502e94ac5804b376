// Typed client for the label server's JSON API.

export interface NoteInfo {
    id: number;
    base_pitch_midi: number;
    repetition: number;
    start_hop: number;
    end_hop: number;
}

export interface ScatterPoint {
    hop: number;
    ln_pressure: number;
    bend: number;
    direction: "up" | "down";
    discarded: boolean;
}

export interface ScatterView {
    note_id: number;
    base_pitch_midi: number;
    points: ScatterPoint[];
    auto: { up: number | null; down: number | null };
}

export interface Label {
    note_id: number;
    pitch_midi: number;
    direction: "up" | "down";
    ln_pressure: number;
    source: "auto" | "manual";
}

async function getJson<T>(url: string): Promise<T> {
    const resp = await fetch(url);
    if (!resp.ok) {
        throw new Error(`GET ${url} -> ${resp.status}`);
    }
    return resp.json() as Promise<T>;
}

export function fetchNotes(): Promise<NoteInfo[]> {
    return getJson<NoteInfo[]>("/api/notes");
}

export function fetchScatter(noteId: number): Promise<ScatterView> {
    return getJson<ScatterView>(`/api/note/${noteId}/scatter`);
}

export function fetchLabels(): Promise<Label[]> {
    return getJson<Label[]>("/api/labels");
}

export async function putLabels(labels: Label[]): Promise<void> {
    const resp = await fetch("/api/labels", {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(labels),
    });
    if (!resp.ok) {
        throw new Error(`PUT /api/labels -> ${resp.status}`);
    }
}
