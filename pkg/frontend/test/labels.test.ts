import { describe, expect, it } from "vitest";

import type { Label } from "../src/api.js";
import {
    labelFor,
    progressByNote,
    removeLabel,
    upsertManualLabel,
} from "../src/labels.js";

const up0: Label = {
    note_id: 0,
    pitch_midi: 60,
    direction: "up",
    ln_pressure: 4.98,
    source: "manual",
};

describe("upsertManualLabel", () => {
    it("adds a new label", () => {
        const out = upsertManualLabel([], up0);
        expect(out).toHaveLength(1);
        expect(out[0].source).toBe("manual");
    });

    it("re-placing the same direction replaces the value", () => {
        const out = upsertManualLabel([up0], { ...up0, ln_pressure: 5.1 });
        expect(out).toHaveLength(1);
        expect(out[0].ln_pressure).toBe(5.1);
    });

    it("other notes and directions are untouched", () => {
        const down3: Label = { ...up0, note_id: 3, direction: "down" };
        const out = upsertManualLabel([down3], up0);
        expect(out).toHaveLength(2);
        expect(labelFor(out, 3, "down")).toEqual(down3);
    });
});

describe("removeLabel", () => {
    it("removes only the targeted (note, direction)", () => {
        const down0: Label = { ...up0, direction: "down" };
        const out = removeLabel([up0, down0], 0, "up");
        expect(out).toEqual([down0]);
    });
});

describe("progressByNote", () => {
    it("tracks per-direction completion", () => {
        const labels = [up0, { ...up0, note_id: 1, direction: "down" as const }];
        const progress = progressByNote([0, 1, 2], labels);
        expect(progress.get(0)).toEqual({ up: true, down: false });
        expect(progress.get(1)).toEqual({ up: false, down: true });
        expect(progress.get(2)).toEqual({ up: false, down: false });
    });
});
