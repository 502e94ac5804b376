import { describe, expect, it } from "vitest";

import type { ScatterPoint, ScatterView } from "../src/api.js";
import {
    makeLayout,
    pxToX,
    renderScatter,
    snapToPoint,
    xToPx,
} from "../src/scatter.js";

function makeView(n = 40): ScatterView {
    const points: ScatterPoint[] = [];
    for (let i = 0; i < n; i++) {
        points.push({
            hop: 100 + i,
            ln_pressure: 3.0 + (i / n) * 2.0,
            bend: -0.5 + (i / n) * 12.5,
            direction: i < n / 2 ? "up" : "down",
            discarded: i % 7 === 0,
        });
    }
    return {
        note_id: 3,
        base_pitch_midi: 65,
        points,
        auto: { up: 4.97, down: 4.65 },
    };
}

describe("renderScatter", () => {
    it("draws exactly the served point set", () => {
        const view = makeView();
        const rendered = renderScatter(view);
        expect(rendered.drawn.length).toBe(view.points.length);
        const served = view.points
            .map((p) => [p.ln_pressure, p.bend] as [number, number])
            .sort((a, b) => a[0] - b[0]);
        const drawn = [...rendered.drawn].sort((a, b) => a[0] - b[0]);
        expect(drawn).toEqual(served);
        const circles = (rendered.svg.match(/<circle /g) ?? []).length;
        expect(circles).toBe(view.points.length);
    });

    it("is deterministic", () => {
        const view = makeView();
        expect(renderScatter(view).svg).toBe(renderScatter(view).svg);
    });

    it("distinguishes sweep directions and discarded points", () => {
        const view = makeView();
        const { svg } = renderScatter(view);
        expect(svg).toContain("#0072b2"); // up sweep
        expect(svg).toContain("#d55e00"); // down sweep
        expect(svg).toContain("#555555"); // discarded
        expect(svg).toContain('opacity="0.45"'); // de-emphasized
    });

    it("draws one guide per label, none when absent", () => {
        const view = makeView();
        const withGuides = renderScatter(view, [
            { direction: "up", ln_pressure: 4.98, manual: true },
            { direction: "down", ln_pressure: 4.6, manual: false },
        ]);
        expect((withGuides.svg.match(/class="guide"/g) ?? []).length).toBe(2);
        const noGuides = renderScatter(view, []);
        expect(noGuides.svg).not.toContain('class="guide"');
    });

    it("round-trips pixel mapping", () => {
        const layout = makeLayout(makeView());
        for (const x of [3.1, 4.0, 4.9]) {
            expect(pxToX(layout, xToPx(layout, x))).toBeCloseTo(x, 9);
        }
    });
});

describe("snapToPoint", () => {
    const points = makeView().points;

    it("snaps to the nearest same-direction retained point", () => {
        const target = points.find((p) => p.direction === "up" && !p.discarded)!;
        const snapped = snapToPoint(points, target.ln_pressure + 0.01, "up", 0.05);
        expect(snapped).toBe(target.ln_pressure);
    });

    it("ignores the other sweep and discarded points", () => {
        const discarded = points.filter((p) => p.discarded);
        for (const p of discarded) {
            const snapped = snapToPoint([p], p.ln_pressure, p.direction, 0.5);
            expect(snapped).toBeNull();
        }
    });

    it("returns null outside the tolerance band", () => {
        expect(snapToPoint(points, 99.0, "up", 0.05)).toBeNull();
    });
});
