// Pure scatter-plot geometry and SVG generation for one note's view.
// No DOM access: the app injects the SVG string; tests and the fidelity
// checker call these functions directly.

import type { ScatterPoint, ScatterView } from "./api.js";

export interface PlotLayout {
    width: number;
    height: number;
    margin: { left: number; right: number; top: number; bottom: number };
    xMin: number;
    xMax: number;
    yMin: number;
    yMax: number;
}

export interface RenderedScatter {
    svg: string;
    layout: PlotLayout;
    /** data coordinates (ln_pressure, bend) of every drawn point */
    drawn: Array<[number, number]>;
}

export const UP_COLOR = "#0072b2";
export const DOWN_COLOR = "#d55e00";
export const DISCARD_COLOR = "#555555";
const GUIDE_DASH = "5,4";

function pad(min: number, max: number, frac = 0.06): [number, number] {
    if (!(max > min)) {
        return [min - 1, max + 1];
    }
    const span = max - min;
    return [min - frac * span, max + frac * span];
}

export function makeLayout(view: ScatterView, width = 860, height = 560): PlotLayout {
    const xs = view.points.map((p) => p.ln_pressure);
    const ys = view.points.map((p) => p.bend);
    const guides = [view.auto.up, view.auto.down].filter(
        (v): v is number => v !== null,
    );
    const [xMin, xMax] = pad(
        Math.min(...xs, ...guides),
        Math.max(...xs, ...guides),
    );
    const [yMin, yMax] = pad(Math.min(...ys), Math.max(...ys));
    return {
        width,
        height,
        margin: { left: 58, right: 16, top: 18, bottom: 44 },
        xMin,
        xMax,
        yMin,
        yMax,
    };
}

export function xToPx(layout: PlotLayout, x: number): number {
    const inner = layout.width - layout.margin.left - layout.margin.right;
    return layout.margin.left + ((x - layout.xMin) / (layout.xMax - layout.xMin)) * inner;
}

export function pxToX(layout: PlotLayout, px: number): number {
    const inner = layout.width - layout.margin.left - layout.margin.right;
    return layout.xMin + ((px - layout.margin.left) / inner) * (layout.xMax - layout.xMin);
}

export function yToPx(layout: PlotLayout, y: number): number {
    const inner = layout.height - layout.margin.top - layout.margin.bottom;
    return layout.margin.top + inner - ((y - layout.yMin) / (layout.yMax - layout.yMin)) * inner;
}

function ticks(min: number, max: number, target = 6): number[] {
    const raw = (max - min) / target;
    const mag = Math.pow(10, Math.floor(Math.log10(raw)));
    let step = 10 * mag;
    for (const mult of [1, 2, 5]) {
        if (raw <= mult * mag) {
            step = mult * mag;
            break;
        }
    }
    const out: number[] = [];
    for (let t = Math.ceil(min / step) * step; t <= max + 1e-12; t += step) {
        out.push(Number(t.toFixed(12)));
    }
    return out;
}

function fmt(v: number): string {
    return v.toFixed(2);
}

export function pointColor(p: ScatterPoint): string {
    if (p.discarded) {
        return DISCARD_COLOR;
    }
    return p.direction === "up" ? UP_COLOR : DOWN_COLOR;
}

/** Vertical guide line for a stored or suggested threshold label. */
export interface Guide {
    direction: "up" | "down";
    ln_pressure: number;
    manual: boolean;
}

export function renderScatter(
    view: ScatterView,
    guides: Guide[] = [],
    width = 860,
    height = 560,
): RenderedScatter {
    const layout = makeLayout(view, width, height);
    const parts: string[] = [];
    const innerRight = width - layout.margin.right;
    const innerBottom = height - layout.margin.bottom;
    parts.push(
        `<rect width="${width}" height="${height}" fill="#ffffff"/>`,
        `<line x1="${layout.margin.left}" y1="${innerBottom}" x2="${innerRight}" y2="${innerBottom}" stroke="#000"/>`,
        `<line x1="${layout.margin.left}" y1="${layout.margin.top}" x2="${layout.margin.left}" y2="${innerBottom}" stroke="#000"/>`,
    );
    for (const t of ticks(layout.xMin, layout.xMax)) {
        const px = xToPx(layout, t);
        parts.push(
            `<line x1="${fmt(px)}" y1="${innerBottom}" x2="${fmt(px)}" y2="${innerBottom + 5}" stroke="#000"/>`,
            `<text x="${fmt(px)}" y="${innerBottom + 18}" font-size="11" text-anchor="middle">${t}</text>`,
        );
    }
    for (const t of ticks(layout.yMin, layout.yMax)) {
        const py = yToPx(layout, t);
        parts.push(
            `<line x1="${layout.margin.left - 5}" y1="${fmt(py)}" x2="${layout.margin.left}" y2="${fmt(py)}" stroke="#000"/>`,
            `<text x="${layout.margin.left - 8}" y="${fmt(py + 4)}" font-size="11" text-anchor="end">${t}</text>`,
        );
    }
    parts.push(
        `<text x="${(layout.margin.left + innerRight) / 2}" y="${height - 10}" font-size="12" text-anchor="middle">ln pressure (ln Pa)</text>`,
        `<text x="14" y="${layout.margin.top - 4}" font-size="12">bend (semitones)</text>`,
    );

    const drawn: Array<[number, number]> = [];
    for (const p of view.points) {
        const opacity = p.discarded ? 0.45 : 0.85;
        parts.push(
            `<circle cx="${fmt(xToPx(layout, p.ln_pressure))}" cy="${fmt(yToPx(layout, p.bend))}" ` +
                `r="2.4" fill="${pointColor(p)}" opacity="${opacity}"/>`,
        );
        drawn.push([p.ln_pressure, p.bend]);
    }

    for (const g of guides) {
        const px = xToPx(layout, g.ln_pressure);
        const color = g.direction === "up" ? UP_COLOR : DOWN_COLOR;
        const widthPx = g.manual ? 2.2 : 1.2;
        parts.push(
            `<line class="guide" data-direction="${g.direction}" x1="${fmt(px)}" ` +
                `y1="${layout.margin.top}" x2="${fmt(px)}" y2="${innerBottom}" ` +
                `stroke="${color}" stroke-width="${widthPx}" stroke-dasharray="${GUIDE_DASH}" ` +
                `style="cursor:ew-resize"/>`,
            `<text x="${fmt(px + 4)}" y="${layout.margin.top + 12}" font-size="10" fill="${color}">` +
                `${g.direction}${g.manual ? "" : " (auto)"} ${Math.exp(g.ln_pressure).toFixed(1)} Pa</text>`,
        );
    }

    const svg =
        `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
        `viewBox="0 0 ${width} ${height}">` +
        parts.join("") +
        `</svg>`;
    return { svg, layout, drawn };
}

/**
 * Snap a clicked ln-pressure to the nearest same-direction sweep point
 * within the tolerance; null when nothing is near enough.
 */
export function snapToPoint(
    points: ScatterPoint[],
    lnPressure: number,
    direction: "up" | "down",
    tolerance: number,
): number | null {
    let best: number | null = null;
    let bestDist = tolerance;
    for (const p of points) {
        if (p.direction !== direction || p.discarded) {
            continue;
        }
        const d = Math.abs(p.ln_pressure - lnPressure);
        if (d <= bestDist) {
            bestDist = d;
            best = p.ln_pressure;
        }
    }
    return best;
}
