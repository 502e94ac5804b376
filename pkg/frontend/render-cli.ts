// Headless fidelity checker: reads a scatter payload (the exact JSON the
// server returns for /api/note/{id}/scatter) from stdin, renders it with
// the UI's own renderer, and reports the drawn point set as JSON.

import { renderScatter } from "./src/scatter.js";
import type { ScatterView } from "./src/api.js";

let input = "";
process.stdin.setEncoding("utf-8");
process.stdin.on("data", (chunk) => {
    input += chunk;
});
process.stdin.on("end", () => {
    const view = JSON.parse(input) as ScatterView;
    const rendered = renderScatter(view);
    const circles = (rendered.svg.match(/<circle /g) ?? []).length;
    process.stdout.write(
        JSON.stringify({
            count: rendered.drawn.length,
            circles,
            points: rendered.drawn,
        }) + "\n",
    );
});
