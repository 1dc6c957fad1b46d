// Evaluation-group DAG, one column per wave. Groups in a wave are
// independent of each other; edges always point at a later column, so a
// straight left-to-right layout needs no cycle handling at all.

import type { GroupsPayload } from "./api.js";

export interface DagOptions {
  selected?: string | null;
  onSelectGroup?: (groupId: string) => void;
}

const SVGNS = "http://www.w3.org/2000/svg";
const COL_W = 180;
const ROW_H = 86;
const BOX_W = 128;
const BOX_H = 52;

function el<K extends keyof SVGElementTagNameMap>(tag: K, attrs: Record<string, string>): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVGNS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

export function renderGroupDag(
  container: HTMLElement,
  payload: GroupsPayload,
  opts: DagOptions = {},
): void {
  const pos = new Map<string, { x: number; y: number }>();
  let rows = 1;
  payload.waves.forEach((wave, col) => {
    wave.forEach((gid, row) => {
      pos.set(gid, { x: 30 + col * COL_W, y: 30 + row * ROW_H });
      rows = Math.max(rows, row + 1);
    });
  });

  const svg = el("svg", {
    class: "group-dag",
    width: String(30 + payload.waves.length * COL_W),
    height: String(30 + rows * ROW_H),
  });

  const defs = el("defs", {});
  const marker = el("marker", {
    id: "dag-arrowhead",
    markerWidth: "7",
    markerHeight: "7",
    refX: "6",
    refY: "3.5",
    orient: "auto",
    markerUnits: "userSpaceOnUse",
  });
  marker.appendChild(el("polygon", { points: "0 0, 7 3.5, 0 7", class: "arrow-head" }));
  defs.appendChild(marker);
  svg.appendChild(defs);

  for (const [src, dst] of payload.edges) {
    const p = pos.get(src);
    const q = pos.get(dst);
    if (!p || !q) continue;
    svg.appendChild(
      el("line", {
        x1: String(p.x + BOX_W),
        y1: String(p.y + BOX_H / 2),
        x2: String(q.x - 4),
        y2: String(q.y + BOX_H / 2),
        class: "dag-edge",
        "marker-end": "url(#dag-arrowhead)",
      }),
    );
  }

  const byId = new Map(payload.groups.map((g) => [g.id, g]));
  for (const [gid, p] of pos) {
    const info = byId.get(gid);
    const g = el("g", {
      class: gid === opts.selected ? "dag-group selected" : "dag-group",
      transform: `translate(${p.x}, ${p.y})`,
      "data-group": gid,
    });
    g.appendChild(el("rect", { width: String(BOX_W), height: String(BOX_H), rx: "6" }));
    const title = el("text", { x: String(BOX_W / 2), y: "20", "text-anchor": "middle", class: "group-id" });
    title.textContent = gid;
    g.appendChild(title);
    const meta = el("text", { x: String(BOX_W / 2), y: "38", "text-anchor": "middle", class: "group-meta" });
    if (info) {
      const out = info.outputs.length;
      meta.textContent = `${info.node} · ${out} output${out === 1 ? "" : "s"}`;
    }
    g.appendChild(meta);
    g.addEventListener("click", () => opts.onSelectGroup?.(gid));
    svg.appendChild(g);
  }

  container.replaceChildren(svg);
}
