// SVG join tree with per-direction view arrows. The layout is a plain
// layered tree walk, no physics: the same payload always lands on the
// same pixels.

import type { JoinTreePayload, TreeEdge } from "./api.js";

export interface ArrowRef {
  source: string;
  target: string;
}

export type TreeSelection =
  | { kind: "node"; name: string }
  | { kind: "arrow"; source: string; target: string }
  | null;

export interface JoinTreeOptions {
  selection?: TreeSelection;
  onSelectNode?: (name: string) => void;
  onSelectArrow?: (arrow: ArrowRef) => void;
  /** Root drop-downs are the views tab's business; the input tab omits them. */
  showViewCounts?: boolean;
}

const SVGNS = "http://www.w3.org/2000/svg";
const LEVEL_X = 190;
const SLOT_Y = 92;
const NODE_W = 130;
const NODE_H = 44;

/** Stroke width for a direction carrying `count` views. Strictly increasing
 * in the count, which is all the visual encoding promises. */
export function arrowWidth(count: number): number {
  return 1.5 + 2.5 * Math.sqrt(count);
}

interface Placed {
  x: number;
  y: number;
}

/** Deterministic positions: anchor at the highest-degree node (name as the
 * tie-break), breadth-first levels left to right, siblings in name order. */
export function layoutTree(payload: JoinTreePayload): Map<string, Placed> {
  const degree = new Map<string, number>();
  for (const n of payload.nodes) degree.set(n.name, 0);
  for (const e of payload.edges) {
    degree.set(e.a, (degree.get(e.a) ?? 0) + 1);
    degree.set(e.b, (degree.get(e.b) ?? 0) + 1);
  }
  const anchor = [...payload.nodes]
    .map((n) => n.name)
    .sort((a, b) => (degree.get(b)! - degree.get(a)!) || a.localeCompare(b))[0];

  const neighbors = new Map<string, string[]>();
  for (const e of payload.edges) {
    (neighbors.get(e.a) ?? neighbors.set(e.a, []).get(e.a)!).push(e.b);
    (neighbors.get(e.b) ?? neighbors.set(e.b, []).get(e.b)!).push(e.a);
  }

  const level = new Map<string, number>([[anchor, 0]]);
  const order: string[] = [anchor];
  for (let i = 0; i < order.length; i++) {
    const here = order[i];
    for (const next of [...(neighbors.get(here) ?? [])].sort()) {
      if (!level.has(next)) {
        level.set(next, level.get(here)! + 1);
        order.push(next);
      }
    }
  }

  const slots = new Map<number, number>();
  const placed = new Map<string, Placed>();
  for (const name of order) {
    const lv = level.get(name)!;
    const slot = slots.get(lv) ?? 0;
    slots.set(lv, slot + 1);
    placed.set(name, { x: 40 + lv * LEVEL_X, y: 40 + slot * SLOT_Y });
  }
  // nodes disconnected from the anchor should never happen in a join tree,
  // but render them rather than losing them
  for (const n of payload.nodes) {
    if (!placed.has(n.name)) {
      const slot = slots.get(0) ?? 0;
      slots.set(0, slot + 1);
      placed.set(n.name, { x: 40, y: 40 + slot * SLOT_Y });
    }
  }
  return placed;
}

function el<K extends keyof SVGElementTagNameMap>(tag: K, attrs: Record<string, string>): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVGNS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function arrowFor(edge: TreeEdge, forward: boolean): ArrowRef {
  return forward ? { source: edge.a, target: edge.b } : { source: edge.b, target: edge.a };
}

export function renderJoinTree(
  container: HTMLElement,
  payload: JoinTreePayload,
  opts: JoinTreeOptions = {},
): void {
  const placed = layoutTree(payload);
  let maxX = 0;
  let maxY = 0;
  for (const p of placed.values()) {
    maxX = Math.max(maxX, p.x);
    maxY = Math.max(maxY, p.y);
  }

  const svg = el("svg", {
    class: "jointree",
    width: String(maxX + NODE_W + 44),
    height: String(maxY + NODE_H + 40),
  });

  const defs = el("defs", {});
  const marker = el("marker", {
    id: "arrowhead",
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

  const center = (name: string) => {
    const p = placed.get(name)!;
    return { cx: p.x + NODE_W / 2, cy: p.y + NODE_H / 2 };
  };

  for (const edge of payload.edges) {
    const a = center(edge.a);
    const b = center(edge.b);
    // a shared faint line for the tree edge itself, labeled with join attrs
    svg.appendChild(
      el("line", {
        x1: String(a.cx), y1: String(a.cy), x2: String(b.cx), y2: String(b.cy),
        class: "tree-edge",
      }),
    );
    const label = el("text", {
      x: String((a.cx + b.cx) / 2),
      y: String((a.cy + b.cy) / 2 - 8),
      class: "edge-label",
      "text-anchor": "middle",
    });
    label.textContent = edge.attrs.join(", ");
    svg.appendChild(label);

    if (opts.showViewCounts === false) continue;

    // one directed arrow per direction that actually carries views,
    // offset sideways so the two never overlap
    const dx = b.cx - a.cx;
    const dy = b.cy - a.cy;
    const len = Math.hypot(dx, dy) || 1;
    const ox = (-dy / len) * 10;
    const oy = (dx / len) * 10;
    const trim = 0.24; // keep arrow ends clear of the node boxes

    const directions: Array<[number, boolean]> = [
      [edge.views_ab, true],
      [edge.views_ba, false],
    ];
    for (const [count, forward] of directions) {
      if (count === 0) continue;
      const from = forward ? a : b;
      const to = forward ? b : a;
      const fdx = to.cx - from.cx;
      const fdy = to.cy - from.cy;
      const sgn = forward ? 1 : -1;
      const arrow = arrowFor(edge, forward);
      const sel = opts.selection;
      const selected =
        sel?.kind === "arrow" && sel.source === arrow.source && sel.target === arrow.target;
      const line = el("line", {
        x1: String(from.cx + fdx * trim + sgn * ox),
        y1: String(from.cy + fdy * trim + sgn * oy),
        x2: String(to.cx - fdx * trim + sgn * ox),
        y2: String(to.cy - fdy * trim + sgn * oy),
        class: selected ? "view-arrow selected" : "view-arrow",
        "stroke-width": String(arrowWidth(count)),
        "marker-end": "url(#arrowhead)",
        "data-direction": `${arrow.source}->${arrow.target}`,
      });
      line.addEventListener("click", () => opts.onSelectArrow?.(arrow));
      const title = el("title", {});
      title.textContent = `${count} view${count === 1 ? "" : "s"} ${arrow.source} -> ${arrow.target}`;
      line.appendChild(title);
      svg.appendChild(line);
    }
  }

  const rootedHere = new Map<string, string[]>();
  for (const [qid, node] of Object.entries(payload.roots)) {
    (rootedHere.get(node) ?? rootedHere.set(node, []).get(node)!).push(qid);
  }

  for (const node of payload.nodes) {
    const p = placed.get(node.name)!;
    const sel = opts.selection;
    const selected = sel?.kind === "node" && sel.name === node.name;
    const g = el("g", {
      class: selected ? "tree-node selected" : "tree-node",
      transform: `translate(${p.x}, ${p.y})`,
      "data-node": node.name,
    });
    g.appendChild(el("rect", { width: String(NODE_W), height: String(NODE_H), rx: "6" }));
    const name = el("text", { x: String(NODE_W / 2), y: "18", "text-anchor": "middle", class: "node-name" });
    name.textContent = node.name;
    g.appendChild(name);
    const meta = el("text", { x: String(NODE_W / 2), y: "34", "text-anchor": "middle", class: "node-meta" });
    const roots = rootedHere.get(node.name) ?? [];
    meta.textContent = `${node.rows} rows` + (roots.length ? ` · ${roots.join(" ")}` : "");
    g.appendChild(meta);
    g.addEventListener("click", () => opts.onSelectNode?.(node.name));
    svg.appendChild(g);
  }

  container.replaceChildren(svg);
}
