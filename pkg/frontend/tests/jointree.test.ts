import { describe, expect, it } from "vitest";

import type { GroupsPayload, JoinTreePayload } from "../src/api.js";
import { renderGroupDag } from "../src/dag.js";
import { arrowWidth, renderJoinTree } from "../src/jointree.js";

const TREE: JoinTreePayload = {
  nodes: [
    { name: "Sales", attributes: ["item", "store", "units"], rows: 600 },
    { name: "Items", attributes: ["item", "class"], rows: 60 },
    { name: "Stores", attributes: ["store", "city"], rows: 8 },
  ],
  edges: [
    { a: "Sales", b: "Items", attrs: ["item"], views_ab: 1, views_ba: 4 },
    { a: "Sales", b: "Stores", attrs: ["store"], views_ab: 2, views_ba: 0 },
  ],
  roots: { Q1: "Sales", Q2: "Items" },
};

describe("join tree rendering", () => {
  it("renders the same payload to the same markup every time", () => {
    const a = document.createElement("div");
    const b = document.createElement("div");
    renderJoinTree(a, TREE, {});
    renderJoinTree(b, structuredClone(TREE), {});
    expect(a.innerHTML).toBe(b.innerHTML);
  });

  it("draws wider arrows for directions with more views", () => {
    for (let n = 0; n < 20; n++) {
      expect(arrowWidth(n + 1)).toBeGreaterThan(arrowWidth(n));
    }
    const box = document.createElement("div");
    renderJoinTree(box, TREE, {});
    const width = (dir: string) =>
      Number(box.querySelector(`line[data-direction="${dir}"]`)!.getAttribute("stroke-width"));
    expect(width("Items->Sales")).toBeGreaterThan(width("Sales->Items"));
    expect(width("Sales->Stores")).toBeGreaterThan(0);
    // a direction with no views gets no arrow at all
    expect(box.querySelector('line[data-direction="Stores->Sales"]')).toBeNull();
  });

  it("reports clicks on nodes and directed arrows", () => {
    const box = document.createElement("div");
    const picked: unknown[] = [];
    renderJoinTree(box, TREE, {
      onSelectNode: (name) => picked.push(name),
      onSelectArrow: (arrow) => picked.push(arrow),
    });
    (box.querySelector('g[data-node="Items"]') as SVGGElement).dispatchEvent(
      new MouseEvent("click", { bubbles: true }),
    );
    (box.querySelector('line[data-direction="Items->Sales"]') as SVGLineElement).dispatchEvent(
      new MouseEvent("click", { bubbles: true }),
    );
    expect(picked).toEqual(["Items", { source: "Items", target: "Sales" }]);
  });

  it("lays the group dag out by wave, deterministically", () => {
    const payload: GroupsPayload = {
      groups: [
        { id: "G1", node: "Items", outputs: ["V1"], incoming: [], wave: 0 },
        { id: "G2", node: "Stores", outputs: ["V2"], incoming: [], wave: 0 },
        { id: "G3", node: "Sales", outputs: ["Q1"], incoming: ["V1", "V2"], wave: 1 },
      ],
      edges: [
        ["G1", "G3"],
        ["G2", "G3"],
      ],
      waves: [["G1", "G2"], ["G3"]],
    };
    const a = document.createElement("div");
    const b = document.createElement("div");
    renderGroupDag(a, payload, {});
    renderGroupDag(b, structuredClone(payload), {});
    expect(a.innerHTML).toBe(b.innerHTML);
    expect(a.querySelectorAll(".dag-group").length).toBe(3);
    expect(a.querySelectorAll(".dag-edge").length).toBe(2);
    const g1 = a.querySelector('g[data-group="G1"]')!.getAttribute("transform")!;
    const g3 = a.querySelector('g[data-group="G3"]')!.getAttribute("transform")!;
    const x = (t: string) => Number(t.match(/translate\((\d+(?:\.\d+)?),/)![1]);
    expect(x(g3)).toBeGreaterThan(x(g1));
  });
});
