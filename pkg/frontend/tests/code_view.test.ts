import { describe, expect, it } from "vitest";

import type { CodePayload } from "../src/api.js";
import { CodeView } from "../src/code_view.js";

const PAYLOAD: CodePayload = {
  group: "G6",
  node: "Sales",
  order: ["item", "date", "store"],
  registers: { local: 2, running: 3 },
  lines: [
    { kind: "join-iteration", text: "foreach item ∈ π_item(Sales ⋈ V1)" },
    { kind: "view-lookup", text: "    α1 = V1[item]" },
    { kind: "running-sum", text: "    β1 = 0" },
    { kind: "join-iteration", text: "    foreach date ∈ π_date(σ(Sales))" },
    { kind: "running-sum", text: "        β1 += α1" },
    { kind: "output-write", text: "Q1[()] += β1" },
  ],
};

function kinds(root: HTMLElement, selector: string): string[] {
  return [...root.querySelectorAll<HTMLElement>(selector)].map((el) => el.dataset.kind!);
}

describe("code view", () => {
  it("shows a placeholder until a group is chosen", () => {
    const root = document.createElement("div");
    new CodeView(root);
    expect(root.querySelector(".placeholder")).not.toBeNull();
    expect(root.querySelector("pre")).toBeNull();
  });

  it("renders every line with its fragment kind and no highlight", () => {
    const root = document.createElement("div");
    const view = new CodeView(root);
    view.render(PAYLOAD);
    expect(kinds(root, ".code-line")).toEqual(PAYLOAD.lines.map((l) => l.kind));
    expect(root.querySelectorAll(".code-line.hl").length).toBe(0);
    expect(root.textContent).toContain("2 local, 3 running");
  });

  it("toggling one kind highlights exactly those lines", () => {
    const root = document.createElement("div");
    const view = new CodeView(root);
    view.render(PAYLOAD);
    const btn = root.querySelector<HTMLButtonElement>('button[data-kind="running-sum"]')!;
    btn.click();
    expect(kinds(root, ".code-line.hl")).toEqual(["running-sum", "running-sum"]);
    expect(btn.classList.contains("on")).toBe(true);
    btn.click();
    expect(root.querySelectorAll(".code-line.hl").length).toBe(0);
  });

  it("the all button flips every kind at once", () => {
    const root = document.createElement("div");
    const view = new CodeView(root);
    view.render(PAYLOAD);
    const all = root.querySelector<HTMLButtonElement>('button[data-kind="all"]')!;
    all.click();
    expect(root.querySelectorAll(".code-line.hl").length).toBe(PAYLOAD.lines.length);
    all.click();
    expect(root.querySelectorAll(".code-line.hl").length).toBe(0);
  });

  it("mixes single toggles with the all button sensibly", () => {
    const root = document.createElement("div");
    const view = new CodeView(root);
    view.render(PAYLOAD);
    root.querySelector<HTMLButtonElement>('button[data-kind="view-lookup"]')!.click();
    const all = root.querySelector<HTMLButtonElement>('button[data-kind="all"]')!;
    all.click(); // partial selection -> everything on
    expect(root.querySelectorAll(".code-line.hl").length).toBe(PAYLOAD.lines.length);
  });
});
