import { describe, expect, it } from "vitest";

import type { JoinTreePayload, SessionInfo } from "../src/api.js";
import { AppState } from "../src/state.js";
import { ViewsTab } from "../src/views_tab.js";
import { flush, stubClient, type Call } from "./helpers.js";

const TREE: JoinTreePayload = {
  nodes: [
    { name: "Sales", attributes: ["item", "units"], rows: 600 },
    { name: "Items", attributes: ["item", "class"], rows: 60 },
  ],
  edges: [{ a: "Sales", b: "Items", attrs: ["item"], views_ab: 1, views_ba: 1 }],
  roots: { Q1: "Sales" },
};

const TREE_AFTER: JoinTreePayload = {
  ...TREE,
  edges: [{ a: "Sales", b: "Items", attrs: ["item"], views_ab: 2, views_ba: 0 }],
  roots: { Q1: "Items" },
};

const VIEW_BEFORE = {
  id: "V[Items->Sales]",
  source: "Items",
  target: "Sales",
  keys: ["item"],
  slots: 1,
  consumers: ["G2"],
};

const VIEW_AFTER = {
  id: "V[Sales->Items]",
  source: "Sales",
  target: "Items",
  keys: ["item"],
  slots: 1,
  consumers: ["G1"],
};

const SESSION: SessionInfo = {
  schema: "favorita",
  app: "batch",
  threads: 1,
  queries: ["Q1"],
  jointree: TREE,
};

function router(call: Call) {
  if (call.method === "POST" && call.path === "/queries/Q1/root") {
    return {
      json: {
        query: "Q1",
        root: "Items",
        jointree: TREE_AFTER,
        views: [VIEW_AFTER],
        queries: [{ id: "Q1", root: "Items", group_by: [], aggregates: 1 }],
      },
    };
  }
  if (call.path === "/jointree") return { json: TREE };
  if (call.path.startsWith("/views")) {
    const qs = new URLSearchParams(call.path.split("?")[1] ?? "");
    const views = qs.get("node") || qs.get("direction") ? [VIEW_BEFORE] : [VIEW_BEFORE, VIEW_AFTER];
    return {
      json: {
        views,
        queries: qs.get("direction") ? [] : [{ id: "Q1", root: "Sales", group_by: [], aggregates: 1 }],
      },
    };
  }
  return undefined;
}

async function freshTab() {
  const { client, calls } = stubClient(router);
  const state = new AppState(client);
  state.session = SESSION;
  const root = document.createElement("div");
  document.body.replaceChildren(root);
  const tab = new ViewsTab(root, state);
  await tab.refresh();
  await flush();
  return { root, calls, state };
}

describe("view generation tab", () => {
  it("loads the tree and the unfiltered view list", async () => {
    const { root, calls } = await freshTab();
    expect(calls.map((c) => `${c.method} ${c.path}`)).toEqual(["GET /jointree", "GET /views"]);
    expect(root.querySelectorAll(".view-table tbody tr").length).toBe(2);
    expect(root.textContent).toContain("V[Items->Sales]");
    const select = root.querySelector<HTMLSelectElement>(".query-row select")!;
    expect(select.value).toBe("Sales");
  });

  it("filters the list when a relation is clicked, and clears on the second click", async () => {
    const { root, calls } = await freshTab();
    const node = root.querySelector('g[data-node="Items"]')!;
    node.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await flush();
    const filtered = calls[calls.length - 1];
    expect(filtered.path).toContain("/views?");
    expect(new URLSearchParams(filtered.path.split("?")[1]).get("node")).toBe("Items");
    expect(root.querySelectorAll(".view-table tbody tr").length).toBe(1);
    expect(root.querySelector(".filter-note")!.textContent).toContain("Items");

    root.querySelector('g[data-node="Items"]')!.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await flush();
    expect(calls[calls.length - 1].path).toBe("/views");
    expect(root.querySelectorAll(".view-table tbody tr").length).toBe(2);
  });

  it("filters by direction when an arrow is clicked", async () => {
    const { root, calls } = await freshTab();
    const arrow = root.querySelector('line[data-direction="Items->Sales"]')!;
    arrow.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await flush();
    const last = calls[calls.length - 1];
    expect(new URLSearchParams(last.path.split("?")[1]).get("direction")).toBe("Items->Sales");
    expect(root.querySelector(".filter-note")!.textContent).toContain("Items → Sales");
  });

  it("reassigns a root through the drop-down and redraws from the response alone", async () => {
    const { root, calls } = await freshTab();
    const before = calls.length;
    const select = root.querySelector<HTMLSelectElement>(".query-row select")!;
    select.value = "Items";
    select.dispatchEvent(new Event("change", { bubbles: true }));
    await flush();

    const after = calls.slice(before);
    expect(after.map((c) => `${c.method} ${c.path}`)).toEqual(["POST /queries/Q1/root"]);
    expect(after[0].body).toEqual({ node: "Items" });

    // list, tree, and drop-down all come from the reassign response
    expect(root.textContent).toContain("V[Sales->Items]");
    expect(root.textContent).not.toContain("V[Items->Sales]");
    const fresh = root.querySelector<HTMLSelectElement>(".query-row select")!;
    expect(fresh.value).toBe("Items");
    expect(root.querySelector('line[data-direction="Sales->Items"]')).not.toBeNull();
    expect(root.querySelector('line[data-direction="Items->Sales"]')).toBeNull();
  });
});
