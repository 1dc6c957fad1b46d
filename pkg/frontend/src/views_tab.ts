// View Generation tab. The join tree carries one arrow per direction with
// views behind it, width growing with the count; clicking a relation or an
// arrow narrows the list below to the views it contributes. Each query has
// a root drop-down that reassigns it on the server and refreshes both the
// tree and the list from the response.

import type { JoinTreePayload, QueryInfo, ViewInfo, ViewsPayload } from "./api.js";
import { renderJoinTree, TreeSelection } from "./jointree.js";
import { AppState, clearBanner, errorBanner } from "./state.js";

export class ViewsTab {
  private readonly banner: HTMLElement;
  private readonly treeBox: HTMLElement;
  private readonly filterNote: HTMLElement;
  private readonly queryBox: HTMLElement;
  private readonly listBox: HTMLElement;

  private tree: JoinTreePayload | null = null;
  private queries: QueryInfo[] = [];
  private selection: TreeSelection = null;

  constructor(private readonly root: HTMLElement, private readonly state: AppState) {
    this.banner = document.createElement("div");
    this.treeBox = document.createElement("div");
    this.treeBox.className = "tree-box";
    this.filterNote = document.createElement("div");
    this.filterNote.className = "filter-note";
    this.queryBox = document.createElement("div");
    this.queryBox.className = "query-roots";
    this.listBox = document.createElement("div");
    this.root.append(this.banner, this.treeBox, this.filterNote, this.queryBox, this.listBox);
  }

  async refresh(): Promise<void> {
    if (!this.state.session) {
      this.listBox.replaceChildren(placeholder());
      return;
    }
    clearBanner(this.banner);
    try {
      const [tree, all] = await Promise.all([this.state.client.jointree(), this.state.client.views()]);
      this.tree = tree;
      this.queries = all.queries;
      this.selection = null;
      this.renderTree();
      this.renderQueries();
      this.renderViews(all.views);
    } catch (err) {
      errorBanner(this.banner, err);
    }
  }

  private renderTree(): void {
    if (!this.tree) return;
    renderJoinTree(this.treeBox, this.tree, {
      selection: this.selection,
      onSelectNode: (name) => void this.applyFilter({ kind: "node", name }),
      onSelectArrow: (a) => void this.applyFilter({ kind: "arrow", source: a.source, target: a.target }),
    });
  }

  private async applyFilter(sel: TreeSelection): Promise<void> {
    // clicking the selected thing again clears the filter
    const same =
      sel !== null &&
      this.selection !== null &&
      sel.kind === this.selection.kind &&
      JSON.stringify(sel) === JSON.stringify(this.selection);
    this.selection = same ? null : sel;
    clearBanner(this.banner);
    try {
      let payload: ViewsPayload;
      if (this.selection === null) {
        payload = await this.state.client.views();
      } else if (this.selection.kind === "node") {
        payload = await this.state.client.views({ node: this.selection.name });
      } else {
        payload = await this.state.client.views({
          direction: `${this.selection.source}->${this.selection.target}`,
        });
      }
      this.renderTree();
      this.renderViews(payload.views);
    } catch (err) {
      errorBanner(this.banner, err);
    }
  }

  private renderQueries(): void {
    if (!this.tree) return;
    const nodes = this.tree.nodes.map((n) => n.name);
    const frag = document.createDocumentFragment();
    const title = document.createElement("h3");
    title.textContent = "Query roots";
    frag.appendChild(title);
    for (const q of this.queries) {
      const row = document.createElement("div");
      row.className = "query-row";
      const label = document.createElement("span");
      const by = q.group_by.length ? `by ${q.group_by.join(", ")}` : "scalar";
      label.textContent = `${q.id} (${by}, ${q.aggregates} aggregate${q.aggregates === 1 ? "" : "s"})`;
      const select = document.createElement("select");
      for (const name of nodes) {
        const opt = document.createElement("option");
        opt.value = name;
        opt.textContent = name;
        opt.selected = name === q.root;
        select.appendChild(opt);
      }
      select.addEventListener("change", () => void this.reassign(q.id, select.value));
      row.append(label, select);
      frag.appendChild(row);
    }
    this.queryBox.replaceChildren(frag);
  }

  private async reassign(queryId: string, node: string): Promise<void> {
    await this.state.mutate(async () => {
      clearBanner(this.banner);
      try {
        const resp = await this.state.client.reassignRoot(queryId, node);
        this.tree = resp.jointree;
        this.queries = resp.queries;
        this.selection = null; // directions may have flipped under the filter
        this.renderTree();
        this.renderQueries();
        this.renderViews(resp.views);
      } catch (err) {
        errorBanner(this.banner, err);
        this.renderQueries(); // snap the drop-down back to the real root
      }
    });
  }

  private renderViews(views: ViewInfo[]): void {
    if (this.selection === null) {
      this.filterNote.textContent = `${views.length} views, full batch`;
    } else if (this.selection.kind === "node") {
      this.filterNote.textContent = `${views.length} views generated at ${this.selection.name} (click it again to clear)`;
    } else {
      this.filterNote.textContent =
        `${views.length} views ${this.selection.source} → ${this.selection.target} (click the arrow again to clear)`;
    }

    const table = document.createElement("table");
    table.className = "view-table";
    const head = table.createTHead().insertRow();
    for (const h of ["view", "direction", "keys", "slots", "consumers"]) {
      const th = document.createElement("th");
      th.textContent = h;
      head.appendChild(th);
    }
    const body = table.createTBody();
    for (const v of views) {
      const row = body.insertRow();
      row.insertCell().textContent = v.id;
      row.insertCell().textContent = `${v.source} → ${v.target}`;
      row.insertCell().textContent = v.keys.join(", ") || "()";
      row.insertCell().textContent = String(v.slots);
      row.insertCell().textContent = v.consumers.join(", ");
    }
    this.listBox.replaceChildren(table);
  }
}

function placeholder(): HTMLElement {
  const p = document.createElement("p");
  p.className = "placeholder";
  p.textContent = "Create a session in the Input tab first.";
  return p;
}
