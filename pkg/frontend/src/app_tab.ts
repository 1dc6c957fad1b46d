// Application tab. What it shows depends on the application the session
// was created with: the raw query batch, the regression fit, the decision
// tree, or the clustering panel with its probe form. Every number in these
// panels is the JSON value stringified as-is, so what you read here is
// byte-for-byte what the service returned.

import type {
  AssignPayload,
  CartModel,
  CartNode,
  LinregModel,
  MetricsPayload,
  RkmeansModel,
  RunPayload,
} from "./api.js";
import { ApiError } from "./api.js";
import { AppState, clearBanner, errorBanner } from "./state.js";

function show(v: unknown): string {
  return String(v);
}

function kv(dl: HTMLElement, key: string, value: unknown): void {
  const dt = document.createElement("dt");
  dt.textContent = key;
  const dd = document.createElement("dd");
  dd.textContent = show(value);
  dl.append(dt, dd);
}

export class AppTab {
  private readonly banner: HTMLElement;
  private readonly controls: HTMLElement;
  private readonly panel: HTMLElement;

  private lastRun: RunPayload | null = null;
  private metrics: MetricsPayload | null = null;
  private lastAssign: AssignPayload | null = null;

  constructor(private readonly root: HTMLElement, private readonly state: AppState) {
    this.banner = document.createElement("div");
    this.controls = document.createElement("div");
    this.controls.className = "app-controls";
    this.panel = document.createElement("div");
    this.panel.className = "app-panel";
    this.root.append(this.banner, this.controls, this.panel);
  }

  sessionChanged(): void {
    this.lastRun = null;
    this.metrics = null;
    this.lastAssign = null;
  }

  async refresh(): Promise<void> {
    if (!this.state.session) {
      this.controls.replaceChildren();
      this.panel.replaceChildren(placeholder("Create a session in the Input tab first."));
      return;
    }
    clearBanner(this.banner);
    // the service is the source of truth for whether results still exist:
    // a root reassignment on another tab drops them server-side
    try {
      this.metrics = await this.state.client.metrics();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.metrics = null;
        this.lastRun = null;
        this.lastAssign = null;
      } else {
        errorBanner(this.banner, err);
        return;
      }
    }
    this.renderControls();
    this.renderPanel();
  }

  private kindTitle(): string {
    switch (this.state.session?.app) {
      case "linreg":
        return "Linear regression";
      case "cart":
        return "Regression tree";
      case "rkmeans":
        return "K-means";
      default:
        return "Aggregate batch";
    }
  }

  private renderControls(): void {
    const session = this.state.session!;
    const frag = document.createDocumentFragment();

    const title = document.createElement("h3");
    title.textContent = `${this.kindTitle()} on ${session.schema}`;
    frag.appendChild(title);

    const bar = document.createElement("div");
    bar.className = "run-bar";

    const threads = document.createElement("input");
    threads.type = "number";
    threads.min = "1";
    threads.value = String(session.threads);
    threads.id = "run-threads";
    const threadsLabel = document.createElement("label");
    const threadsSpan = document.createElement("span");
    threadsSpan.textContent = "Threads";
    threadsLabel.className = "field";
    threadsLabel.append(threadsSpan, threads);
    bar.appendChild(threadsLabel);

    if (session.app === "rkmeans") {
      const k = document.createElement("input");
      k.type = "number";
      k.min = "1";
      k.id = "rkmeans-k";
      const fromReq = this.state.lastRequest?.app?.k;
      const model = this.modelAs<RkmeansModel>("rkmeans");
      k.value = show(model ? model.k : fromReq ?? 3);
      const kLabel = document.createElement("label");
      const kSpan = document.createElement("span");
      kSpan.textContent = "k";
      kLabel.className = "field";
      kLabel.append(kSpan, k);
      bar.appendChild(kLabel);
      k.addEventListener("change", () => void this.changeK(Number(k.value)));
    }

    const runBtn = document.createElement("button");
    runBtn.type = "button";
    runBtn.id = "run-button";
    runBtn.textContent = this.lastRun ? "Run again" : "Run";
    runBtn.addEventListener("click", () => void this.run(Number(threads.value) || 1));
    bar.appendChild(runBtn);

    frag.appendChild(bar);
    this.controls.replaceChildren(frag);
  }

  private modelAs<T extends { kind: string }>(kind: string): T | null {
    const m = this.lastRun?.model;
    if (m && m.kind === kind) return m as unknown as T;
    return null;
  }

  private async run(threads: number): Promise<void> {
    await this.state.mutate(async () => {
      clearBanner(this.banner);
      try {
        this.lastRun = await this.state.client.run(threads);
        this.lastAssign = null;
        this.metrics = await this.state.client.metrics();
        this.renderControls();
        this.renderPanel();
      } catch (err) {
        errorBanner(this.banner, err);
      }
    });
  }

  /** A new k means a new session over the same data, then a fresh run. */
  private async changeK(k: number): Promise<void> {
    const req = this.state.lastRequest;
    if (!req || !Number.isInteger(k) || k < 1) return;
    await this.state.mutate(async () => {
      clearBanner(this.banner);
      try {
        const next = { ...req, app: { ...req.app!, k } };
        this.state.session = await this.state.client.createSession(next);
        this.state.lastRequest = next;
        this.state.selectedGroup = null;
        this.lastRun = await this.state.client.run();
        this.lastAssign = null;
        this.metrics = await this.state.client.metrics();
        this.renderControls();
        this.renderPanel();
      } catch (err) {
        errorBanner(this.banner, err);
      }
    });
  }

  private renderPanel(): void {
    const session = this.state.session!;
    if (!this.lastRun) {
      this.panel.replaceChildren(placeholder("No results yet. Run the application."));
      return;
    }
    switch (session.app) {
      case "linreg":
        this.renderLinreg();
        break;
      case "cart":
        this.renderCart();
        break;
      case "rkmeans":
        this.renderRkmeans();
        break;
      default:
        this.renderBatch();
    }
  }

  private timingsTable(timings: Record<string, number>, caption: string): HTMLElement {
    const table = document.createElement("table");
    table.className = "timings-table";
    const cap = document.createElement("caption");
    cap.textContent = caption;
    table.appendChild(cap);
    const head = table.createTHead().insertRow();
    for (const h of ["step", "ms"]) {
      const th = document.createElement("th");
      th.textContent = h;
      head.appendChild(th);
    }
    const body = table.createTBody();
    for (const [key, ms] of Object.entries(timings)) {
      const row = body.insertRow();
      row.insertCell().textContent = key;
      row.insertCell().textContent = show(ms);
    }
    return table;
  }

  private metricsList(): HTMLElement {
    const dl = document.createElement("dl");
    dl.className = "metrics-list";
    for (const [key, value] of Object.entries(this.metrics ?? {})) {
      if (key === "app") continue;
      kv(dl, key, typeof value === "object" && value !== null ? JSON.stringify(value) : value);
    }
    return dl;
  }

  private renderBatch(): void {
    const run = this.lastRun!;
    const frag = document.createDocumentFragment();

    const report = run.report as {
      total_ms: number;
      threads: number;
      groups: Array<Record<string, unknown>>;
    };
    const summary = document.createElement("p");
    summary.textContent = `Executed with ${show(report.threads)} thread(s) in ${show(report.total_ms)} ms.`;
    frag.appendChild(summary);

    const gtable = document.createElement("table");
    gtable.className = "report-table";
    const ghead = gtable.createTHead().insertRow();
    const cols = ["id", "node", "wave", "wall_ms", "rows_scanned", "lookups", "output_rows"];
    for (const c of cols) {
      const th = document.createElement("th");
      th.textContent = c;
      ghead.appendChild(th);
    }
    const gbody = gtable.createTBody();
    for (const g of report.groups) {
      const row = gbody.insertRow();
      for (const c of cols) row.insertCell().textContent = show(g[c]);
    }
    frag.appendChild(gtable);

    const results = run.results as Record<
      string,
      { key_attrs: string[]; rows: Array<{ key: unknown[]; values: unknown[] }> }
    >;
    for (const [qid, res] of Object.entries(results)) {
      const h = document.createElement("h4");
      h.textContent = qid;
      frag.appendChild(h);
      const table = document.createElement("table");
      table.className = "result-table";
      const head = table.createTHead().insertRow();
      for (const a of res.key_attrs) {
        const th = document.createElement("th");
        th.textContent = a;
        head.appendChild(th);
      }
      const nAggs = res.rows.length ? res.rows[0].values.length : 0;
      for (let i = 0; i < nAggs; i++) {
        const th = document.createElement("th");
        th.textContent = `agg${i}`;
        head.appendChild(th);
      }
      const body = table.createTBody();
      for (const r of res.rows.slice(0, 50)) {
        const row = body.insertRow();
        for (const v of r.key) row.insertCell().textContent = show(v);
        for (const v of r.values) row.insertCell().textContent = show(v);
      }
      frag.appendChild(table);
      if (res.rows.length > 50) {
        const note = document.createElement("p");
        note.className = "placeholder";
        note.textContent = `showing 50 of ${res.rows.length} rows`;
        frag.appendChild(note);
      }
    }

    frag.appendChild(this.metricsList());
    this.panel.replaceChildren(frag);
  }

  private renderLinreg(): void {
    const model = this.modelAs<LinregModel>("linreg");
    if (!model) return;
    const frag = document.createDocumentFragment();

    const dl = document.createElement("dl");
    dl.className = "metrics-list";
    kv(dl, "label", model.label);
    kv(dl, "lambda", model.lambda);
    kv(dl, "rows", model.rows);
    kv(dl, "iterations", model.iterations);
    kv(dl, "converged", model.converged);
    if (model.objective_trace.length) {
      kv(dl, "objective", model.objective_trace[model.objective_trace.length - 1]);
    }
    kv(dl, "engine queries", model.engine_queries.length);
    frag.appendChild(dl);

    const table = document.createElement("table");
    table.className = "theta-table";
    const head = table.createTHead().insertRow();
    for (const h of ["parameter", "value"]) {
      const th = document.createElement("th");
      th.textContent = h;
      head.appendChild(th);
    }
    const body = table.createTBody();
    model.slots.forEach(([e, c], i) => {
      const row = body.insertRow();
      row.insertCell().textContent = c ? `${e}·${c}` : e;
      row.insertCell().textContent = show(model.theta[i]);
    });
    frag.appendChild(table);

    frag.appendChild(this.timingsTable(this.lastRun!.timings_ms, "training time"));
    this.panel.replaceChildren(frag);
  }

  private renderCart(): void {
    const model = this.modelAs<CartModel>("cart");
    if (!model) return;
    const frag = document.createDocumentFragment();

    const dl = document.createElement("dl");
    dl.className = "metrics-list";
    kv(dl, "label", model.label);
    kv(dl, "max depth", model.max_depth);
    kv(dl, "min leaf", model.min_leaf);
    kv(dl, "leaves", model.leaves);
    kv(dl, "engine queries", model.engine_queries.length);
    frag.appendChild(dl);

    frag.appendChild(cartOutline(model.tree));
    frag.appendChild(this.timingsTable(this.lastRun!.timings_ms, "training time"));
    this.panel.replaceChildren(frag);
  }

  private renderRkmeans(): void {
    const model = this.modelAs<RkmeansModel>("rkmeans");
    if (!model) return;
    const frag = document.createDocumentFragment();

    const dl = document.createElement("dl");
    dl.className = "metrics-list";
    kv(dl, "rows", model.rows);
    kv(dl, "coreset size", model.grid_size);
    kv(dl, "coreset ratio", model.coreset_ratio);
    kv(dl, "grid weight total", model.grid_weight_total);
    kv(dl, "coreset objective", model.grid_objective);
    kv(dl, "full-data objective", model.full_objective);
    kv(dl, "direct-baseline objective", model.baseline_objective);
    kv(dl, "relative gap", model.relative_gap);
    const runs = this.metrics?.baseline_runs;
    if (runs !== undefined) kv(dl, "baseline Lloyd's runs", runs);
    kv(dl, "engine queries", model.engine_queries.length);
    frag.appendChild(dl);

    const table = document.createElement("table");
    table.className = "centroid-table";
    const cap = document.createElement("caption");
    cap.textContent = "centroids";
    table.appendChild(cap);
    const head = table.createTHead().insertRow();
    const idxTh = document.createElement("th");
    idxTh.textContent = "#";
    head.appendChild(idxTh);
    for (const d of model.dimensions) {
      const th = document.createElement("th");
      th.textContent = d;
      head.appendChild(th);
    }
    const body = table.createTBody();
    model.centroids.forEach((c, i) => {
      const row = body.insertRow();
      row.dataset.index = String(i);
      if (this.lastAssign && this.lastAssign.index === i) row.classList.add("hit");
      row.insertCell().textContent = String(i);
      for (const v of c) row.insertCell().textContent = show(v);
    });
    frag.appendChild(table);

    frag.appendChild(this.timingsTable(this.lastRun!.timings_ms, "per-step time (dim[<attr>] rows are the per-dimension passes)"));
    frag.appendChild(this.probeForm(model));

    if (this.lastAssign) {
      const res = document.createElement("p");
      res.className = "assign-result";
      res.textContent =
        `nearest centroid #${show(this.lastAssign.index)} at (` +
        this.lastAssign.centroid.map(show).join(", ") +
        `), distance ${show(this.lastAssign.distance)}`;
      frag.appendChild(res);
    }

    this.panel.replaceChildren(frag);
  }

  private probeForm(model: RkmeansModel): HTMLElement {
    const form = document.createElement("form");
    form.className = "probe-form";
    const title = document.createElement("h4");
    title.textContent = "Assign a point";
    form.appendChild(title);

    const inputs: HTMLInputElement[] = [];
    for (const d of model.dimensions) {
      const input = document.createElement("input");
      input.type = "text";
      input.name = `probe-${d}`;
      inputs.push(input);
      const label = document.createElement("label");
      label.className = "field";
      const span = document.createElement("span");
      span.textContent = d;
      label.append(span, input);
      form.appendChild(label);
    }

    const note = document.createElement("span");
    note.className = "probe-error";
    const btn = document.createElement("button");
    btn.type = "submit";
    btn.textContent = "Assign";
    form.append(btn, note);

    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      // the one piece of arithmetic-free validation the client owns: every
      // dimension needs one numeric coordinate before anything is sent
      const point: number[] = [];
      for (const input of inputs) {
        const raw = input.value.trim();
        const num = raw === "" ? NaN : Number(raw);
        if (!Number.isFinite(num)) {
          note.textContent = `need one numeric coordinate per dimension (${model.dimensions.length})`;
          return;
        }
        point.push(num);
      }
      note.textContent = "";
      void this.assign(point);
    });
    return form;
  }

  private async assign(point: number[]): Promise<void> {
    clearBanner(this.banner);
    try {
      this.lastAssign = await this.state.client.assign(point);
      this.renderPanel();
    } catch (err) {
      errorBanner(this.banner, err);
    }
  }
}

function cartOutline(node: CartNode): HTMLElement {
  const ul = document.createElement("ul");
  ul.className = "cart-tree";
  ul.appendChild(cartItem(node));
  return ul;
}

function cartItem(node: CartNode): HTMLElement {
  const li = document.createElement("li");
  const label = document.createElement("span");
  if (node.kind === "split") {
    label.textContent =
      `${node.attribute} ${node.op} ${show(node.threshold)} ` +
      `(n=${show(node.count)}, mean=${show(node.mean)})`;
  } else {
    label.textContent = `leaf: predict ${show(node.mean)} (n=${show(node.count)}, var=${show(node.variance)})`;
    label.className = "cart-leaf";
  }
  li.appendChild(label);
  if (node.kind === "split" && node.yes && node.no) {
    const children = document.createElement("ul");
    const yes = cartItem(node.yes);
    yes.prepend(branchTag("yes"));
    const no = cartItem(node.no);
    no.prepend(branchTag("no"));
    children.append(yes, no);
    li.appendChild(children);
  }
  return li;
}

function branchTag(text: string): HTMLElement {
  const b = document.createElement("em");
  b.textContent = `${text}: `;
  return b;
}

function placeholder(text: string): HTMLElement {
  const p = document.createElement("p");
  p.className = "placeholder";
  p.textContent = text;
  return p;
}
