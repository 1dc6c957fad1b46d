// Input tab: pick a database plus an application and create the session;
// the summary below the form shows what the service loaded.

import type { AppConfig, SessionInfo, SessionRequest } from "./api.js";
import { renderJoinTree } from "./jointree.js";
import { AppState, clearBanner, errorBanner } from "./state.js";

const BUILTINS = ["favorita", "db_tiny", "mixture"] as const;

interface Prefill {
  features: string;
  label: string;
  dimensions: string;
  k: string;
}

const PREFILLS: Record<string, Prefill> = {
  favorita: { features: "txns, price", label: "units", dimensions: "units, txns", k: "3" },
  db_tiny: { features: "b", label: "c", dimensions: "b, c", k: "2" },
  mixture: { features: "x0", label: "x1", dimensions: "x0, x1", k: "4" },
};

function splitList(raw: string): string[] {
  return raw
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
}

export class InputTab {
  private readonly banner: HTMLElement;
  private readonly summary: HTMLElement;
  private schemaSelect!: HTMLSelectElement;
  private pathInput!: HTMLInputElement;
  private appSelect!: HTMLSelectElement;
  private featuresInput!: HTMLInputElement;
  private labelInput!: HTMLInputElement;
  private dimsInput!: HTMLInputElement;
  private kInput!: HTMLInputElement;
  private threadsInput!: HTMLInputElement;
  private seedInput!: HTMLInputElement;
  private form!: HTMLFormElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly state: AppState,
    private readonly onSession: (info: SessionInfo) => void,
  ) {
    this.banner = document.createElement("div");
    this.summary = document.createElement("div");
    this.summary.className = "session-summary";
    this.root.append(this.buildForm(), this.banner, this.summary);
  }

  refresh(): void {
    // nothing to re-fetch; the form and the last summary stay as they are
  }

  private buildForm(): HTMLElement {
    const form = document.createElement("form");
    this.form = form;
    form.className = "session-form";

    const schemaRow = document.createElement("div");
    schemaRow.className = "form-row";
    this.schemaSelect = document.createElement("select");
    for (const name of BUILTINS) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      this.schemaSelect.appendChild(opt);
    }
    const custom = document.createElement("option");
    custom.value = "custom";
    custom.textContent = "dataset directory…";
    this.schemaSelect.appendChild(custom);
    this.pathInput = document.createElement("input");
    this.pathInput.type = "text";
    this.pathInput.placeholder = "/path/to/dataset";
    this.pathInput.hidden = true;
    this.schemaSelect.addEventListener("change", () => {
      this.pathInput.hidden = this.schemaSelect.value !== "custom";
      this.applyPrefill();
    });
    schemaRow.append(labeled("Database", this.schemaSelect), this.pathInput);

    const appRow = document.createElement("div");
    appRow.className = "form-row";
    this.appSelect = document.createElement("select");
    for (const [value, text] of [
      ["batch", "aggregate batch"],
      ["linreg", "linear regression"],
      ["cart", "regression tree"],
      ["rkmeans", "k-means"],
    ]) {
      const opt = document.createElement("option");
      opt.value = value;
      opt.textContent = text;
      this.appSelect.appendChild(opt);
    }
    this.appSelect.addEventListener("change", () => this.showConfigFields());
    appRow.appendChild(labeled("Application", this.appSelect));

    this.featuresInput = document.createElement("input");
    this.featuresInput.type = "text";
    this.labelInput = document.createElement("input");
    this.labelInput.type = "text";
    this.dimsInput = document.createElement("input");
    this.dimsInput.type = "text";
    this.kInput = document.createElement("input");
    this.kInput.type = "number";
    this.kInput.min = "1";
    appRow.append(
      labeled("Features", this.featuresInput, "cfg-linreg cfg-cart"),
      labeled("Label", this.labelInput, "cfg-linreg cfg-cart"),
      labeled("Dimensions", this.dimsInput, "cfg-rkmeans"),
      labeled("k", this.kInput, "cfg-rkmeans"),
    );

    const runRow = document.createElement("div");
    runRow.className = "form-row";
    this.threadsInput = document.createElement("input");
    this.threadsInput.type = "number";
    this.threadsInput.min = "1";
    this.threadsInput.value = "1";
    this.seedInput = document.createElement("input");
    this.seedInput.type = "number";
    this.seedInput.placeholder = "default";
    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "Create session";
    runRow.append(labeled("Threads", this.threadsInput), labeled("Seed", this.seedInput), submit);

    form.append(schemaRow, appRow, runRow);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });

    this.applyPrefill();
    this.showConfigFields();
    return form;
  }

  private applyPrefill(): void {
    const pre = PREFILLS[this.schemaSelect.value];
    if (!pre) return;
    this.featuresInput.value = pre.features;
    this.labelInput.value = pre.label;
    this.dimsInput.value = pre.dimensions;
    this.kInput.value = pre.k;
  }

  private showConfigFields(): void {
    const kind = this.appSelect.value;
    for (const el of this.form.querySelectorAll<HTMLElement>("[class*='cfg-']")) {
      el.hidden = !el.className.includes(`cfg-${kind}`);
    }
  }

  private buildRequest(): SessionRequest {
    const schema =
      this.schemaSelect.value === "custom" ? this.pathInput.value.trim() : this.schemaSelect.value;
    const kind = this.appSelect.value;
    let app: AppConfig = { kind };
    if (kind === "linreg" || kind === "cart") {
      app = { kind, features: splitList(this.featuresInput.value), label: this.labelInput.value.trim() };
    } else if (kind === "rkmeans") {
      app = { kind, dimensions: splitList(this.dimsInput.value), k: Number(this.kInput.value) };
    }
    const req: SessionRequest = { schema, app, threads: Number(this.threadsInput.value) || 1 };
    if (this.seedInput.value.trim() !== "") req.seed = Number(this.seedInput.value);
    return req;
  }

  private async submit(): Promise<void> {
    await this.state.mutate(async () => {
      clearBanner(this.banner);
      const req = this.buildRequest();
      try {
        const info = await this.state.client.createSession(req);
        this.state.session = info;
        this.state.lastRequest = req;
        this.state.selectedGroup = null;
        this.renderSummary(info);
        this.onSession(info);
      } catch (err) {
        errorBanner(this.banner, err);
      }
    });
  }

  private renderSummary(info: SessionInfo): void {
    const heading = document.createElement("h3");
    heading.textContent = `Session: ${info.schema}, ${info.app}, ${info.queries.length} queries`;

    const table = document.createElement("table");
    table.className = "schema-table";
    const head = table.createTHead().insertRow();
    for (const h of ["relation", "rows", "attributes"]) {
      const th = document.createElement("th");
      th.textContent = h;
      head.appendChild(th);
    }
    const body = table.createTBody();
    for (const node of info.jointree.nodes) {
      const row = body.insertRow();
      row.insertCell().textContent = node.name;
      row.insertCell().textContent = String(node.rows);
      row.insertCell().textContent = node.attributes.join(", ");
    }

    const treeBox = document.createElement("div");
    treeBox.className = "tree-box";
    renderJoinTree(treeBox, info.jointree, { showViewCounts: false });

    this.summary.replaceChildren(heading, table, treeBox);
  }
}

function labeled(text: string, control: HTMLElement, extraClass = ""): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = extraClass ? `field ${extraClass}` : "field";
  const span = document.createElement("span");
  span.textContent = text;
  wrap.append(span, control);
  return wrap;
}
