// Fragment-tagged loop-nest listing. Every line keeps its kind as a CSS
// class so the highlight toggles are pure class flips, no re-render.

import type { CodePayload } from "./api.js";

export const FRAGMENT_KINDS = [
  "join-iteration",
  "view-lookup",
  "local-assign",
  "running-sum",
  "output-write",
] as const;

export type FragmentKind = (typeof FRAGMENT_KINDS)[number];

const KIND_LABELS: Record<FragmentKind, string> = {
  "join-iteration": "join iteration",
  "view-lookup": "view lookup",
  "local-assign": "local assign",
  "running-sum": "running sum",
  "output-write": "output write",
};

export class CodeView {
  private readonly root: HTMLElement;
  private readonly active = new Set<FragmentKind>();
  private pre: HTMLPreElement | null = null;

  constructor(root: HTMLElement) {
    this.root = root;
    this.renderPlaceholder();
  }

  activeKinds(): ReadonlySet<FragmentKind> {
    return this.active;
  }

  renderPlaceholder(): void {
    this.pre = null;
    const p = document.createElement("p");
    p.className = "placeholder";
    p.textContent = "Pick a group in the View Groups tab to see its generated loop nest.";
    this.root.replaceChildren(p);
  }

  render(payload: CodePayload): void {
    const head = document.createElement("div");
    head.className = "code-head";
    const title = document.createElement("h3");
    title.textContent = `${payload.group} at ${payload.node}`;
    head.appendChild(title);
    const meta = document.createElement("p");
    meta.className = "code-meta";
    meta.textContent =
      `loop order ${payload.order.join(" · ")} (registers: ` +
      `${payload.registers.local} local, ${payload.registers.running} running)`;
    head.appendChild(meta);

    const toggles = document.createElement("div");
    toggles.className = "kind-toggles";
    const allBtn = document.createElement("button");
    allBtn.type = "button";
    allBtn.textContent = "all";
    allBtn.dataset.kind = "all";
    allBtn.addEventListener("click", () => {
      const everything = this.active.size === FRAGMENT_KINDS.length;
      this.active.clear();
      if (!everything) for (const k of FRAGMENT_KINDS) this.active.add(k);
      this.applyHighlights(toggles);
    });
    toggles.appendChild(allBtn);
    for (const kind of FRAGMENT_KINDS) {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.className = `kind-toggle kind-${kind}`;
      btn.dataset.kind = kind;
      btn.textContent = KIND_LABELS[kind];
      btn.addEventListener("click", () => {
        if (this.active.has(kind)) this.active.delete(kind);
        else this.active.add(kind);
        this.applyHighlights(toggles);
      });
      toggles.appendChild(btn);
    }

    const pre = document.createElement("pre");
    pre.className = "code-listing";
    for (const line of payload.lines) {
      const span = document.createElement("span");
      span.className = `code-line kind-${line.kind}`;
      span.dataset.kind = line.kind;
      span.textContent = line.text;
      pre.appendChild(span);
      pre.appendChild(document.createTextNode("\n"));
    }
    this.pre = pre;

    this.root.replaceChildren(head, toggles, pre);
    this.applyHighlights(toggles);
  }

  private applyHighlights(toggles: HTMLElement): void {
    if (this.pre) {
      for (const span of this.pre.querySelectorAll<HTMLSpanElement>(".code-line")) {
        const kind = span.dataset.kind as FragmentKind;
        span.classList.toggle("hl", this.active.has(kind));
      }
    }
    for (const btn of toggles.querySelectorAll<HTMLButtonElement>("button")) {
      const kind = btn.dataset.kind;
      const on =
        kind === "all"
          ? this.active.size === FRAGMENT_KINDS.length
          : this.active.has(kind as FragmentKind);
      btn.classList.toggle("on", on);
    }
  }
}
