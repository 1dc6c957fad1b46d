// Code Generation tab: a group picker plus the fragment-tagged listing.

import { CodeView } from "./code_view.js";
import { AppState, clearBanner, errorBanner } from "./state.js";

export class CodeTab {
  private readonly banner: HTMLElement;
  private readonly picker: HTMLElement;
  private readonly view: CodeView;

  constructor(private readonly root: HTMLElement, private readonly state: AppState) {
    this.banner = document.createElement("div");
    this.picker = document.createElement("div");
    this.picker.className = "group-picker";
    const body = document.createElement("div");
    this.root.append(this.banner, this.picker, body);
    this.view = new CodeView(body);
  }

  async refresh(): Promise<void> {
    if (!this.state.session) {
      this.picker.replaceChildren();
      this.view.renderPlaceholder();
      return;
    }
    clearBanner(this.banner);
    try {
      const groups = await this.state.client.groups();
      const ids = groups.groups.map((g) => g.id);
      if (this.state.selectedGroup !== null && !ids.includes(this.state.selectedGroup)) {
        this.state.selectedGroup = null;
      }
      this.renderPicker(ids);
      if (this.state.selectedGroup === null) {
        this.view.renderPlaceholder();
        return;
      }
      const payload = await this.state.client.code(this.state.selectedGroup);
      this.view.render(payload);
    } catch (err) {
      errorBanner(this.banner, err);
    }
  }

  private renderPicker(ids: string[]): void {
    const label = document.createElement("label");
    label.className = "field";
    const span = document.createElement("span");
    span.textContent = "Group";
    const select = document.createElement("select");
    const none = document.createElement("option");
    none.value = "";
    none.textContent = "(none)";
    select.appendChild(none);
    for (const id of ids) {
      const opt = document.createElement("option");
      opt.value = id;
      opt.textContent = id;
      opt.selected = id === this.state.selectedGroup;
      select.appendChild(opt);
    }
    select.addEventListener("change", () => {
      this.state.selectedGroup = select.value === "" ? null : select.value;
      void this.refresh();
    });
    label.append(span, select);
    this.picker.replaceChildren(label);
  }
}
