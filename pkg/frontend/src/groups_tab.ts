// View Groups tab: the group DAG, one column per execution wave. Clicking
// a group selects it and jumps to the Code Generation tab.

import { renderGroupDag } from "./dag.js";
import { AppState, clearBanner, errorBanner } from "./state.js";

export class GroupsTab {
  private readonly banner: HTMLElement;
  private readonly dagBox: HTMLElement;
  private readonly detail: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly state: AppState,
    private readonly onOpenCode: (groupId: string) => void,
  ) {
    this.banner = document.createElement("div");
    this.dagBox = document.createElement("div");
    this.dagBox.className = "dag-box";
    this.detail = document.createElement("div");
    this.detail.className = "group-detail";
    this.root.append(this.banner, this.dagBox, this.detail);
  }

  async refresh(): Promise<void> {
    if (!this.state.session) {
      this.dagBox.replaceChildren(placeholder());
      this.detail.replaceChildren();
      return;
    }
    clearBanner(this.banner);
    try {
      const payload = await this.state.client.groups();
      renderGroupDag(this.dagBox, payload, {
        selected: this.state.selectedGroup,
        onSelectGroup: (gid) => {
          this.state.selectedGroup = gid;
          this.onOpenCode(gid);
        },
      });
      const ul = document.createElement("ul");
      ul.className = "group-list";
      for (const g of payload.groups) {
        const li = document.createElement("li");
        const inputs = g.incoming.length ? `, reads ${g.incoming.join(", ")}` : "";
        li.textContent = `${g.id}: wave ${g.wave} at ${g.node}, emits ${g.outputs.join(", ")}${inputs}`;
        ul.appendChild(li);
      }
      this.detail.replaceChildren(ul);
    } catch (err) {
      errorBanner(this.banner, err);
    }
  }
}

function placeholder(): HTMLElement {
  const p = document.createElement("p");
  p.className = "placeholder";
  p.textContent = "Create a session in the Input tab first.";
  return p;
}
