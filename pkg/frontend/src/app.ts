// Wires the five tabs to one shared state and one API client. Each tab
// re-fetches what it shows when it becomes active, so a change made on one
// tab (a new session, a moved root) is visible on the next without a
// manual reload anywhere.

import { ApiClient } from "./api.js";
import { AppState } from "./state.js";
import { InputTab } from "./input_tab.js";
import { ViewsTab } from "./views_tab.js";
import { GroupsTab } from "./groups_tab.js";
import { CodeTab } from "./code_tab.js";
import { AppTab } from "./app_tab.js";

interface Tab {
  refresh(): void | Promise<void>;
}

export function boot(root: HTMLElement, client: ApiClient = new ApiClient()): void {
  const state = new AppState(client);

  const bar = document.createElement("nav");
  bar.className = "tab-bar";
  const stage = document.createElement("main");
  stage.className = "tab-stage";
  root.replaceChildren(bar, stage);

  const panes = new Map<string, { button: HTMLButtonElement; pane: HTMLElement; tab: Tab }>();

  function activate(name: string): void {
    for (const [n, entry] of panes) {
      entry.button.classList.toggle("active", n === name);
      entry.pane.hidden = n !== name;
    }
    void panes.get(name)!.tab.refresh();
  }

  function addTab(name: string, build: (pane: HTMLElement) => Tab): void {
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = name;
    button.addEventListener("click", () => activate(name));
    bar.appendChild(button);
    const pane = document.createElement("section");
    pane.className = "tab-pane";
    pane.hidden = true;
    stage.appendChild(pane);
    panes.set(name, { button, pane, tab: build(pane) });
  }

  let appTab: AppTab;

  addTab("Input", (pane) =>
    new InputTab(pane, state, () => {
      appTab.sessionChanged();
    }),
  );
  addTab("View Generation", (pane) => new ViewsTab(pane, state));
  addTab("View Groups", (pane) =>
    new GroupsTab(pane, state, () => activate("Code Generation")),
  );
  addTab("Code Generation", (pane) => new CodeTab(pane, state));
  addTab("Application", (pane) => {
    appTab = new AppTab(pane, state);
    return appTab;
  });

  activate("Input");
}

const mount = document.getElementById("app");
if (mount) boot(mount);
