"""Run artifacts on disk: delimited query results, JSON summaries, and a
small set of matplotlib figures (join tree with view-count arrows, group
dependency graph, per-group timings, plus one application-specific chart).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import EngineSession


def write_results_csv(session: EngineSession, out_dir: str | Path) -> list[Path]:
    """One CSV per query: key columns then one column per aggregate slot."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    payload = session.results_payload()
    for qid, res in payload.items():
        path = out / f"{_safe(qid)}.csv"
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            n_slots = len(res["rows"][0]["values"]) if res["rows"] else 1
            writer.writerow(res["key_attrs"] + [f"agg{i}" for i in range(n_slots)])
            for row in res["rows"]:
                writer.writerow(list(row["key"]) + list(row["values"]))
        written.append(path)
    return written


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _tree_layout(session: EngineSession) -> dict[str, tuple[float, float]]:
    """Deterministic positions: BFS depth from the best-connected node gives
    the row, siblings spread across it alphabetically."""
    tree = session.tree
    start = min(tree.nodes, key=lambda n: (-len(tree.adjacency[n]), n))
    depth = {start: 0}
    order = [start]
    for n in order:
        for e in sorted(tree.adjacency[n], key=lambda e: e.other(n)):
            m = e.other(n)
            if m not in depth:
                depth[m] = depth[n] + 1
                order.append(m)
    rows: dict[int, list[str]] = {}
    for n in tree.nodes:
        rows.setdefault(depth[n], []).append(n)
    pos = {}
    for d, names in rows.items():
        names.sort()
        for i, n in enumerate(names):
            pos[n] = (i - (len(names) - 1) / 2.0, -float(d))
    return pos


def plot_jointree(session: EngineSession, path: str | Path) -> None:
    summary = session.jointree_summary()
    pos = _tree_layout(session)
    fig, ax = plt.subplots(figsize=(7, 5))
    for e in summary["edges"]:
        (xa, ya), (xb, yb) = pos[e["a"]], pos[e["b"]]
        for width, flip in ((e["views_ab"], False), (e["views_ba"], True)):
            if width == 0:
                continue
            # offset the two directions so both arrows stay visible
            dx, dy = xb - xa, yb - ya
            norm = math.hypot(dx, dy) or 1.0
            ox, oy = -dy / norm * 0.06, dx / norm * 0.06
            if flip:
                ox, oy = -ox, -oy
            src = (xb, yb) if flip else (xa, ya)
            dst = (xa, ya) if flip else (xb, yb)
            ax.annotate(
                "",
                xy=(dst[0] + ox, dst[1] + oy),
                xytext=(src[0] + ox, src[1] + oy),
                arrowprops={
                    "arrowstyle": "-|>",
                    "lw": 0.8 + 1.1 * width,
                    "color": "#2a6f97",
                    "shrinkA": 22,
                    "shrinkB": 22,
                },
            )
    root_nodes = set(summary["roots"].values())
    for n in summary["nodes"]:
        x, y = pos[n["name"]]
        boxed = dict(boxstyle="round,pad=0.35", fc="#ffe8a3" if n["name"] in root_nodes else "#dce8f5", ec="#444")
        ax.text(x, y, f"{n['name']}\n{n['rows']} rows", ha="center", va="center", fontsize=9, bbox=boxed)
    ax.set_title("join tree (arrow width = views in that direction)")
    ax.set_axis_off()
    ax.margins(0.2)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_groups(session: EngineSession, path: str | Path) -> None:
    s = session.structure
    waves = s.dag.waves
    pos = {}
    for wi, wave in enumerate(waves):
        for i, gid in enumerate(sorted(wave)):
            pos[gid] = (i - (len(wave) - 1) / 2.0, -float(wi))
    fig, ax = plt.subplots(figsize=(7, 5))
    for prod, cons in sorted(s.dag.edges):
        (xa, ya), (xb, yb) = pos[prod], pos[cons]
        ax.annotate(
            "",
            xy=(xb, yb),
            xytext=(xa, ya),
            arrowprops={"arrowstyle": "-|>", "color": "#777", "shrinkA": 16, "shrinkB": 16},
        )
    by_id = {g.id: g for g in s.groups}
    for gid, (x, y) in pos.items():
        g = by_id[gid]
        label = f"{gid}\n{g.node}"
        ax.text(x, y, label, ha="center", va="center", fontsize=9,
                bbox=dict(boxstyle="round,pad=0.3", fc="#e4f0e2", ec="#444"))
    ax.set_title("view groups (arrows point at consumers)")
    ax.set_axis_off()
    ax.margins(0.2)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def plot_timings(session: EngineSession, path: str | Path) -> None:
    report = session.report
    ids = [g.group_id for g in report.groups]
    ms = [g.wall_ms for g in report.groups]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(ids, ms, color="#2a6f97")
    ax.set_ylabel("wall ms")
    ax.set_title(f"per-group execution time ({report.threads} thread(s))")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_model(model, path: str | Path) -> bool:
    """Application chart; returns False when the model kind has none."""
    doc = model.to_json()
    kind = doc["kind"]
    if kind == "linreg":
        trace = doc["objective_trace"]
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(range(len(trace)), trace, marker="o", ms=3, color="#2a6f97")
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective")
        ax.set_title("gradient descent on the aggregate Gram matrix")
    elif kind == "cart":
        leaves = _leaves(doc["tree"])
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.bar(range(len(leaves)), [l["count"] for l in leaves], color="#2a6f97")
        ax.set_xticks(range(len(leaves)))
        ax.set_xticklabels([f"{l['prediction']:.3g}" for l in leaves], rotation=45, ha="right")
        ax.set_xlabel("leaf prediction")
        ax.set_ylabel("fragment rows")
        ax.set_title("regression tree leaves")
    elif kind == "rkmeans":
        cents = np.array(doc["centroids"])
        fig, ax = plt.subplots(figsize=(6, 4.5))
        if cents.shape[1] >= 2:
            ax.scatter(cents[:, 0], cents[:, 1], marker="x", s=120, color="#c1121f", label="centroids")
            for i, c in enumerate(cents):
                ax.annotate(str(i), (c[0], c[1]), textcoords="offset points", xytext=(6, 4))
            ax.set_xlabel(doc["dimensions"][0])
            ax.set_ylabel(doc["dimensions"][1])
            ax.legend()
        else:
            ax.stem(cents[:, 0], np.ones(len(cents)))
            ax.set_xlabel(doc["dimensions"][0])
        ax.set_title(f"k={doc['k']} centroids from the grid coreset")
    else:
        return False
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def _leaves(tree_doc: dict) -> list[dict]:
    if "yes" not in tree_doc:
        return [tree_doc]
    return _leaves(tree_doc["yes"]) + _leaves(tree_doc["no"])


def write_report(
    session: EngineSession,
    out_dir: str | Path,
    run_payload: dict | None = None,
    model=None,
) -> Path:
    """Everything a run leaves behind: CSVs (batch runs), report.json,
    model.json (ML runs), and the figures directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    figures = out / "figures"
    figures.mkdir(exist_ok=True)

    doc: dict = {"totals": session.totals()}
    if run_payload is not None:
        doc["run"] = {k: v for k, v in run_payload.items() if k not in ("results", "model")}
    plot_jointree(session, figures / "jointree.png")
    plot_groups(session, figures / "groups.png")
    if session.has_results:
        write_results_csv(session, out)
        plot_timings(session, figures / "timings.png")
    if model is not None:
        (out / "model.json").write_text(json.dumps(model.to_json(), indent=2) + "\n")
        plot_model(model, figures / "model.png")
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    return out
