"""Session facade over the full pipeline.

Holds one loaded database, join tree, and query batch, and derives the rest
on demand: root assignment, directional views, groups, per-group plans, and
execution results. Structural artifacts regenerate automatically when a root
changes; anything computed by an actual run is marked stale instead, and
stays inaccessible until the next run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import Catalog
from .errors import QueryError, StaleStateError
from .executor import (
    ExecutionReport,
    MaterializedView,
    decide_storage,
    execute_batch,
    render_code,
)
from .planner import (
    GroupDag,
    PlanIR,
    ViewGroup,
    build_dependency_dag,
    choose_attribute_order,
    decompose_aggregates,
    group_views,
    register_count,
    validate_plan,
)
from .queries import JoinTree, QueryBatch, QueryResult
from .views import ViewSet, assign_roots, generate_views


@dataclass
class Structure:
    roots: dict[str, str]
    viewset: ViewSet
    groups: list[ViewGroup]
    dag: GroupDag
    plans: dict[str, PlanIR]
    storage: dict[str, str]


class EngineSession:
    def __init__(
        self,
        catalog: Catalog,
        tree: JoinTree,
        batch: QueryBatch,
        root_overrides: dict[str, str] | None = None,
    ):
        self.catalog = catalog
        self.tree = tree
        self.batch = batch
        self._overrides: dict[str, str] = dict(root_overrides or {})
        self._structure: Structure | None = None
        self._results: dict[str, QueryResult] | None = None
        self._views: dict[str, MaterializedView] | None = None
        self._report: ExecutionReport | None = None
        self._stale = False

    @property
    def structure(self) -> Structure:
        if self._structure is None:
            roots = assign_roots(self.catalog, self.tree, self.batch, self._overrides)
            viewset = generate_views(self.catalog, self.tree, self.batch, roots)
            groups = group_views(viewset)
            dag = build_dependency_dag(groups, viewset)
            plans: dict[str, PlanIR] = {}
            for g in groups:
                order = choose_attribute_order(self.catalog, self.tree, viewset, g)
                plan = decompose_aggregates(self.catalog, self.tree, viewset, g, order)
                validate_plan(plan)
                plans[g.id] = plan
            storage = decide_storage(viewset, groups, plans)
            self._structure = Structure(roots, viewset, groups, dag, plans, storage)
        return self._structure

    def set_root(self, query_id: str, node: str) -> None:
        """Re-root one query; regenerates structure, invalidates run artifacts."""
        self.batch.query(query_id)  # raises on unknown id
        if node not in self.tree.adjacency:
            raise QueryError(f"unknown relation {node!r}")
        self._overrides[query_id] = node
        self._structure = None
        if self._results is not None:
            self._stale = True

    def plan(self, group_id: str) -> PlanIR:
        s = self.structure
        if group_id not in s.plans:
            raise QueryError(f"unknown group id {group_id!r}")
        return s.plans[group_id]

    def code(self, group_id: str) -> str:
        return render_code(self.plan(group_id), self.structure.viewset)

    def run(self, threads: int = 1) -> dict[str, QueryResult]:
        s = self.structure
        results, views, report = execute_batch(
            self.catalog, s.viewset, s.groups, s.dag, s.plans, self.batch, threads=threads
        )
        self._results, self._views, self._report = results, views, report
        self._stale = False
        return results

    def _fresh(self, what: str):
        if self._results is None:
            raise StaleStateError(f"{what} not available: no run has happened yet")
        if self._stale:
            raise StaleStateError(f"{what} is stale: roots changed since the last run")

    @property
    def has_results(self) -> bool:
        return self._results is not None and not self._stale

    @property
    def results(self) -> dict[str, QueryResult]:
        self._fresh("query results")
        return self._results

    @property
    def materialized_views(self) -> dict[str, MaterializedView]:
        self._fresh("materialized views")
        return self._views

    @property
    def report(self) -> ExecutionReport:
        self._fresh("execution report")
        return self._report

    def register_totals(self) -> dict[str, tuple[int, int]]:
        """(local, running-sum) register counts per group id."""
        return {gid: register_count(p) for gid, p in self.structure.plans.items()}

    def jointree_summary(self) -> dict:
        s = self.structure
        edges = []
        for e in self.tree.edges:
            ab = len(s.viewset.views_on(e.a, e.b))
            ba = len(s.viewset.views_on(e.b, e.a))
            edges.append(
                {"a": e.a, "b": e.b, "attrs": list(e.attrs), "views_ab": ab, "views_ba": ba}
            )
        return {
            "nodes": [
                {
                    "name": n,
                    "attributes": list(self.catalog.relations[n].attribute_names()),
                    "rows": self.catalog.tables[n].n_rows if n in self.catalog.tables else 0,
                }
                for n in self.tree.nodes
            ],
            "edges": edges,
            "roots": dict(s.roots),
        }

    def results_payload(self) -> dict:
        """JSON-ready query results (dictionary codes decoded for display)."""
        self._fresh("query results")
        out = {}
        for qid, res in self._results.items():
            rows = []
            for key, vec in res.sorted_rows():
                display = [
                    self._decode(attr, v) for attr, v in zip(res.key_attrs, key)
                ]
                rows.append({"key": display, "values": [float(x) for x in vec]})
            out[qid] = {"key_attrs": list(res.key_attrs), "rows": rows}
        return out

    def _decode(self, attr: str, value):
        if attr in self.catalog.dictionaries:
            return self.catalog.dictionaries[attr][int(value)]
        if isinstance(value, float) and value.is_integer():
            return int(value)
        return value

    def totals(self) -> dict:
        """Small scoreboard for the metrics endpoint."""
        s = self.structure
        n_views = len(s.viewset.views)
        n_groups = len(s.groups)
        regs = self.register_totals()
        summary = {
            "queries": len(self.batch),
            "views": n_views,
            "groups": n_groups,
            "registers": {g: list(r) for g, r in regs.items()},
        }
        if self._results is not None and not self._stale:
            summary["last_run"] = self._report.to_dict()
        return summary


def total_join_count(results: dict[str, QueryResult], probe_id: str) -> float:
    """Sum over a COUNT-style query's rows, handy for |D| checks."""
    res = results[probe_id]
    return float(sum(v[0] for v in res.rows.values()))


def as_float_rows(result: QueryResult) -> list[tuple[tuple, np.ndarray]]:
    return result.sorted_rows()
