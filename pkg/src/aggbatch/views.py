"""Directional views: decomposition of a query batch over the join tree.

Every query gets a root relation. For each edge, the subtree hanging away
from the root is summarized into a view directed along the edge: its keys are
the edge's join attributes plus any group-by attributes bound below, and its
slots are the query's aggregates restricted to factors evaluated below.
Views from different queries that agree on direction and keys are merged,
slot lists deduplicated, so shared work is computed once.

Each view (and each query) is then compiled to an output spec: per slot, the
factors evaluated at its own node and references into the views arriving from
its children. A factor lands at the highest node of its attribute's subtree
on the path toward the consumer, so nothing is applied twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import Catalog
from .errors import PlanningError, QueryError
from .queries import AggregateSpec, JoinTree, Query, QueryBatch


@dataclass(frozen=True)
class Consumer:
    output_id: str
    slot_map: tuple[tuple[int, int], ...]  # (consumer slot, producer slot)


@dataclass
class DirectionalView:
    id: str
    source: str
    target: str
    group_by: tuple[str, ...]  # sorted
    slots: tuple[AggregateSpec, ...]
    consumers: list[Consumer] = field(default_factory=list)


@dataclass(frozen=True)
class SlotPlan:
    """How one output slot is computed at its node: local factors times one
    referenced slot from each child-side view."""

    local_factors: tuple[tuple[str, str], ...]
    view_refs: tuple[tuple[str, int], ...]  # (view id, slot index)
    constant: float = 1.0


@dataclass
class OutputSpec:
    id: str
    kind: str  # "view" | "query"
    node: str
    group_by: tuple[str, ...]  # sorted
    slots: tuple[SlotPlan, ...]
    target: str | None = None  # views only
    true_deps: frozenset[str] = frozenset()  # views actually read by slots
    incoming: frozenset[str] = frozenset()  # true deps plus absorbed filters


@dataclass
class ViewSet:
    views: dict[str, DirectionalView]
    outputs: dict[str, OutputSpec]  # view outputs and query outputs, by id
    roots: dict[str, str]

    def views_on(self, source: str, target: str) -> list[DirectionalView]:
        return [
            v for v in self.views.values() if v.source == source and v.target == target
        ]


def assign_roots(
    catalog: Catalog,
    tree: JoinTree,
    batch: QueryBatch,
    overrides: dict[str, str] | None = None,
) -> dict[str, str]:
    """Pick a root relation per query.

    Grouped queries root at the relation holding the highest-distinct-count
    group-by attribute, so group keys bind as early as possible. Scalar
    queries root at the best-connected relation. Ties go to the
    lexicographically smaller name.
    """
    overrides = overrides or {}
    roots: dict[str, str] = {}
    for q in batch:
        if q.id in overrides:
            node = overrides[q.id]
            if node not in tree.adjacency:
                raise QueryError(f"root override for {q.id}: unknown relation {node!r}")
            roots[q.id] = node
            continue
        if q.group_by:
            best: tuple[int, str] | None = None
            for g in q.group_by:
                for node in tree.attribute_nodes(g):
                    distinct = catalog.stats[(node, g)].distinct_count
                    candidate = (-distinct, node)
                    if best is None or candidate < best:
                        best = candidate
            roots[q.id] = best[1]
        else:
            roots[q.id] = min(tree.nodes, key=lambda n: (-len(tree.adjacency[n]), n))
    return roots


def _subtree_attrs(tree: JoinTree, head: str, away_from: str) -> frozenset[str]:
    return frozenset(
        a for n in tree.subtree_nodes(head, away_from) for a in tree.node_attrs[n]
    )


def _restrict(spec: AggregateSpec, node_attrs: frozenset[str], branch: frozenset[str]) -> AggregateSpec:
    """Factors that fall to one child branch: in the branch's attributes but
    not already bound at the node itself."""
    return AggregateSpec(
        tuple(f for f in spec.factors if f[0] not in node_attrs and f[0] in branch), 1.0
    )


def generate_views(
    catalog: Catalog, tree: JoinTree, batch: QueryBatch, roots: dict[str, str]
) -> ViewSet:
    """Decompose the batch into merged directional views and compiled outputs."""
    # --- per-query decomposition into raw per-edge views -------------------
    # merged key: (source, target, frozenset(group_by)) -> ordered slot specs
    merged: dict[tuple[str, str, frozenset[str]], list[AggregateSpec]] = {}
    spec_index: dict[tuple[str, str, frozenset[str]], dict[AggregateSpec, int]] = {}

    def merge_slot(key, spec: AggregateSpec) -> int:
        slots = merged.setdefault(key, [])
        index = spec_index.setdefault(key, {})
        if spec not in index:
            index[spec] = len(slots)
            slots.append(spec)
        return index[spec]

    for q in batch:
        root = roots[q.id]
        parents = tree.rooted_parents(root)
        group_set = set(q.group_by)
        for node, parent in parents.items():
            if parent is None:
                continue
            edge = tree.edge_between(node, parent)
            branch = _subtree_attrs(tree, node, parent)
            carried = {
                g for g in group_set if g in branch and g not in _above_attrs(tree, node, parent)
            }
            key = (node, parent, frozenset(edge.attrs) | frozenset(carried))
            for spec in q.aggregates:
                restricted = AggregateSpec(
                    tuple(
                        f
                        for f in spec.factors
                        if f[0] in branch and f[0] not in _above_attrs(tree, node, parent)
                    ),
                    1.0,
                )
                merge_slot(key, restricted)

    # --- stable ids --------------------------------------------------------
    by_direction: dict[tuple[str, str], list[tuple[str, str, frozenset[str]]]] = {}
    for key in merged:
        by_direction.setdefault((key[0], key[1]), []).append(key)
    ids: dict[tuple[str, str, frozenset[str]], str] = {}
    for (src, tgt), keys in by_direction.items():
        edge_attrs = frozenset(tree.edge_between(src, tgt).attrs)
        for key in sorted(keys, key=lambda k: tuple(sorted(k[2]))):
            extra = sorted(key[2] - edge_attrs)
            base = f"V[{src}->{tgt}]"
            ids[key] = base if not extra else f"V[{src}->{tgt}|{','.join(extra)}]"

    views: dict[str, DirectionalView] = {}
    for key, slots in merged.items():
        vid = ids[key]
        views[vid] = DirectionalView(
            id=vid,
            source=key[0],
            target=key[1],
            group_by=tuple(sorted(key[2])),
            slots=tuple(slots),
        )

    # --- compile outputs: local factors plus child-view slot references ----
    outputs: dict[str, OutputSpec] = {}

    def child_ref(node: str, child: str, group_attrs: frozenset[str], spec: AggregateSpec) -> tuple[str, int]:
        edge = tree.edge_between(child, node)
        branch = _subtree_attrs(tree, child, node)
        node_attrs = tree.node_attrs[node]
        carried = frozenset(
            g for g in group_attrs if g not in node_attrs and g in branch
        )
        key = (child, node, frozenset(edge.attrs) | carried)
        if key not in spec_index:
            raise PlanningError(
                f"no view on {child}->{node} with keys {sorted(key[2])}; "
                f"decomposition out of step with merging"
            )
        sub = _restrict(spec, node_attrs, branch)
        index = spec_index[key]
        if sub not in index:
            raise PlanningError(
                f"view {ids[key]} lacks slot {sub}; decomposition out of step with merging"
            )
        return ids[key], index[sub]

    def compile_output(
        oid: str,
        kind: str,
        node: str,
        group_attrs: frozenset[str],
        specs: list[AggregateSpec],
        constants: list[float],
        toward: str | None,
    ) -> OutputSpec:
        node_attrs = tree.node_attrs[node]
        children = sorted(
            e.other(node) for e in tree.adjacency[node] if e.other(node) != toward
        )
        plans = []
        for slot_idx, (spec, const) in enumerate(zip(specs, constants)):
            local = tuple(f for f in spec.factors if f[0] in node_attrs)
            refs = []
            for child in children:
                vid, producer_slot = child_ref(node, child, group_attrs, spec)
                refs.append((vid, producer_slot))
                views[vid].consumers.append(
                    Consumer(oid, ((slot_idx, producer_slot),))
                )
            plans.append(SlotPlan(local, tuple(refs), const))
        deps = frozenset(v for p in plans for v, _ in p.view_refs)
        return OutputSpec(
            id=oid,
            kind=kind,
            node=node,
            group_by=tuple(sorted(group_attrs)),
            slots=tuple(plans),
            target=toward,
            true_deps=deps,
        )

    for key, slots in merged.items():
        src, tgt, group_attrs = key
        vid = ids[key]
        outputs[vid] = compile_output(
            vid, "view", src, group_attrs, slots, [1.0] * len(slots), tgt
        )

    for q in batch:
        root = roots[q.id]
        outputs[q.id] = compile_output(
            q.id,
            "query",
            root,
            frozenset(q.group_by),
            list(q.aggregates),
            [spec.constant for spec in q.aggregates],
            None,
        )

    # consolidate consumer slot maps (one entry per consumer, not per slot)
    for view in views.values():
        by_consumer: dict[str, list[tuple[int, int]]] = {}
        for c in view.consumers:
            by_consumer.setdefault(c.output_id, []).extend(c.slot_map)
        view.consumers = [
            Consumer(oid, tuple(sorted(set(pairs)))) for oid, pairs in sorted(by_consumer.items())
        ]

    # --- absorb reverse views as semi-join filters -------------------------
    # A view flowing the other way along the same edge can join the pass as a
    # pure filter when it needs no inputs of its own and keys only on the
    # node's attributes; that trims dangling tuples without creating a cycle.
    for vid, out in list(outputs.items()):
        if out.kind != "view":
            out.incoming = out.true_deps
            continue
        absorbed = set()
        for other in views.values():
            if other.source == out.target and other.target == out.node:
                if outputs[other.id].true_deps:
                    continue
                if set(other.group_by) - set(tree.node_attrs[out.node]):
                    continue
                if not out.true_deps and out.node > out.target:
                    # Both endpoints are leaves (two-relation tree): mutual
                    # absorption would be circular, so only one side filters.
                    continue
                absorbed.add(other.id)
        out.incoming = out.true_deps | frozenset(absorbed)

    return ViewSet(views=views, outputs=outputs, roots=dict(roots))


def _above_attrs(tree: JoinTree, node: str, parent: str) -> frozenset[str]:
    """Attributes visible at or above the parent side of the edge node->parent."""
    return frozenset(
        a for n in tree.subtree_nodes(parent, node) for a in tree.node_attrs[n]
    )
