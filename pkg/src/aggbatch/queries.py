"""Join trees and aggregate query batches, plus a brute-force reference evaluator.

A query is a group-by SUM over the natural join of every relation in the
tree. Each aggregate is a product of per-attribute UDF factors (times an
optional constant); SUM with no factors counts join tuples.

`oracle_evaluate` materializes the full join with hash joins and aggregates
row by row. It shares no code with the factorized executor on purpose: the
two are developed against each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .catalog import Catalog
from .errors import QueryError, SchemaError


@dataclass(frozen=True)
class JoinEdge:
    a: str
    b: str
    attrs: tuple[str, ...]  # shared attributes, sorted

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


class JoinTree:
    """An acyclic, connected join topology over the catalog's relations.

    Attribute sharing must satisfy the running-intersection property: for any
    attribute, the relations declaring it form a connected subtree. That is
    what lets a directional view summarize everything below an edge.
    """

    def __init__(self, catalog: Catalog, edges: Sequence[JoinEdge]):
        self.nodes: tuple[str, ...] = tuple(catalog.relations)
        self.edges: tuple[JoinEdge, ...] = tuple(edges)
        self.node_attrs: dict[str, frozenset[str]] = {
            name: frozenset(rel.attribute_names())
            for name, rel in catalog.relations.items()
        }
        self.adjacency: dict[str, list[JoinEdge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            self.adjacency[e.a].append(e)
            self.adjacency[e.b].append(e)
        self._validate()

    def _validate(self) -> None:
        if len(self.edges) != len(self.nodes) - 1:
            raise SchemaError(
                f"join tree needs {len(self.nodes) - 1} edges for {len(self.nodes)} "
                f"relations, got {len(self.edges)}"
            )
        for e in self.edges:
            if not e.attrs:
                raise SchemaError(f"join tree edge {e.a}-{e.b} shares no attribute")
        # connectivity (acyclicity then follows from the edge count)
        if self.nodes:
            seen = {self.nodes[0]}
            frontier = [self.nodes[0]]
            while frontier:
                n = frontier.pop()
                for e in self.adjacency[n]:
                    m = e.other(n)
                    if m not in seen:
                        seen.add(m)
                        frontier.append(m)
            if seen != set(self.nodes):
                missing = sorted(set(self.nodes) - seen)
                raise SchemaError(f"join tree is disconnected; unreachable: {missing}")
        # running intersection: each attribute's relations form a subtree
        for attr in {a for attrs in self.node_attrs.values() for a in attrs}:
            holders = {n for n in self.nodes if attr in self.node_attrs[n]}
            start = next(iter(holders))
            seen = {start}
            frontier = [start]
            while frontier:
                n = frontier.pop()
                for e in self.adjacency[n]:
                    m = e.other(n)
                    if m in holders and m not in seen:
                        seen.add(m)
                        frontier.append(m)
            if seen != holders:
                raise SchemaError(
                    f"attribute {attr!r} violates the running-intersection property: "
                    f"its relations {sorted(holders)} are not connected in the tree"
                )

    def edge_between(self, a: str, b: str) -> JoinEdge:
        for e in self.adjacency[a]:
            if e.other(a) == b:
                return e
        raise SchemaError(f"no join tree edge between {a} and {b}")

    def rooted_parents(self, root: str) -> dict[str, str | None]:
        """Parent of each node when the tree hangs from `root`."""
        if root not in self.adjacency:
            raise QueryError(f"unknown root relation {root!r}")
        parents: dict[str, str | None] = {root: None}
        frontier = [root]
        while frontier:
            n = frontier.pop()
            for e in self.adjacency[n]:
                m = e.other(n)
                if m not in parents:
                    parents[m] = n
                    frontier.append(m)
        return parents

    def subtree_nodes(self, head: str, away_from: str) -> frozenset[str]:
        """Nodes of the component containing `head` when the edge toward
        `away_from` is removed."""
        seen = {head}
        frontier = [head]
        while frontier:
            n = frontier.pop()
            for e in self.adjacency[n]:
                m = e.other(n)
                if m == away_from and n == head:
                    continue
                if m not in seen:
                    seen.add(m)
                    frontier.append(m)
        if away_from in seen:
            raise SchemaError(f"{away_from} is not adjacent to {head}")
        return frozenset(seen)

    def attribute_nodes(self, attr: str) -> frozenset[str]:
        return frozenset(n for n in self.nodes if attr in self.node_attrs[n])

    def all_attributes(self) -> frozenset[str]:
        return frozenset(a for attrs in self.node_attrs.values() for a in attrs)


def build_join_tree(catalog: Catalog, edge_pairs: Sequence[tuple[str, str]]) -> JoinTree:
    edges = []
    for a, b in edge_pairs:
        for n in (a, b):
            if n not in catalog.relations:
                raise SchemaError(f"join tree edge references unknown relation {n!r}")
        shared = sorted(
            set(catalog.relations[a].attribute_names())
            & set(catalog.relations[b].attribute_names())
        )
        edges.append(JoinEdge(a, b, tuple(shared)))
    return JoinTree(catalog, edges)


@dataclass(frozen=True)
class AggregateSpec:
    """One SUM slot: constant * product of udf(attribute) factors.

    Factors are kept sorted by attribute; at most one factor per attribute
    (compose predicates into a single UDF when more are needed).
    """

    factors: tuple[tuple[str, str], ...]  # (attribute, udf name)
    constant: float = 1.0

    @staticmethod
    def of(factors: Iterable[tuple[str, str]], constant: float = 1.0) -> "AggregateSpec":
        ordered = tuple(sorted(factors))
        attrs = [a for a, _ in ordered]
        if len(set(attrs)) != len(attrs):
            dup = next(a for a in attrs if attrs.count(a) > 1)
            raise QueryError(
                f"aggregate has two factors on attribute {dup!r}; "
                f"compose them into one UDF instead"
            )
        return AggregateSpec(ordered, float(constant))

    def restricted(self, attrs: frozenset[str]) -> "AggregateSpec":
        """The sub-product over factors whose attribute lies in `attrs`."""
        return AggregateSpec(tuple(f for f in self.factors if f[0] in attrs), 1.0)


@dataclass(frozen=True)
class Query:
    id: str
    group_by: tuple[str, ...]  # sorted
    aggregates: tuple[AggregateSpec, ...]


@dataclass
class QueryBatch:
    queries: tuple[Query, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        ids = [q.id for q in self.queries]
        if len(set(ids)) != len(ids):
            raise QueryError("duplicate query id in batch")

    def __iter__(self):
        return iter(self.queries)

    def __len__(self) -> int:
        return len(self.queries)

    def query(self, qid: str) -> Query:
        for q in self.queries:
            if q.id == qid:
                return q
        raise QueryError(f"unknown query id {qid!r}")


def define_query(
    catalog: Catalog,
    tree: JoinTree,
    qid: str,
    group_by: Sequence[str],
    aggregates: Sequence[Sequence[tuple[str, str]]],
    constants: Sequence[float] | None = None,
) -> Query:
    """Validate and normalize one query definition against the catalog."""
    known = tree.all_attributes()
    for g in group_by:
        if g not in known:
            raise QueryError(f"query {qid}: group-by attribute {g!r} not in any relation")
    if len(set(group_by)) != len(group_by):
        raise QueryError(f"query {qid}: duplicate group-by attribute")
    if constants is None:
        constants = [1.0] * len(aggregates)
    if len(constants) != len(aggregates):
        raise QueryError(f"query {qid}: {len(constants)} constants for {len(aggregates)} aggregates")
    specs = []
    for factors, const in zip(aggregates, constants):
        for attr, udf in factors:
            if attr not in known:
                raise QueryError(f"query {qid}: factor attribute {attr!r} not in any relation")
            if udf not in catalog.udfs:
                raise QueryError(f"query {qid}: unknown UDF {udf!r}")
        specs.append(AggregateSpec.of(factors, const))
    if not specs:
        raise QueryError(f"query {qid}: at least one aggregate is required")
    return Query(qid, tuple(sorted(group_by)), tuple(specs))


def load_batch(catalog: Catalog, tree: JoinTree, path: str | Path) -> QueryBatch:
    """Parse a batch file: a JSON list of {id, group_by, aggregates} entries,
    each aggregate being a list of [attribute, udf] factor pairs."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise QueryError(f"cannot read batch file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise QueryError(f"{path}: JSON parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, list):
        raise QueryError(f"{path}: expected a JSON list of query definitions")
    queries = []
    for entry in doc:
        try:
            qid = entry["id"]
            group_by = entry.get("group_by", [])
            aggs = [
                [(str(attr), str(udf)) for attr, udf in agg] for agg in entry["aggregates"]
            ]
            constants = entry.get("constants")
        except (KeyError, TypeError, ValueError) as exc:
            raise QueryError(f"{path}: malformed query entry {entry!r}: {exc}") from exc
        queries.append(define_query(catalog, tree, qid, group_by, aggs, constants))
    return QueryBatch(tuple(queries))


@dataclass
class QueryResult:
    """Rows of one query, keyed by group-by values in sorted attribute order.

    Scalar queries have a single row under the empty key.
    """

    query_id: str
    key_attrs: tuple[str, ...]
    rows: dict[tuple, np.ndarray]

    def sorted_rows(self) -> list[tuple[tuple, np.ndarray]]:
        return sorted(self.rows.items(), key=lambda kv: kv[0])


def _scalar(value) -> int | float:
    if isinstance(value, (int, np.integer)):
        return int(value)
    return float(value)


def materialize_join(catalog: Catalog, tree: JoinTree) -> tuple[list[str], list[tuple]]:
    """The full natural join as explicit tuples, via hash joins along tree edges."""
    start = tree.nodes[0]
    first = catalog.table(start)
    attrs = list(first.definition.attribute_names())
    rows = [
        tuple(_scalar(first.columns[a][i]) for a in attrs) for i in range(first.n_rows)
    ]
    joined = {start}
    frontier = [start]
    while frontier:
        n = frontier.pop(0)
        for e in tree.adjacency[n]:
            m = e.other(n)
            if m in joined:
                continue
            rel = catalog.table(m)
            rel_attrs = list(rel.definition.attribute_names())
            # with running intersection, attributes shared with the partial
            # join are exactly the edge's
            key_attrs = list(e.attrs)
            new_attrs = [a for a in rel_attrs if a not in attrs]
            index: dict[tuple, list[tuple]] = {}
            for i in range(rel.n_rows):
                key = tuple(_scalar(rel.columns[a][i]) for a in key_attrs)
                ext = tuple(_scalar(rel.columns[a][i]) for a in new_attrs)
                index.setdefault(key, []).append(ext)
            pos = [attrs.index(a) for a in key_attrs]
            out = []
            for row in rows:
                key = tuple(row[p] for p in pos)
                for ext in index.get(key, ()):
                    out.append(row + ext)
            rows = out
            attrs = attrs + new_attrs
            joined.add(m)
            frontier.append(m)
    return attrs, rows


def oracle_evaluate(
    catalog: Catalog, tree: JoinTree, batch: QueryBatch | Sequence[Query]
) -> dict[str, QueryResult]:
    """Evaluate every query by scanning the materialized join."""
    attrs, rows = materialize_join(catalog, tree)
    pos = {a: i for i, a in enumerate(attrs)}
    results: dict[str, QueryResult] = {}
    for q in batch:
        key_pos = [pos[g] for g in q.group_by]
        acc: dict[tuple, np.ndarray] = {}
        evaluators = [
            (
                [(pos[a], catalog.udfs[u]) for a, u in spec.factors],
                spec.constant,
            )
            for spec in q.aggregates
        ]
        for row in rows:
            key = tuple(row[p] for p in key_pos)
            values = acc.get(key)
            if values is None:
                values = np.zeros(len(q.aggregates))
                acc[key] = values
            for j, (factors, const) in enumerate(evaluators):
                term = const
                for p, udf in factors:
                    term *= udf(row[p])
                values[j] += term
        if not q.group_by and not acc:
            acc[()] = np.zeros(len(q.aggregates))
        results[q.id] = QueryResult(q.id, q.group_by, acc)
    return results
