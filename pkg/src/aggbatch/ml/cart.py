"""CART regression trees grown on aggregate results.

A node never sees its data fragment. Per candidate attribute it asks the
engine for per-value (count, sum, sum-of-squares) histograms, with the
node's path conditions folded in as indicator factors; split scoring is then
prefix-sum arithmetic over those histograms. All nodes of one tree level
share a single engine batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..catalog import (
    _COMPARATORS,
    CONTINUOUS,
    Catalog,
    UdfDef,
    comparison_udf,
    conjunction_udf,
)
from ..engine import EngineSession
from ..errors import TrainingError
from ..queries import JoinTree, QueryBatch, define_query

DEFAULT_MAX_DEPTH = 4
DEFAULT_MIN_LEAF = 2
MIN_REDUCTION = 1e-12


def variance_of(count: float, sum_y: float, sum_y2: float) -> float:
    """Total squared deviation of a fragment: SUM(y²) − SUM(y)²/n."""
    if count <= 0:
        return 0.0
    return sum_y2 - (sum_y * sum_y) / count


@dataclass
class TreeNode:
    node_id: int
    depth: int
    conditions: list[tuple[str, str, float]]  # (attribute, op, threshold) path
    count: float = 0.0
    sum_y: float = 0.0
    sum_y2: float = 0.0
    split: tuple[str, str, float] | None = None
    yes: "TreeNode | None" = None  # condition holds
    no: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def prediction(self) -> float:
        return self.sum_y / self.count if self.count > 0 else 0.0

    @property
    def variance(self) -> float:
        return variance_of(self.count, self.sum_y, self.sum_y2)

    def to_json(self) -> dict:
        base = {
            "id": self.node_id,
            "count": self.count,
            "mean": self.prediction,
            "variance": self.variance,
        }
        if self.is_leaf:
            base["kind"] = "leaf"
        else:
            attr, op, t = self.split
            base.update(kind="split", attribute=attr, op=op, threshold=t)
            base["yes"] = self.yes.to_json()
            base["no"] = self.no.to_json()
        return base


def _path_factors(
    catalog: Catalog,
    conditions: list[tuple[str, str, float]],
    label: str | None = None,
    power: int = 0,
) -> list[tuple[str, str]]:
    """Indicator factors for a condition list, at most one per attribute.

    With `power` 1 or 2, the label value (or its square) rides along; if the
    label itself carries conditions they get composed into the same UDF,
    since an aggregate admits only one factor per attribute.
    """
    by_attr: dict[str, list[tuple[str, float]]] = {}
    for attr, op, t in conditions:
        by_attr.setdefault(attr, []).append((op, t))
    factors: list[tuple[str, str]] = []
    for attr in sorted(by_attr):
        conds = by_attr[attr]
        if attr == label and power:
            continue  # composed below
        udf = comparison_udf(*conds[0]) if len(conds) == 1 else conjunction_udf(conds)
        factors.append((attr, catalog.ensure_udf(udf)))
    if label is not None and power:
        conds = by_attr.get(label, [])
        if not conds:
            factors.append((label, "identity" if power == 1 else "square"))
            return factors
        name = ("y" if power == 1 else "y2") + "[" + "&".join(
            f"{op}{t}" for op, t in conds
        ) + "]"

        def evaluate(v: float, conds=tuple(conds), power=power) -> float:
            if any(not _COMPARATORS[op](v, t) for op, t in conds):
                return 0.0
            return float(v) ** power

        factors.append((label, catalog.ensure_udf(UdfDef(name, evaluate))))
    return factors


def node_batch_queries(
    catalog: Catalog,
    tree: JoinTree,
    node: TreeNode,
    features: list[str],
    label: str,
) -> list:
    """Per candidate attribute: GROUP BY it, with SUM(1), SUM(Y), SUM(Y²)."""
    queries = []
    for attr in features:
        aggs = [
            _path_factors(catalog, node.conditions),
            _path_factors(catalog, node.conditions, label, power=1),
            _path_factors(catalog, node.conditions, label, power=2),
        ]
        queries.append(
            define_query(catalog, tree, f"n{node.node_id}|{attr}", [attr], aggs)
        )
    return queries


@dataclass
class _Split:
    score: float
    attr: str
    op: str
    threshold: float
    yes_stats: tuple[float, float, float]
    no_stats: tuple[float, float, float]
    no_op: str  # condition for the false side when re-queried
    no_threshold: float


def best_split(
    node: TreeNode, per_attr_rows: dict[str, dict], kinds: dict[str, str]
) -> _Split | None:
    """Exhaustive scan of candidate thresholds from the histograms.

    Continuous attributes test every observed value as an upper bound;
    categorical ones test equality per code. Ties fall to the smaller
    attribute name, then the smaller threshold.
    """
    best: _Split | None = None

    def consider(candidate: _Split) -> None:
        nonlocal best
        if best is None or (candidate.score, candidate.attr, candidate.threshold) < (
            best.score,
            best.attr,
            best.threshold,
        ):
            best = candidate

    for attr in sorted(per_attr_rows):
        rows = [
            (float(key[0]), vec)
            for key, vec in per_attr_rows[attr].items()
            if vec[0] > 0
        ]
        rows.sort(key=lambda kv: kv[0])
        if len(rows) < 2:
            continue
        values = np.array([v for v, _ in rows])
        stats = np.array([vec for _, vec in rows])  # columns: n, sy, syy
        totals = stats.sum(axis=0)
        if abs(totals[0] - node.count) > 1e-6:
            raise TrainingError(
                f"histogram for {attr} covers {totals[0]} rows, node has {node.count}"
            )
        prefix = np.cumsum(stats, axis=0)
        if kinds[attr] == CONTINUOUS:
            for i in range(len(rows) - 1):
                ln, ls, lq = prefix[i]
                rn, rs, rq = totals - prefix[i]
                score = variance_of(ln, ls, lq) + variance_of(rn, rs, rq)
                consider(
                    _Split(
                        score,
                        attr,
                        "<=",
                        float(values[i]),
                        (ln, ls, lq),
                        (rn, rs, rq),
                        ">=",
                        float(values[i + 1]),
                    )
                )
        else:
            for i in range(len(rows)):
                ln, ls, lq = stats[i]
                rn, rs, rq = totals - stats[i]
                score = variance_of(ln, ls, lq) + variance_of(rn, rs, rq)
                consider(
                    _Split(
                        score,
                        attr,
                        "==",
                        float(values[i]),
                        (ln, ls, lq),
                        (rn, rs, rq),
                        "!=",
                        float(values[i]),
                    )
                )
    return best


@dataclass
class CartModel:
    features: list[str]
    label: str
    max_depth: int
    min_leaf: int
    root: TreeNode
    engine_queries: list[str] = field(default_factory=list)
    timings_ms: dict[str, float] = field(default_factory=dict)

    def predict(self, assignment: dict[str, float]) -> float:
        node = self.root
        while not node.is_leaf:
            attr, op, t = node.split
            node = node.yes if _COMPARATORS[op](float(assignment[attr]), t) else node.no
        return node.prediction

    def n_leaves(self) -> int:
        def count(n: TreeNode) -> int:
            return 1 if n.is_leaf else count(n.yes) + count(n.no)

        return count(self.root)

    def to_json(self) -> dict:
        return {
            "kind": "cart",
            "features": self.features,
            "label": self.label,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "leaves": self.n_leaves(),
            "tree": self.root.to_json(),
            "engine_queries": self.engine_queries,
            "timings_ms": self.timings_ms,
        }


def train_cart(
    catalog: Catalog,
    tree: JoinTree,
    features: list[str],
    label: str,
    max_depth: int = DEFAULT_MAX_DEPTH,
    min_leaf: int = DEFAULT_MIN_LEAF,
    threads: int = 1,
    root_overrides: dict[str, str] | None = None,
) -> CartModel:
    if label in features:
        raise TrainingError(f"label {label!r} cannot also be a split feature")
    if catalog.attribute_kind(label) != CONTINUOUS:
        raise TrainingError(f"label {label!r} must be continuous")
    kinds = {a: catalog.attribute_kind(a) for a in features}

    model = CartModel(list(features), label, max_depth, min_leaf, TreeNode(0, 0, []))
    root_q = define_query(
        catalog,
        tree,
        "n0|stats",
        [],
        [
            [],
            [(label, "identity")],
            [(label, "square")],
        ],
    )
    session = EngineSession(catalog, tree, QueryBatch((root_q,)), root_overrides=root_overrides)
    stats = next(iter(session.run(threads=threads)["n0|stats"].rows.values()))
    model.engine_queries.append(root_q.id)
    model.timings_ms["aggregates"] = session.report.total_ms
    root = model.root
    root.count, root.sum_y, root.sum_y2 = (float(v) for v in stats)

    next_id = 1
    frontier = [root]
    while frontier:
        growable = [
            n
            for n in frontier
            if n.depth < max_depth and n.count >= min_leaf and n.variance > MIN_REDUCTION
        ]
        if not growable:
            break
        queries = []
        for n in growable:
            queries.append((n, node_batch_queries(catalog, tree, n, features, label)))
        batch = QueryBatch(tuple(q for _, qs in queries for q in qs))
        session = EngineSession(catalog, tree, batch, root_overrides=root_overrides)
        results = session.run(threads=threads)
        model.engine_queries.extend(q.id for q in batch)
        model.timings_ms["aggregates"] += session.report.total_ms
        model.timings_ms[f"depth{growable[0].depth}"] = session.report.total_ms

        frontier = []
        for n, qs in queries:
            per_attr = {q.id.split("|", 1)[1]: results[q.id].rows for q in qs}
            split = best_split(n, per_attr, kinds)
            if split is None or n.variance - split.score <= MIN_REDUCTION:
                continue
            n.split = (split.attr, split.op, split.threshold)
            yes = TreeNode(
                next_id,
                n.depth + 1,
                n.conditions + [(split.attr, split.op, split.threshold)],
            )
            no = TreeNode(
                next_id + 1,
                n.depth + 1,
                n.conditions + [(split.attr, split.no_op, split.no_threshold)],
            )
            next_id += 2
            yes.count, yes.sum_y, yes.sum_y2 = split.yes_stats
            no.count, no.sum_y, no.sum_y2 = split.no_stats
            if abs(yes.count + no.count - n.count) > 1e-6:
                raise TrainingError("child fragment counts do not add up to the parent")
            n.yes, n.no = yes, no
            frontier.extend([yes, no])
    return model
