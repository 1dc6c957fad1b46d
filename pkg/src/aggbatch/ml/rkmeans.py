"""Clustering over a grid coreset, with every data-touching step phrased as
an aggregate query.

Step 1 asks for per-dimension value weights (n queries). Step 2 clusters
each projection with weighted k-means. Step 3 installs the per-dimension
assignments as real relations joined into the tree and asks one grid query
for the weight of every centroid combination. Step 4 clusters the weighted
grid. So the data is touched by exactly n+1 queries, and everything after
runs on a table whose size is bounded by the product of the per-dimension
cluster counts, not by the join.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..catalog import CONTINUOUS, AttributeDef, Catalog, RelationDef, relation_from_rows
from ..engine import EngineSession
from ..errors import TrainingError
from ..queries import JoinEdge, JoinTree, QueryBatch, define_query

LLOYD_TOL = 1e-9
LLOYD_MAX_ITERS = 300


def weighted_lloyd(
    points: np.ndarray,
    weights: np.ndarray,
    k: int,
    rng: np.random.Generator,
    trace: list[float] | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Weighted k-means with k-means++ seeding.

    Returns (centroids, per-point assignment, objective). Ties in nearest
    centroid go to the smallest index; empty clusters keep their previous
    centroid. Reduces k to the number of points when asked for more. Pass a
    list as `trace` to collect the objective after every assignment step.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 1 and points.shape[1] > 1 and weights.shape[0] > 1:
        points = points.T
    weights = np.asarray(weights, dtype=np.float64)
    m = points.shape[0]
    if k <= 0:
        raise TrainingError(f"cluster count must be positive, got {k}")
    if m == 0 or float(weights.sum()) <= 0:
        raise TrainingError("no weighted points to cluster")
    if k > m:
        warnings.warn(f"reducing k from {k} to the {m} distinct points available")
        k = m

    # seeding: first pick weight-proportional, then weight·distance² proportional
    total = weights / weights.sum()
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.choice(m, p=total))
    centroids[0] = points[first]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        mass = weights * closest
        if mass.sum() <= 0:
            # all remaining points coincide with chosen centroids
            idx = int(rng.choice(m, p=total))
        else:
            idx = int(rng.choice(m, p=mass / mass.sum()))
        centroids[i] = points[idx]
        closest = np.minimum(closest, ((points - centroids[i]) ** 2).sum(axis=1))

    assignment = np.zeros(m, dtype=np.int64)
    for _ in range(LLOYD_MAX_ITERS):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assignment = np.argmin(d2, axis=1)
        if trace is not None:
            trace.append(float((weights * d2[np.arange(m), assignment]).sum()))
        moved = 0.0
        for c in range(k):
            mask = assignment == c
            wsum = float(weights[mask].sum())
            if wsum > 0:
                new = (weights[mask, None] * points[mask]).sum(axis=0) / wsum
                moved = max(moved, float(np.linalg.norm(new - centroids[c])))
                centroids[c] = new
        if moved < LLOYD_TOL:
            break
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assignment = np.argmin(d2, axis=1)
    objective = float((weights * d2[np.arange(m), assignment]).sum())
    return centroids, assignment, objective


def nearest_centroid(point, centroids: np.ndarray) -> int:
    point = np.asarray(point, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    if point.shape[0] != centroids.shape[1]:
        raise TrainingError(
            f"point has {point.shape[0]} dimensions, centroids have {centroids.shape[1]}"
        )
    d2 = ((centroids - point) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def step1_batch(catalog: Catalog, tree: JoinTree, dims: list[str]) -> QueryBatch:
    for d in dims:
        if catalog.attribute_kind(d) != CONTINUOUS:
            raise TrainingError(f"dimension {d!r} is categorical; clustering needs numeric values")
    queries = [define_query(catalog, tree, f"dim[{d}]", [d], [[]]) for d in dims]
    return QueryBatch(tuple(queries))


def _home_relation(catalog: Catalog, attr: str) -> str:
    for name, rel in catalog.relations.items():
        if attr in rel.attribute_names():
            return name
    raise TrainingError(f"attribute {attr!r} not found in any relation")


def attach_cell_relations(
    catalog: Catalog,
    tree: JoinTree,
    assignments: dict[str, list[tuple[float, int]]],
) -> tuple[Catalog, JoinTree, dict[str, str]]:
    """Install each dimension's (value → centroid index) table as a relation
    joined to that dimension's home node; returns the extended catalog and
    tree plus the dimension → cell-attribute map."""
    cell_attr = {d: f"{d}__cell" for d in assignments}
    defs = list(catalog.relations.values())
    new_edges: list[JoinEdge] = []
    cell_defs = []
    for d in assignments:
        home = _home_relation(catalog, d)
        value_def = catalog.relations[home].attribute(d)
        cell_defs.append(
            RelationDef(
                f"{d}__cells",
                (
                    AttributeDef(d, value_def.kind, value_def.physical),
                    AttributeDef(cell_attr[d], "categorical", "int64"),
                ),
            )
        )
        new_edges.append(JoinEdge(home, f"{d}__cells", (d,)))

    extended = Catalog(defs + cell_defs)
    for attr, words in catalog.dictionaries.items():
        extended.dictionaries[attr] = list(words)
        extended._dict_index[attr] = dict(catalog._dict_index[attr])
    extended.udfs.update(catalog.udfs)
    extended.tables.update(catalog.tables)
    extended.stats.update(catalog.stats)
    for d, rows in assignments.items():
        relation_from_rows(extended, f"{d}__cells", rows)
    new_tree = JoinTree(extended, tuple(tree.edges) + tuple(new_edges))
    return extended, new_tree, cell_attr


@dataclass
class RkmeansModel:
    dimensions: list[str]
    k: int
    k_per_dim: int
    seed: int
    per_dim_centroids: dict[str, list[float]]
    centroids: list[list[float]]
    grid_size: int
    n_rows: float
    grid_weight_total: float
    coreset_ratio: float
    grid_objective: float
    full_objective: float | None = None
    baseline_objective: float | None = None
    relative_gap: float | None = None
    engine_queries: list[str] = field(default_factory=list)
    timings_ms: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": "rkmeans",
            "dimensions": self.dimensions,
            "k": self.k,
            "k_per_dim": self.k_per_dim,
            "seed": self.seed,
            "per_dim_centroids": self.per_dim_centroids,
            "centroids": self.centroids,
            "grid_size": self.grid_size,
            "rows": self.n_rows,
            "grid_weight_total": self.grid_weight_total,
            "coreset_ratio": self.coreset_ratio,
            "grid_objective": self.grid_objective,
            "full_objective": self.full_objective,
            "baseline_objective": self.baseline_objective,
            "relative_gap": self.relative_gap,
            "engine_queries": self.engine_queries,
            "timings_ms": self.timings_ms,
        }


def train_rkmeans(
    catalog: Catalog,
    tree: JoinTree,
    dims: list[str],
    k: int,
    k_per_dim: int | None = None,
    seed: int = 0,
    threads: int = 1,
    restarts: int = 10,
    baseline_restarts: int = 10,
    root_overrides: dict[str, str] | None = None,
) -> RkmeansModel:
    """Steps 1-4, plus (when `baseline_restarts` > 0) a conventional Lloyd's
    baseline over the full data for the quality gap metric.

    The grid clustering takes the best of `restarts` seeded Lloyd's runs:
    the grid is tiny, so restarts cost nothing, and a single run can stall
    in a local optimum that merges two cells. The baseline also runs through
    the engine, as one group-by over all dimensions: distinct points with
    multiplicities are exactly the weighted input Lloyd's needs.
    """
    if k_per_dim is None:
        k_per_dim = k
    batch1 = step1_batch(catalog, tree, dims)
    session = EngineSession(catalog, tree, batch1, root_overrides=root_overrides)
    res1 = session.run(threads=threads)
    timings: dict[str, float] = {}
    for stat in session.report.groups:
        for d in dims:
            if f"dim[{d}]" in stat.output_rows:
                timings[f"dim[{d}]"] = timings.get(f"dim[{d}]", 0.0) + stat.wall_ms

    per_dim_values: dict[str, np.ndarray] = {}
    per_dim_centroids: dict[str, np.ndarray] = {}
    assignments: dict[str, list[tuple[float, int]]] = {}
    n_rows = 0.0
    for di, d in enumerate(dims):
        rows = res1[f"dim[{d}]"].sorted_rows()
        values = np.array([float(key[0]) for key, _ in rows])
        weights = np.array([float(vec[0]) for _, vec in rows])
        n_rows = float(weights.sum())
        if values.size == 0:
            raise TrainingError("empty dataset: nothing to cluster")
        rng = np.random.default_rng([seed, di])
        centroids, assign, _ = weighted_lloyd(values[:, None], weights, k_per_dim, rng)
        per_dim_values[d] = values
        per_dim_centroids[d] = centroids[:, 0]
        assignments[d] = [(float(v), int(c)) for v, c in zip(values, assign)]

    extended, ext_tree, cell_attr = attach_cell_relations(catalog, tree, assignments)
    grid_q = define_query(
        extended, ext_tree, "grid", [cell_attr[d] for d in dims], [[]]
    )
    grid_session = EngineSession(extended, ext_tree, QueryBatch((grid_q,)))
    grid_res = grid_session.run(threads=threads)["grid"]
    timings["grid"] = grid_session.report.total_ms

    attr_to_dim = {cell_attr[d]: d for d in dims}
    key_dims = [attr_to_dim[a] for a in grid_res.key_attrs]
    grid_points = []
    grid_weights = []
    for key, vec in grid_res.sorted_rows():
        grid_points.append(
            [float(per_dim_centroids[d][int(c)]) for d, c in zip(key_dims, key)]
        )
        grid_weights.append(float(vec[0]))
    grid_points = np.array(grid_points)
    grid_weights = np.array(grid_weights)
    # column order follows the sorted group-by; restore the caller's
    dim_order = [key_dims.index(d) for d in dims]
    grid_points = grid_points[:, dim_order]
    if abs(float(grid_weights.sum()) - n_rows) > 1e-9:
        raise TrainingError(
            f"grid weights sum to {grid_weights.sum()}, expected {n_rows}"
        )

    t0 = time.perf_counter()
    best_run = None
    for r in range(max(1, restarts)):
        rng = np.random.default_rng([seed, len(dims), r])
        run = weighted_lloyd(grid_points, grid_weights, k, rng)
        if best_run is None or run[2] < best_run[2]:
            best_run = run
    centroids, _, grid_obj = best_run
    timings["lloyd"] = (time.perf_counter() - t0) * 1000.0

    model = RkmeansModel(
        dimensions=list(dims),
        k=k,
        k_per_dim=k_per_dim,
        seed=seed,
        per_dim_centroids={d: [float(v) for v in per_dim_centroids[d]] for d in dims},
        centroids=[[float(v) for v in c] for c in centroids],
        grid_size=len(grid_points),
        n_rows=n_rows,
        grid_weight_total=float(grid_weights.sum()),
        coreset_ratio=len(grid_points) / n_rows if n_rows else 0.0,
        grid_objective=grid_obj,
        engine_queries=[q.id for q in batch1] + ["grid"],
        timings_ms=timings,
    )

    if baseline_restarts > 0:
        full_q = define_query(catalog, tree, "full", list(dims), [[]])
        full_session = EngineSession(catalog, tree, QueryBatch((full_q,)))
        full_res = full_session.run(threads=threads)["full"]
        pos = {a: i for i, a in enumerate(full_res.key_attrs)}
        pts = []
        wts = []
        for key, vec in full_res.sorted_rows():
            pts.append([float(key[pos[d]]) for d in dims])
            wts.append(float(vec[0]))
        pts = np.array(pts)
        wts = np.array(wts)

        best = None
        for r in range(baseline_restarts):
            rng = np.random.default_rng([seed, 1000 + r])
            _, _, obj = weighted_lloyd(pts, wts, k, rng)
            best = obj if best is None else min(best, obj)
        model.full_objective = _objective_at(pts, wts, np.array(model.centroids))
        model.baseline_objective = best
        model.relative_gap = (
            (model.full_objective - best) / best if best and best > 0 else 0.0
        )
    return model


def _objective_at(points: np.ndarray, weights: np.ndarray, centroids: np.ndarray) -> float:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float((weights * d2.min(axis=1)).sum())
