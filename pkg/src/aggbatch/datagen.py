"""Bundled datasets: a two-relation starter, a synthetic retail database in
the shape people know the engine by, gaussian blobs for clustering, and a
randomized instance generator for differential testing against the oracle.

Every dataset can be built in memory or written out as schema.json, CSVs,
and batch.json in the formats the loaders expect.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import (
    AttributeDef,
    Catalog,
    RelationDef,
    UdfDef,
    relation_from_rows,
)
from .errors import DataLoadError
from .queries import (
    JoinTree,
    Query,
    QueryBatch,
    build_join_tree,
    define_query,
    materialize_join,
)


def register_demo_udfs(catalog: Catalog) -> None:
    """The two nontrivial functions the bundled batches refer to by name.

    Integer-exact on integer inputs, so engine/oracle comparisons can demand
    equality rather than tolerance.
    """
    catalog.ensure_udf(UdfDef("g", lambda v: float(v) + 1.0, "value plus one"))
    catalog.ensure_udf(UdfDef("h", lambda v: 2.0 * float(v) + 1.0, "twice value plus one"))


@dataclass
class Dataset:
    """A schema document, raw rows per relation, and a batch document."""

    schema: dict
    tables: dict[str, list[tuple]]
    batch_doc: list[dict] = field(default_factory=list)

    def build(self) -> tuple[Catalog, JoinTree, QueryBatch]:
        relations = [
            RelationDef(
                r["name"],
                tuple(AttributeDef(a["name"], a["kind"], a["physical"]) for a in r["attributes"]),
                r.get("file"),
            )
            for r in self.schema["relations"]
        ]
        catalog = Catalog(relations)
        register_demo_udfs(catalog)
        for name, rows in self.tables.items():
            relation_from_rows(catalog, name, rows)
        tree = build_join_tree(catalog, self.schema["jointree"]["edges"])
        queries = [
            define_query(
                catalog,
                tree,
                q["id"],
                q.get("group_by", []),
                [[(a, u) for a, u in agg] for agg in q["aggregates"]],
                q.get("constants"),
            )
            for q in self.batch_doc
        ]
        return catalog, tree, QueryBatch(tuple(queries))

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        schema = json.loads(json.dumps(self.schema))  # deep copy before adding files
        for rel in schema["relations"]:
            rel["file"] = f"{rel['name'].lower()}.csv"
            with open(out / rel["file"], "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow([a["name"] for a in rel["attributes"]])
                writer.writerows(self.tables[rel["name"]])
        (out / "schema.json").write_text(json.dumps(schema, indent=2) + "\n")
        (out / "batch.json").write_text(json.dumps(self.batch_doc, indent=2) + "\n")
        return out


def _attr(name: str, kind: str, physical: str) -> dict:
    return {"name": name, "kind": kind, "physical": physical}


def db_tiny() -> Dataset:
    """Two relations, six rows. Small enough to check every number by hand."""
    schema = {
        "relations": [
            {
                "name": "R",
                "attributes": [
                    _attr("a", "categorical", "int64"),
                    _attr("b", "continuous", "int64"),
                ],
            },
            {
                "name": "S",
                "attributes": [
                    _attr("a", "categorical", "int64"),
                    _attr("c", "continuous", "int64"),
                ],
            },
        ],
        "jointree": {"edges": [["R", "S"]]},
    }
    tables = {
        "R": [(1, 10), (1, 20), (2, 30)],
        "S": [(1, 100), (2, 200), (2, 300)],
    }
    batch = [
        {"id": "QA", "group_by": [], "aggregates": [[["b", "identity"]]]},
        {"id": "QB", "group_by": ["a"], "aggregates": [[["c", "identity"]]]},
        {"id": "QC", "group_by": [], "aggregates": [[["b", "identity"], ["c", "identity"]]]},
    ]
    return Dataset(schema, tables, batch)


_FAMILIES = ["grocery", "beverages", "cleaning", "produce", "dairy", "deli"]
_HTYPES = ["none", "national", "regional", "local"]
_CITIES = ["quito", "guayaquil", "cuenca", "ambato"]
_STATES = ["pichincha", "guayas", "azuay"]
_STYPES = ["A", "B", "C", "D"]


def favorita(seed: int = 20260822, n_sales: int = 600) -> Dataset:
    """A synthetic retail database: sales at the center, transactions with
    stores and oil prices below, holidays and items to the sides.

    Sized so items have the largest domain, then dates, then stores, and so
    every store shows up in all three relations that mention one.
    """
    rng = np.random.default_rng(seed)
    n_items, n_dates, n_stores = 60, 40, 8

    schema = {
        "relations": [
            {
                "name": "Sales",
                "attributes": [
                    _attr("date", "categorical", "int64"),
                    _attr("store", "categorical", "int64"),
                    _attr("item", "categorical", "int64"),
                    _attr("units", "continuous", "int64"),
                    _attr("promo", "categorical", "int64"),
                ],
            },
            {
                "name": "Holidays",
                "attributes": [
                    _attr("date", "categorical", "int64"),
                    _attr("htype", "categorical", "string"),
                    _attr("locale", "categorical", "string"),
                    _attr("transferred", "categorical", "int64"),
                ],
            },
            {
                "name": "StoRes",
                "attributes": [
                    _attr("store", "categorical", "int64"),
                    _attr("city", "categorical", "string"),
                    _attr("state", "categorical", "string"),
                    _attr("stype", "categorical", "string"),
                    _attr("cluster", "categorical", "int64"),
                ],
            },
            {
                "name": "Items",
                "attributes": [
                    _attr("item", "categorical", "int64"),
                    _attr("family", "categorical", "string"),
                    _attr("class", "categorical", "int64"),
                    _attr("perishable", "categorical", "int64"),
                ],
            },
            {
                "name": "Transactions",
                "attributes": [
                    _attr("date", "categorical", "int64"),
                    _attr("store", "categorical", "int64"),
                    _attr("txns", "continuous", "int64"),
                ],
            },
            {
                "name": "Oil",
                "attributes": [
                    _attr("date", "categorical", "int64"),
                    _attr("price", "continuous", "float64"),
                ],
            },
        ],
        "jointree": {
            "edges": [
                ["Sales", "Transactions"],
                ["Transactions", "StoRes"],
                ["Transactions", "Oil"],
                ["Sales", "Items"],
                ["Sales", "Holidays"],
            ]
        },
    }

    sales = []
    for i in range(n_sales):
        # the first pass over items/dates/stores guarantees full domains
        item = (i % n_items) + 1
        date = (i % n_dates) + 1
        store = (i % n_stores) + 1
        if i >= n_items:
            item = int(rng.integers(1, n_items + 1))
            date = int(rng.integers(1, n_dates + 1))
            store = int(rng.integers(1, n_stores + 1))
        sales.append((date, store, item, int(rng.integers(1, 11)), int(rng.integers(0, 2))))
    sales = sorted(set(sales))

    holidays = [
        (d, _HTYPES[int(rng.integers(0, 4))] if d % 7 == 0 else "none",
         "ecuador", int(d % 11 == 0))
        for d in range(1, n_dates + 1)
    ]
    stores = [
        (s, _CITIES[(s - 1) % len(_CITIES)], _STATES[(s - 1) % len(_STATES)],
         _STYPES[(s - 1) % len(_STYPES)], int(rng.integers(1, 5)))
        for s in range(1, n_stores + 1)
    ]
    items = [
        (i, _FAMILIES[(i - 1) % len(_FAMILIES)], ((i - 1) % 12) + 1, int(i % 3 == 0))
        for i in range(1, n_items + 1)
    ]
    # drop a few date/store pairs so downstream views actually filter
    transactions = [
        (d, s, int(rng.integers(50, 151)))
        for d in range(1, n_dates + 1)
        for s in range(1, n_stores + 1)
        if not (d + s) % 17 == 0
    ]
    oil = [(d, round(float(50.0 + rng.normal(0.0, 5.0)), 2)) for d in range(1, n_dates + 1)]

    tables = {
        "Sales": sales,
        "Holidays": holidays,
        "StoRes": stores,
        "Items": items,
        "Transactions": transactions,
        "Oil": oil,
    }
    batch = [
        {"id": "Q1", "group_by": [], "aggregates": [[["units", "identity"]]]},
        {
            "id": "Q2",
            "group_by": ["store"],
            "aggregates": [[["item", "g"], ["date", "h"]]],
        },
        {
            "id": "Q3",
            "group_by": ["class"],
            "aggregates": [[["units", "identity"], ["price", "identity"]]],
        },
    ]
    return Dataset(schema, tables, batch)


def gaussian_mixture(
    seed: int = 7, n: int = 2000, k: int = 3, dims: int = 2, spread: float = 6.0, std: float = 0.8
) -> tuple[Dataset, np.ndarray]:
    """Points drawn from `k` spherical blobs, as a one-relation database.

    Returns the dataset and the blob centers that generated it.
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-spread, spread, size=(k, dims))
    assign = rng.integers(0, k, size=n)
    points = centers[assign] + rng.normal(0.0, std, size=(n, dims))
    names = [f"x{d}" for d in range(dims)]
    schema = {
        "relations": [
            {
                "name": "Points",
                "attributes": [_attr(nm, "continuous", "float64") for nm in names],
            }
        ],
        "jointree": {"edges": []},
    }
    rows = [tuple(round(float(v), 4) for v in p) for p in points]
    tables = {"Points": rows}
    batch = [{"id": "Qn", "group_by": [], "aggregates": [[]]}]
    return Dataset(schema, tables, batch), centers


def random_instance(
    rng: np.random.Generator,
    max_relations: int = 5,
    max_queries: int = 12,
    max_rows: int = 60,
    float_frac: float = 0.0,
) -> tuple[Catalog, JoinTree, QueryBatch]:
    """A random acyclic schema, data, and batch for oracle comparisons.

    New relations attach to a random existing one and may reuse attributes
    already on it (including inherited join attributes), which keeps every
    attribute's relations connected in the tree by construction. By default
    values and functions stay integer-valued, so results compare exactly;
    with float_frac > 0 that share of payload attributes carries continuous
    values instead. Float attributes never join and never group, so they
    only feed aggregate products.
    """
    n_rel = int(rng.integers(2, max_relations + 1))
    rel_names = [f"T{i}" for i in range(n_rel)]
    attrs_of: dict[str, list[str]] = {}
    float_attrs: set[str] = set()
    edges: list[tuple[str, str]] = []
    fresh = 0

    def new_attr(can_float: bool = False) -> str:
        nonlocal fresh
        fresh += 1
        name = f"x{fresh}"
        if can_float and rng.random() < float_frac:
            float_attrs.add(name)
        return name

    attrs_of[rel_names[0]] = [new_attr()] + [
        new_attr(can_float=True) for _ in range(int(rng.integers(0, 3)))
    ]
    for idx in range(1, n_rel):
        name = rel_names[idx]
        parent = rel_names[int(rng.integers(0, idx))]
        joinable = [a for a in attrs_of[parent] if a not in float_attrs]
        shared_n = int(rng.integers(1, min(2, len(joinable)) + 1))
        pick = rng.choice(len(joinable), size=shared_n, replace=False)
        shared = [joinable[int(i)] for i in pick]
        own = [new_attr(can_float=True) for _ in range(int(rng.integers(0, 3)))]
        attrs_of[name] = shared + own
        edges.append((parent, name))

    relations = [
        RelationDef(
            name,
            tuple(
                AttributeDef(a, "continuous", "float64")
                if a in float_attrs
                else AttributeDef(a, "categorical", "int64")
                for a in attrs_of[name]
            ),
        )
        for name in rel_names
    ]
    catalog = Catalog(relations)
    register_demo_udfs(catalog)

    def cell(attr: str, domain: int):
        if attr in float_attrs:
            return round(float(rng.uniform(-2.0, 2.0)), 3)
        return int(rng.integers(0, domain))

    while True:
        for name in rel_names:
            n_rows = int(rng.integers(0, max_rows + 1))
            domain = int(rng.integers(2, 7))
            rows = {
                tuple(cell(a, domain) for a in attrs_of[name])
                for _ in range(n_rows)
            }
            relation_from_rows(catalog, name, sorted(rows))
        tree = build_join_tree(catalog, edges)
        size = _join_size(catalog, tree)
        if size <= 20000:
            break

    all_attrs = sorted(tree.all_attributes())
    groupable = [a for a in all_attrs if a not in float_attrs]
    udf_pool = ["identity", "g", "h", "one", "square"]
    queries: list[Query] = []
    n_q = int(rng.integers(1, max_queries + 1))
    for qi in range(n_q):
        n_group = int(rng.integers(0, 3))
        pick = rng.choice(len(groupable), size=min(n_group, len(groupable)), replace=False)
        group_by = [groupable[int(i)] for i in pick]
        aggs = []
        for _ in range(int(rng.integers(1, 3))):
            n_f = int(rng.integers(0, 3))
            fpick = rng.choice(len(all_attrs), size=min(n_f, len(all_attrs)), replace=False)
            aggs.append(
                [
                    (all_attrs[int(i)], udf_pool[int(rng.integers(0, len(udf_pool)))])
                    for i in fpick
                ]
            )
        consts = [float(rng.integers(1, 4)) for _ in aggs]
        queries.append(define_query(catalog, tree, f"Q{qi}", group_by, aggs, consts))
    return catalog, tree, QueryBatch(tuple(queries))


def _join_size(catalog: Catalog, tree: JoinTree) -> int:
    _attrs, rows = materialize_join(catalog, tree)
    return len(rows)


def load_dataset(path: str | Path) -> Dataset:
    """Read a written dataset back: schema.json, the CSVs it names, and the
    batch.json beside it (missing batch file means an empty batch)."""
    p = Path(path)
    if p.is_dir():
        p = p / "schema.json"
    try:
        schema = json.loads(p.read_text())
    except OSError as exc:
        raise DataLoadError(f"cannot read schema {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataLoadError(f"{p}: JSON parse error at line {exc.lineno}: {exc.msg}") from exc
    base = p.parent

    tables: dict[str, list[tuple]] = {}
    for rel in schema.get("relations", []):
        fname = rel.get("file")
        if not fname:
            raise DataLoadError(f"relation {rel.get('name')}: schema names no data file")
        physical = [a["physical"] for a in rel["attributes"]]
        rows = []
        try:
            with open(base / fname, newline="") as f:
                reader = csv.reader(f)
                next(reader, None)  # header
                for raw in reader:
                    if len(raw) != len(physical):
                        raise DataLoadError(
                            f"{fname}: row has {len(raw)} fields, expected {len(physical)}"
                        )
                    rows.append(
                        tuple(
                            int(v) if ph == "int64" else float(v) if ph == "float64" else v
                            for v, ph in zip(raw, physical)
                        )
                    )
        except OSError as exc:
            raise DataLoadError(f"cannot read {fname}: {exc}") from exc
        except ValueError as exc:
            raise DataLoadError(f"{fname}: {exc}") from exc
        tables[rel["name"]] = rows

    batch_path = base / "batch.json"
    batch_doc = []
    if batch_path.exists():
        batch_doc = json.loads(batch_path.read_text())
    return Dataset(schema=schema, tables=tables, batch_doc=batch_doc)
