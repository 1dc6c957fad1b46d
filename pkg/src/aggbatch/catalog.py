"""Schema and data ingestion.

Relations are held in memory as columns of int64/float64 numpy arrays.
String-valued categorical attributes are dictionary-coded to dense integer
codes in order of first appearance; the dictionary is kept per attribute name
at the catalog level so that a shared join attribute codes identically in
every relation that declares it. A relation can be re-sorted under any
attribute order; the sorted form exposes run boundaries per prefix length,
which is what the plan interpreter walks as a trie.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataLoadError, SchemaError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

PHYSICAL_KINDS = ("int64", "float64", "string")


@dataclass(frozen=True)
class AttributeDef:
    name: str
    kind: str  # continuous | categorical
    physical: str  # int64 | float64 | string

    def __post_init__(self) -> None:
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"attribute {self.name}: unknown kind {self.kind!r}")
        if self.physical not in PHYSICAL_KINDS:
            raise SchemaError(f"attribute {self.name}: unknown physical type {self.physical!r}")
        if self.physical == "string" and self.kind != CATEGORICAL:
            raise SchemaError(f"attribute {self.name}: string storage requires categorical kind")


@dataclass(frozen=True)
class RelationDef:
    name: str
    attributes: tuple[AttributeDef, ...]
    file: str | None = None

    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute(self, name: str) -> AttributeDef:
        for a in self.attributes:
            if a.name == name:
                return a
        raise SchemaError(f"relation {self.name} has no attribute {name!r}")


@dataclass
class DomainStats:
    distinct_count: int
    tuple_count: int
    min_value: float | None = None  # continuous attributes only
    max_value: float | None = None


@dataclass(frozen=True)
class UdfDef:
    """Scalar UDF of arity one, applied to a single attribute's value.

    Dictionary-coded attributes present their integer code to the evaluator.
    """

    name: str
    evaluator: Callable[[float], float]
    description: str = ""

    def __call__(self, value: float) -> float:
        return self.evaluator(value)


def _builtin_udfs() -> dict[str, UdfDef]:
    return {
        "identity": UdfDef("identity", lambda v: float(v), "the value itself"),
        "one": UdfDef("one", lambda v: 1.0, "constant 1"),
        "square": UdfDef("square", lambda v: float(v) * float(v), "value squared"),
        "indicator": UdfDef("indicator", lambda v: 1.0 if v != 0 else 0.0, "1 when nonzero"),
    }


_COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    "<=": lambda v, t: v <= t,
    ">=": lambda v, t: v >= t,
    "==": lambda v, t: v == t,
    "!=": lambda v, t: v != t,
}


def comparison_udf(op: str, threshold: float) -> UdfDef:
    """Build an indicator UDF for a single comparison, with a canonical name."""
    if op not in _COMPARATORS:
        raise SchemaError(f"unsupported comparison operator {op!r}")
    cmp = _COMPARATORS[op]
    t = float(threshold)
    name = f"ind[{op}{_fmt_threshold(t)}]"
    return UdfDef(name, lambda v: 1.0 if cmp(v, t) else 0.0, f"1 when value {op} {t}")


def conjunction_udf(conditions: Sequence[tuple[str, float]]) -> UdfDef:
    """Indicator for a conjunction of comparisons on one attribute.

    Needed because an aggregate may carry at most one factor per attribute, so
    stacked conditions on the same attribute must become a single registered UDF.
    """
    conds = tuple((op, float(t)) for op, t in conditions)
    for op, _ in conds:
        if op not in _COMPARATORS:
            raise SchemaError(f"unsupported comparison operator {op!r}")
    name = "ind[" + "&".join(f"{op}{_fmt_threshold(t)}" for op, t in conds) + "]"

    def evaluate(v: float) -> float:
        return 1.0 if all(_COMPARATORS[op](v, t) for op, t in conds) else 0.0

    return UdfDef(name, evaluate, "conjunction of comparisons")


def _fmt_threshold(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(t)


class ColumnTrie:
    """Run boundaries of a block of sorted columns, one level per column.

    level_starts[k] holds the start offsets of maximal runs of equal values in
    the first k+1 columns. Offsets always include 0 and exclude n.
    """

    def __init__(self, columns: Sequence[np.ndarray], n_rows: int):
        self.columns = [np.asarray(c) for c in columns]
        self.n_rows = n_rows
        self.level_starts: list[np.ndarray] = []
        changed = np.zeros(n_rows, dtype=bool)
        if n_rows:
            changed[0] = True
        for col in self.columns:
            if n_rows:
                changed[1:] |= col[1:] != col[:-1]
            self.level_starts.append(np.flatnonzero(changed))

    def runs(self, level: int, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        """Distinct values and run starts of column `level` within [lo, hi).

        The caller guarantees [lo, hi) is a run of the previous level, so the
        values come out in sorted order.
        """
        starts = self.level_starts[level]
        i = np.searchsorted(starts, lo, side="left")
        j = np.searchsorted(starts, hi, side="left")
        run_starts = starts[i:j]
        return self.columns[level][run_starts], run_starts


class SortedRelation:
    """A relation's columns under a specific sort order."""

    def __init__(
        self,
        definition: RelationDef,
        columns: dict[str, np.ndarray],
        sort_order: tuple[str, ...],
        dictionaries: dict[str, list[str]],
    ):
        self.definition = definition
        self.columns = columns
        self.sort_order = sort_order
        self.dictionaries = dictionaries  # shared, catalog-level
        self.n_rows = int(next(iter(columns.values())).shape[0]) if columns else 0
        self.trie = ColumnTrie([columns[a] for a in sort_order], self.n_rows)

    @property
    def name(self) -> str:
        return self.definition.name

    def decode(self, attr: str, code: int):
        """Dictionary round-trip for coded categoricals; identity otherwise."""
        if attr in self.dictionaries:
            return self.dictionaries[attr][int(code)]
        return code


def resort(relation: SortedRelation, order: Sequence[str]) -> SortedRelation:
    """Return the relation sorted by `order`; omitted attributes are appended
    in declaration order."""
    declared = relation.definition.attribute_names()
    for a in order:
        if a not in declared:
            raise SchemaError(f"resort of {relation.name}: unknown attribute {a!r}")
    if len(set(order)) != len(order):
        raise SchemaError(f"resort of {relation.name}: duplicate attribute in order")
    full = tuple(order) + tuple(a for a in declared if a not in order)
    if full == relation.sort_order:
        return relation
    # lexsort's primary key is the last element
    keys = [relation.columns[a] for a in reversed(full)]
    perm = np.lexsort(keys) if relation.n_rows else np.arange(0)
    columns = {a: relation.columns[a][perm] for a in declared}
    return SortedRelation(relation.definition, columns, full, relation.dictionaries)


class Catalog:
    """All schema-level state: relation definitions, loaded tables, stats, UDFs."""

    def __init__(self, relations: Sequence[RelationDef], base_dir: Path | None = None):
        names = [r.name for r in relations]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate relation name in schema")
        self.relations: dict[str, RelationDef] = {r.name: r for r in relations}
        self.tables: dict[str, SortedRelation] = {}
        self.stats: dict[tuple[str, str], DomainStats] = {}
        self.udfs: dict[str, UdfDef] = _builtin_udfs()
        self.base_dir = base_dir or Path(".")
        self.dictionaries: dict[str, list[str]] = {}
        self._dict_index: dict[str, dict[str, int]] = {}
        for rel in relations:
            for a in rel.attributes:
                if a.physical == "string":
                    self.dictionaries.setdefault(a.name, [])
                    self._dict_index.setdefault(a.name, {})

    def register_udf(self, udf: UdfDef) -> str:
        if udf.name in self.udfs:
            raise SchemaError(f"UDF {udf.name!r} already registered")
        self.udfs[udf.name] = udf
        return udf.name

    def ensure_udf(self, udf: UdfDef) -> str:
        """Register, or reuse an identically named earlier registration.

        Comparison/conjunction UDF names encode their parameters, so a name
        collision means the same predicate.
        """
        if udf.name not in self.udfs:
            self.udfs[udf.name] = udf
        return udf.name

    def encode(self, attr: str, value: str) -> int:
        idx = self._dict_index[attr]
        if value not in idx:
            idx[value] = len(idx)
            self.dictionaries[attr].append(value)
        return idx[value]

    def table(self, name: str) -> SortedRelation:
        if name not in self.tables:
            raise DataLoadError(f"relation {name!r} has no loaded data")
        return self.tables[name]

    def attribute_kind(self, attr: str) -> str:
        """Kind of an attribute, which must agree across all declaring relations."""
        kinds = {
            rel.attribute(attr).kind
            for rel in self.relations.values()
            if attr in rel.attribute_names()
        }
        if not kinds:
            raise SchemaError(f"attribute {attr!r} present in no relation")
        if len(kinds) > 1:
            raise SchemaError(f"attribute {attr!r} declared with conflicting kinds")
        return kinds.pop()

    def relations_with(self, attr: str) -> list[str]:
        return sorted(
            r.name for r in self.relations.values() if attr in r.attribute_names()
        )

    def max_distinct(self, attr: str) -> int:
        counts = [
            self.stats[(rel, attr)].distinct_count
            for rel in self.relations_with(attr)
            if (rel, attr) in self.stats
        ]
        return max(counts, default=0)


def load_schema(path: str | Path) -> tuple[Catalog, list[tuple[str, str]]]:
    """Parse a schema file; returns the catalog (no data yet) and the declared
    join tree edges as (relation, relation) pairs."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read schema file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: JSON parse error at line {exc.lineno}: {exc.msg}") from exc

    if not isinstance(doc, dict) or "relations" not in doc:
        raise SchemaError(f"{path}: expected an object with a 'relations' list")
    relations = []
    for rel in doc["relations"]:
        try:
            attrs = tuple(
                AttributeDef(a["name"], a["kind"], a["physical"]) for a in rel["attributes"]
            )
            relations.append(RelationDef(rel["name"], attrs, rel.get("file")))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{path}: malformed relation entry: {exc}") from exc
        attr_names = [a.name for a in relations[-1].attributes]
        if len(set(attr_names)) != len(attr_names):
            raise SchemaError(f"{path}: duplicate attribute in relation {relations[-1].name}")
    edges_doc = doc.get("jointree", {}).get("edges", [])
    edges = []
    for e in edges_doc:
        if not (isinstance(e, list) and len(e) == 2):
            raise SchemaError(f"{path}: join tree edge must be a pair, got {e!r}")
        edges.append((str(e[0]), str(e[1])))
    catalog = Catalog(relations, base_dir=path.parent)
    return catalog, edges


def load_relation(catalog: Catalog, name: str, path: str | Path | None = None) -> SortedRelation:
    """Load a relation's CSV into the catalog and compute its domain stats."""
    if name not in catalog.relations:
        raise SchemaError(f"unknown relation {name!r}")
    definition = catalog.relations[name]
    if path is None:
        if definition.file is None:
            raise DataLoadError(f"relation {name} declares no data file")
        path = catalog.base_dir / definition.file
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataLoadError(f"cannot read {path}: {exc}") from exc

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataLoadError(f"{path}: empty file, expected a header row")
    header = lines[0].split(",")
    declared = list(definition.attribute_names())
    if header != declared:
        raise DataLoadError(
            f"{path}: header {header} does not match declared attributes {declared}"
        )

    raw_columns: list[list] = [[] for _ in declared]
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(declared):
            raise DataLoadError(
                f"{path}:{lineno}: expected {len(declared)} cells, found {len(cells)}"
            )
        for col, (cell, attr) in enumerate(zip(cells, definition.attributes)):
            if cell == "":
                raise DataLoadError(f"{path}:{lineno}: missing value for {attr.name}")
            try:
                if attr.physical == "int64":
                    raw_columns[col].append(int(cell))
                elif attr.physical == "float64":
                    raw_columns[col].append(float(cell))
                else:
                    raw_columns[col].append(catalog.encode(attr.name, cell))
            except ValueError as exc:
                raise DataLoadError(
                    f"{path}:{lineno}: bad {attr.physical} value {cell!r} for {attr.name}"
                ) from exc

    columns: dict[str, np.ndarray] = {}
    for raw, attr in zip(raw_columns, definition.attributes):
        dtype = np.float64 if attr.physical == "float64" else np.int64
        columns[attr.name] = np.asarray(raw, dtype=dtype)

    relation = _build_sorted(catalog, definition, columns)
    catalog.tables[name] = relation
    _compute_stats(catalog, relation)
    return relation


def relation_from_rows(
    catalog: Catalog, name: str, rows: Sequence[Sequence]
) -> SortedRelation:
    """Install in-memory rows as a relation's data (same path the CSV loader ends in)."""
    definition = catalog.relations[name]
    columns: dict[str, np.ndarray] = {}
    for col, attr in enumerate(definition.attributes):
        values = [row[col] for row in rows]
        if attr.physical == "string":
            coded = [catalog.encode(attr.name, str(v)) for v in values]
            columns[attr.name] = np.asarray(coded, dtype=np.int64)
        else:
            dtype = np.float64 if attr.physical == "float64" else np.int64
            columns[attr.name] = np.asarray(values, dtype=dtype)
    relation = _build_sorted(catalog, definition, columns)
    catalog.tables[name] = relation
    _compute_stats(catalog, relation)
    return relation


def _build_sorted(
    catalog: Catalog, definition: RelationDef, columns: dict[str, np.ndarray]
) -> SortedRelation:
    order = definition.attribute_names()
    n = int(next(iter(columns.values())).shape[0]) if columns else 0
    if n:
        perm = np.lexsort([columns[a] for a in reversed(order)])
        columns = {a: columns[a][perm] for a in order}
    return SortedRelation(definition, columns, order, catalog.dictionaries)


def _compute_stats(catalog: Catalog, relation: SortedRelation) -> None:
    for attr in relation.definition.attributes:
        col = relation.columns[attr.name]
        distinct = int(np.unique(col).size)
        stats = DomainStats(distinct_count=distinct, tuple_count=relation.n_rows)
        if attr.kind == CONTINUOUS and col.size:
            stats.min_value = float(col.min())
            stats.max_value = float(col.max())
        catalog.stats[(relation.name, attr.name)] = stats
