"""Feature slots and the Gram matrix batch for linear models.

The design vector x has slot 0 fixed to 1 (intercept), one slot per
continuous attribute, one slot per (categorical attribute, code) after
one-hot expansion, and includes the label. The Gram matrix over the join,
entry by entry, is exactly a batch of SUM aggregates: that is the whole
point of training on top of the engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..catalog import CATEGORICAL, CONTINUOUS, Catalog
from ..errors import QueryError
from ..queries import JoinTree, Query, QueryBatch, define_query

INTERCEPT = "1"


@dataclass
class FeatureIndex:
    entities: list[str]  # INTERCEPT first, then attributes; label included
    label: str
    slots: list[tuple[str, int | None]]  # (entity, code or None)
    slot_of: dict[tuple[str, int | None], int]
    label_slot: int
    kinds: dict[str, str]

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def is_categorical(self, entity: str) -> bool:
        return self.kinds.get(entity) == CATEGORICAL

    @staticmethod
    def build(catalog: Catalog, features: list[str], label: str) -> "FeatureIndex":
        attrs = list(features)
        if label not in attrs:
            attrs.append(label)
        kinds: dict[str, str] = {}
        for a in attrs:
            kinds[a] = catalog.attribute_kind(a)  # raises on unknown attribute
        if kinds[label] != CONTINUOUS:
            raise QueryError(f"label {label!r} must be continuous")
        if len(set(attrs)) != len(attrs):
            raise QueryError("duplicate feature attribute")

        slots: list[tuple[str, int | None]] = [(INTERCEPT, None)]
        for a in attrs:
            if kinds[a] == CONTINUOUS:
                slots.append((a, None))
            else:
                for code in _observed_codes(catalog, a):
                    slots.append((a, code))
        slot_of = {s: i for i, s in enumerate(slots)}
        return FeatureIndex(
            entities=[INTERCEPT] + attrs,
            label=label,
            slots=slots,
            slot_of=slot_of,
            label_slot=slot_of[(label, None)],
            kinds=kinds,
        )


def _observed_codes(catalog: Catalog, attr: str) -> list[int]:
    codes: set[int] = set()
    for rel in catalog.relations_with(attr):
        if rel in catalog.tables:
            codes.update(int(v) for v in np.unique(catalog.tables[rel].columns[attr]))
    return sorted(codes)


def _pair_query(
    catalog: Catalog, tree: JoinTree, index: FeatureIndex, a: str, b: str
) -> Query:
    """The aggregate computing all Gram entries for one entity pair."""
    qid = f"sigma[{a}*{b}]"
    cat_a = a != INTERCEPT and index.is_categorical(a)
    cat_b = b != INTERCEPT and index.is_categorical(b)
    group_by = [e for e, is_cat in ((a, cat_a), (b, cat_b)) if is_cat]
    factors = []
    for e, is_cat in ((a, cat_a), (b, cat_b)):
        if e == INTERCEPT or is_cat:
            continue
        factors.append((e, "identity"))
    if a == b and not cat_a and a != INTERCEPT:
        factors = [(a, "square")]
    if a == b and cat_a:
        group_by = [a]
    return define_query(catalog, tree, qid, sorted(set(group_by)), [factors])


def gen_sigma_batch(catalog: Catalog, tree: JoinTree, index: FeatureIndex) -> QueryBatch:
    """One query per unordered entity pair, intercept included; n entities
    give n(n+1)/2 queries."""
    queries = []
    ents = index.entities
    for i in range(len(ents)):
        for j in range(i, len(ents)):
            queries.append(_pair_query(catalog, tree, index, ents[i], ents[j]))
    return QueryBatch(tuple(queries))


def assemble_sigma(index: FeatureIndex, results: dict) -> tuple[np.ndarray, float]:
    """Scatter batch results into the dense symmetric matrix; returns it with
    the dataset cardinality (the intercept-intercept entry)."""
    n = index.n_slots
    sigma = np.zeros((n, n))

    def put(j: int, k: int, v: float) -> None:
        sigma[j, k] = v
        sigma[k, j] = v

    ents = index.entities
    for i in range(len(ents)):
        for j in range(i, len(ents)):
            a, b = ents[i], ents[j]
            res = results[f"sigma[{a}*{b}]"]
            cat_a = a != INTERCEPT and index.is_categorical(a)
            cat_b = b != INTERCEPT and index.is_categorical(b)
            if not cat_a and not cat_b:
                value = float(next(iter(res.rows.values()))[0]) if res.rows else 0.0
                sa = 0 if a == INTERCEPT else index.slot_of[(a, None)]
                sb = 0 if b == INTERCEPT else index.slot_of[(b, None)]
                put(sa, sb, value)
            elif cat_a and cat_b and a != b:
                pos = {attr: p for p, attr in enumerate(res.key_attrs)}
                for key, vec in res.rows.items():
                    sa = index.slot_of[(a, int(key[pos[a]]))]
                    sb = index.slot_of[(b, int(key[pos[b]]))]
                    put(sa, sb, float(vec[0]))
            else:
                # one categorical entity: rows scatter along its codes
                cat = a if cat_a else b
                other = b if cat_a else a
                for key, vec in res.rows.items():
                    sc = index.slot_of[(cat, int(key[0]))]
                    if a == b:
                        put(sc, sc, float(vec[0]))
                    elif other == INTERCEPT:
                        put(0, sc, float(vec[0]))
                    else:
                        put(index.slot_of[(other, None)], sc, float(vec[0]))
    return sigma, float(sigma[0, 0])
