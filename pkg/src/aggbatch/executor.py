"""Plan execution over sorted tries, plus rendering of plans as inspectable
specialized code.

Each group runs as one pass: a recursive walk over distinct value prefixes of
the node relation under the plan's attribute order, intersected level by
level with the incoming views' keys. Statements compile to closures once per
plan; running them per trie position does the actual arithmetic.

Scheduling uses the group DAG's topological waves (task parallelism) and
splits a group's top-level value list into contiguous chunks with private
registers (domain parallelism). Chunk results merge in chunk order, so runs
are reproducible at a fixed thread count and exact on integer data.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .catalog import Catalog, ColumnTrie, resort
from .errors import ExecutionError
from .planner import GroupDag, PlanIR, Register, Statement, ViewGroup
from .queries import QueryBatch, QueryResult
from .views import ViewSet

SORTED_ARRAY = "sorted-array"
HASH_MAP = "hash-map"


class MaterializedView:
    """A computed view: key tuples (production order) to aggregate vectors.

    Rows always live in a dict; sorted projections under any consumer's key
    order are built on demand and cached. The declared storage kind records
    which access path consumers take by default.
    """

    def __init__(
        self,
        view_id: str,
        key_attrs: tuple[str, ...],
        n_slots: int,
        storage: str = SORTED_ARRAY,
    ):
        self.id = view_id
        self.key_attrs = key_attrs
        self.n_slots = n_slots
        self.storage = storage
        self.rows: dict[tuple, np.ndarray] = {}
        self._sorted: dict[tuple[str, ...], tuple[ColumnTrie, np.ndarray]] = {}
        self._sort_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.rows)

    def lookup(self, key: tuple) -> np.ndarray | None:
        return self.rows.get(key)

    def sorted_for(self, key_order: tuple[str, ...]) -> tuple[ColumnTrie, np.ndarray]:
        """Key columns and slot matrix sorted under `key_order` (a permutation
        of this view's key attributes)."""
        if set(key_order) != set(self.key_attrs) or len(key_order) != len(self.key_attrs):
            raise ExecutionError(
                f"view {self.id}: sort order {key_order} does not cover keys {self.key_attrs}"
            )
        with self._sort_lock:
            if key_order not in self._sorted:
                perm = [self.key_attrs.index(a) for a in key_order]
                keys = list(self.rows)
                columns = []
                for j in perm:
                    values = [k[j] for k in keys]
                    integral = all(isinstance(v, int) for v in values)
                    columns.append(
                        np.asarray(values, dtype=np.int64 if integral else np.float64)
                    )
                if keys:
                    sort = np.lexsort(list(reversed(columns)))
                    columns = [c[sort] for c in columns]
                    matrix = np.stack([self.rows[keys[i]] for i in sort])
                else:
                    matrix = np.zeros((0, self.n_slots))
                self._sorted[key_order] = (ColumnTrie(columns, len(keys)), matrix)
            return self._sorted[key_order]


def choose_view_storage(
    produced_keys: tuple[str, ...], consumer_orders: list[tuple[str, ...]]
) -> str:
    """Sorted array when every consumer iterates the view's keys as a prefix
    of its own attribute order (merge access); hash map otherwise."""
    for order in consumer_orders:
        if tuple(order[: len(produced_keys)]) != produced_keys:
            return HASH_MAP
    return SORTED_ARRAY


@dataclass
class GroupStats:
    group_id: str
    node: str
    wave: int
    wall_ms: float
    rows_scanned: int
    lookups: int
    chunks: int
    output_rows: dict[str, int]


@dataclass
class ExecutionReport:
    groups: list[GroupStats] = field(default_factory=list)
    total_ms: float = 0.0
    threads: int = 1
    waves: list[list[str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total_ms": self.total_ms,
            "threads": self.threads,
            "waves": self.waves,
            "groups": [
                {
                    "id": g.group_id,
                    "node": g.node,
                    "wave": g.wave,
                    "wall_ms": g.wall_ms,
                    "rows_scanned": g.rows_scanned,
                    "lookups": g.lookups,
                    "chunks": g.chunks,
                    "output_rows": g.output_rows,
                }
                for g in self.groups
            ],
        }


class _Frame:
    """Mutable state of one walk: bound values, node ranges, registers."""

    __slots__ = ("bound", "node_lo", "node_hi", "env", "view_rows", "tables", "lookups")

    def __init__(self, depth: int, n_rows: int, outputs: list[str]):
        self.bound: list = [None] * (depth + 1)
        self.node_lo = [0] * (depth + 1)
        self.node_hi = [n_rows] * (depth + 1)
        self.env: dict[Register, object] = {}
        self.view_rows: dict[str, np.ndarray] = {}
        self.tables: dict[str, dict[tuple, np.ndarray]] = {o: {} for o in outputs}
        self.lookups = 0


def _compile_terms(
    stmt: Statement, catalog: Catalog, plan: PlanIR
) -> Callable[[_Frame], float]:
    parts: list[Callable[[_Frame], float]] = []
    for t in stmt.terms:
        if t.kind == "factor":
            udf = catalog.udfs[t.udf]
            # a factor always binds at its attribute's position in the order
            level = plan.order.index(t.attr) + 1
            parts.append(lambda fr, u=udf, l=level: u(fr.bound[l]))
        elif t.kind == "slot":
            parts.append(lambda fr, r=t.reg, s=t.slot: fr.env[r][s])
        elif t.kind == "reg":
            parts.append(lambda fr, r=t.reg: fr.env[r])
        elif t.kind == "count":
            level = stmt.level
            parts.append(lambda fr, l=level: float(fr.node_hi[l] - fr.node_lo[l]))
        elif t.kind == "const":
            parts.append(lambda fr, v=t.value: v)
        else:
            raise ExecutionError(f"unknown term kind {t.kind}")

    def product(fr: _Frame) -> float:
        value = parts[0](fr)
        for p in parts[1:]:
            value = value * p(fr)
        return value

    return product if parts else (lambda fr: 1.0)


def _compile_statement(
    stmt: Statement, catalog: Catalog, plan: PlanIR, arity: dict[str, int]
) -> Callable[[_Frame], None]:
    if stmt.op == "lookup":

        def run_lookup(fr: _Frame, reg=stmt.target, vid=stmt.view):
            fr.env[reg] = fr.view_rows[vid]
            fr.lookups += 1

        return run_lookup
    if stmt.op == "reset":

        def run_reset(fr: _Frame, reg=stmt.target):
            fr.env[reg] = 0.0

        return run_reset

    value_of = _compile_terms(stmt, catalog, plan)
    if stmt.op == "assign":

        def run_assign(fr: _Frame, reg=stmt.target):
            fr.env[reg] = value_of(fr)

        return run_assign
    if stmt.op == "accum":

        def run_accum(fr: _Frame, reg=stmt.target):
            fr.env[reg] = fr.env[reg] + value_of(fr)

        return run_accum
    if stmt.op in ("write", "upsert"):
        key_levels = stmt.key_levels
        n = arity[stmt.output]
        is_upsert = stmt.op == "upsert"

        def run_write(fr: _Frame, oid=stmt.output, slot=stmt.out_slot):
            key = tuple(fr.bound[l] for l in key_levels)
            table = fr.tables[oid]
            row = table.get(key)
            if row is None:
                row = np.zeros(n)
                table[key] = row
            if is_upsert:
                row[slot] += value_of(fr)
            else:
                row[slot] = value_of(fr)

        return run_write
    raise ExecutionError(f"unknown statement op {stmt.op}")


class _LevelExec:
    __slots__ = (
        "level",
        "node_depth",
        "sorted_views",  # (vid, key_index, is_deepest)
        "hash_probes",  # (vid, production key levels)
        "deepest_sorted",  # vids whose last key is this level
        "enter",
        "exit",
        "is_int",
    )


def _bind_plan(
    catalog: Catalog,
    plan: PlanIR,
    viewset: ViewSet,
    storage: dict[str, str],
    prod_keys: dict[str, tuple[str, ...]],
) -> tuple[list[_LevelExec], list, list, set[str]]:
    """Compile statements and precompute per-level iteration shape.

    A view declared hash-map still joins by merge when any of its keys is
    absent from the node (nothing else would drive that level); `prod_keys`
    gives each view's stored key order so hash probes build the right tuple.
    """
    arity = dict(plan.output_arity)
    for vid in plan.view_keys:
        arity.setdefault(vid, len(viewset.views[vid].slots))

    node_attrs = set(plan.node_sort)
    node_depth = 0
    levels: list[_LevelExec] = []
    pos = {a: i + 1 for i, a in enumerate(plan.order)}
    sorted_vids: set[str] = set()
    for vid, keys in plan.view_keys.items():
        if storage.get(vid, SORTED_ARRAY) == SORTED_ARRAY or any(
            a not in node_attrs for a in keys
        ):
            sorted_vids.add(vid)
    for block in plan.levels:
        le = _LevelExec()
        le.level = block.level
        if block.node_here:
            node_depth += 1
            le.node_depth = node_depth - 1  # trie level index
        else:
            le.node_depth = -1
        le.sorted_views = []
        le.hash_probes = []
        le.deepest_sorted = []
        for vid in block.views_here:
            keys = plan.view_keys[vid]
            key_index = keys.index(block.attr)
            deepest = key_index == len(keys) - 1
            if vid in sorted_vids:
                le.sorted_views.append((vid, key_index, deepest))
                if deepest:
                    le.deepest_sorted.append(vid)
            elif deepest:
                le.hash_probes.append((vid, tuple(pos[a] for a in prod_keys[vid])))
        le.enter = [_compile_statement(s, catalog, plan, arity) for s in block.on_enter]
        # exit writes only fire when the subtree below completed a join path;
        # running sums can fire regardless (they add zero on an empty subtree)
        le.exit = [
            (s.op in ("write", "upsert"), _compile_statement(s, catalog, plan, arity))
            for s in block.on_exit
        ]
        levels.append(le)
    prologue = [_compile_statement(s, catalog, plan, arity) for s in plan.prologue]
    epilogue = [_compile_statement(s, catalog, plan, arity) for s in plan.epilogue]
    return levels, prologue, epilogue, sorted_vids


def _merge_sources(sources: list[tuple[np.ndarray, np.ndarray, int]]):
    """Intersect k sorted run lists; yields (value, [(lo, hi) per source])."""
    if not sources:
        return
    if len(sources) == 1:
        vals, starts, hi = sources[0]
        for j in range(len(vals)):
            end = starts[j + 1] if j + 1 < len(starts) else hi
            yield vals[j], [(int(starts[j]), int(end))]
        return
    idx = [0] * len(sources)
    while True:
        current = []
        for i, (vals, _, _) in enumerate(sources):
            if idx[i] >= len(vals):
                return
            current.append(vals[idx[i]])
        target = max(current)
        aligned = True
        for i, (vals, _, _) in enumerate(sources):
            if current[i] < target:
                j = int(np.searchsorted(vals, target, side="left"))
                idx[i] = j
                aligned = False
        if not aligned:
            continue
        ranges = []
        for i, (vals, starts, hi) in enumerate(sources):
            j = idx[i]
            end = starts[j + 1] if j + 1 < len(starts) else hi
            ranges.append((int(starts[j]), int(end)))
            idx[i] += 1
        yield target, ranges


def execute_plan(
    catalog: Catalog,
    plan: PlanIR,
    viewset: ViewSet,
    incoming: dict[str, MaterializedView],
    storage: dict[str, str],
    threads: int = 1,
) -> tuple[dict[str, dict[tuple, np.ndarray]], int, int]:
    """Run one group's plan; returns raw output tables (keys in execution
    order), the lookup count, and the number of domain chunks used."""
    for vid in plan.view_keys:
        if vid not in incoming:
            raise ExecutionError(f"group {plan.group_id}: incoming view {vid} not materialized")

    node = resort(catalog.table(plan.node), plan.node_sort)
    prod_keys = {vid: incoming[vid].key_attrs for vid in plan.view_keys}
    levels, prologue, epilogue, sorted_vids = _bind_plan(
        catalog, plan, viewset, storage, prod_keys
    )
    view_sorted = {
        vid: incoming[vid].sorted_for(plan.view_keys[vid]) for vid in sorted_vids
    }
    outputs = list(plan.output_keys)
    depth = len(plan.levels)

    def walk(fr: _Frame, level_idx: int, node_range, view_ranges) -> bool:
        le = levels[level_idx]
        level = le.level
        sources = []
        source_tags = []  # parallel: ("node",) or ("view", vid)
        if le.node_depth >= 0:
            lo, hi = node_range
            vals, starts = node.trie.runs(le.node_depth, lo, hi)
            sources.append((vals, starts, hi))
            source_tags.append(("node", None))
        for vid, key_index, _ in le.sorted_views:
            vlo, vhi = view_ranges[vid]
            trie, _matrix = view_sorted[vid]
            vals, starts = trie.runs(key_index, vlo, vhi)
            sources.append((vals, starts, vhi))
            source_tags.append(("view", vid))

        found = False
        for value, ranges in _merge_sources(sources):
            fr.bound[level] = value.item() if hasattr(value, "item") else value
            new_node = node_range
            new_views = view_ranges
            for (tag, vid), rng in zip(source_tags, ranges):
                if tag == "node":
                    new_node = rng
                else:
                    new_views = {**new_views, vid: rng}
            fr.node_lo[level], fr.node_hi[level] = new_node
            ok = True
            for vid, key_levels in le.hash_probes:
                key = tuple(fr.bound[l] for l in key_levels)
                row = incoming[vid].lookup(key)
                if row is None:
                    ok = False
                    break
                fr.view_rows[vid] = row
            if not ok:
                continue
            for vid in le.deepest_sorted:
                _trie, matrix = view_sorted[vid]
                fr.view_rows[vid] = matrix[new_views[vid][0]]
            for stmt in le.enter:
                stmt(fr)
            if level_idx + 1 < depth:
                deep_ok = walk(fr, level_idx + 1, new_node, new_views)
            else:
                deep_ok = True
            found = found or deep_ok
            for is_write, stmt in le.exit:
                if is_write and not deep_ok:
                    continue
                stmt(fr)
        return found

    n_rows = node.n_rows
    init_views = {vid: (0, len(incoming[vid].rows)) for vid in sorted_vids}

    # top-level value list, computed once so it can be chunked
    top_values: list = []
    if depth:
        le0 = levels[0]
        sources = []
        if le0.node_depth >= 0:
            vals, starts = node.trie.runs(0, 0, n_rows)
            sources.append((vals, starts, n_rows))
        tags = [("node", None)] if le0.node_depth >= 0 else []
        for vid, key_index, _ in le0.sorted_views:
            trie, _m = view_sorted[vid]
            vals, starts = trie.runs(key_index, 0, len(incoming[vid].rows))
            sources.append((vals, starts, len(incoming[vid].rows)))
            tags.append(("view", vid))
        top_values = [(v, list(zip(tags, r))) for v, r in _merge_sources(sources)]

    n_chunks = 1
    if threads > 1 and len(top_values) >= 2 * threads:
        n_chunks = threads
    bounds = [len(top_values) * i // n_chunks for i in range(n_chunks + 1)]
    chunks = [top_values[bounds[i] : bounds[i + 1]] for i in range(n_chunks)]

    def run_chunk(chunk) -> _Frame:
        fr = _Frame(depth, n_rows, outputs)
        for stmt in prologue:
            stmt(fr)
        if depth:
            le0 = levels[0]
            for value, tagged in chunk:
                fr.bound[1] = value.item() if hasattr(value, "item") else value
                new_node = (0, n_rows)
                new_views = dict(init_views)
                for (tag, vid), rng in tagged:
                    if tag == "node":
                        new_node = rng
                    else:
                        new_views[vid] = rng
                fr.node_lo[1], fr.node_hi[1] = new_node
                ok = True
                for vid, key_levels in le0.hash_probes:
                    key = tuple(fr.bound[l] for l in key_levels)
                    row = incoming[vid].lookup(key)
                    if row is None:
                        ok = False
                        break
                    fr.view_rows[vid] = row
                if not ok:
                    continue
                for vid in le0.deepest_sorted:
                    _t, matrix = view_sorted[vid]
                    fr.view_rows[vid] = matrix[new_views[vid][0]]
                for stmt in le0.enter:
                    stmt(fr)
                deep_ok = walk(fr, 1, new_node, new_views) if depth > 1 else True
                for is_write, stmt in le0.exit:
                    if is_write and not deep_ok:
                        continue
                    stmt(fr)
        return fr

    if n_chunks == 1:
        frames = [run_chunk(chunks[0] if chunks else [])]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(run_chunk, chunks))

    # merge chunk-private state in chunk order; only whole-domain running
    # sums (the ones reset in the prologue) carry across chunk boundaries
    merged = frames[0]
    carry = [s.target for s in plan.prologue if s.op == "reset"]
    for fr in frames[1:]:
        for oid, table in fr.tables.items():
            target = merged.tables[oid]
            for key, row in table.items():
                if key in target:
                    target[key] = target[key] + row
                else:
                    target[key] = row
        for reg in carry:
            merged.env[reg] = merged.env[reg] + fr.env[reg]
        merged.lookups += fr.lookups
    for stmt in epilogue:
        stmt(merged)
    return merged.tables, merged.lookups, n_chunks


def execute_batch(
    catalog: Catalog,
    viewset: ViewSet,
    groups: list[ViewGroup],
    dag: GroupDag,
    plans: dict[str, PlanIR],
    batch: QueryBatch,
    threads: int = 1,
) -> tuple[dict[str, QueryResult], dict[str, MaterializedView], ExecutionReport]:
    """Execute every group in topological waves; views materialize as groups
    finish and feed later waves."""
    storage = decide_storage(viewset, groups, plans)
    views: dict[str, MaterializedView] = {}
    report = ExecutionReport(threads=threads, waves=[list(w) for w in dag.waves])
    t0 = time.perf_counter()
    group_by_id = {g.id: g for g in groups}

    results_raw: dict[str, dict[tuple, np.ndarray]] = {}

    def run_group(gid: str) -> tuple[str, dict, int, int, float]:
        g = group_by_id[gid]
        plan = plans[gid]
        incoming = {vid: views[vid] for vid in g.incoming}
        t = time.perf_counter()
        tables, lookups, chunks = execute_plan(
            catalog, plan, viewset, incoming, storage, threads=threads
        )
        return gid, tables, lookups, chunks, (time.perf_counter() - t) * 1000.0

    for wave_idx, wave in enumerate(dag.waves):
        if threads > 1 and len(wave) > 1:
            with ThreadPoolExecutor(max_workers=min(threads, len(wave))) as pool:
                outcomes = list(pool.map(run_group, wave))
        else:
            outcomes = [run_group(gid) for gid in wave]
        for gid, tables, lookups, chunks, ms in outcomes:
            g = group_by_id[gid]
            plan = plans[gid]
            out_rows: dict[str, int] = {}
            for oid, table in tables.items():
                out_rows[oid] = len(table)
                if viewset.outputs[oid].kind == "view":
                    mv = MaterializedView(
                        oid,
                        plan.output_keys[oid],
                        plan.output_arity[oid],
                        storage=storage[oid],
                    )
                    mv.rows = table
                    views[oid] = mv
                else:
                    results_raw[oid] = table
            report.groups.append(
                GroupStats(
                    group_id=gid,
                    node=g.node,
                    wave=wave_idx,
                    wall_ms=ms,
                    rows_scanned=catalog.table(g.node).n_rows,
                    lookups=lookups,
                    chunks=chunks,
                    output_rows=out_rows,
                )
            )
    report.total_ms = (time.perf_counter() - t0) * 1000.0
    report.groups.sort(key=lambda s: int(s.group_id[1:]))

    results: dict[str, QueryResult] = {}
    for q in batch:
        table = results_raw.get(q.id, {})
        exec_keys = plans[_group_of(groups, q.id)].output_keys[q.id]
        perm = [exec_keys.index(a) for a in q.group_by]
        rows = {tuple(k[p] for p in perm): v for k, v in table.items()}
        if not q.group_by and not rows:
            rows[()] = np.zeros(len(q.aggregates))
        results[q.id] = QueryResult(q.id, q.group_by, rows)
    return results, views, report


def _group_of(groups: list[ViewGroup], output_id: str) -> str:
    for g in groups:
        if output_id in g.outputs:
            return g.id
    raise ExecutionError(f"output {output_id} belongs to no group")


def decide_storage(
    viewset: ViewSet, groups: list[ViewGroup], plans: dict[str, PlanIR]
) -> dict[str, str]:
    """Storage kind per view id from the prefix rule, recorded for the UI."""
    producer_plan: dict[str, PlanIR] = {}
    for g in groups:
        for oid in g.outputs:
            producer_plan[oid] = plans[g.id]
    storage: dict[str, str] = {}
    for vid in viewset.views:
        produced = producer_plan[vid].output_keys[vid]
        consumer_orders = [
            plans[g.id].order for g in groups if vid in g.incoming
        ]
        storage[vid] = choose_view_storage(produced, consumer_orders)
    return storage


# --- rendering -------------------------------------------------------------


def _reg_name(reg: Register) -> str:
    return ("α" if reg.kind == "local" else "β") + str(reg.index)


def _fmt_const(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


def _display(oid: str) -> str:
    return oid.replace("->", "→")


def _term_text(t, plan: PlanIR, view_arity: dict[str, int], node: str) -> str:
    if t.kind == "factor":
        return t.attr if t.udf == "identity" else f"{t.udf}({t.attr})"
    if t.kind == "slot":
        name = _reg_name(t.reg)
        return name if view_arity.get(t.reg.view, 1) == 1 else f"{name}[{t.slot}]"
    if t.kind == "reg":
        return _reg_name(t.reg)
    if t.kind == "count":
        return f"|σ({node})|"
    if t.kind == "const":
        return _fmt_const(t.value)
    raise ExecutionError(f"unknown term kind {t.kind}")


def _stmt_text(stmt: Statement, plan: PlanIR, view_arity: dict[str, int]) -> str:
    node = plan.node
    if stmt.op == "lookup":
        keys = ", ".join(stmt.key_attrs)
        return f"{_reg_name(stmt.target)} = {_display(stmt.view)}({keys})"
    if stmt.op == "reset":
        return f"{_reg_name(stmt.target)} = 0"
    expr = " · ".join(_term_text(t, plan, view_arity, node) for t in stmt.terms)
    if stmt.op == "assign":
        return f"{_reg_name(stmt.target)} = {expr}"
    if stmt.op == "accum":
        return f"{_reg_name(stmt.target)} += {expr}"
    target = _display(stmt.output)
    if stmt.key_attrs:
        target += "(" + ", ".join(stmt.key_attrs) + ")"
    if plan.output_arity[stmt.output] > 1:
        target += f"[{stmt.out_slot}]"
    if stmt.op == "write":
        return f"{target} = {expr}"
    return f"if {target} then {target} += {expr} else {target} = {expr}"


def render_code(plan: PlanIR, viewset: ViewSet) -> str:
    """One line per statement, 'kind<TAB>text', indented by loop level."""
    view_arity = {vid: len(viewset.views[vid].slots) for vid in plan.view_keys}
    lines: list[str] = []

    def emit(kind: str, level: int, text: str) -> None:
        lines.append(f"{kind}\t{'    ' * level}{text}")

    for stmt in plan.prologue:
        emit(stmt.kind, 0, _stmt_text(stmt, plan, view_arity))

    node_seen = False

    def emit_level(idx: int) -> None:
        nonlocal node_seen
        block = plan.levels[idx]
        parts = []
        if block.node_here:
            parts.append(plan.node if not node_seen else f"σ({plan.node})")
            node_seen = True
        parts.extend(_display(v) for v in block.views_here)
        emit(
            "join-iteration",
            idx,
            f"foreach {block.attr} ∈ π_{block.attr}({' ⋈ '.join(parts)})",
        )
        for stmt in block.on_enter:
            emit(stmt.kind, idx + 1, _stmt_text(stmt, plan, view_arity))
        if idx + 1 < len(plan.levels):
            emit_level(idx + 1)
        for stmt in block.on_exit:
            emit(stmt.kind, idx + 1, _stmt_text(stmt, plan, view_arity))

    if plan.levels:
        emit_level(0)
    for stmt in plan.epilogue:
        emit(stmt.kind, 0, _stmt_text(stmt, plan, view_arity))
    return "\n".join(lines)
