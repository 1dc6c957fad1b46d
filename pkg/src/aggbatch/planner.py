"""Multi-output planning: group views by node, order attributes, and factorize
every output of a group into one shared loop-nest program.

Outputs at the same node with the same incoming-view set form a group; the
group's plan is a nest of trie levels over a chosen attribute order. Each
aggregate slot decomposes into local registers (loop-invariant products,
hoisted to the shallowest level where their inputs are bound) and running
sums (one per accumulation scope, cascaded upward). Identical partial
expressions are hash-consed, so outputs share registers instead of
recomputing them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import Catalog
from .errors import PlanningError
from .queries import JoinTree
from .views import OutputSpec, ViewSet


@dataclass
class ViewGroup:
    id: str
    node: str
    outputs: tuple[str, ...]  # view and query ids, sorted
    incoming: tuple[str, ...]  # view ids, sorted


@dataclass
class GroupDag:
    groups: dict[str, ViewGroup]
    edges: list[tuple[str, str]]  # producer group id -> consumer group id
    waves: list[list[str]]  # topological layers; wave i depends only on waves < i

    def wave_of(self, group_id: str) -> int:
        for i, wave in enumerate(self.waves):
            if group_id in wave:
                return i
        raise PlanningError(f"group {group_id} missing from schedule")


def group_views(viewset: ViewSet) -> list[ViewGroup]:
    """Partition outputs into maximal groups by (node, incoming set), numbered
    in dependency layers so that consumers always carry higher numbers."""
    buckets: dict[tuple[str, frozenset[str]], list[str]] = {}
    for oid, out in viewset.outputs.items():
        buckets.setdefault((out.node, out.incoming), []).append(oid)

    keys = list(buckets)
    produced_in: dict[str, tuple[str, frozenset[str]]] = {}
    for key, oids in buckets.items():
        for oid in oids:
            if viewset.outputs[oid].kind == "view":
                produced_in[oid] = key

    layer_memo: dict[tuple[str, frozenset[str]], int] = {}

    def layer(key: tuple[str, frozenset[str]]) -> int:
        if key not in layer_memo:
            _, incoming = key
            layer_memo[key] = (
                1 + max((layer(produced_in[v]) for v in incoming), default=-1)
            )
        return layer_memo[key]

    keys.sort(key=lambda k: (layer(k), k[0], tuple(sorted(buckets[k]))))
    groups = []
    for i, key in enumerate(keys, start=1):
        node, incoming = key
        groups.append(
            ViewGroup(
                id=f"G{i}",
                node=node,
                outputs=tuple(sorted(buckets[key])),
                incoming=tuple(sorted(incoming)),
            )
        )
    return groups


def build_dependency_dag(groups: list[ViewGroup], viewset: ViewSet) -> GroupDag:
    producer: dict[str, str] = {}
    for g in groups:
        for oid in g.outputs:
            if viewset.outputs[oid].kind == "view":
                producer[oid] = g.id
    edges = set()
    for g in groups:
        for vid in g.incoming:
            if vid not in producer:
                raise PlanningError(f"group {g.id} consumes {vid} which no group produces")
            edges.add((producer[vid], g.id))

    by_id = {g.id: g for g in groups}
    depth: dict[str, int] = {}
    visiting: set[str] = set()

    def wave(gid: str) -> int:
        if gid in depth:
            return depth[gid]
        if gid in visiting:
            raise PlanningError(f"cycle through group {gid}; grouping rule violated")
        visiting.add(gid)
        preds = [p for p, c in edges if c == gid]
        depth[gid] = 1 + max((wave(p) for p in preds), default=-1)
        visiting.discard(gid)
        return depth[gid]

    waves: list[list[str]] = []
    for g in groups:
        w = wave(g.id)
        while len(waves) <= w:
            waves.append([])
        waves[w].append(g.id)
    for w in waves:
        w.sort(key=lambda gid: int(gid[1:]))
    return GroupDag(groups=by_id, edges=sorted(edges), waves=waves)


def choose_attribute_order(
    catalog: Catalog, tree: JoinTree, viewset: ViewSet, group: ViewGroup
) -> tuple[str, ...]:
    """Total attribute order for a group's loop nest.

    Key attributes (view keys and output group-bys) come first, then factor
    attributes of the node relation, then its remaining attributes. Within
    the first two tiers: most-referenced first, then largest domain, then
    name, so tighter binders sit higher in the nest.
    """
    node_attrs = tree.node_attrs[group.node]
    outputs = [viewset.outputs[oid] for oid in group.outputs]
    views = [viewset.views[vid] for vid in group.incoming]

    key_attrs: set[str] = set()
    for v in views:
        key_attrs.update(v.group_by)
    for out in outputs:
        key_attrs.update(out.group_by)
    factor_attrs = {
        f[0] for out in outputs for slot in out.slots for f in slot.local_factors
    }

    stray = (key_attrs | factor_attrs) - node_attrs - {
        a for v in views for a in v.group_by
    }
    if stray:
        raise PlanningError(
            f"group {group.id} references attributes {sorted(stray)} absent from "
            f"{group.node} and from all incoming views"
        )

    refs: dict[str, int] = {}
    for v in views:
        for a in v.group_by:
            refs[a] = refs.get(a, 0) + 1
    for out in outputs:
        touched = set(out.group_by) | {f[0] for s in out.slots for f in s.local_factors}
        for a in touched:
            refs[a] = refs.get(a, 0) + 1

    def rank(attr: str) -> tuple:
        if (group.node, attr) in catalog.stats:
            distinct = catalog.stats[(group.node, attr)].distinct_count
        else:
            distinct = catalog.max_distinct(attr)
        return (-refs.get(attr, 0), -distinct, attr)

    tier1 = sorted(key_attrs, key=rank)
    tier2 = sorted(factor_attrs - key_attrs, key=rank)
    declared = catalog.relations[group.node].attribute_names()
    tier3 = [a for a in declared if a not in key_attrs and a not in factor_attrs]
    return tuple(tier1 + tier2 + tier3)


# --- plan IR ---------------------------------------------------------------


class Register:
    """One plan register. Identity matters (registers are shared by
    reference); the display index is assigned once emission is complete."""

    __slots__ = ("kind", "role", "view", "index")

    def __init__(self, kind: str, role: str, view: str | None = None):
        self.kind = kind  # "local" | "sum"
        self.role = role  # "lookup" | "chain" | "sum"
        self.view = view
        self.index: int | None = None

    def __repr__(self) -> str:
        tag = "a" if self.kind == "local" else "b"
        return f"<{tag}{self.index if self.index is not None else '?'}>"


@dataclass(frozen=True)
class Term:
    kind: str  # "factor" | "slot" | "reg" | "count" | "const"
    attr: str | None = None
    udf: str | None = None
    reg: Register | None = None
    slot: int | None = None
    value: float = 1.0


@dataclass
class Statement:
    kind: str  # view-lookup | local-assign | running-sum | output-write
    op: str  # lookup | assign | reset | accum | write | upsert
    level: int
    target: Register | None = None
    terms: tuple[Term, ...] = ()
    view: str | None = None  # lookup only
    key_attrs: tuple[str, ...] = ()  # lookup keys or output key, bound order
    key_levels: tuple[int, ...] = ()
    output: str | None = None  # write/upsert only
    out_slot: int | None = None


@dataclass
class LevelBlock:
    level: int
    attr: str
    node_here: bool  # the node relation has this attribute
    views_here: tuple[str, ...]  # incoming views keyed on this attribute
    on_enter: list[Statement] = field(default_factory=list)
    on_exit: list[Statement] = field(default_factory=list)


@dataclass
class PlanIR:
    group_id: str
    node: str
    order: tuple[str, ...]  # looped levels only
    node_sort: tuple[str, ...]  # node attrs in loop order (resort target)
    prologue: list[Statement]
    epilogue: list[Statement]
    levels: list[LevelBlock]
    locals: list[Register]
    sums: list[Register]
    view_keys: dict[str, tuple[str, ...]]  # incoming view -> keys in loop order
    output_keys: dict[str, tuple[str, ...]]  # output -> key attrs in write order
    output_arity: dict[str, int]


def register_count(plan: PlanIR) -> tuple[int, int]:
    return len(plan.locals), len(plan.sums)


def decompose_aggregates(
    catalog: Catalog,
    tree: JoinTree,
    viewset: ViewSet,
    group: ViewGroup,
    order: tuple[str, ...],
) -> PlanIR:
    node_attrs = tree.node_attrs[group.node]
    pos = {a: i + 1 for i, a in enumerate(order)}
    n_levels = len(order)

    view_keys = {
        vid: tuple(sorted(viewset.views[vid].group_by, key=pos.__getitem__))
        for vid in group.incoming
    }
    lookup_level = {vid: max(pos[a] for a in ks) for vid, ks in view_keys.items() if ks}

    # per-level statement buckets; concatenated in def-before-use order at the end
    enters: dict[int, dict[str, list[Statement]]] = {}
    exits: dict[int, dict[str, list[Statement]]] = {}

    def enter_bucket(level: int, phase: str) -> list[Statement]:
        slot = enters.setdefault(
            level, {"lookup": [], "chain": [], "reset": [], "accum": [], "upsert": []}
        )
        return slot[phase]

    def exit_bucket(level: int, phase: str) -> list[Statement]:
        slot = exits.setdefault(level, {"accum": [], "upsert": [], "write": []})
        return slot[phase]

    consed: dict[tuple, Register] = {}
    max_level_used = 0

    def touch(level: int) -> None:
        nonlocal max_level_used
        max_level_used = max(max_level_used, level)

    def lookup_register(vid: str) -> Register:
        key = ("lookup", vid)
        if key not in consed:
            reg = Register("local", "lookup", view=vid)
            level = lookup_level[vid]
            consed[key] = reg
            enter_bucket(level, "lookup").append(
                Statement(
                    kind="view-lookup",
                    op="lookup",
                    level=level,
                    target=reg,
                    view=vid,
                    key_attrs=view_keys[vid],
                    key_levels=tuple(pos[a] for a in view_keys[vid]),
                )
            )
            touch(level)
        return consed[key]

    def canon(terms: list[Term]) -> tuple:
        parts = []
        for t in terms:
            if t.kind == "factor":
                parts.append(("f", t.attr, t.udf))
            elif t.kind == "slot":
                parts.append(("s", t.reg.view, t.slot))
            else:
                raise PlanningError(f"cannot canonicalize term kind {t.kind}")
        return tuple(sorted(parts))

    def order_terms(terms: list[Term]) -> list[Term]:
        ranked = []
        for t in terms:
            if t.kind == "factor":
                ranked.append(((0, t.attr, t.udf), t))
            else:
                ranked.append(((1, t.reg.view, t.slot), t))
        return [t for _, t in sorted(ranked, key=lambda p: p[0])]

    def chain_register(level: int, prev: tuple | None, atoms: list[Term], with_count: bool) -> tuple[tuple, Register]:
        key = ("chain", level, prev, canon(atoms), with_count)
        if key not in consed:
            reg = Register("local", "chain")
            consed[key] = reg
            terms: list[Term] = []
            if with_count:
                terms.append(Term(kind="count"))
            factors = order_terms([t for t in atoms if t.kind == "factor"])
            slots = order_terms([t for t in atoms if t.kind == "slot"])
            terms.extend(factors)
            if prev is not None:
                terms.append(Term(kind="reg", reg=consed[prev]))
            terms.extend(slots)
            enter_bucket(level, "chain").append(
                Statement(
                    kind="local-assign",
                    op="assign",
                    level=level,
                    target=reg,
                    terms=tuple(terms),
                )
            )
            touch(level)
        return key, consed[key]

    def reset(reg: Register, scope: int) -> None:
        stmt = Statement(kind="running-sum", op="reset", level=scope, target=reg)
        if scope == 0:
            prologue.append(stmt)
        else:
            enter_bucket(scope, "reset").append(stmt)

    def sum_bottom(bottom_level: int, atoms: list[Term]) -> tuple[tuple, Register]:
        key = ("sumbot", bottom_level, canon(atoms))
        if key not in consed:
            reg = Register("sum", "sum")
            consed[key] = reg
            reset(reg, bottom_level - 1)
            enter_bucket(bottom_level, "accum").append(
                Statement(
                    kind="running-sum",
                    op="accum",
                    level=bottom_level,
                    target=reg,
                    terms=tuple(order_terms(atoms) + [Term(kind="count")]),
                )
            )
            touch(bottom_level)
        return key, consed[key]

    def sum_step(scope: int, atoms_below: list[Term], child_key: tuple) -> tuple[tuple, Register]:
        key = ("sumacc", scope, canon(atoms_below), child_key)
        if key not in consed:
            reg = Register("sum", "sum")
            consed[key] = reg
            reset(reg, scope)
            child = consed[child_key]
            terms = [Term(kind="reg", reg=child)] + order_terms(atoms_below)
            exit_bucket(scope + 1, "accum").append(
                Statement(
                    kind="running-sum",
                    op="accum",
                    level=scope + 1,
                    target=reg,
                    terms=tuple(terms),
                )
            )
            touch(scope + 1)
        return key, consed[key]

    def sum_residual(scope: int) -> tuple[tuple, Register]:
        # group-by covers the whole order: the run count at the deepest level
        # is the aggregate itself
        key = ("sumself", scope)
        if key not in consed:
            reg = Register("sum", "sum")
            consed[key] = reg
            reset(reg, scope)
            enter_bucket(scope, "accum").append(
                Statement(
                    kind="running-sum",
                    op="accum",
                    level=scope,
                    target=reg,
                    terms=(Term(kind="count"),),
                )
            )
            touch(scope)
        return key, consed[key]

    def cascade(write_level: int, atoms_by_level: dict[int, list[Term]]) -> Register:
        """Running-sum chain from below `write_level` up into a register of
        that scope; returns the register holding the sum once the level exits."""
        deepest = max(atoms_by_level, default=0)
        top = max(write_level, deepest - 1)
        if top + 1 > n_levels:
            key, reg = sum_residual(write_level)
            return reg
        key, reg = sum_bottom(top + 1, atoms_by_level.get(top + 1, []))
        for scope in range(top - 1, write_level - 1, -1):
            key, reg = sum_step(scope, atoms_by_level.get(scope + 1, []), key)
        return reg

    prologue: list[Statement] = []
    epilogue: list[Statement] = []

    outputs = [viewset.outputs[oid] for oid in group.outputs]
    output_keys: dict[str, tuple[str, ...]] = {}
    output_arity = {out.id: len(out.slots) for out in outputs}

    for out in outputs:
        key_order = tuple(sorted(out.group_by, key=pos.__getitem__))
        output_keys[out.id] = key_order
        write_level = max((pos[a] for a in out.group_by), default=0)
        is_prefix = set(out.group_by) == set(order[:write_level])
        for slot_idx, slot in enumerate(out.slots):
            atoms_by_level: dict[int, list[Term]] = {}
            for attr, udf in slot.local_factors:
                atoms_by_level.setdefault(pos[attr], []).append(
                    Term(kind="factor", attr=attr, udf=udf)
                )
            for vid, view_slot in slot.view_refs:
                reg = lookup_register(vid)
                atoms_by_level.setdefault(lookup_level[vid], []).append(
                    Term(kind="slot", reg=reg, slot=view_slot)
                )
            deepest = max(atoms_by_level, default=0)
            const_terms = (
                [Term(kind="const", value=slot.constant)] if slot.constant != 1.0 else []
            )
            touch(write_level)

            if is_prefix:
                sum_reg = cascade(write_level, atoms_by_level)
                shallow = [
                    t for lvl in range(1, write_level + 1) for t in order_terms(atoms_by_level.get(lvl, []))
                ]
                terms = tuple(const_terms + [Term(kind="reg", reg=sum_reg)] + shallow)
                stmt = Statement(
                    kind="output-write",
                    op="write",
                    level=write_level,
                    terms=terms,
                    output=out.id,
                    out_slot=slot_idx,
                    key_attrs=key_order,
                    key_levels=tuple(pos[a] for a in key_order),
                )
                if write_level == 0:
                    epilogue.append(stmt)
                else:
                    exit_bucket(write_level, "write").append(stmt)
            else:
                # group-by attrs are scattered through the order: upsert into
                # a keyed table instead of writing at a run boundary
                chain_key: tuple | None = None
                chain_reg: Register | None = None
                if deepest <= write_level:
                    for lvl in sorted(a for a in atoms_by_level if a < write_level):
                        chain_key, chain_reg = chain_register(
                            lvl, chain_key, atoms_by_level[lvl], with_count=False
                        )
                    # the final step takes the residual run count along with
                    # any atoms of the write level itself
                    chain_key, chain_reg = chain_register(
                        write_level,
                        chain_key,
                        atoms_by_level.get(write_level, []),
                        with_count=True,
                    )
                    terms = tuple(const_terms + [Term(kind="reg", reg=chain_reg)])
                    bucket, op_level = enter_bucket(write_level, "upsert"), write_level
                else:
                    for lvl in sorted(a for a in atoms_by_level if a <= write_level):
                        chain_key, chain_reg = chain_register(
                            lvl, chain_key, atoms_by_level[lvl], with_count=False
                        )
                    deep = {
                        lvl: ts for lvl, ts in atoms_by_level.items() if lvl > write_level
                    }
                    sum_reg = cascade(write_level, deep)
                    terms = [Term(kind="reg", reg=sum_reg)]
                    if chain_reg is not None:
                        terms.append(Term(kind="reg", reg=chain_reg))
                    terms = tuple(const_terms + terms)
                    bucket, op_level = exit_bucket(write_level, "upsert"), write_level
                bucket.append(
                    Statement(
                        kind="output-write",
                        op="upsert",
                        level=op_level,
                        terms=terms,
                        output=out.id,
                        out_slot=slot_idx,
                        key_attrs=key_order,
                        key_levels=tuple(pos[a] for a in key_order),
                    )
                )
    depth = max(max_level_used, 1) if n_levels else 0
    blocks = []
    for level in range(1, depth + 1):
        attr = order[level - 1]
        vids = tuple(
            sorted(vid for vid, ks in view_keys.items() if attr in ks)
        )
        e = enters.get(level, {})
        x = exits.get(level, {})
        blocks.append(
            LevelBlock(
                level=level,
                attr=attr,
                node_here=attr in node_attrs,
                views_here=vids,
                on_enter=(
                    e.get("lookup", [])
                    + e.get("chain", [])
                    + e.get("reset", [])
                    + e.get("accum", [])
                    + e.get("upsert", [])
                ),
                on_exit=x.get("accum", []) + x.get("upsert", []) + x.get("write", []),
            )
        )

    plan = PlanIR(
        group_id=group.id,
        node=group.node,
        order=order[:depth],
        node_sort=tuple(a for a in order if a in node_attrs),
        prologue=prologue,
        epilogue=epilogue,
        levels=blocks,
        locals=[],
        sums=[],
        view_keys=view_keys,
        output_keys=output_keys,
        output_arity=output_arity,
    )
    _assign_register_names(plan)
    validate_plan(plan)
    return plan


def _assign_register_names(plan: PlanIR) -> None:
    """Number registers by first appearance in plan order (resets count as
    appearances, so outer running sums get the low indices)."""
    local_seen: list[Register] = []
    sum_seen: list[Register] = []

    def visit(stmt: Statement) -> None:
        regs = [stmt.target] if stmt.target is not None else []
        regs += [t.reg for t in stmt.terms if t.reg is not None]
        for reg in regs:
            bucket = local_seen if reg.kind == "local" else sum_seen
            if reg not in bucket:
                reg.index = len(bucket) + (1 if reg.kind == "local" else 0)
                bucket.append(reg)

    for stmt in plan.prologue:
        visit(stmt)
    for block in plan.levels:
        for stmt in block.on_enter:
            visit(stmt)
    for block in reversed(plan.levels):
        for stmt in block.on_exit:
            visit(stmt)
    for stmt in plan.epilogue:
        visit(stmt)
    plan.locals = local_seen
    plan.sums = sum_seen


def validate_plan(plan: PlanIR) -> None:
    """Structural invariants: def before use, one reset per sum at its scope
    entry, lookups and writes only over bound attributes."""
    defined: set[int] = set()
    resets: dict[int, int] = {}

    def check(stmt: Statement, level: int) -> None:
        for t in stmt.terms:
            if t.kind in ("reg", "slot") and id(t.reg) not in defined:
                raise PlanningError(
                    f"plan {plan.group_id}: register {t.reg!r} read before assignment"
                )
        if stmt.op == "reset":
            resets[id(stmt.target)] = resets.get(id(stmt.target), 0) + 1
        if stmt.target is not None:
            defined.add(id(stmt.target))
        if stmt.op == "lookup":
            if any(kl > level for kl in stmt.key_levels):
                raise PlanningError(
                    f"plan {plan.group_id}: lookup of {stmt.view} keyed below its level"
                )
        if stmt.op in ("write", "upsert"):
            if any(kl > level for kl in stmt.key_levels):
                raise PlanningError(
                    f"plan {plan.group_id}: output {stmt.output} keyed below its level"
                )

    for stmt in plan.prologue:
        check(stmt, 0)
    for block in plan.levels:
        for stmt in block.on_enter:
            check(stmt, block.level)
    for block in reversed(plan.levels):
        for stmt in block.on_exit:
            check(stmt, block.level)
    for stmt in plan.epilogue:
        check(stmt, 0)
    for reg in plan.sums:
        if resets.get(id(reg), 0) != 1:
            raise PlanningError(
                f"plan {plan.group_id}: running sum {reg!r} reset "
                f"{resets.get(id(reg), 0)} times"
            )
