"""Grouping, scheduling, aggregate decomposition, and code rendering."""

import numpy as np
import pytest

from aggbatch.datagen import random_instance
from aggbatch.engine import EngineSession
from aggbatch.errors import PlanningError
from aggbatch.planner import (
    build_dependency_dag,
    choose_attribute_order,
    decompose_aggregates,
    group_views,
    register_count,
    validate_plan,
)
from aggbatch.views import assign_roots, generate_views
from conftest import trace_session


def retail_structure(retail):
    catalog, tree, batch = retail
    vs = generate_views(catalog, tree, batch, assign_roots(catalog, tree, batch))
    groups = group_views(vs)
    dag = build_dependency_dag(groups, vs)
    return catalog, tree, vs, groups, dag


def test_retail_has_seven_groups_in_known_order(retail):
    _, _, _, groups, _ = retail_structure(retail)
    nodes = [(g.id, g.node) for g in groups]
    assert nodes == [
        ("G1", "Holidays"),
        ("G2", "Items"),
        ("G3", "Oil"),
        ("G4", "StoRes"),
        ("G5", "Transactions"),
        ("G6", "Sales"),
        ("G7", "Items"),
    ]


def test_retail_dependency_edges(retail):
    _, _, _, _, dag = retail_structure(retail)
    assert sorted(dag.edges) == [
        ("G1", "G6"),
        ("G2", "G6"),
        ("G3", "G5"),
        ("G4", "G5"),
        ("G5", "G6"),
        ("G6", "G7"),
    ]


def test_waves_respect_dependencies(retail):
    _, _, _, _, dag = retail_structure(retail)
    wave = {g: i for i, w in enumerate(dag.waves) for g in w}
    for prod, cons in dag.edges:
        assert wave[prod] < wave[cons]
    # leaves first, the two-view Items node split across first and last waves
    assert wave["G6"] > wave["G5"] > wave["G3"]
    assert wave["G7"] == max(wave.values())


def test_items_node_splits_into_two_groups(retail):
    _, _, vs, groups, _ = retail_structure(retail)
    at_items = [g for g in groups if g.node == "Items"]
    assert len(at_items) == 2
    # the early group feeds Sales, the late one answers the class query
    incoming = {g.id: set(g.incoming) for g in at_items}
    assert incoming["G2"] == set()
    assert any("Sales" in v for v in incoming["G7"])


def test_group_outputs_cover_everything_once(retail):
    _, _, vs, groups, _ = retail_structure(retail)
    produced = [o for g in groups for o in g.outputs]
    assert sorted(produced) == sorted(vs.outputs)


def test_random_group_dags_are_acyclic():
    for seed in range(25):
        rng = np.random.default_rng(4100 + seed)
        catalog, tree, batch = random_instance(rng)
        vs = generate_views(catalog, tree, batch, assign_roots(catalog, tree, batch))
        groups = group_views(vs)
        dag = build_dependency_dag(groups, vs)  # raises on a cycle
        wave = {g: i for i, w in enumerate(dag.waves) for g in w}
        for prod, cons in dag.edges:
            assert wave[prod] < wave[cons]


def test_sales_plan_register_budget():
    session = trace_session()
    s = session.structure
    sales_gid = next(g.id for g in s.groups if g.node == "Sales" and g.incoming)
    assert register_count(s.plans[sales_gid]) == (6, 4)


def test_sales_plan_looks_up_item_view_once_per_item():
    session = trace_session()
    s = session.structure
    sales_gid = next(g.id for g in s.groups if g.node == "Sales" and g.incoming)
    plan = s.plans[sales_gid]
    item_level = plan.order.index("item") + 1
    lookups = [
        st
        for block in plan.levels
        for st in block.on_enter + block.on_exit
        if st.op == "lookup" and "Items" in st.view
    ]
    assert len(lookups) == 1
    assert lookups[0].level == item_level


def test_sales_plan_shares_a_register_across_outputs():
    session = trace_session()
    s = session.structure
    sales_gid = next(g.id for g in s.groups if g.node == "Sales" and g.incoming)
    plan = s.plans[sales_gid]
    stmts = [st for b in plan.levels for st in b.on_enter + b.on_exit] + plan.epilogue
    view_write = next(
        st for st in stmts if st.op == "write" and st.output.startswith("V[Sales")
    )
    shared = next(t.reg for t in view_write.terms if t.reg is not None)
    q1_write = next(st for st in stmts if st.output == "Q1")
    q1_total = next(t.reg for t in q1_write.terms if t.reg is not None)
    # the per-item sum the view emits must also roll up into Q1's total
    feeds_q1 = [
        st
        for st in stmts
        if st.op == "accum"
        and st.target is q1_total
        and any(t.reg is shared for t in st.terms)
    ]
    assert feeds_q1, "view slot and Q1 must read the same per-item register"


def test_sales_plan_upserts_q2_at_store_level():
    session = trace_session()
    s = session.structure
    sales_gid = next(g.id for g in s.groups if g.node == "Sales" and g.incoming)
    plan = s.plans[sales_gid]
    store_level = plan.order.index("store") + 1
    q2_writes = [
        (block.level, st)
        for block in plan.levels
        for st in block.on_enter + block.on_exit
        if st.op in ("write", "upsert") and st.output == "Q2"
    ]
    assert len(q2_writes) == 1
    level, stmt = q2_writes[0]
    assert stmt.op == "upsert"
    assert level == store_level


def test_plans_pass_structural_validation(retail):
    catalog, tree, batch = retail
    session = EngineSession(catalog, tree, batch)
    for gid, plan in session.structure.plans.items():
        validate_plan(plan)


def test_validation_catches_use_before_def(retail):
    catalog, tree, batch = retail
    session = EngineSession(catalog, tree, batch)
    plan = next(iter(session.structure.plans.values()))
    # moving every reset out of the plan leaves sums read before assignment
    saved = list(plan.prologue)
    try:
        plan.prologue.clear()
        for block in plan.levels:
            block.on_enter = [st for st in block.on_enter if st.op != "reset"]
        with pytest.raises(PlanningError):
            validate_plan(plan)
    finally:
        plan.prologue.extend(saved)


def test_rendered_code_tags_every_line(retail):
    catalog, tree, batch = retail
    session = EngineSession(catalog, tree, batch)
    kinds = {"join-iteration", "view-lookup", "local-assign", "running-sum", "output-write"}
    for g in session.structure.groups:
        for line in session.code(g.id).splitlines():
            kind, _, text = line.partition("\t")
            assert kind in kinds
            assert text.strip()


def test_attribute_order_puts_key_attributes_first(retail):
    catalog, tree, batch = retail
    vs = generate_views(catalog, tree, batch, assign_roots(catalog, tree, batch))
    groups = group_views(vs)
    sales = next(g for g in groups if g.node == "Sales" and g.incoming)
    order = choose_attribute_order(catalog, tree, vs, sales)
    keys = {a for vid in sales.incoming for a in vs.views[vid].group_by}
    keys |= {a for oid in sales.outputs for a in vs.outputs[oid].group_by}
    assert set(order[: len(keys)]) == keys
    assert set(order) >= set(tree.node_attrs["Sales"])
