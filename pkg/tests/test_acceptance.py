"""End-to-end acceptance checks, one verdict line per headline behavior.

Each test wraps its checks so the output always carries a single
PASS/FAIL line with the measured numbers and runtime, whether or not
the underlying assertions hold.
"""

import time

import numpy as np

from aggbatch.datagen import favorita, gaussian_mixture, random_instance
from aggbatch.engine import EngineSession
from aggbatch.ml.cart import train_cart
from aggbatch.ml.features import FeatureIndex, assemble_sigma, gen_sigma_batch
from aggbatch.ml.linreg import gradient, objective, train_linreg
from aggbatch.ml.rkmeans import step1_batch, train_rkmeans
from aggbatch.planner import build_dependency_dag, group_views, register_count
from aggbatch.queries import oracle_evaluate
from aggbatch.views import assign_roots, generate_views

from conftest import trace_session
from test_cart import check_tree_against_brute_force, regression_dataset
from test_linreg import closed_form, random_regression_instance


def criterion(name, budget_s, fn):
    t0 = time.perf_counter()
    try:
        note = fn()
        ok = True
    except Exception as exc:  # noqa: BLE001  - the verdict line must always print
        ok, note = False, f"{type(exc).__name__}: {exc}"
    dt = time.perf_counter() - t0
    if ok and dt > budget_s:
        ok, note = False, f"{note}; over time budget ({dt:.1f}s > {budget_s}s)"
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {note} [{dt:.1f}s]"
    print(line)
    assert ok, line


def results_gap(want, got):
    """Worst relative difference across two result sets, scale-floored at 1."""
    assert set(want) == set(got), "query id sets differ"
    worst = 0.0
    for qid in want:
        w = dict(want[qid].sorted_rows())
        g = dict(got[qid].sorted_rows())
        assert set(w) == set(g), f"{qid}: group-by key sets differ"
        for key in w:
            scale = np.maximum(1.0, np.abs(w[key]))
            worst = max(worst, float((np.abs(w[key] - g[key]) / scale).max()))
    return worst


def test_oracle_equivalence_on_random_instances():
    def run():
        n_instances, n_queries, worst_float = 0, 0, 0.0
        for i in range(70):
            rng = np.random.default_rng(41000 + i)
            big = i % 7 == 0
            catalog, tree, batch = random_instance(
                rng,
                max_rows=250 if big else 60,
                max_queries=20 if big else 12,
            )
            got = EngineSession(catalog, tree, batch).run()
            gap = results_gap(oracle_evaluate(catalog, tree, batch), got)
            assert gap == 0.0, f"integer instance {i}: gap {gap:g}, expected exact"
            n_instances += 1
            n_queries += len(batch)
        for i in range(30):
            rng = np.random.default_rng(42000 + i)
            catalog, tree, batch = random_instance(rng, float_frac=0.4)
            got = EngineSession(catalog, tree, batch).run()
            gap = results_gap(oracle_evaluate(catalog, tree, batch), got)
            assert gap <= 1e-9, f"float instance {i}: gap {gap:g} > 1e-9"
            worst_float = max(worst_float, gap)
            n_instances += 1
            n_queries += len(batch)
        return (
            f"{n_instances} instances / {n_queries} queries; 70 exact, "
            f"30 within 1e-9 (worst {worst_float:.2e})"
        )

    criterion("oracle equivalence", 120, run)


def test_retail_view_and_group_structure():
    def run():
        catalog, tree, batch = favorita().build()
        vs = generate_views(catalog, tree, batch, assign_roots(catalog, tree, batch))
        pairs = {(v.source, v.target) for v in vs.views.values()}
        assert pairs == {
            ("Transactions", "Sales"),
            ("StoRes", "Transactions"),
            ("Oil", "Transactions"),
            ("Holidays", "Sales"),
            ("Items", "Sales"),
            ("Sales", "Items"),
        }, f"view directions off: {sorted(pairs)}"
        groups = group_views(vs)
        assert len(groups) == 7, f"{len(groups)} groups, expected 7"
        dag = build_dependency_dag(groups, vs)
        assert sorted(dag.edges) == [
            ("G1", "G6"),
            ("G2", "G6"),
            ("G3", "G5"),
            ("G4", "G5"),
            ("G5", "G6"),
            ("G6", "G7"),
        ], f"dependency edges off: {sorted(dag.edges)}"
        return "6 merged views, 7 groups, expected dependency edges"

    criterion("retail structure", 1, run)


def test_sales_plan_shape():
    def run():
        session = trace_session()
        s = session.structure
        gid = next(g.id for g in s.groups if g.node == "Sales" and g.incoming)
        plan = s.plans[gid]
        regs = register_count(plan)
        assert regs == (6, 4), f"register count {regs}, expected (6, 4)"

        stmts = [st for b in plan.levels for st in b.on_enter + b.on_exit]
        item_level = plan.order.index("item") + 1
        lookups = [st for st in stmts if st.op == "lookup" and "Items" in st.view]
        assert len(lookups) == 1 and lookups[0].level == item_level, (
            "expected exactly one item-view lookup at the item level"
        )

        all_stmts = stmts + plan.epilogue
        view_write = next(
            st for st in all_stmts if st.op == "write" and st.output.startswith("V[Sales")
        )
        shared = next(t.reg for t in view_write.terms if t.reg is not None)
        q1_total = next(
            t.reg
            for st in all_stmts
            if st.output == "Q1"
            for t in st.terms
            if t.reg is not None
        )
        assert any(
            st.op == "accum"
            and st.target is q1_total
            and any(t.reg is shared for t in st.terms)
            for st in all_stmts
        ), "per-item register must feed both the item view and the Q1 total"

        store_level = plan.order.index("store") + 1
        upserts = [
            (b.level, st)
            for b in plan.levels
            for st in b.on_enter + b.on_exit
            if st.op in ("write", "upsert") and st.output == "Q2"
        ]
        assert upserts == [(store_level, upserts[0][1])] and upserts[0][1].op == "upsert", (
            "Q2 must be written once, as an upsert, at the store level"
        )

        tags = {line.split("\t")[0] for line in session.code(gid).splitlines()}
        assert tags <= {
            "join-iteration",
            "view-lookup",
            "local-assign",
            "running-sum",
            "output-write",
        } and "view-lookup" in tags, f"unexpected fragment tags {tags}"
        return "registers (6, 4); single item-view lookup; shared item register; store-level upsert"

    criterion("plan shape", 10, run)


def test_single_pass_and_thread_determinism():
    def run():
        catalog, tree, batch = favorita().build()
        session = EngineSession(catalog, tree, batch)
        session.run()
        for stats in session.report.groups:
            want = catalog.tables[stats.node].n_rows
            assert stats.rows_scanned == want, (
                f"{stats.group_id} scanned {stats.rows_scanned} rows of {want}"
            )

        checked = 0
        for seed in (43000, 43001, 43002, 43003):
            rng = np.random.default_rng(seed)
            c2, t2, b2 = random_instance(rng, max_rows=400)
            single = EngineSession(c2, t2, b2).run(threads=1)
            multi = EngineSession(c2, t2, b2).run(threads=4)
            for qid in single:
                s = dict(single[qid].sorted_rows())
                m = dict(multi[qid].sorted_rows())
                assert set(s) == set(m), f"{qid}: key sets differ across threads"
                for key in s:
                    assert (s[key] == m[key]).all(), f"{qid}{key}: bits differ"
                checked += 1
        return (
            f"rows scanned == node cardinality for all retail groups; "
            f"{checked} queries bit-identical at 1 and 4 threads"
        )

    criterion("single pass + determinism", 60, run)


def test_linear_regression_matches_closed_form():
    def run():
        worst_param = 0.0
        for i in range(10):
            catalog, tree, features, label = random_regression_instance(43100 + i)
            lam = 0.05 if i % 2 else 0.5
            want, _ = closed_form(catalog, tree, features, label, lam)
            model = train_linreg(catalog, tree, features, label, lam=lam)
            err = np.abs(np.asarray(model.theta) - want) / np.maximum(1.0, np.abs(want))
            worst_param = max(worst_param, float(err.max()))
            assert err.max() < 1e-6, f"schema {i}: parameter off by {err.max():.2e}"

        catalog, tree, features, label = random_regression_instance(43150)
        index = FeatureIndex.build(catalog, features, label)
        batch = gen_sigma_batch(catalog, tree, index)
        sigma, n_rows = assemble_sigma(index, EngineSession(catalog, tree, batch).run())
        rng = np.random.default_rng(17)
        theta = rng.normal(size=index.n_slots)
        penalized = np.ones(index.n_slots, dtype=bool)
        penalized[0] = False
        penalized[index.label_slot] = False
        g = gradient(sigma, n_rows, theta, 0.3, penalized)
        worst_fd = 0.0
        eps = 1e-6
        for s in range(index.n_slots):
            probe = np.zeros(index.n_slots)
            probe[s] = eps
            fd = (
                objective(sigma, n_rows, theta + probe, 0.3, penalized)
                - objective(sigma, n_rows, theta - probe, 0.3, penalized)
            ) / (2 * eps)
            rel = abs(fd - g[s]) / max(1.0, abs(fd))
            worst_fd = max(worst_fd, rel)
            assert rel <= 1e-5, f"slot {s}: gradient vs finite difference off by {rel:.2e}"
        return (
            f"10 schemas within 1e-6/parameter (worst {worst_param:.2e}); "
            f"finite-difference gradient within 1e-5 (worst {worst_fd:.2e})"
        )

    criterion("linear regression", 60, run)


def test_cart_matches_brute_force():
    def run():
        from aggbatch.datagen import db_tiny

        for i in range(10):
            catalog, tree, features, label = regression_dataset(45000 + 37 * i)
            model = train_cart(catalog, tree, features, label, max_depth=4)
            check_tree_against_brute_force(model, catalog, tree, features, label)

        catalog, tree, _ = db_tiny().build()
        tiny_model = train_cart(catalog, tree, ["b"], "c", max_depth=1)
        assert tiny_model.root.split == ("b", "<=", 20.0), (
            f"tiny split {tiny_model.root.split}"
        )
        means = (tiny_model.root.yes.prediction, tiny_model.root.no.prediction)
        assert means == (100.0, 250.0), f"tiny leaf means {means}"
        return "10 datasets split-identical to brute force; tiny tree: b <= 20, leaves 100/250"

    criterion("regression trees", 60, run)


def test_rkmeans_conservation_and_quality():
    def run():
        exact = 0
        for seed, n in ((21, 1500), (33, 800)):
            dataset, _ = gaussian_mixture(seed=seed, n=n)
            catalog, tree, _ = dataset.build()
            model = train_rkmeans(catalog, tree, ["x0", "x1"], k=3, seed=1, baseline_restarts=0)
            assert model.grid_weight_total == float(n), (
                f"grid weight {model.grid_weight_total} != {n}"
            )
            exact += 1

        dataset, _ = gaussian_mixture(seed=33, n=800)
        catalog, tree, _ = dataset.build()
        k1 = train_rkmeans(catalog, tree, ["x0", "x1"], k=1, seed=3, baseline_restarts=0)
        pts = np.array(
            [
                [float(catalog.tables["Points"].columns[d][i]) for d in ("x0", "x1")]
                for i in range(800)
            ]
        )
        k1_err = float(np.abs(np.array(k1.centroids[0]) - pts.mean(axis=0)).max())
        assert k1_err < 1e-9, f"k=1 centroid off the mean by {k1_err:.2e}"

        dataset, _ = gaussian_mixture(seed=60, n=10000, k=4)
        catalog, tree, _ = dataset.build()
        gaps, ratios = [], []
        for r in range(10):
            model = train_rkmeans(catalog, tree, ["x0", "x1"], k=4, seed=r)
            assert model.grid_weight_total == 10000.0
            exact += 1
            gaps.append(model.relative_gap)
            ratios.append(model.coreset_ratio)
        gap, ratio = float(np.mean(gaps)), float(np.mean(ratios))
        assert gap < 0.10, f"objective gap {gap:.3f} >= 0.10"
        assert ratio < 0.05, f"coreset ratio {ratio:.4f} >= 0.05"
        return (
            f"grid mass exact on {exact} runs; k=1 centroid err {k1_err:.1e}; "
            f"10-run mixture avg: gap {gap:.4f}, coreset ratio {ratio:.4f}"
        )

    criterion("clustering", 120, run)


def test_rkmeans_query_budget():
    def run():
        counts = []
        for dims in (2, 3):
            dataset, _ = gaussian_mixture(seed=19, n=600, k=3, dims=dims)
            catalog, tree, _ = dataset.build()
            names = [f"x{d}" for d in range(dims)]
            assert len(step1_batch(catalog, tree, names)) == dims
            model = train_rkmeans(catalog, tree, names, k=2, seed=0, baseline_restarts=0)
            assert len(model.engine_queries) == dims + 1, (
                f"{dims} dims took {len(model.engine_queries)} queries"
            )
            counts.append(f"{dims} dims -> {dims + 1} queries")
        return "; ".join(counts)

    criterion("per-dimension query budget", 30, run)
