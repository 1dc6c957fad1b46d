"""HTTP facade over one engine session.

One session at a time, created by POST /session from a schema reference and
an application config. Structural endpoints (join tree, views, groups, code)
regenerate automatically after a root reassignment; anything produced by a
run answers 409 until the next run. GET responses carry no wall-clock times,
so identical sessions answer identically; timings travel in the /run reply.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .datagen import Dataset, db_tiny, favorita, gaussian_mixture, load_dataset
from .engine import EngineSession
from .errors import EngineError, QueryError, StaleStateError
from .ml import gen_sigma_batch, train_cart, train_linreg, train_rkmeans
from .ml.cart import TreeNode, node_batch_queries
from .ml.features import FeatureIndex
from .ml.rkmeans import nearest_centroid, step1_batch
from .queries import QueryBatch, define_query

APP_KINDS = ("batch", "linreg", "cart", "rkmeans")


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


def _builtin_dataset(name: str, seed: int | None) -> Dataset | None:
    if name == "db_tiny":
        return db_tiny()
    if name == "favorita":
        return favorita() if seed is None else favorita(seed=seed)
    if name == "mixture":
        ds, _centers = gaussian_mixture() if seed is None else gaussian_mixture(seed=seed)
        return ds
    return None


def _require(body: dict, key: str, kind: type, what: str):
    value = body.get(key)
    if not isinstance(value, kind) or (kind is str and not value):
        raise ApiError(400, f"{what}: field {key!r} must be a {kind.__name__}")
    return value


class ServiceSession:
    """Everything behind the endpoints: the dataset, the structural engine
    session the inspection tabs read, and the result of the last run."""

    def __init__(self, body: dict):
        if not isinstance(body, dict):
            raise ApiError(400, "session body must be a JSON object")
        schema = _require(body, "schema", str, "session")
        app_cfg = body.get("app", {"kind": "batch"})
        if not isinstance(app_cfg, dict):
            raise ApiError(400, "session: field 'app' must be an object")
        kind = app_cfg.get("kind", "batch")
        if kind not in APP_KINDS:
            raise ApiError(400, f"unknown application kind {kind!r}; expected one of {APP_KINDS}")
        threads = body.get("threads", 1)
        if not isinstance(threads, int) or threads < 1:
            raise ApiError(400, "session: field 'threads' must be a positive integer")
        seed = body.get("seed")
        if seed is not None and not isinstance(seed, int):
            raise ApiError(400, "session: field 'seed' must be an integer")

        dataset = _builtin_dataset(schema, seed)
        if dataset is None:
            path = Path(schema)
            if not path.exists():
                raise ApiError(
                    400,
                    f"unknown schema {schema!r}: not a built-in dataset "
                    "(db_tiny, favorita, mixture) and no such file",
                )
            try:
                dataset = load_dataset(path)
            except EngineError as exc:
                raise ApiError(400, str(exc)) from exc

        try:
            self.catalog, self.tree, demo_batch = dataset.build()
        except EngineError as exc:
            raise ApiError(400, str(exc)) from exc

        self.schema = schema
        self.kind = kind
        self.app_cfg = app_cfg
        self.threads = threads
        self.seed = seed
        self.model = None
        self.last_run: dict | None = None
        self.overrides: dict[str, str] = {}

        try:
            batch = self._structure_batch(demo_batch)
            self.engine = EngineSession(self.catalog, self.tree, batch)
            self.engine.structure  # surface planning problems at create time
        except ApiError:
            raise
        except EngineError as exc:
            raise ApiError(400, str(exc)) from exc

    def _structure_batch(self, demo_batch: QueryBatch) -> QueryBatch:
        """The query batch the inspection tabs show: for ML applications, the
        batch the trainer itself issues first."""
        cfg = self.app_cfg
        if self.kind == "batch":
            if len(demo_batch) == 0:
                raise ApiError(400, f"dataset {self.schema!r} ships no query batch")
            return demo_batch
        if self.kind == "linreg":
            features = _require(cfg, "features", list, "linreg config")
            label = _require(cfg, "label", str, "linreg config")
            index = FeatureIndex.build(self.catalog, features, label)
            return gen_sigma_batch(self.catalog, self.tree, index)
        if self.kind == "cart":
            features = _require(cfg, "features", list, "cart config")
            label = _require(cfg, "label", str, "cart config")
            stats_q = define_query(
                self.catalog,
                self.tree,
                "n0|stats",
                [],
                [[], [(label, "identity")], [(label, "square")]],
            )
            node_qs = node_batch_queries(
                self.catalog, self.tree, TreeNode(0, 0, []), features, label
            )
            return QueryBatch((stats_q, *node_qs))
        dims = _require(cfg, "dimensions", list, "rkmeans config")
        return step1_batch(self.catalog, self.tree, dims)

    def describe(self) -> dict:
        return {
            "schema": self.schema,
            "app": self.kind,
            "threads": self.threads,
            "queries": [q.id for q in self.engine.batch],
            "jointree": self.engine.jointree_summary(),
        }

    def set_root(self, query_id: str, node: str) -> None:
        try:
            self.engine.batch.query(query_id)
        except QueryError as exc:
            raise ApiError(404, str(exc)) from exc
        try:
            self.engine.set_root(query_id, node)
        except QueryError as exc:
            raise ApiError(400, str(exc)) from exc
        self.overrides[query_id] = node
        # anything the last run produced no longer matches the structure
        self.model = None
        self.last_run = None

    def views_payload(self, node: str | None, direction: str | None) -> dict:
        s = self.engine.structure
        views = list(s.viewset.views.values())
        queries = list(self.engine.batch)
        if direction:
            src, tgt = _parse_direction(direction)
            if src not in self.tree.adjacency or tgt not in self.tree.adjacency:
                raise ApiError(404, f"unknown relation in direction {direction!r}")
            views = [v for v in views if v.source == src and v.target == tgt]
            queries = []
        elif node:
            if node not in self.tree.adjacency:
                raise ApiError(404, f"unknown relation {node!r}")
            views = [v for v in views if v.source == node]
            queries = [q for q in queries if s.roots[q.id] == node]
        return {
            "views": [
                {
                    "id": v.id,
                    "source": v.source,
                    "target": v.target,
                    "keys": list(v.group_by),
                    "slots": len(v.slots),
                    "consumers": [c.output_id for c in v.consumers],
                }
                for v in sorted(views, key=lambda v: v.id)
            ],
            "queries": [
                {
                    "id": q.id,
                    "root": s.roots[q.id],
                    "group_by": list(q.group_by),
                    "aggregates": len(q.aggregates),
                }
                for q in queries
            ],
        }

    def groups_payload(self) -> dict:
        s = self.engine.structure
        return {
            "groups": [
                {
                    "id": g.id,
                    "node": g.node,
                    "outputs": list(g.outputs),
                    "incoming": list(g.incoming),
                    "wave": s.dag.wave_of(g.id),
                }
                for g in s.groups
            ],
            "edges": [list(e) for e in sorted(s.dag.edges)],
            "waves": [list(w) for w in s.dag.waves],
        }

    def code_payload(self, group_id: str) -> dict:
        try:
            plan = self.engine.plan(group_id)
        except QueryError as exc:
            raise ApiError(404, str(exc)) from exc
        text = self.engine.code(group_id)
        lines = []
        for raw in text.splitlines():
            kind, _, rest = raw.partition("\t")
            lines.append({"kind": kind, "text": rest})
        local, running = self.engine.register_totals()[group_id]
        return {
            "group": group_id,
            "node": plan.node,
            "order": list(plan.order),
            "registers": {"local": local, "running": running},
            "lines": lines,
        }

    def run(self, threads: int | None = None) -> dict:
        threads = self.threads if threads is None else threads
        out: dict = {"app": self.kind, "threads": threads}
        cfg = self.app_cfg
        overrides = dict(self.overrides)
        if self.kind == "batch":
            self.engine.run(threads=threads)
            report = self.engine.report
            out["results"] = self.engine.results_payload()
            out["report"] = report.to_dict()
            out["timings_ms"] = {"execute": report.total_ms}
        elif self.kind == "linreg":
            model = train_linreg(
                self.catalog,
                self.tree,
                cfg["features"],
                cfg["label"],
                lam=float(cfg.get("lambda", 0.0)),
                threads=threads,
                root_overrides=overrides,
            )
            self.model = model
            out["model"] = model.to_json()
            out["timings_ms"] = model.timings_ms
        elif self.kind == "cart":
            model = train_cart(
                self.catalog,
                self.tree,
                cfg["features"],
                cfg["label"],
                max_depth=int(cfg.get("max_depth", 4)),
                min_leaf=int(cfg.get("min_leaf", 2)),
                threads=threads,
                root_overrides=overrides,
            )
            self.model = model
            out["model"] = model.to_json()
            out["timings_ms"] = model.timings_ms
        else:
            model = train_rkmeans(
                self.catalog,
                self.tree,
                cfg["dimensions"],
                k=int(cfg.get("k", 3)),
                k_per_dim=cfg.get("k_per_dim"),
                seed=self.seed if self.seed is not None else 0,
                threads=threads,
                root_overrides=overrides,
            )
            self.model = model
            out["model"] = model.to_json()
            out["timings_ms"] = model.timings_ms
        self.last_run = out
        return out

    def metrics_payload(self) -> dict:
        """Deterministic quantities only; timings live in the /run response."""
        if self.kind == "batch":
            try:
                report = self.engine.report
            except StaleStateError as exc:
                raise ApiError(409, str(exc)) from exc
            totals = self.engine.totals()
            return {
                "app": self.kind,
                "queries": totals["queries"],
                "views": totals["views"],
                "groups": totals["groups"],
                "registers": totals["registers"],
                "rows_scanned": {g.group_id: g.rows_scanned for g in report.groups},
                "lookups": {g.group_id: g.lookups for g in report.groups},
            }
        if self.model is None:
            raise ApiError(409, "metrics not available: no run has happened yet")
        m = self.model
        if self.kind == "linreg":
            return {
                "app": self.kind,
                "iterations": m.iterations,
                "converged": m.converged,
                "objective": m.objective_trace[-1] if m.objective_trace else None,
                "engine_queries": len(m.engine_queries),
            }
        if self.kind == "cart":
            return {
                "app": self.kind,
                "leaves": m.n_leaves(),
                "max_depth": m.max_depth,
                "engine_queries": len(m.engine_queries),
            }
        return {
            "app": self.kind,
            "coreset_size": m.grid_size,
            "rows": m.n_rows,
            "coreset_ratio": m.coreset_ratio,
            "relative_gap": m.relative_gap,
            "baseline_runs": 10,
            "engine_queries": len(m.engine_queries),
        }

    def assign_payload(self, body: dict) -> dict:
        if self.kind != "rkmeans":
            raise ApiError(400, f"active application is {self.kind!r}, not rkmeans")
        if self.model is None:
            raise ApiError(409, "no centroids: no run has happened yet")
        if not isinstance(body, dict) or "point" not in body:
            raise ApiError(400, "body must be an object with a 'point' array")
        point = body["point"]
        dims = self.model.dimensions
        if (
            not isinstance(point, list)
            or len(point) != len(dims)
            or not all(isinstance(v, (int, float)) for v in point)
        ):
            raise ApiError(400, f"'point' must be a numeric array of length {len(dims)}")
        centroids = self.model.centroids
        idx = nearest_centroid([float(v) for v in point], centroids)
        dist2 = sum((float(p) - c) ** 2 for p, c in zip(point, centroids[idx]))
        return {
            "index": idx,
            "centroid": centroids[idx],
            "distance": dist2 ** 0.5,
        }


def _parse_direction(direction: str) -> tuple[str, str]:
    for sep in ("->", "→"):
        if sep in direction:
            src, _, tgt = direction.partition(sep)
            return src.strip(), tgt.strip()
    raise ApiError(400, f"direction {direction!r} must look like 'Source->Target'")


def create_app(ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="aggbatch engine service", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.session = None
    app.state.lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def on_api_error(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed request body"})

    @app.exception_handler(StaleStateError)
    async def on_stale(_req: Request, exc: StaleStateError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(EngineError)
    async def on_engine_error(_req: Request, exc: EngineError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    def session() -> ServiceSession:
        sess = app.state.session
        if sess is None:
            raise ApiError(409, "no active session; POST /session first")
        return sess

    @app.post("/session")
    async def create_session(body: dict = Body(...)):
        with app.state.lock:
            sess = ServiceSession(body)
            app.state.session = sess
        return sess.describe()

    @app.get("/jointree")
    async def jointree():
        return session().engine.jointree_summary()

    @app.get("/views")
    async def views(node: str | None = None, direction: str | None = None):
        return session().views_payload(node, direction)

    @app.post("/queries/{query_id}/root")
    async def reassign_root(query_id: str, body: dict = Body(...)):
        node = body.get("node") if isinstance(body, dict) else None
        if not isinstance(node, str) or not node:
            raise ApiError(400, "body must be an object with a 'node' string")
        sess = session()
        with app.state.lock:
            sess.set_root(query_id, node)
        return {
            "query": query_id,
            "root": node,
            "jointree": sess.engine.jointree_summary(),
            **sess.views_payload(None, None),
        }

    @app.get("/groups")
    async def groups():
        return session().groups_payload()

    @app.get("/groups/{group_id}/code")
    async def group_code(group_id: str):
        return session().code_payload(group_id)

    @app.post("/run")
    async def run(body: dict | None = Body(None)):
        threads = None
        if isinstance(body, dict) and "threads" in body:
            threads = body["threads"]
            if not isinstance(threads, int) or threads < 1:
                raise ApiError(400, "'threads' must be a positive integer")
        sess = session()
        with app.state.lock:
            return sess.run(threads)

    @app.post("/rkmeans/assign")
    async def rkmeans_assign(body: dict = Body(...)):
        return session().assign_payload(body)

    @app.get("/metrics")
    async def metrics():
        return session().metrics_payload()

    if ui_dir is None:
        ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    ui_dir = Path(ui_dir)
    if ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
