"""Command line entry point.

Subcommands mirror the service: inspect a schema, print the planned
structure for an application config, run it (optionally leaving CSVs,
JSON summaries, and figures in a report directory), cross-check against
the brute-force oracle, start the HTTP service, or write one of the
bundled datasets to disk.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .datagen import db_tiny, favorita, gaussian_mixture, load_dataset
from .errors import EngineError
from .queries import oracle_evaluate
from .service import ApiError, ServiceSession


def _config_body(args) -> dict:
    path = Path(args.config)
    try:
        body = json.loads(path.read_text())
    except OSError as exc:
        raise EngineError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise EngineError(f"{path}: JSON parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(body, dict):
        raise EngineError(f"{path}: config must be a JSON object")
    if args.threads is not None:
        body["threads"] = args.threads
    if args.seed is not None:
        body["seed"] = args.seed
    return body


def _dump_ir(session, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = session.engine.structure
    for gid in sorted(s.plans):
        plan = s.plans[gid]
        lines = [f"group {gid} at {plan.node}", f"order: {plan.order}", ""]
        for block in plan.levels:
            lines.append(f"level {block.level} ({block.attr}):")
            for phase, stmts in (("enter", block.on_enter), ("exit", block.on_exit)):
                for st in stmts:
                    lines.append(f"  {phase}: {st}")
        for phase, stmts in (("prologue", plan.prologue), ("epilogue", plan.epilogue)):
            for st in stmts:
                lines.append(f"{phase}: {st}")
        (out / f"{gid}.ir.txt").write_text("\n".join(lines) + "\n")
        (out / f"{gid}.code.txt").write_text(session.engine.code(gid) + "\n")


def cmd_load(args) -> int:
    dataset = load_dataset(args.schema)
    catalog, tree, batch = dataset.build()
    print(f"{len(catalog.relations)} relations, {len(tree.edges)} join edges")
    for name, rel in catalog.relations.items():
        table = catalog.tables[name]
        print(f"  {name}: {table.n_rows} rows ({', '.join(rel.attribute_names())})")
    if len(batch):
        print(f"batch: {', '.join(q.id for q in batch)}")
    return 0


def cmd_plan(args) -> int:
    session = ServiceSession(_config_body(args))
    summary = session.engine.jointree_summary()
    print("roots:")
    for qid, node in sorted(summary["roots"].items()):
        print(f"  {qid} -> {node}")
    views = session.views_payload(None, None)["views"]
    print(f"{len(views)} views:")
    for v in views:
        print(f"  {v['id']}  keys={v['keys']}  slots={v['slots']}")
    groups = session.groups_payload()
    print(f"{len(groups['groups'])} groups in {len(groups['waves'])} waves:")
    for g in groups["groups"]:
        print(f"  {g['id']} at {g['node']}: {', '.join(g['outputs'])}")
    for g in groups["groups"]:
        print(f"\n--- {g['id']} ({g['node']}) ---")
        for line in session.code_payload(g["id"])["lines"]:
            print(line["text"])
    if args.dump_ir:
        _dump_ir(session, args.dump_ir)
        print(f"\nplan IR written to {args.dump_ir}")
    return 0


def cmd_run(args) -> int:
    from .report import write_report

    session = ServiceSession(_config_body(args))
    payload = session.run()
    out_dir = args.out or f"{Path(args.config).stem}_out"
    out = write_report(session.engine, out_dir, run_payload=payload, model=session.model)
    if session.model is not None:
        print(f"model written to {out / 'model.json'}")
    for phase, ms in sorted(payload.get("timings_ms", {}).items()):
        print(f"  {phase}: {ms:.1f} ms")
    print(f"report written to {out}")
    if args.dump_ir:
        _dump_ir(session, args.dump_ir)
    return 0


def cmd_oracle(args) -> int:
    session = ServiceSession(_config_body(args))
    results = oracle_evaluate(session.catalog, session.tree, session.engine.batch)
    for qid in sorted(results):
        res = results[qid]
        print(f"# {qid} ({', '.join(res.key_attrs) or 'scalar'})")
        for key, vec in res.sorted_rows():
            cells = [str(v) for v in key] + [repr(float(x)) for x in vec]
            print("\t".join(cells))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def cmd_datagen(args) -> int:
    if args.name == "db_tiny":
        dataset = db_tiny()
    elif args.name == "favorita":
        dataset = favorita() if args.seed is None else favorita(seed=args.seed)
    elif args.name == "mixture":
        dataset, _ = gaussian_mixture() if args.seed is None else gaussian_mixture(seed=args.seed)
    else:
        raise EngineError(f"unknown dataset {args.name!r}")
    out = dataset.write(args.out)
    print(f"dataset written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aggbatch",
        description="aggregate-batch engine: plan, run, inspect, serve",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="read a schema directory and print what it holds")
    p.add_argument("schema", help="path to schema.json or its directory")
    p.set_defaults(fn=cmd_load)

    def config_parser(name, help_text):
        q = sub.add_parser(name, help=help_text)
        q.add_argument("config", help="application config JSON ({schema, app, ...})")
        q.add_argument("--threads", type=int, default=None)
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--dump-ir", metavar="DIR", default=None,
                       help="also write per-group plan IR and rendered code")
        return q

    p = config_parser("plan", "print roots, views, groups, and rendered code")
    p.set_defaults(fn=cmd_plan)

    p = config_parser("run", "execute the application, write model and report")
    p.add_argument("--out", metavar="DIR", default=None,
                   help="report directory (default: <config-stem>_out)")
    p.set_defaults(fn=cmd_run)

    p = config_parser("oracle", "evaluate the batch by brute-force join materialization")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("datagen", help="write a bundled dataset to disk")
    p.add_argument("name", choices=["db_tiny", "favorita", "mixture"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_datagen)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (EngineError, ApiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
