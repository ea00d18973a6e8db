"""Single command-line entry point wiring all modules together.

Verbs: load, dump, put, get, scan, locate, txn, mr, plan, chain, sim.
All output is deterministic for a fixed --seed (or ROBOSTORE_SEED).
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import dataio
from .chains import ChainStore
from .errors import RoboStoreError
from .graph import load_graph_lines
from .mapreduce import JobSpec, MapReduceEngine
from .sim import SimConfig, run_scenario
from .storage import ColumnPath, ColumnStore
from .tablets import LocatorClient, TabletDirectory, TabletRange
from .txn import run_txn_script


def _seed_from(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ROBOSTORE_SEED")
    return int(env) if env else 0


def _load(args):
    if args.data:
        return dataio.load_file(args.data)
    return ColumnStore(), None


def _path_from(args):
    return ColumnPath(args.table, args.row.encode("utf-8"), args.family,
                      args.column, args.super)


def _show(raw):
    return raw.decode("utf-8", "backslashreplace")


# --- verb implementations ---

def cmd_load(args, out):
    store, indexes = dataio.load_file(args.file)
    cells = sum(1 for table in store.table_names() for _ in store.iter_cells(table))
    rows = sum(len(store.scan(table)) for table in store.table_names())
    idx = len(indexes.owners()) if indexes else 0
    out.write("LOADED tables=%d rows=%d cells=%d indexes=%d\n"
              % (len(store.table_names()), rows, cells, idx))
    return 0


def cmd_dump(args, out):
    store, indexes = dataio.load_file(args.file)
    text = dataio.dumps_store(store, indexes)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return 0


def cmd_put(args, out):
    store, indexes = _load(args)
    if not store.has_table(args.table):
        store.create_table(args.table, [(args.family, args.super is not None)])
    else:
        store.ensure_family(args.table, args.family, args.super is not None)
    ts = store.put(_path_from(args), args.value.encode("utf-8"), ts=args.ts)
    out.write("TS %d\n" % ts)
    if args.out:
        dataio.dump_file(args.out, store, indexes)
    return 0


def cmd_get(args, out):
    store, _ = _load(args)
    path = _path_from(args)
    cell = store.get_at(path, args.at) if args.at is not None else store.get_latest(path)
    if cell is None:
        out.write("ABSENT\n")
    else:
        out.write("VALUE %s TS %d\n" % (_show(cell.value), cell.ts))
    return 0


def cmd_scan(args, out):
    store, _ = _load(args)
    rows = store.scan(args.table,
                      start_row=args.start.encode("utf-8"),
                      end_row=args.end.encode("utf-8") if args.end is not None else None,
                      family=args.family, column=args.column,
                      value=args.value.encode("utf-8") if args.value is not None else None,
                      limit=args.limit)
    for row_key, cells in rows:
        for fam, sup, col, cell in cells:
            out.write("CELL %s %s %s %s %d %s\n"
                      % (_show(row_key), fam, sup if sup is not None else "-",
                         col, cell.ts, _show(cell.value)))
    return 0


def cmd_locate(args, out):
    directory = TabletDirectory()
    splits = [s.encode("utf-8") for s in args.splits.split(",") if s]
    directory.build({args.table: splits}, list(range(args.nodes)))
    client = LocatorClient(directory)
    moves = [(m.split("=")[0], int(m.split("=")[1])) for m in (args.move or [])]
    for attempt in range(args.repeat):
        result = client.locate(args.table, args.key.encode("utf-8"))
        for level, node in result.hops:
            out.write("HOP %s %d\n" % (level, node))
        out.write("RESULT %d\n" % result.location.node)
        if attempt == 0:
            for start, node in moves:
                rng = directory.authoritative_location(args.table, start.encode("utf-8")).range
                directory.move_tablet(rng, node)
    return 0


def cmd_txn(args, out):
    with open(args.script, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    store, _ = _load(args)
    _, events = run_txn_script(store, lines, ltm_count=args.ltms, seed=_seed_from(args))
    for event in events:
        out.write(event + "\n")
    return 0


def cmd_mr(args, out):
    store, _ = _load(args)
    map_fn, reduce_fn = args.fn.split(",")
    params = {}
    if args.template is not None:
        params["template"] = args.template.encode("utf-8")
    engine = MapReduceEngine(store, workers=args.workers, seed=_seed_from(args))
    spec = JobSpec(table=args.table, map_fn=map_fn, reduce_fn=reduce_fn,
                   splits=args.splits, params=params)
    result = engine.wait(engine.submit(spec))
    for key in sorted(result):
        out.write("RESULT %s %s\n" % (key, result[key]))
    return 0


def cmd_plan(args, out):
    with open(args.graph, "r", encoding="utf-8") as fh:
        graph = load_graph_lines(fh.readlines())
    path = graph.shortest_path(args.src, args.dst, algorithm=args.algo)
    if path is None:
        out.write("NOPATH\n")
    else:
        out.write("PATH %s COST %s\n"
                  % (",".join(str(n) for n in path.nodes), format(path.cost, "g")))
    return 0


def cmd_chain(args, out):
    import json

    store, _ = _load(args)
    chains = ChainStore(store)
    with open(args.chains, "r", encoding="utf-8") as fh:
        chains.load_doc(json.load(fh))
    context = {}
    if args.ctx:
        for pair in args.ctx.split(","):
            key, _, value = pair.partition("=")
            context[key] = value.encode("utf-8")
    for step in chains.execute(args.task, context):
        out.write("STEP %s %s %d\n" % (step.instruction_id, step.action, step.state.level))
    return 0


def cmd_sim(args, out):
    with open(args.script, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    config = SimConfig(node_count=args.nodes, replication_factor=args.replicas,
                       mode=args.mode, seed=_seed_from(args),
                       drop_probability=args.drop,
                       delay_min=args.delay_min, delay_max=args.delay_max)
    _, trace = run_scenario(config, lines)
    out.write(trace)
    return 0


# --- argument wiring ---

def build_parser():
    parser = argparse.ArgumentParser(
        prog="robostore",
        description="Versioned column-family store with a simulated cluster on top.")
    parser.add_argument("--seed", type=int, default=None,
                        help="deterministic seed (env ROBOSTORE_SEED as fallback)")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("load", help="parse and validate a data file")
    p.add_argument("file")
    p.set_defaults(handler=cmd_load)

    p = sub.add_parser("dump", help="canonically re-serialize a data file")
    p.add_argument("file")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_dump)

    def add_path_args(p, with_super=True):
        p.add_argument("--table", required=True)
        p.add_argument("--row", required=True)
        p.add_argument("--family", required=True)
        p.add_argument("--column", required=True)
        if with_super:
            p.add_argument("--super", default=None)

    p = sub.add_parser("put", help="write one cell")
    p.add_argument("--data", help="data file to start from")
    add_path_args(p)
    p.add_argument("--value", required=True)
    p.add_argument("--ts", type=int, default=0)
    p.add_argument("--out", help="write the updated store here")
    p.set_defaults(handler=cmd_put)

    p = sub.add_parser("get", help="read one cell")
    p.add_argument("--data", required=True)
    add_path_args(p)
    p.add_argument("--at", type=int, default=None, help="point-in-time stamp")
    p.set_defaults(handler=cmd_get)

    p = sub.add_parser("scan", help="filtered table scan")
    p.add_argument("--data", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--start", default="")
    p.add_argument("--end", default=None)
    p.add_argument("--family", default=None)
    p.add_argument("--column", default=None)
    p.add_argument("--value", default=None)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(handler=cmd_scan)

    p = sub.add_parser("locate", help="resolve a tablet through the hierarchy")
    p.add_argument("--nodes", type=int, default=4)
    p.add_argument("--table", required=True)
    p.add_argument("--splits", default="", help="comma-separated split keys")
    p.add_argument("--key", required=True)
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--move", action="append",
                   help="KEY=NODE, applied after the first lookup")
    p.set_defaults(handler=cmd_locate)

    p = sub.add_parser("txn", help="transaction script runner")
    p.add_argument("run", choices=["run"])
    p.add_argument("script")
    p.add_argument("--data")
    p.add_argument("--ltms", type=int, default=4)
    p.set_defaults(handler=cmd_txn)

    p = sub.add_parser("mr", help="run a mapreduce job")
    p.add_argument("run", choices=["run"])
    p.add_argument("--fn", required=True, help="MAP,REDUCE registered names")
    p.add_argument("--table", required=True)
    p.add_argument("--splits", type=int, default=1)
    p.add_argument("--data", required=True)
    p.add_argument("--template", default=None)
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(handler=cmd_mr)

    p = sub.add_parser("plan", help="shortest path over a graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("--from", dest="src", type=int, required=True)
    p.add_argument("--to", dest="dst", type=int, required=True)
    p.add_argument("--algo", default="dijkstra", choices=["dijkstra", "astar"])
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("chain", help="execute a stored instruction chain")
    p.add_argument("run", choices=["run"])
    p.add_argument("--task", required=True)
    p.add_argument("--chains", required=True, help="chain definition file (JSON)")
    p.add_argument("--ctx", default="", help="k=v,... context pairs")
    p.add_argument("--data")
    p.set_defaults(handler=cmd_chain)

    p = sub.add_parser("sim", help="run a cluster scenario script")
    p.add_argument("run", choices=["run"])
    p.add_argument("script")
    p.add_argument("--nodes", type=int, default=4)
    p.add_argument("--replicas", type=int, default=2)
    p.add_argument("--mode", default="AP", choices=["CP", "AP"])
    p.add_argument("--drop", type=float, default=0.0)
    p.add_argument("--delay-min", type=int, default=1)
    p.add_argument("--delay-max", type=int, default=1)
    p.set_defaults(handler=cmd_sim)

    return parser


def run(argv, out=None, err=None):
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args, out)
    except RoboStoreError as exc:
        err.write("error: %s: %s\n" % (type(exc).__name__, exc))
        return 1
    except (OSError, ValueError) as exc:
        err.write("error: %s\n" % exc)
        return 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
