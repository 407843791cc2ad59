"""Command line: ``prodembed {gen,curvature,recon,eval,kg} ...``.

Training options are flat dotted keys (``--opt.lr 0.1``, ``--gating.heads 2``)
built by reflection over the config dataclasses.  ``--config file.json`` holds
the same keys; explicit flags win over the file, the file over defaults.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import graphs, kg
from .curvature import curvature_summary, suggest_signature
from .errors import DisconnectedGraphError, ParseError, ProdEmbedError, UsageError
from .gating import GatingConfig
from .graphs import atomic_write
from .optim import RsgdConfig
from .product import parse_signature
from .recon import ReconConfig, evaluate_embedding, load_checkpoint, save_checkpoint, train_reconstruction

log = logging.getLogger("prodembed")

BUILD = f"prodembed {__version__}"
SMALL_GRAPH = 100  # default epochs: 1000 up to this many nodes, 300 beyond
SUMMARY_FIELDS = ("run", "graph", "signature", "weights", "scale", "seed", "gating", "epochs", "d_avg", "map", "n_pairs", "build")


# ---------------------------------------------------------------------------
# dotted-key schema


@dataclasses.dataclass(frozen=True)
class Key:
    name: str
    kind: type
    default: object
    path: tuple  # attribute path inside the config object


def _fields(cls, prefix, path, skip=()):
    out = []
    inst = cls()
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = getattr(inst, f.name)
        kind = type(default) if default is not None else str
        out.append(Key(prefix + f.name, kind, default, path + (f.name,)))
    return out


def recon_schema():
    return (
        _fields(ReconConfig, "", (), skip=("opt", "gate"))
        + _fields(RsgdConfig, "opt.", ("opt",))
        + _fields(GatingConfig, "gating.", ("gate",))
    )


def kg_schema():
    return _fields(kg.KGConfig, "", (), skip=("gate",)) + _fields(GatingConfig, "gating.", ("gate",))


def parse_bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def convert(key: Key, value):
    try:
        if key.kind is bool:
            return value if isinstance(value, bool) else parse_bool(value)
        if key.kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if key.kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise UsageError(f"--{key.name}: invalid {key.kind.__name__} value {value!r}") from None


def read_config_file(path, schema):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"--config: no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config {path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise UsageError(f"--config {path}: expected a flat JSON object of dotted keys")
    known = {k.name: k for k in schema}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise UsageError(f"--config {path}: unknown key(s) {', '.join(unknown)}")
    return {k: convert(known[k], v) for k, v in data.items()}


def resolve(schema, args) -> tuple[dict, set]:
    """Merge defaults, config file and explicit flags; returns (values, explicit keys)."""
    values = {k.name: k.default for k in schema}
    explicit = set()
    if getattr(args, "config", None):
        from_file = read_config_file(args.config, schema)
        values.update(from_file)
        explicit.update(from_file)
    for k in schema:
        if k.name in vars(args):
            values[k.name] = convert(k, vars(args)[k.name])
            explicit.add(k.name)
    return values, explicit


def build_config(cls, schema, values):
    nested = {}
    for k in schema:
        node = nested
        for part in k.path[:-1]:
            node = node.setdefault(part, {})
        node[k.path[-1]] = values[k.name]
    sub = {"opt": RsgdConfig, "gate": GatingConfig}
    kwargs = {name: sub[name](**v) if isinstance(v, dict) else v for name, v in nested.items()}
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# argument parser


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_keys(parser, schema, aliases=None):
    aliases = aliases or {}
    group = parser.add_argument_group("config keys (also accepted in --config JSON)")
    for k in schema:
        names = [f"--{k.name}"] + aliases.get(k.name, [])
        metavar = "on|off" if k.kind is bool else k.kind.__name__.upper()
        group.add_argument(*names, dest=k.name, metavar=metavar, default=argparse.SUPPRESS, help=f"default: {k.default}")
    parser.add_argument("--config", help="flat JSON object of dotted keys, merged beneath flags")


def build_parser():
    p = Parser(prog="prodembed", description="Graph embeddings in weighted product manifolds.")
    p.add_argument("--version", action="version", version=BUILD)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("gen", help="write a synthetic graph as an edge list")
    g.add_argument("--kind", required=True, choices=sorted(graphs.GENERATORS))
    for name in ("n", "b", "r", "depth", "k", "leaves"):
        g.add_argument(f"--{name}", type=int)
    g.add_argument("--out", required=True)

    c = sub.add_parser("curvature", help="sectional-curvature summary and suggested signature (JSON)")
    c.add_argument("--graph", required=True)
    c.add_argument("--budget", type=int, default=200, help="quadruples per node")
    c.add_argument("--dim", type=int, default=10, help="total intrinsic dims for the suggested signature")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")

    r = sub.add_parser("recon", help="train a reconstruction embedding")
    r.add_argument("--graph", required=True)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--sweep", nargs="+", metavar="SIG", help="run once per signature into OUT/<sig>/")
    _add_keys(r, recon_schema(), {"signature": ["--sig"], "opt.seed": ["--seed"]})

    e = sub.add_parser("eval", help="evaluate a saved embedding")
    e.add_argument("--graph", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", help="output directory for report.json and summary.csv")

    k = sub.add_parser("kg", help="knowledge-graph link prediction")
    ksub = k.add_subparsers(dest="kg_command", required=True, parser_class=Parser)
    kgen = ksub.add_parser("gen", help="write the synthetic tree KG as train/valid/test files")
    kgen.add_argument("--n", type=int, default=200)
    kgen.add_argument("--b", type=int, default=2)
    kgen.add_argument("--seed", type=int, default=0)
    kgen.add_argument("--out", required=True)
    kt = ksub.add_parser("train", help="train rotation-translation embeddings")
    kt.add_argument("--data", required=True, help="directory with train.txt, valid.txt, test.txt")
    kt.add_argument("--out", required=True)
    _add_keys(kt, kg_schema(), {"signature": ["--sig"]})
    ke = ksub.add_parser("eval", help="filtered MRR / HR@k of a saved KG model")
    ke.add_argument("--data", required=True)
    ke.add_argument("--checkpoint", required=True)
    ke.add_argument("--k", type=int, default=3)
    ke.add_argument("--raw", action="store_true", help="unfiltered ranking")
    ke.add_argument("--out")
    return p


# ---------------------------------------------------------------------------
# outputs


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def append_summary(path, row: dict):
    """Append one row to a CSV with the stable SUMMARY_FIELDS header (atomic)."""
    path = Path(path)
    old = path.read_text() if path.exists() else ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    if not old:
        w.writeheader()
    w.writerow({f: row.get(f, "") for f in SUMMARY_FIELDS})
    atomic_write(path, old + buf.getvalue())


def _graph_info(graph):
    return {"name": graph.name, "nodes": graph.n, "edges": graph.n_edges, "hash": graph.content_hash()[:16]}


def _weights_text(ws):
    return " ".join(f"{w:.6f}" for w in ws)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args):
    params = {k: getattr(args, k) for k in ("n", "b", "r", "depth", "k", "leaves")}
    g = graphs.generate(args.kind, **params)
    graphs.save_edge_list(g, args.out)
    print(f"{args.out}: {g.n} nodes, {g.n_edges} edges")


def cmd_curvature(args):
    g = graphs.load_edge_list(args.graph)
    dist = graphs.apsp(g)
    summary = curvature_summary(g, dist, args.budget, np.random.default_rng(args.seed))
    out = {
        "graph": _graph_info(g),
        "fractions": {"negative": summary.negative, "near_zero": summary.near_zero, "positive": summary.positive},
        "histogram": {"counts": summary.hist_counts, "edges": summary.hist_edges},
        "suggested_signature": suggest_signature(summary, args.dim),
        "budget_used": summary.budget_used,
        "skipped_nodes": len(summary.skipped),
        "seed": args.seed,
        "build": BUILD,
    }
    text = _dump(out)
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)


def _recon_one(graph, dist, values, explicit, out_dir, summary_path):
    values = dict(values)
    if "opt.epochs" not in explicit:
        values["opt.epochs"] = 1000 if graph.n <= SMALL_GRAPH else 300
    cfg = build_config(ReconConfig, recon_schema(), values)
    parse_signature(cfg.signature)
    points, sig, report = train_reconstruction(graph, cfg, dist=dist, checkpoint_path=out_dir / "checkpoint.bin")
    doc = report.to_dict()
    doc.update(graph=_graph_info(graph), resolved=values, build=BUILD)
    save_checkpoint(out_dir / "checkpoint.bin", points, sig)
    atomic_write(out_dir / "trace.csv", report.trace_csv())
    atomic_write(out_dir / "report.json", _dump(doc))
    append_summary(summary_path, {
        "run": str(out_dir),
        "graph": graph.name,
        "signature": sig.text,
        "weights": _weights_text(sig.weights),
        "scale": repr(sig.scale),
        "seed": cfg.seed,
        "gating": cfg.gating,
        "epochs": cfg.opt.epochs,
        "d_avg": repr(report.final["d_avg"]),
        "map": repr(report.final["map"]),
        "n_pairs": report.final["n_pairs"],
        "build": BUILD,
    })
    print(f"{out_dir}: {sig.describe()}  D_avg={report.final['d_avg']:.4f}  mAP={report.final['map']:.4f}")


def cmd_recon(args):
    schema = recon_schema()
    values, explicit = resolve(schema, args)
    sigs = args.sweep or [values["signature"]]
    for text in sigs:
        parse_signature(text)  # fail before any output exists
    build_config(ReconConfig, schema, values)
    graph = graphs.load_edge_list(args.graph)
    dist = graphs.apsp(graph)
    out = Path(args.out)
    for text in sigs:
        run_dir = out / text.replace(",", "_") if args.sweep else out
        _recon_one(graph, dist, {**values, "signature": text}, explicit | {"signature"}, run_dir, out / "summary.csv")


def cmd_eval(args):
    graph = graphs.load_edge_list(args.graph)
    points, sig, _ = load_checkpoint(args.checkpoint)
    if len(points) != graph.n:
        raise UsageError(f"checkpoint has {len(points)} points but the graph has {graph.n} nodes")
    rep = evaluate_embedding(graph, sig, points)
    doc = {**rep.to_dict(), "scale": sig.scale, "graph": _graph_info(graph), "checkpoint": str(args.checkpoint), "build": BUILD}
    text = _dump(doc)
    if args.out:
        out = Path(args.out)
        atomic_write(out / "report.json", text)
        append_summary(out / "summary.csv", {
            "run": str(args.checkpoint),
            "graph": graph.name,
            "signature": sig.text,
            "weights": _weights_text(sig.weights),
            "scale": repr(sig.scale),
            "d_avg": repr(rep.d_avg),
            "map": repr(rep.map),
            "n_pairs": rep.n_pairs,
            "build": BUILD,
        })
    sys.stdout.write(text)


def cmd_kg(args):
    if args.kg_command == "gen":
        store = kg.tree_kg(args.n, args.b, seed=args.seed)
        kg.save_triples(store, args.out)
        print(f"{args.out}: {store.summary()}")
        return
    if args.kg_command == "train":
        schema = kg_schema()
        values, _ = resolve(schema, args)
        cfg = build_config(kg.KGConfig, schema, values)
        if cfg.signature:
            parse_signature(cfg.signature)
        store = kg.load_triples(args.data)
        params, report = kg.train_kg(store, cfg)
        out = Path(args.out)
        doc = report.to_dict()
        doc.update(resolved=values, build=BUILD)
        kg.save_kg_checkpoint(out / "checkpoint.bin", params, store)
        atomic_write(out / "trace.csv", report.trace_csv())
        atomic_write(out / "report.json", _dump(doc))
        m = report.metrics
        print(f"{out}: {params.sig.describe()}  MRR={m['mrr']:.4f}  HR@{cfg.k}={m[f'hr@{cfg.k}']:.4f}")
        return
    store = kg.load_triples(args.data)
    params = kg.load_kg_checkpoint(args.checkpoint, store)
    metrics = kg.evaluate_kg(params, store, k=args.k, filtered=not args.raw)
    text = _dump({"metrics": metrics, "signature": params.sig.text, "weights": list(params.sig.weights), "build": BUILD})
    if args.out:
        atomic_write(Path(args.out) / "report.json", text)
    sys.stdout.write(text)


COMMANDS = {"gen": cmd_gen, "curvature": cmd_curvature, "recon": cmd_recon, "eval": cmd_eval, "kg": cmd_kg}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, ParseError, DisconnectedGraphError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ProdEmbedError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
