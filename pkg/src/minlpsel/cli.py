"""Command-line entry point: ``python -m minlpsel <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import gnn, pipeline
from .errors import ModelError, NonConvexError, WeightsError
from .generator import GeneratorSpec, generate_instance, sample_spec
from .graph import build_bipartite_graph, build_variable_graph
from .model import load_problem, save_problem
from .solvers import Limits, SOLVERS, write_trace_csv

TIME_LIMIT_ENV = "MINLPSEL_TIME_LIMIT"
DEFAULT_TIME_LIMIT = 60.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def default_time_limit() -> float:
    raw = os.environ.get(TIME_LIMIT_ENV)
    if raw is None:
        return DEFAULT_TIME_LIMIT
    try:
        value = float(raw)
    except ValueError:
        raise UsageError(f"{TIME_LIMIT_ENV} must be a number, got {raw!r}") from None
    if value <= 0:
        raise UsageError(f"{TIME_LIMIT_ENV} must be positive")
    return value


@dataclass
class CliConfig:
    command: str
    inputs: list[Path] = field(default_factory=list)
    output: Path | None = None
    time_limit: float = DEFAULT_TIME_LIMIT
    seed: int = 0
    hyperparams: gnn.Hyperparams = gnn.Hyperparams()
    verbose: int = 0
    as_json: bool = False


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    try:
        a, b = int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if a < 0 or b < a:
        raise argparse.ArgumentTypeError(f"invalid range {text!r}")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice")

    timed = _Parser(add_help=False)
    timed.add_argument("--time-limit", type=float, default=None,
                       help=f"seconds per solve (default ${TIME_LIMIT_ENV} or {DEFAULT_TIME_LIMIT:g})")

    p = _Parser(prog="minlpsel", description="Choose between OA and branch and bound for convex MINLPs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="write random convex instances")
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--out", type=Path, required=True, help="output directory")
    g.add_argument("--binary", type=_range, default=(1, 6), metavar="LO:HI")
    g.add_argument("--integer", type=_range, default=(0, 0), metavar="LO:HI")
    g.add_argument("--continuous", type=_range, default=(1, 5), metavar="LO:HI")
    g.add_argument("--constraints", type=_range, default=(1, 6), metavar="LO:HI")
    g.add_argument("--half-bounded", type=float, default=0.0)

    gr = sub.add_parser("graph", parents=[common], help="export the variable graph of an instance")
    gr.add_argument("instance", type=Path)
    gr.add_argument("--out", type=Path)
    gr.add_argument("--bipartite", action="store_true", help="export the variable-constraint graph")

    s = sub.add_parser("solve", parents=[common, timed], help="solve one instance")
    s.add_argument("instance", type=Path)
    s.add_argument("--algorithm", choices=["bnb", "oa", "auto", "brute"], default="auto")
    s.add_argument("--model", type=Path, help="weights file (required for auto)")
    s.add_argument("--trace", type=Path, help="write the bound trace CSV here")
    s.add_argument("--allow-nonconvex", action="store_true")

    lb = sub.add_parser("label", parents=[common, timed], help="label instances by the faster algorithm")
    lb.add_argument("instances", type=Path, nargs="+")
    lb.add_argument("--out", type=Path, help="dataset JSONL output (overwritten)")
    lb.add_argument("--jobs", type=int, default=1)

    ds = sub.add_parser("dataset", parents=[common, timed], help="build a labeled dataset file")
    ds.add_argument("instances", type=Path, nargs="*")
    ds.add_argument("--generate", type=int, default=0, metavar="COUNT",
                    help="generate COUNT instances from --seed instead of reading files")
    ds.add_argument("--out", type=Path, required=True)
    ds.add_argument("--test-per-class", type=int, default=0)
    ds.add_argument("--jobs", type=int, default=1)

    t = sub.add_parser("train", parents=[common], help="train the classifier on a dataset")
    t.add_argument("dataset", type=Path)
    t.add_argument("--out", type=Path, required=True, help="weights file")
    t.add_argument("--log", type=Path, help="training log CSV")
    t.add_argument("--layers", type=int, default=4)
    t.add_argument("--hidden", type=int, default=12)
    t.add_argument("--lr", type=float, default=0.005)
    t.add_argument("--batch-size", type=int, default=10)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--dropout", type=float, default=0.5)
    t.add_argument("--split", default="train", help="records of this split are used (or 'all')")

    pr = sub.add_parser("predict", parents=[common], help="predict the faster algorithm")
    pr.add_argument("instances", type=Path, nargs="+")
    pr.add_argument("--model", type=Path, required=True)

    ev = sub.add_parser("eval", parents=[common], help="classifier metrics on a labeled set")
    ev.add_argument("dataset", type=Path, nargs="?")
    ev.add_argument("--model", type=Path)
    ev.add_argument("--split", default="all", help="evaluate this split only (default all)")
    ev.add_argument("--confusion", help="skip prediction: TP_OA,OA_as_BB,BB_as_OA,TP_BB counts")
    return p


def _config(args) -> CliConfig:
    tl = getattr(args, "time_limit", None)
    if tl is None:
        tl = default_time_limit()
    if tl <= 0:
        raise UsageError("--time-limit must be positive")
    inputs = []
    for name in ("instance", "instances", "dataset"):
        v = getattr(args, name, None)
        if v is None:
            continue
        inputs.extend(v if isinstance(v, list) else [v])
    for path in inputs + [getattr(args, "model", None) or Path(".")]:
        if not path.exists():
            raise UsageError(f"no such file: {path}")
    out = getattr(args, "out", None)
    hp = gnn.Hyperparams()
    if args.command == "train":
        try:
            hp = gnn.Hyperparams(n_layers=args.layers, hidden=args.hidden, learning_rate=args.lr,
                                 batch_size=args.batch_size, epochs=args.epochs, dropout=args.dropout,
                                 seed=args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return CliConfig(args.command, inputs, out, tl, args.seed, hp, args.verbose, args.json)


def _emit(cfg: CliConfig, payload: dict, text: str) -> None:
    print(json.dumps(payload, indent=2) if cfg.as_json else text)


def _fmt(v: float) -> str:
    return f"{v:.10g}" if math.isfinite(v) else str(v)


# ---------------------------------------------------------------- subcommands

def cmd_gen(args, cfg: CliConfig) -> int:
    cfg.output.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    written = []
    for i in range(args.count):
        seed = cfg.seed + i
        spec = sample_spec(rng, seed, binary=args.binary, integer=args.integer,
                           continuous=args.continuous, constraints=args.constraints,
                           half_bounded=args.half_bounded)
        p = generate_instance(spec, name=f"gen-{seed:05d}")
        path = cfg.output / f"{p.name}.json"
        save_problem(p, path)
        written.append(str(path))
    _emit(cfg, {"written": written}, f"wrote {len(written)} instances to {cfg.output}")
    return 0


def cmd_graph(args, cfg: CliConfig) -> int:
    p = load_problem(cfg.inputs[0])
    if args.bipartite:
        b = build_bipartite_graph(p)
        # the objective is the last constraint-side node
        doc = {"n_variables": b.n_variables, "n_constraints": b.n_constraints,
               "objective_node": b.n_constraints - 1, "edges": [list(e) for e in b.edges]}
    else:
        doc = build_variable_graph(p).to_dict()
    text = json.dumps(doc)
    if cfg.output:
        cfg.output.write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _limits(cfg: CliConfig, allow_nonconvex: bool = False) -> Limits:
    return Limits(time_limit=cfg.time_limit, allow_nonconvex=allow_nonconvex)


def cmd_solve(args, cfg: CliConfig) -> int:
    p = load_problem(cfg.inputs[0])
    limits = _limits(cfg, args.allow_nonconvex)
    if args.algorithm == "auto":
        if args.model is None:
            raise UsageError("--algorithm auto needs --model")
        params = gnn.load_weights(args.model)
        rep = pipeline.auto_solve(p, params, limits)
    else:
        rep = SOLVERS[args.algorithm](p, limits)
    if args.trace:
        write_trace_csv(rep, args.trace)
    d = rep.to_dict()
    d["instance"] = p.name
    lines = [f"instance   {p.name}", f"algorithm  {rep.algorithm}"]
    if rep.predicted is not None:
        probs = ", ".join(f"{a}={v:.3f}" for a, v in zip(gnn.LABEL_NAMES, rep.probabilities))
        lines.append(f"predicted  {rep.predicted} ({probs})")
    lines += [f"status     {rep.status}", f"objective  {_fmt(rep.objective)}",
              f"time       {rep.wall_time:.3f} s"]
    if rep.point is not None:
        lines.append("point      " + ", ".join(f"{n}={_fmt(v)}" for n, v in zip(p.names, rep.point)))
    _emit(cfg, d, "\n".join(lines))
    return 0


def _load_all(paths):
    return [load_problem(path) for path in paths]


def cmd_label(args, cfg: CliConfig) -> int:
    probs = _load_all(cfg.inputs)
    recs = pipeline.label_many(probs, cfg.time_limit, args.jobs, limits=_limits(cfg))
    kept = [r for r in recs if r is not None]
    if cfg.output:
        pipeline.save_dataset(kept, cfg.output)
    rows, lines = [], []
    for p, r in zip(probs, recs):
        if r is None:
            rows.append({"name": p.name, "label": None})
            lines.append(f"{p.name}: discarded (no algorithm finished)")
        else:
            rows.append({"name": r.name, "label": r.label, "label_name": r.label_name, "times": r.times})
            lines.append(f"{r.name}: {r.label_name} (OA {r.times['OA']:.3f} s, BB {r.times['BB']:.3f} s)")
    _emit(cfg, {"records": rows}, "\n".join(lines))
    return 0


def cmd_dataset(args, cfg: CliConfig) -> int:
    if args.generate:
        rng = np.random.default_rng(cfg.seed)
        seeds = [cfg.seed + i for i in range(args.generate)]
        probs = [generate_instance(sample_spec(rng, s), name=f"gen-{s:05d}") for s in seeds]
    else:
        if not cfg.inputs:
            raise UsageError("give instance files or --generate COUNT")
        probs, seeds = _load_all(cfg.inputs), None
    ds = pipeline.build_dataset(probs, cfg.time_limit, jobs=args.jobs, limits=_limits(cfg), seeds=seeds)
    if args.test_per_class:
        ds.assign_test(args.test_per_class, cfg.seed)
    pipeline.save_dataset(ds, cfg.output)
    counts = ds.class_counts()
    ratio = ds.class_ratio()
    payload = {"records": len(ds), "discarded": ds.discarded, "counts": counts, "ratio": ratio}
    text = (f"{len(ds)} records ({len(ds.discarded)} discarded): "
            f"OA {counts['OA']} ({ratio['OA']:.2f}), BB {counts['BB']} ({ratio['BB']:.2f})")
    _emit(cfg, payload, text)
    return 0


def cmd_train(args, cfg: CliConfig) -> int:
    ds = pipeline.load_dataset(cfg.inputs[0])
    if args.split != "all":
        ds = ds.split(args.split)
    if len(ds) == 0:
        raise ValueError(f"no records in split {args.split!r}")
    res = gnn.train(ds.graphs, ds.labels, cfg.hyperparams)
    gnn.save_weights(res.params, cfg.output, cfg.hyperparams)
    if args.log:
        gnn.write_training_log(res.log, args.log)
    last = res.log[-1]
    payload = {"records": len(ds), "class_weights": list(res.weights), "final_loss": last.loss,
               "train_accuracy": last.train_accuracy}
    _emit(cfg, payload, f"trained on {len(ds)} records: loss {last.loss:.4f}, "
                        f"train accuracy {last.train_accuracy:.3f}; weights in {cfg.output}")
    return 0


def cmd_predict(args, cfg: CliConfig) -> int:
    params = gnn.load_weights(args.model)
    rows, lines = [], []
    for p in _load_all(cfg.inputs):
        algo, probs = pipeline.select_algorithm(p, params)
        rows.append({"name": p.name, "algorithm": algo, "probabilities": [float(v) for v in probs]})
        lines.append(f"{p.name}: {algo} (OA={probs[0]:.3f}, BB={probs[1]:.3f})")
    _emit(cfg, {"predictions": rows}, "\n".join(lines))
    return 0


def cmd_eval(args, cfg: CliConfig) -> int:
    if args.confusion:
        try:
            counts = [int(v) for v in args.confusion.split(",")]
        except ValueError:
            raise UsageError("--confusion takes four comma-separated integers") from None
        if len(counts) != 4 or min(counts) < 0:
            raise UsageError("--confusion takes four nonnegative integers")
        m = pipeline.metrics_from_confusion(counts)
    else:
        if not cfg.inputs or args.model is None:
            raise UsageError("eval needs a dataset and --model, or --confusion")
        params = gnn.load_weights(args.model)
        ds = pipeline.load_dataset(cfg.inputs[0])
        if args.split != "all":
            ds = ds.split(args.split)
        if len(ds) == 0:
            raise ValueError(f"no records in split {args.split!r}")
        pred = [int(np.argmax(pv)) for pv in gnn.predict_proba(ds.graphs, params)]
        m = pipeline.classification_metrics(ds.labels, pred)
    _emit(cfg, m.to_dict(), m.format())
    return 0


COMMANDS = {"gen": cmd_gen, "graph": cmd_graph, "solve": cmd_solve, "label": cmd_label,
            "dataset": cmd_dataset, "train": cmd_train, "predict": cmd_predict, "eval": cmd_eval}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config(args)
        logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ModelError, WeightsError, NonConvexError, ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err) if "--json" in (argv or sys.argv[1:]) else f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
