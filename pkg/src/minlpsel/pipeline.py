"""Labeling by solve time, dataset files, algorithm selection and dispatch."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import gnn
from .graph import VariableGraph, build_variable_graph
from .model import Problem
from .solvers import BB, OA, OPTIMAL, Limits, SolveReport, bnb_solve, oa_solve

log = logging.getLogger(__name__)

LABELS = {OA: 0, BB: 1}
NAMES = {0: OA, 1: BB}

Solver = Callable[[Problem, Limits], SolveReport]
DEFAULT_SOLVERS: dict[str, Solver] = {OA: oa_solve, BB: bnb_solve}


@dataclass
class LabeledRecord:
    name: str
    graph: VariableGraph
    label: int
    times: dict[str, float]  # per algorithm; unfinished runs are recorded at the limit
    time_limit: float
    statuses: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    split: str = "train"

    @property
    def label_name(self) -> str:
        return NAMES[self.label]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_nodes": self.graph.n_nodes,
            "edges": [list(e) for e in self.graph.edges],
            "features": self.graph.features.astype(int).tolist(),
            "label": self.label,
            "label_name": self.label_name,
            "times": dict(self.times),
            "statuses": dict(self.statuses),
            "time_limit": self.time_limit,
            "seed": self.seed,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LabeledRecord":
        graph = VariableGraph.from_dict(d)
        label = int(d["label"])
        if label not in NAMES:
            raise ValueError(f"label must be 0 or 1, got {label}")
        return cls(str(d["name"]), graph, label, {k: float(v) for k, v in d["times"].items()},
                   float(d["time_limit"]), dict(d.get("statuses", {})), d.get("seed"),
                   str(d.get("split", "train")))


@dataclass
class Dataset:
    records: list[LabeledRecord]
    discarded: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=int)

    @property
    def graphs(self) -> list[VariableGraph]:
        return [r.graph for r in self.records]

    def class_counts(self) -> dict[str, int]:
        z = self.labels
        return {OA: int((z == 0).sum()), BB: int((z == 1).sum())}

    def class_ratio(self) -> dict[str, float]:
        return class_ratio(self.class_counts())

    def split(self, name: str) -> "Dataset":
        return Dataset([r for r in self.records if r.split == name])

    def assign_test(self, per_class: int, seed: int = 0) -> None:
        """Hold out ``per_class`` records of each label as the test split."""
        _, test = gnn.balanced_split(self.labels, per_class, seed)
        held = set(test)
        for i, r in enumerate(self.records):
            r.split = "test" if i in held else "train"


def class_ratio(counts: Mapping[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    return {k: v / total for k, v in counts.items()}


# ---------------------------------------------------------------- labeling

def _timed(solver: Solver, p: Problem, limits: Limits) -> tuple[float, str]:
    try:
        rep = solver(p, limits)
    except Exception as exc:  # a crashing solver counts as not finishing
        log.warning("%s: solver failed: %s", p.name, exc)
        return math.inf, "error"
    return rep.wall_time, rep.status


def label_from_times(times: Mapping[str, float], statuses: Mapping[str, str],
                     time_limit: float) -> int | None:
    """Faster algorithm among optimal runs; ties go to OA; None when neither finished."""
    done = {a: times[a] for a in (OA, BB) if statuses.get(a) == OPTIMAL and times[a] < time_limit}
    if not done:
        return None
    best = min(done, key=lambda a: (done[a], LABELS[a]))
    return LABELS[best]


def label_instance(p: Problem, time_limit: float = 60.0, solvers: Mapping[str, Solver] | None = None,
                   limits: Limits | None = None, parallel: bool = False,
                   seed: int | None = None) -> LabeledRecord | None:
    """Run OA and branch and bound under ``time_limit``; label the faster one.

    Returns None when neither run reaches optimality within the limit.
    """
    if time_limit <= 0:
        raise ValueError("time_limit must be positive")
    solvers = dict(DEFAULT_SOLVERS if solvers is None else solvers)
    limits = replace(limits or Limits(), time_limit=time_limit)
    if parallel:
        with ProcessPoolExecutor(max_workers=2) as pool:
            futs = {a: pool.submit(_timed, solvers[a], p, limits) for a in (OA, BB)}
            runs = {a: f.result() for a, f in futs.items()}
    else:
        runs = {a: _timed(solvers[a], p, limits) for a in (OA, BB)}
    statuses = {a: runs[a][1] for a in runs}
    label = label_from_times({a: runs[a][0] for a in runs}, statuses, time_limit)
    if label is None:
        return None
    times = {}
    for a, (t, st) in runs.items():
        times[a] = t if st == OPTIMAL and t < time_limit else max(time_limit, t if math.isfinite(t) else 0.0)
    return LabeledRecord(p.name, build_variable_graph(p), label, times, time_limit, statuses, seed)


def _label_job(args):
    p, time_limit, limits, seed = args
    return label_instance(p, time_limit, limits=limits, seed=seed)


def label_many(instances: Sequence[Problem], time_limit: float = 60.0, jobs: int = 1,
               solvers: Mapping[str, Solver] | None = None, limits: Limits | None = None,
               seeds: Sequence[int | None] | None = None) -> list[LabeledRecord | None]:
    """``label_instance`` over a list, in input order; ``jobs > 1`` uses worker processes."""
    seeds = list(seeds) if seeds is not None else [None] * len(instances)
    if jobs > 1 and solvers is None:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_label_job, [(p, time_limit, limits, s) for p, s in zip(instances, seeds)]))
    return [label_instance(p, time_limit, solvers, limits, seed=s) for p, s in zip(instances, seeds)]


def build_dataset(instances: Sequence[Problem], time_limit: float = 60.0, jobs: int = 1,
                  solvers: Mapping[str, Solver] | None = None, limits: Limits | None = None,
                  seeds: Sequence[int | None] | None = None) -> Dataset:
    """Label every instance and keep the ones some algorithm solved."""
    if not instances:
        raise ValueError("no instances to label")
    out = label_many(instances, time_limit, jobs, solvers, limits, seeds)
    records = [r for r in out if r is not None]
    discarded = [p.name for p, r in zip(instances, out) if r is None]
    if not records:
        raise ValueError("every instance was discarded: no algorithm finished within the time limit")
    return Dataset(records, discarded)


def save_dataset(ds: Dataset | Sequence[LabeledRecord], path: str | Path) -> None:
    records = ds.records if isinstance(ds, Dataset) else ds
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(LabeledRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad dataset record: {exc}") from None
    return Dataset(records)


# ---------------------------------------------------------------- selection

def choose(probabilities: Sequence[float]) -> str:
    """Most probable algorithm; the lowest index (OA) wins ties."""
    return NAMES[int(np.argmax(np.asarray(probabilities)))]


def select_algorithm(p: Problem, params: gnn.GcnParams) -> tuple[str, np.ndarray]:
    probs = gnn.forward(build_variable_graph(p), params, training=False)
    return choose(probs), probs


def auto_solve(p: Problem, params: gnn.GcnParams, limits: Limits = Limits()) -> SolveReport:
    algorithm, probs = select_algorithm(p, params)
    solver = oa_solve if algorithm == OA else bnb_solve
    rep = solver(p, limits)
    rep.predicted = algorithm
    rep.probabilities = tuple(float(v) for v in probs)
    return rep


# ---------------------------------------------------------------- metrics

@dataclass
class Metrics:
    confusion: np.ndarray  # rows: true label, columns: predicted label
    accuracy: float
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": {"labels": [OA, BB], "rows_true_cols_predicted": self.confusion.tolist()},
        }

    def format(self) -> str:
        lines = [f"{'':4}{'precision':>11}{'recall':>9}{'f1':>8}"]
        for a in (OA, BB):
            lines.append(f"{a:4}{self.precision[a]:11.2f}{self.recall[a]:9.2f}{self.f1[a]:8.2f}")
        lines.append(f"accuracy {self.accuracy:.2f}")
        c = self.confusion
        lines.append("confusion (rows true, columns predicted: OA BB)")
        lines.append(f"  OA {c[0, 0]:4d} {c[0, 1]:4d}")
        lines.append(f"  BB {c[1, 0]:4d} {c[1, 1]:4d}")
        return "\n".join(lines)


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def metrics_from_confusion(confusion) -> Metrics:
    c = np.asarray(confusion, dtype=int).reshape(2, 2)
    precision, recall, f1 = {}, {}, {}
    for k, a in NAMES.items():
        tp = c[k, k]
        precision[a] = _ratio(tp, c[:, k].sum())
        recall[a] = _ratio(tp, c[k, :].sum())
        f1[a] = _ratio(2 * precision[a] * recall[a], precision[a] + recall[a])
    return Metrics(c, _ratio(np.trace(c), c.sum()), precision, recall, f1)


def classification_metrics(y_true: Sequence[int], y_pred: Sequence[int]) -> Metrics:
    c = np.zeros((2, 2), dtype=int)
    for t, p in zip(y_true, y_pred):
        c[int(t), int(p)] += 1
    return metrics_from_confusion(c)
