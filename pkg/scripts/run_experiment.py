"""Generate a corpus, label it by solve time, train the selector and score it on a held-out split.

    python scripts/run_experiment.py --count 200 --test-per-class 15 --out runs/exp1
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from minlpsel import gnn, pipeline
from minlpsel.generator import generate_corpus
from minlpsel.solvers import Limits


@dataclass
class ExperimentConfig:
    count: int = 120
    seed: int = 0
    time_limit: float = 60.0
    jobs: int = 1
    test_per_class: int = 15
    binary: tuple[int, int] = (1, 8)
    continuous: tuple[int, int] = (1, 8)
    constraints: tuple[int, int] = (1, 10)
    hyperparams: gnn.Hyperparams = field(default_factory=gnn.Hyperparams)
    out: Path = Path("runs/experiment")


def parse_args() -> ExperimentConfig:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=120)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--time-limit", type=float, default=60.0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--test-per-class", type=int, default=15)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--out", type=Path, default=Path("runs/experiment"))
    a = ap.parse_args()
    hp = gnn.Hyperparams(epochs=a.epochs, seed=a.seed)
    return ExperimentConfig(count=a.count, seed=a.seed, time_limit=a.time_limit, jobs=a.jobs,
                            test_per_class=a.test_per_class, hyperparams=hp, out=a.out)


def main() -> None:
    cfg = parse_args()
    cfg.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    corpus = generate_corpus(cfg.count, seed=cfg.seed, binary=cfg.binary, continuous=cfg.continuous,
                             constraints=cfg.constraints)
    ds = pipeline.build_dataset(corpus, cfg.time_limit, jobs=cfg.jobs, limits=Limits(time_limit=cfg.time_limit),
                                seeds=[cfg.seed + i for i in range(cfg.count)])
    counts = ds.class_counts()
    print(f"labeled {len(ds)} of {cfg.count} instances in {time.perf_counter() - t0:.1f} s: {counts}")
    per_class = min(cfg.test_per_class, min(counts.values()) - 1)
    if per_class < 1:
        raise SystemExit("one class is too small to hold out a test split")
    ds.assign_test(per_class, cfg.seed)
    pipeline.save_dataset(ds, cfg.out / "dataset.jsonl")

    train_set, test_set = ds.split("train"), ds.split("test")
    res = gnn.train(train_set.graphs, train_set.labels, cfg.hyperparams)
    gnn.save_weights(res.params, cfg.out / "weights.json", cfg.hyperparams)
    gnn.write_training_log(res.log, cfg.out / "training_log.csv")

    pred = np.argmax(gnn.predict_proba(test_set.graphs, res.params), axis=1)
    metrics = pipeline.classification_metrics(test_set.labels, pred)
    print(f"class weights {res.weights[0]:.4f} / {res.weights[1]:.4f}")
    print(metrics.format())
    # how much time the selector saves over always running one algorithm
    times = np.array([[r.times["OA"], r.times["BB"]] for r in test_set])
    chosen = times[np.arange(len(pred)), pred].sum()
    summary = {
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(cfg).items()},
        "counts": counts,
        "metrics": metrics.to_dict(),
        "test_time": {"selector": chosen, "always_OA": times[:, 0].sum(), "always_BB": times[:, 1].sum(),
                      "oracle": times.min(axis=1).sum()},
    }
    (cfg.out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    print(json.dumps(summary["test_time"], indent=2, default=float))


if __name__ == "__main__":
    main()
