"""Cross-check branch and bound, OA and enumeration on a generated corpus and time them.

    python scripts/bench_solvers.py --count 50 --binary 6:10 --continuous 5:10 --constraints 8:12
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from minlpsel.generator import generate_corpus
from minlpsel.solvers import OPTIMAL, Limits, bnb_solve, brute_solve, oa_solve


@dataclass
class BenchConfig:
    count: int = 50
    seed: int = 0
    binary: tuple[int, int] = (1, 6)
    continuous: tuple[int, int] = (1, 5)
    constraints: tuple[int, int] = (1, 6)
    time_limit: float = 60.0
    rel_tol: float = 1e-4


def _range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


def parse_args() -> BenchConfig:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--binary", type=_range, default=(1, 6))
    ap.add_argument("--continuous", type=_range, default=(1, 5))
    ap.add_argument("--constraints", type=_range, default=(1, 6))
    ap.add_argument("--time-limit", type=float, default=60.0)
    a = ap.parse_args()
    return BenchConfig(a.count, a.seed, a.binary, a.continuous, a.constraints, a.time_limit)


def main() -> None:
    cfg = parse_args()
    limits = Limits(time_limit=cfg.time_limit)
    solvers = {"bnb": bnb_solve, "oa": oa_solve, "brute": brute_solve}
    totals = dict.fromkeys(solvers, 0.0)
    disagreements = 0
    print(f"{'instance':12}{'status':>10}{'objective':>16}{'bnb s':>9}{'oa s':>9}{'brute s':>9}"
          f"{'nodes':>7}{'OA it':>7}")
    for p in generate_corpus(cfg.count, seed=cfg.seed, binary=cfg.binary, continuous=cfg.continuous,
                             constraints=cfg.constraints):
        reps = {}
        for name, solve in solvers.items():
            t = time.perf_counter()
            reps[name] = solve(p, limits)
            totals[name] += time.perf_counter() - t
        ref = reps["brute"]
        agree = len({r.status for r in reps.values()}) == 1
        if agree and ref.status == OPTIMAL:
            scale = max(1.0, abs(ref.objective))
            agree = all(abs(r.objective - ref.objective) <= cfg.rel_tol * scale for r in reps.values())
        disagreements += not agree
        flag = "" if agree else "  <-- disagreement"
        print(f"{p.name:12}{ref.status:>10}{ref.objective:16.8g}{reps['bnb'].wall_time:9.3f}"
              f"{reps['oa'].wall_time:9.3f}{ref.wall_time:9.3f}{reps['bnb'].nodes:7d}"
              f"{reps['oa'].iterations:7d}{flag}")
    print("total seconds: " + ", ".join(f"{k} {v:.1f}" for k, v in totals.items()))
    print(f"disagreements: {disagreements} of {cfg.count}")


if __name__ == "__main__":
    main()
