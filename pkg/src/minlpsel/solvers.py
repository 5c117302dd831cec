"""Convex MINLP solvers: NLP-based branch and bound, outer approximation, enumeration.

All three share one barrier NLP engine and one convergence rule: stop once
``lower >= upper - rel_tol * max(1, |upper|)``.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nlp as N
from .expr import DomainError, compile_expr
from .lp import INT_TOL, LinearProgram, solve_milp
from .lp import INFEASIBLE as LP_INFEASIBLE
from .lp import OPTIMAL as LP_OPTIMAL
from .lp import UNBOUNDED as LP_UNBOUNDED
from .model import Problem

OA = "OA"
BB = "BB"
BRUTE = "brute"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIME_LIMIT = "time-limit"

PRUNE_TOL = 1e-6
BRUTE_CAP = 2 ** 16


@dataclass(frozen=True)
class Limits:
    time_limit: float = 60.0
    node_limit: int | None = None
    max_iterations: int = 500
    rel_tol: float = 1e-5
    allow_nonconvex: bool = False
    nlp: N.NlpOptions = N.NlpOptions()


@dataclass
class Cut:
    """Linear row ``coefs . (v, eta) <= rhs`` built at ``point``.

    For an objective cut the row reads ``value + grad.(v - point) <= eta``.
    """
    kind: str  # "objective" or "constraint"
    index: int  # constraint index, -1 for the objective
    point: np.ndarray
    value: float  # f or g_i at the point (g_i includes its rhs)
    grad: np.ndarray
    coefs: np.ndarray
    rhs: float

    def model_value(self, v: np.ndarray) -> float:
        """The linearization itself, evaluated at ``v``."""
        return self.value + float(self.grad @ (np.asarray(v, dtype=float) - self.point))


@dataclass
class CutSet:
    objective: list[Cut] = field(default_factory=list)
    constraints: list[Cut] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.objective) + len(self.constraints)

    def extend(self, other: "CutSet") -> None:
        self.objective.extend(other.objective)
        self.constraints.extend(other.constraints)

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        cuts = self.objective + self.constraints
        A = np.array([c.coefs for c in cuts])
        b = np.array([c.rhs for c in cuts])
        return A, b


@dataclass
class SolveReport:
    algorithm: str
    status: str
    objective: float = math.inf
    point: np.ndarray | None = None
    wall_time: float = 0.0
    # (iteration, lower, upper, elapsed seconds)
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)
    nodes: int = 0
    iterations: int = 0
    cuts: CutSet | None = None
    message: str = ""
    predicted: str | None = None
    probabilities: tuple[float, ...] | None = None

    @property
    def lower(self) -> float:
        return self.trace[-1][1] if self.trace else -math.inf

    @property
    def upper(self) -> float:
        return self.trace[-1][2] if self.trace else math.inf

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "status": self.status,
            "objective": self.objective if math.isfinite(self.objective) else None,
            "point": None if self.point is None else [float(v) for v in self.point],
            "wall_time": self.wall_time,
            "nodes": self.nodes,
            "iterations": self.iterations,
            "predicted": self.predicted,
            "probabilities": None if self.probabilities is None else list(self.probabilities),
            "message": self.message,
        }


def write_trace_csv(report: SolveReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lower", "upper", "time"])
        for it, lo, up, t in report.trace:
            w.writerow([it, repr(float(lo)), repr(float(up)), f"{t:.6f}"])


def converged(lower: float, upper: float, rel_tol: float) -> bool:
    if not math.isfinite(upper):
        return False
    return lower >= upper - rel_tol * max(1.0, abs(upper))


class _Context:
    """Per-solve data shared by the algorithms."""

    def __init__(self, p: Problem, limits: Limits):
        N.check_solvable(p, limits.allow_nonconvex)
        self.p = p
        self.limits = limits
        self.model = N.NlpModel.from_problem(p)
        lb, ub = p.bounds()
        self.lb = np.array(lb)
        self.ub = np.array(ub)
        self.disc = np.array(p.discrete_indices, dtype=int)
        self.is_disc = np.zeros(p.n, dtype=bool)
        self.is_disc[self.disc] = True
        if not np.all(np.isfinite(self.lb[self.disc]) & np.isfinite(self.ub[self.disc])):
            raise ValueError("discrete variables need finite bounds")
        self.lb[self.disc] = np.ceil(self.lb[self.disc] - INT_TOL)
        self.ub[self.disc] = np.floor(self.ub[self.disc] + INT_TOL)
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def out_of_time(self) -> bool:
        return self.elapsed() > self.limits.time_limit

    def nlp(self, lb, ub, start=None) -> N.NlpResult:
        return N.barrier_solve(self.model, lb, ub, start, self.limits.nlp)

    def fixed(self, y: np.ndarray, start=None) -> N.NlpResult:
        lb, ub = self.lb.copy(), self.ub.copy()
        lb[self.disc] = ub[self.disc] = y
        return self.nlp(lb, ub, start)

    def report(self, algorithm: str, status: str, best: float, x, trace, **kw) -> SolveReport:
        if x is not None:
            x = np.asarray(x, dtype=float).copy()
            x[self.disc] = np.round(x[self.disc]) + 0.0
        return SolveReport(algorithm, status, best if x is not None else math.inf, x,
                           self.elapsed(), trace, **kw)


def _usable(res: N.NlpResult, feas_tol: float) -> bool:
    """Optimal, or stopped early at a feasible point with a finite objective."""
    if res.status == N.OPTIMAL:
        return True
    return (res.status == N.ITERATION_LIMIT and res.max_violation <= feas_tol
            and math.isfinite(res.objective))


def _integral_candidate(ctx: _Context, x: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Round discrete entries; keep the point if still feasible."""
    x = x.copy()
    x[ctx.disc] = np.round(x[ctx.disc])
    try:
        gv = ctx.model.constraint_values(x)
        fv = ctx.model.objective(x)
    except DomainError:
        return None
    if gv.size and gv.max() > ctx.limits.nlp.feas_tol:
        return None
    return x, fv


# ---------------------------------------------------------------- branch and bound

def bnb_solve(p: Problem, limits: Limits = Limits()) -> SolveReport:
    """NLP-based branch and bound on the discrete variables.

    Nodes are explored best-bound first (deeper first on ties). Each node
    solves the continuous relaxation under its bounds; the most fractional
    discrete variable is split into ``<= floor`` and ``>= ceil`` children.
    """
    ctx = _Context(p, limits)
    feas_tol = limits.nlp.feas_tol
    best_x, best = None, math.inf
    trace = []
    counter = itertools.count()
    heap = [(-math.inf, 0, next(counter), ctx.lb, ctx.ub, None)]
    nodes = 0
    status = OPTIMAL
    while heap:
        open_bound = heap[0][0]
        if converged(open_bound, best, limits.rel_tol):
            break
        if ctx.out_of_time() or (limits.node_limit is not None and nodes >= limits.node_limit):
            status = TIME_LIMIT
            break
        bound, negdepth, _, lo, hi, start = heapq.heappop(heap)
        if bound >= best - PRUNE_TOL:
            continue
        nodes += 1
        res = ctx.nlp(lo, hi, start)
        if _usable(res, feas_tol):
            node_bound = max(bound, res.objective)
            x = res.point
            frac = np.abs(x[ctx.disc] - np.round(x[ctx.disc]))
            if node_bound < best - PRUNE_TOL:
                if frac.size == 0 or frac.max() <= INT_TOL:
                    cand = _integral_candidate(ctx, x)
                    if cand is None:
                        fix = ctx.fixed(np.round(x[ctx.disc]), x)
                        cand = (fix.point, fix.objective) if _usable(fix, feas_tol) else None
                    if cand is not None and cand[1] < best:
                        best_x, best = cand
                else:
                    k = int(np.argmax(frac))
                    j = int(ctx.disc[k])
                    down_hi = hi.copy()
                    down_hi[j] = math.floor(x[j])
                    up_lo = lo.copy()
                    up_lo[j] = math.ceil(x[j])
                    for clo, chi in ((lo, down_hi), (up_lo, hi)):
                        heapq.heappush(heap, (node_bound, negdepth - 1, next(counter), clo, chi, x))
        lower = min(min((h[0] for h in heap), default=math.inf), best)
        trace.append((nodes, lower, best, ctx.elapsed()))
    if best_x is None:
        return ctx.report(BB, TIME_LIMIT if status == TIME_LIMIT else INFEASIBLE, math.inf, None,
                          trace, nodes=nodes, iterations=nodes)
    if status == OPTIMAL and trace and trace[-1][1] < best:
        # closed by the relative tolerance: record the final bound pair
        trace.append((nodes, min((h[0] for h in heap), default=best), best, ctx.elapsed()))
    return ctx.report(BB, status, best, best_x, trace, nodes=nodes, iterations=nodes)


# ---------------------------------------------------------------- outer approximation

def oa_cuts(p: Problem, x_bar: Sequence[float], y_bar: Sequence[float] | None = None,
            constraints: Sequence[int] | None = None, objective: bool = True) -> CutSet:
    """Linearize f and every g_i at a point.

    With ``y_bar`` given, ``x_bar`` holds the continuous values and ``y_bar``
    the discrete ones; otherwise ``x_bar`` is the full variable vector.
    Rows live over ``(v, eta)`` with ``eta`` last.
    """
    n = p.n
    if y_bar is None:
        v = np.asarray(x_bar, dtype=float).copy()
    else:
        v = np.empty(n)
        v[p.continuous_indices] = np.asarray(x_bar, dtype=float)
        v[p.discrete_indices] = np.asarray(y_bar, dtype=float)
    if v.size != n:
        raise ValueError("point length does not match the variable count")
    out = CutSet()
    if objective:
        fv, fg = compile_expr(p.objective).value_and_grad(v)
        coefs = np.append(fg, -1.0)
        out.objective.append(Cut("objective", -1, v, fv, fg, coefs, float(fg @ v) - fv))
    idx = range(p.m) if constraints is None else constraints
    for i in idx:
        c = p.constraints[i]
        gv, gg = compile_expr(c.body).value_and_grad(v)
        gv -= c.rhs
        out.constraints.append(Cut("constraint", i, v, gv, gg, np.append(gg, 0.0), float(gg @ v) - gv))
    return out


def oa_subproblem(p: Problem, y_fixed: Sequence[float], limits: Limits = Limits(),
                  start: Sequence[float] | None = None) -> N.NlpResult:
    """Solve with the discrete variables fixed at ``y_fixed``.

    An infeasible result carries the phase-1 point, which minimizes the
    largest constraint violation over the continuous variables.
    """
    ctx = _Context(p, limits)
    y = np.asarray(y_fixed, dtype=float)
    if y.size != ctx.disc.size:
        raise ValueError("y_fixed length does not match the discrete variable count")
    if np.any(y < ctx.lb[ctx.disc] - INT_TOL) or np.any(y > ctx.ub[ctx.disc] + INT_TOL):
        raise ValueError("y_fixed lies outside the discrete bounds")
    return ctx.fixed(y, start)


def _master(ctx: _Context, cuts: CutSet, time_left: float):
    n = ctx.p.n
    big = ctx.limits.nlp.implicit_bound
    A, b = cuts.rows()
    lb = np.append(np.where(np.isinf(ctx.lb), -big, ctx.lb), -math.inf)
    ub = np.append(np.where(np.isinf(ctx.ub), big, ctx.ub), math.inf)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    integer = np.append(ctx.is_disc, False)
    return solve_milp(LinearProgram(c, A, b, lb, ub, integer), time_limit=max(time_left, 0.0))


def oa_solve(p: Problem, limits: Limits = Limits()) -> SolveReport:
    """Outer approximation with feasibility cuts for infeasible subproblems.

    The relaxation optimum seeds the master with cuts and supplies the first
    lower bound; its rounded discrete part is the first subproblem.
    """
    ctx = _Context(p, limits)
    feas_tol = limits.nlp.feas_tol
    trace = []
    cuts = CutSet()
    relax = ctx.nlp(ctx.lb, ctx.ub)
    if not _usable(relax, feas_tol):
        if relax.status == N.INFEASIBLE:
            return ctx.report(OA, INFEASIBLE, math.inf, None, trace, cuts=cuts)
        return ctx.report(OA, TIME_LIMIT, math.inf, None, trace, cuts=cuts,
                          message="continuous relaxation failed")
    lower = relax.objective
    cuts.extend(oa_cuts(p, relax.point))
    y = np.clip(np.round(relax.point[ctx.disc]), ctx.lb[ctx.disc], ctx.ub[ctx.disc])
    x_start = relax.point
    best_x, best = None, math.inf
    seen = set()
    status = OPTIMAL
    q = 0
    message = ""
    while True:
        q += 1
        seen.add(tuple(y))
        sub = ctx.fixed(y, x_start)
        if _usable(sub, feas_tol):
            if sub.objective < best:
                best_x, best = sub.point.copy(), sub.objective
            cuts.extend(oa_cuts(p, sub.point))
        else:
            # linearize the constraints at the least-violating point
            cuts.extend(oa_cuts(p, sub.point, objective=False))
        if converged(lower, best, limits.rel_tol):
            trace.append((q, min(lower, best), best, ctx.elapsed()))
            break
        if ctx.out_of_time() or q >= limits.max_iterations:
            trace.append((q, lower, best, ctx.elapsed()))
            status = TIME_LIMIT
            break
        master = _master(ctx, cuts, limits.time_limit - ctx.elapsed())
        if master.status == LP_INFEASIBLE:
            # every remaining assignment is cut off
            trace.append((q, best, best, ctx.elapsed()))
            break
        if master.status != LP_OPTIMAL:
            trace.append((q, lower, best, ctx.elapsed()))
            status = TIME_LIMIT
            message = "master problem " + ("unbounded" if master.status == LP_UNBOUNDED else "hit the time limit")
            break
        lower = max(lower, master.objective)
        trace.append((q, min(lower, best), best, ctx.elapsed()))
        if converged(lower, best, limits.rel_tol):
            break
        y = np.round(master.point[ctx.disc])
        if tuple(y) in seen:
            # cannot happen in exact arithmetic on convex problems
            message = "master repeated a discrete assignment"
            break
        x_start = master.point[:p.n]
    if best_x is None:
        st = INFEASIBLE if status == OPTIMAL else status
        return ctx.report(OA, st, math.inf, None, trace, cuts=cuts, iterations=q, message=message)
    return ctx.report(OA, status, best, best_x, trace, cuts=cuts, iterations=q, message=message)


# ---------------------------------------------------------------- enumeration

def assignment_count(p: Problem) -> int:
    lb, ub = p.bounds()
    total = 1
    for j in p.discrete_indices:
        if not (math.isfinite(lb[j]) and math.isfinite(ub[j])):
            raise ValueError("discrete variables need finite bounds")
        total *= max(0, int(math.floor(ub[j] + INT_TOL) - math.ceil(lb[j] - INT_TOL)) + 1)
    return total


def brute_solve(p: Problem, limits: Limits = Limits(), cap: int = BRUTE_CAP) -> SolveReport:
    """Solve the fixed NLP for every discrete assignment and keep the best."""
    count = assignment_count(p)
    if count > cap:
        raise ValueError(f"{count} discrete assignments exceed the enumeration cap of {cap}")
    ctx = _Context(p, limits)
    ranges = [range(int(ctx.lb[j]), int(ctx.ub[j]) + 1) for j in ctx.disc]
    best_x, best = None, math.inf
    trace = []
    status = OPTIMAL
    for k, y in enumerate(itertools.product(*ranges), start=1):
        if ctx.out_of_time():
            status = TIME_LIMIT
            break
        res = ctx.fixed(np.array(y, dtype=float))
        if _usable(res, limits.nlp.feas_tol) and res.objective < best:
            best_x, best = res.point.copy(), res.objective
        trace.append((k, -math.inf, best, ctx.elapsed()))
    if trace and status == OPTIMAL:
        trace.append((len(trace), best, best, ctx.elapsed()))
    if best_x is None:
        return ctx.report(BRUTE, INFEASIBLE if status == OPTIMAL else status, math.inf, None,
                          trace, iterations=len(trace))
    return ctx.report(BRUTE, status, best, best_x, trace, iterations=count)


SOLVERS = {"bnb": bnb_solve, "oa": oa_solve, "brute": brute_solve}
