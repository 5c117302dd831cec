"""Linear programs: bounded-variable primal simplex and LP-based branch and bound.

Problems have the form ``min c'x  s.t.  A x <= b,  lb <= x <= ub`` with an
optional integrality mask. The simplex works on a dense revised form: the
basis inverse is refactored every iteration, which keeps the values exact
enough for the 1e-7 feasibility promises without any drift bookkeeping.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIME_LIMIT = "time-limit"
ITERATION_LIMIT = "iteration-limit"

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
INT_TOL = 1e-6


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.lb = np.full(n, -math.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel().copy()
        self.ub = np.full(n, math.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel().copy()
        self.integer = (np.zeros(n, dtype=bool) if self.integer is None
                        else np.asarray(self.integer, dtype=bool).ravel())
        if self.b.size != self.A.shape[0]:
            raise ValueError("rhs length must equal the number of rows")
        for arr, what in ((self.lb, "lb"), (self.ub, "ub"), (self.integer, "integer")):
            if arr.size != n:
                raise ValueError(f"{what} length must equal the number of variables")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP data must be finite")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclass
class MilpResult:
    status: str
    point: np.ndarray | None = None
    objective: float = math.inf
    nodes: int = 0
    bound: float = -math.inf
    duals: np.ndarray | None = None
    iterations: int = 0
    # nodes whose LP stopped without a verdict (numerical trouble); they are dropped
    failed_nodes: int = 0
    # (nodes processed, global lower bound, incumbent) after every node
    trace: list[tuple[int, float, float]] = field(default_factory=list)


# ---------------------------------------------------------------- simplex core

def _simplex(M, r, c, u, basis, at_upper, blocked, max_iter):
    """Minimize c'z over Mz = r, 0 <= z <= u from a feasible basis.

    Entering and leaving choices follow Bland's smallest-index rule.
    Returns (status, basis, at_upper, z, d, iterations).
    """
    m, N = M.shape
    basis = list(basis)
    it = 0
    while True:
        in_basis = np.zeros(N, dtype=bool)
        in_basis[basis] = True
        zN = np.where(at_upper & ~in_basis, u, 0.0)
        zN[in_basis] = 0.0
        zN = np.nan_to_num(zN, posinf=0.0)
        B = M[:, basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return ITERATION_LIMIT, basis, at_upper, None, None, it
        xB = Binv @ (r - M @ zN)
        y = Binv.T @ c[basis]
        d = c - M.T @ y
        z = zN.copy()
        z[basis] = xB
        if it >= max_iter:
            return ITERATION_LIMIT, basis, at_upper, z, d, it
        eligible = ~in_basis & ~blocked & (((~at_upper) & (d < -_COST_TOL)) | (at_upper & (d > _COST_TOL)))
        cand = np.flatnonzero(eligible)
        if cand.size == 0:
            return OPTIMAL, basis, at_upper, z, d, it
        j = int(cand[0])
        sgn = -1.0 if at_upper[j] else 1.0
        w = Binv @ M[:, j]
        delta = sgn * w
        tol = _PIVOT_TOL * max(1.0, float(np.abs(w).max(initial=0.0)))
        theta = u[j]
        leave = -1
        leave_upper = False
        for i in range(m):
            bi = basis[i]
            if delta[i] > tol:
                lim, up = max(xB[i], 0.0) / delta[i], False
            elif delta[i] < -tol and math.isfinite(u[bi]):
                lim, up = max(u[bi] - xB[i], 0.0) / -delta[i], True
            else:
                continue
            if lim < theta - 1e-12 or (leave >= 0 and lim <= theta + 1e-12 and bi < basis[leave]):
                theta, leave, leave_upper = lim, i, up
        it += 1
        if not math.isfinite(theta):
            return UNBOUNDED, basis, at_upper, z, d, it
        if leave < 0:
            at_upper[j] = not at_upper[j]  # bound flip, basis unchanged
            continue
        old = basis[leave]
        at_upper[old] = leave_upper
        at_upper[j] = False
        basis[leave] = j


class _Standard:
    """``lb <= x <= ub`` rewritten as ``0 <= z <= u`` plus one slack per row."""

    def __init__(self, lp: LinearProgram):
        cols, costs, caps = [], [], []
        self.shift = np.zeros(lp.n)
        self.pieces: list[list[tuple[int, float]]] = []  # x_j = shift_j + sum(sign * z_k)
        for j in range(lp.n):
            lo, hi = lp.lb[j], lp.ub[j]
            a, cj = lp.A[:, j], lp.c[j]
            if math.isfinite(lo):
                self.shift[j] = lo
                self.pieces.append([(len(cols), 1.0)])
                cols.append(a); costs.append(cj); caps.append(hi - lo)
            elif math.isfinite(hi):
                self.shift[j] = hi
                self.pieces.append([(len(cols), -1.0)])
                cols.append(-a); costs.append(-cj); caps.append(math.inf)
            else:
                self.pieces.append([(len(cols), 1.0), (len(cols) + 1, -1.0)])
                cols += [a, -a]; costs += [cj, -cj]; caps += [math.inf, math.inf]
        m = lp.m
        self.n_struct = len(cols)
        S = np.array(cols).T.reshape(m, self.n_struct) if cols else np.zeros((m, 0))
        self.M = np.hstack([S, np.eye(m)])
        self.c = np.concatenate([costs, np.zeros(m)])
        self.u = np.concatenate([caps, np.full(m, math.inf)])
        self.r = lp.b - lp.A @ self.shift
        self.const = float(lp.c @ self.shift)

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = self.shift.copy()
        for j, piece in enumerate(self.pieces):
            for k, s in piece:
                x[j] += s * z[k]
        return x


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> MilpResult:
    """Two-phase bounded simplex; the integrality mask is ignored.

    ``duals`` holds one nonnegative multiplier per row, so that
    ``c + A' duals`` equals the bound multipliers at an optimum.
    """
    if np.any(lp.lb > lp.ub):
        return MilpResult(INFEASIBLE)
    st = _Standard(lp)
    m, N = st.M.shape
    max_iter = max_iter or 50 * (m + N) + 1000
    # phase 1: artificial column for every row whose slack cannot start basic
    neg = st.r < 0
    M1 = st.M.copy()
    r1 = st.r.copy()
    M1[neg] *= -1.0
    r1[neg] *= -1.0
    art_rows = np.flatnonzero(neg)
    k = art_rows.size
    art = np.zeros((m, k))
    art[art_rows, np.arange(k)] = 1.0
    M1 = np.hstack([M1, art])
    u1 = np.concatenate([st.u, np.full(k, math.inf)])
    basis = [st.n_struct + i for i in range(m)]
    for a, i in enumerate(art_rows):
        basis[i] = N + a
    at_upper = np.zeros(N + k, dtype=bool)
    blocked = np.zeros(N + k, dtype=bool)
    iters = 0
    if k:
        c1 = np.concatenate([np.zeros(N), np.ones(k)])
        status, basis, at_upper, z, _, it = _simplex(M1, r1, c1, u1, basis, at_upper, blocked, max_iter)
        iters += it
        if status != OPTIMAL:
            return MilpResult(status, iterations=iters)
        if z[N:].sum() > 1e-9 * max(1.0, np.abs(r1).max()):
            return MilpResult(INFEASIBLE, iterations=iters)
        u1[N:] = 0.0  # artificials stay pinned at zero
        blocked[N:] = True
    c2 = np.concatenate([st.c, np.zeros(k)])
    status, basis, at_upper, z, d, it = _simplex(M1, r1, c2, u1, basis, at_upper, blocked,
                                                 max_iter - iters)
    iters += it
    if status != OPTIMAL:
        return MilpResult(status, iterations=iters)
    x = st.recover(z[:N])
    duals = np.maximum(d[st.n_struct:N], 0.0)
    obj = float(lp.c @ x)
    return MilpResult(OPTIMAL, x, obj, 0, obj, duals, iters)


# ---------------------------------------------------------------- branch and bound

def _most_fractional(x: np.ndarray, integer: np.ndarray) -> int:
    frac = np.abs(x - np.round(x))
    frac[~integer] = 0.0
    j = int(np.argmax(frac))
    return j if frac[j] > INT_TOL else -1


def solve_milp(lp: LinearProgram, time_limit: float = math.inf, node_limit: int | None = None,
               gap: float = 1e-7) -> MilpResult:
    """Best-bound branch and bound over LP relaxations.

    Ties in bound go to the deeper node, so equal-bound subtrees are dived.
    """
    integer = lp.integer
    if np.any(integer & ~(np.isfinite(lp.lb) & np.isfinite(lp.ub))):
        raise ValueError("integer variables need finite bounds")
    start = time.perf_counter()
    lb0 = lp.lb.copy()
    ub0 = lp.ub.copy()
    lb0[integer] = np.ceil(lb0[integer] - INT_TOL)
    ub0[integer] = np.floor(ub0[integer] + INT_TOL)
    best_x, best = None, math.inf
    nodes = failed = 0
    trace = []
    counter = itertools.count()
    heap = [(-math.inf, 0, next(counter), lb0, ub0)]
    status = OPTIMAL
    while heap:
        if time.perf_counter() - start > time_limit or (node_limit is not None and nodes >= node_limit):
            status = TIME_LIMIT
            break
        bound, negdepth, _, lo, hi = heapq.heappop(heap)
        if bound >= best - gap:
            continue
        nodes += 1
        res = solve_lp(LinearProgram(lp.c, lp.A, lp.b, lo, hi))
        if res.status == UNBOUNDED:
            if nodes == 1:
                return MilpResult(UNBOUNDED, nodes=nodes)
            raise RuntimeError("unbounded LP below a bounded root")
        if res.status == ITERATION_LIMIT:
            failed += 1
        if res.status == OPTIMAL and res.objective < best - gap:
            x = res.point
            j = _most_fractional(x, integer)
            if j < 0:
                x = x.copy()
                x[integer] = np.round(x[integer])
                best_x, best = x, float(lp.c @ x)
            else:
                node_bound = max(bound, res.objective)
                down_hi = hi.copy()
                down_hi[j] = math.floor(x[j])
                up_lo = lo.copy()
                up_lo[j] = math.ceil(x[j])
                heapq.heappush(heap, (node_bound, negdepth - 1, next(counter), lo, down_hi))
                heapq.heappush(heap, (node_bound, negdepth - 1, next(counter), up_lo, hi))
        open_bound = min((h[0] for h in heap), default=math.inf)
        trace.append((nodes, min(open_bound, best), best))
    if best_x is None:
        if status == TIME_LIMIT:
            return MilpResult(TIME_LIMIT, nodes=nodes, trace=trace, failed_nodes=failed)
        return MilpResult(INFEASIBLE, nodes=nodes, trace=trace, failed_nodes=failed)
    lower = best if status == OPTIMAL else min(best, min((h[0] for h in heap), default=best))
    return MilpResult(status, best_x, best, nodes, lower, None, 0, failed, trace)
