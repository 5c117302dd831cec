"""Log-barrier interior-point solver for continuous convex NLPs.

    min f(x)  s.t.  g_i(x) <= 0,  lb <= x <= ub

Bounds go into the barrier; variables with ``lb == ub`` are substituted out.
Each centering step is a damped Newton iteration with Armijo backtracking.
Second-order terms come from central differences of the reverse-mode
gradients; the barrier's own curvature (J^T W^2 J and the bound terms) is
assembled exactly. When no strictly feasible start is known a phase-1
problem ``min s  s.t. g_i(x) <= s`` is solved first.
"""

from __future__ import annotations

import logging
import math
import weakref
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonConvexError
from .expr import CompiledExpr, DomainError, Expr, compile_expr
from .model import Problem

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class NlpOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-6
    kkt_tol: float = 1e-6
    phase1_tol: float = 1e-7
    max_newton: int = 200
    mu_factor: float = 10.0
    t0: float = 1.0
    implicit_bound: float = 1e8
    newton_tol: float = 1e-10
    verbose: bool = False


@dataclass
class NlpResult:
    status: str
    point: np.ndarray
    objective: float
    kkt_residual: float
    max_violation: float = 0.0
    newton_steps: int = 0
    # phase-1 optimum (max constraint violation minimized); set when phase 1 ran
    slack: float | None = None
    implicit_bounds_active: tuple[int, ...] = ()
    multipliers: np.ndarray | None = None
    # (outer iteration, t, merit) after every accepted Newton step
    merit_trace: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class NlpModel:
    """Compiled objective and constraint functions ``g_i = body_i - rhs_i``."""

    def __init__(self, n: int, objective: Expr, bodies: Sequence[Expr], rhs: Sequence[float]):
        self.n = n
        self.f: CompiledExpr = compile_expr(objective)
        self.g: list[CompiledExpr] = [compile_expr(b) for b in bodies]
        self.rhs = np.asarray(rhs, dtype=float).reshape(len(self.g))

    @classmethod
    def from_problem(cls, p: Problem) -> "NlpModel":
        return cls(p.n, p.objective, [c.body for c in p.constraints], [c.rhs for c in p.constraints])

    @property
    def m(self) -> int:
        return len(self.g)

    def objective(self, x: np.ndarray) -> float:
        return self.f.local(x[self.f.vars])[0]

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        return np.array([ce.local(x[ce.vars])[0] for ce in self.g]) - self.rhs

    def derivatives(self, x: np.ndarray):
        """f, grad f, g, Jacobian of g (all over the full variable vector)."""
        fv, fl = self.f.local(x[self.f.vars])
        fg = np.zeros(self.n)
        fg[self.f.vars] = fl
        gv = np.empty(self.m)
        J = np.zeros((self.m, self.n))
        for i, ce in enumerate(self.g):
            v, gl = ce.local(x[ce.vars])
            gv[i] = v - self.rhs[i]
            J[i, ce.vars] = gl
        return fv, fg, gv, J

    def weighted_hessian(self, x: np.ndarray, wf: float, wg: np.ndarray, pos: np.ndarray, nz: int) -> np.ndarray:
        """Central-difference Hessian of ``wf*f + sum(wg*g)`` on the free coordinates.

        ``pos[j]`` is the row of variable ``j`` in the ``nz``-dimensional output
        or -1 when ``j`` is fixed.
        """
        H = np.zeros((nz, nz))
        for w, ce in [(wf, self.f), *zip(wg, self.g)]:
            if w == 0.0 or ce.affine:
                continue
            p = pos[ce.vars]
            act = np.flatnonzero(p >= 0)
            if act.size == 0:
                continue
            Hl = _fd_hessian(ce, x[ce.vars], act)
            H[np.ix_(p[act], p[act])] += w * Hl
        return H


def _fd_hessian(ce: CompiledExpr, xs: np.ndarray, act: np.ndarray) -> np.ndarray:
    if ce.quadratic:
        # constant Hessian: difference once at the origin and reuse
        full = _CONST_HESS.get(ce)
        if full is None:
            full = _CONST_HESS[ce] = _fd_columns(ce, np.zeros(len(ce.vars)), np.arange(len(ce.vars)))
        return full[np.ix_(act, act)]
    return _fd_columns(ce, xs, act)


_CONST_HESS: "weakref.WeakKeyDictionary[CompiledExpr, np.ndarray]" = weakref.WeakKeyDictionary()


def _fd_columns(ce: CompiledExpr, xs: np.ndarray, act: np.ndarray) -> np.ndarray:
    k = act.size
    Hl = np.zeros((k, k))
    xs = [float(v) for v in xs]
    idx = act.tolist()
    for c, a in enumerate(idx):
        x0 = xs[a]
        h = 6e-6 * max(1.0, abs(x0))
        cols = []
        for step in (h, -h):
            xs[a] = x0 + step
            try:
                g = ce.raw(xs)[1]
                cols.append((step, [g[i] for i in idx]))
            except DomainError:
                pass
            xs[a] = x0
        if len(cols) == 2:
            Hl[:, c] = (np.array(cols[0][1]) - np.array(cols[1][1])) / (2 * h)
        elif len(cols) == 1:
            step, gp = cols[0]
            g0 = ce.raw(xs)[1]
            Hl[:, c] = (np.array(gp) - np.array([g0[i] for i in idx])) / step
    return 0.5 * (Hl + Hl.T)


class _Barrier:
    """Barrier function over z = (free x) or z = (free x, s) in phase 1."""

    def __init__(self, model: NlpModel, x_full: np.ndarray, free: np.ndarray,
                 lo: np.ndarray, hi: np.ndarray, phase1: bool, shift: float):
        self.model = model
        self.x_full = x_full.copy()
        self.free = free
        self.lo = lo
        self.hi = hi
        self.phase1 = phase1
        self.shift = shift
        self.nf = free.size
        self.nz = self.nf + int(phase1)
        self.pos = np.full(model.n, -1)
        self.pos[free] = np.arange(self.nf)
        self.n_terms = model.m + self.nf * 2

    def expand(self, z: np.ndarray) -> np.ndarray:
        x = self.x_full.copy()
        x[self.free] = z[:self.nf]
        return x

    def _cons(self, z: np.ndarray, gv: np.ndarray) -> np.ndarray:
        return gv - (z[-1] if self.phase1 else self.shift)

    def merit(self, z: np.ndarray, t: float) -> float:
        xz = z[:self.nf]
        dl, dh = xz - self.lo, self.hi - xz
        if np.any(dl <= 0) or np.any(dh <= 0):
            return math.inf
        x = self.expand(z)
        try:
            c = self._cons(z, self.model.constraint_values(x))
            obj = z[-1] if self.phase1 else self.model.objective(x)
        except DomainError:
            return math.inf
        if np.any(c >= 0):
            return math.inf
        return t * obj - np.log(-c).sum() - np.log(dl).sum() - np.log(dh).sum()

    def derivatives(self, z: np.ndarray, t: float):
        x = self.expand(z)
        fv, fg, gv, J = self.model.derivatives(x)
        c = self._cons(z, gv)
        Jz = J[:, self.free]
        if self.phase1:
            Jz = np.hstack([Jz, -np.ones((self.model.m, 1))])
            obj_grad = np.zeros(self.nz)
            obj_grad[-1] = 1.0
            wf = 0.0
        else:
            obj_grad = fg[self.free]
            wf = t
        w = 1.0 / (-c)
        xz = z[:self.nf]
        dl, dh = xz - self.lo, self.hi - xz
        grad = t * obj_grad + Jz.T @ w
        grad[:self.nf] += -1.0 / dl + 1.0 / dh
        H = (Jz * (w * w)[:, None]).T @ Jz
        H[:self.nf, :self.nf] += np.diag(1.0 / dl**2 + 1.0 / dh**2)
        H += self.model.weighted_hessian(x, wf, w, self.pos, self.nz)
        return grad, H

    def kkt(self, z: np.ndarray, t: float) -> tuple[float, np.ndarray]:
        """KKT residual with multipliers updated by one Newton step.

        The barrier multipliers w/t are corrected to first order along the
        Newton direction; stationarity, complementarity and dual sign are
        then measured for those multipliers at ``z`` itself.
        """
        x = self.expand(z)
        grad, H = self.derivatives(z, t)
        d = _newton_direction(grad, H)
        _, fg, gv, J = self.model.derivatives(x)
        c = self._cons(z, gv)
        Jz = J[:, self.free]
        w = 1.0 / (-c)
        lam = (w + w * w * (Jz @ d[:self.nf])) / t
        xz, dx = z[:self.nf], d[:self.nf]
        dl, dh = xz - self.lo, self.hi - xz
        mu_lo = (1.0 / dl - dx / dl**2) / t
        mu_hi = (1.0 / dh + dx / dh**2) / t
        r = fg[self.free] + Jz.T @ lam - mu_lo + mu_hi
        comp = np.concatenate([lam * -c, mu_lo * dl, mu_hi * dh])
        dual = np.concatenate([lam, mu_lo, mu_hi])
        res = max(float(np.max(np.abs(r))) if r.size else 0.0,
                  float(np.max(np.abs(comp))) if comp.size else 0.0,
                  float(max(0.0, -np.min(dual))) if dual.size else 0.0)
        return res, np.maximum(lam, 0.0)

    def max_step(self, z: np.ndarray, d: np.ndarray) -> float:
        xz, dx = z[:self.nf], d[:self.nf]
        a = 1.0
        neg, pos = dx < 0, dx > 0
        if neg.any():
            a = min(a, 0.99 * np.min((xz[neg] - self.lo[neg]) / -dx[neg]))
        if pos.any():
            a = min(a, 0.99 * np.min((self.hi[pos] - xz[pos]) / dx[pos]))
        return a


def _newton_direction(grad: np.ndarray, H: np.ndarray) -> np.ndarray:
    reg = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(H))))) if H.size else 1.0
    for _ in range(12):
        try:
            L = np.linalg.cholesky(H + reg * np.eye(len(H)))
        except np.linalg.LinAlgError:
            reg = max(reg * 100.0, 1e-12 * scale)
            continue
        y = np.linalg.solve(L, -grad)
        return np.linalg.solve(L.T, y)
    return -grad / scale


class _Run:
    def __init__(self, opts: NlpOptions):
        self.opts = opts
        self.steps = 0
        self.trace: list[tuple[int, float, float]] = []
        self.outer = 0

    def center(self, bar: _Barrier, z: np.ndarray, t: float, stop=None) -> tuple[np.ndarray, bool]:
        """Newton iterations at fixed ``t``. Returns (z, hit_step_cap).

        ``stop(z)`` ends the loop early after any accepted step.
        """
        opts = self.opts
        phi = bar.merit(z, t)
        while True:
            if self.steps >= opts.max_newton:
                return z, True
            grad, H = bar.derivatives(z, t)
            d = _newton_direction(grad, H)
            slope = float(grad @ d)
            if slope >= 0:
                d, slope = -grad, -float(grad @ grad)
            dec = -slope / 2.0
            if dec <= opts.newton_tol:
                return z, False
            a = bar.max_step(z, d)
            if bar.phase1 and d[-1] < 0 and z[-1] + a * d[-1] < -0.1:
                # landing just inside is enough; overshooting drags x toward the implicit box
                a = max(min(a, (-0.1 - z[-1]) / d[-1]), 1e-14) if z[-1] > -0.1 else a
            # merit values lose digits as t grows; near the centre allow for that
            fuzz = 1e-12 * max(1.0, abs(phi)) if dec < 0.05 else 0.0
            while a > 1e-14:
                cand = z + a * d
                phic = bar.merit(cand, t)
                if phic <= phi + 0.01 * a * slope + fuzz:
                    break
                a *= 0.5
            else:
                return z, False
            z, phi = cand, phic
            self.steps += 1
            self.trace.append((self.outer, t, phi))
            if opts.verbose:
                log.info("newton %3d  t=%.1e  merit=%.10g  step=%.3g  dec=%.3e",
                         self.steps, t, phi, a, dec)
            if stop is not None and stop(z):
                return z, False


def _interior_start(lo: np.ndarray, hi: np.ndarray, start: np.ndarray | None) -> np.ndarray:
    center = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
    width = hi - lo
    margin = 0.01 * np.minimum(1.0, width)
    base = center if start is None else np.asarray(start, dtype=float)
    return np.clip(base, lo + margin, hi - margin)


def barrier_solve(model: NlpModel, lb: Sequence[float], ub: Sequence[float],
                  start: Sequence[float] | None = None, options: NlpOptions | None = None) -> NlpResult:
    """Minimize the model over the box ``[lb, ub]``; see the module docstring."""
    opts = options or NlpOptions()
    n = model.n
    lb = np.asarray(lb, dtype=float).copy()
    ub = np.asarray(ub, dtype=float).copy()
    if np.any(lb > ub + 1e-12):
        x = np.clip(np.zeros(n), lb, ub)
        return NlpResult(INFEASIBLE, x, math.inf, math.inf, math.inf)
    fixed = ub - lb <= 1e-12
    free = np.flatnonzero(~fixed)
    big = opts.implicit_bound
    implicit_lo = ~fixed & np.isinf(lb)
    implicit_hi = ~fixed & np.isinf(ub)
    lo_eff = np.where(np.isinf(lb), -big, lb)
    hi_eff = np.where(np.isinf(ub), big, ub)

    x = np.where(fixed, lb, 0.0)
    if free.size == 0:
        try:
            gv = model.constraint_values(x)
            fv = model.objective(x)
        except DomainError:
            return NlpResult(INFEASIBLE, x, math.inf, math.inf, math.inf)
        viol = max(0.0, float(np.max(gv))) if gv.size else 0.0
        if viol > opts.feas_tol:
            return NlpResult(INFEASIBLE, x, math.inf, math.inf, viol, slack=viol)
        return NlpResult(OPTIMAL, x, fv, 0.0, viol)
    if start is not None:
        start = np.asarray(start, dtype=float)
    x[free] = _interior_start(lo_eff[free], hi_eff[free], None if start is None else start[free])
    run = _Run(opts)
    lo, hi = lo_eff[free], hi_eff[free]

    try:
        g0 = model.constraint_values(x)
        model.objective(x)
    except DomainError:
        x[free] = _interior_start(lo, hi, None)
        g0 = model.constraint_values(x)

    shift = 0.0
    slack = None
    if model.m and np.max(g0) >= 0.0:
        bar1 = _Barrier(model, x, free, lo, hi, True, 0.0)
        z = np.append(x[free], np.max(g0) + 1.0)
        t = opts.t0
        hit = False
        def strictly_feasible(zz):
            return zz[-1] < 0 and np.max(model.constraint_values(bar1.expand(zz))) < 0

        while True:
            z, hit = run.center(bar1, z, t, strictly_feasible)
            x = bar1.expand(z)
            if strictly_feasible(z):
                break
            if hit or bar1.n_terms / t <= opts.gap_tol:
                break
            t *= opts.mu_factor
            run.outer += 1
        slack = float(z[-1])
        if hit and slack >= 0:
            return NlpResult(ITERATION_LIMIT, x, math.inf, math.inf, max(slack, 0.0),
                             run.steps, slack, merit_trace=run.trace)
        if slack > opts.phase1_tol:
            return NlpResult(INFEASIBLE, x, math.inf, math.inf, slack, run.steps, slack,
                             merit_trace=run.trace)
        if np.max(model.constraint_values(x)) >= 0:
            # boundary-feasible: relax by the residual slack, still inside feas_tol
            shift = max(slack, 0.0) + 1e-9
        run.outer += 1

    bar = _Barrier(model, x, free, lo, hi, False, shift)
    z = x[free].copy()
    t = opts.t0
    hit = False
    while True:
        z, hit = run.center(bar, z, t)
        if hit or bar.n_terms / t <= opts.gap_tol:
            break
        t *= opts.mu_factor
        run.outer += 1

    x = bar.expand(z)
    kkt, multipliers = bar.kkt(z, t)
    gv = model.constraint_values(x)
    viol = max(0.0, float(np.max(gv))) if gv.size else 0.0
    near = np.abs(x) > 0.99 * big
    active = tuple(int(j) for j in np.flatnonzero((implicit_lo | implicit_hi) & near))
    status = OPTIMAL if (kkt <= opts.kkt_tol and viol <= opts.feas_tol) else ITERATION_LIMIT
    if hit and status == OPTIMAL and bar.n_terms / t > opts.gap_tol:
        status = ITERATION_LIMIT
    return NlpResult(status, x, model.objective(x), kkt, viol, run.steps, slack, active,
                     multipliers, run.trace)


def check_solvable(p: Problem, allow_nonconvex: bool = False) -> None:
    if allow_nonconvex:
        return
    fc, gcs = p.curvatures()
    if not fc.is_convex:
        raise NonConvexError(f"objective curvature is {fc.value}; pass allow_nonconvex to override")
    for i, c in enumerate(gcs):
        if not c.is_convex:
            raise NonConvexError(f"constraint {i} curvature is {c.value}; pass allow_nonconvex to override")


def solve_nlp(p: Problem, start: Sequence[float] | None = None, options: NlpOptions | None = None,
              *, allow_nonconvex: bool = False) -> NlpResult:
    """Solve a problem whose variables are all continuous."""
    if p.discrete_indices:
        raise ValueError("solve_nlp needs continuous variables; relax or fix discrete ones first")
    check_solvable(p, allow_nonconvex)
    lb, ub = p.bounds()
    return barrier_solve(NlpModel.from_problem(p), lb, ub, start, options)
