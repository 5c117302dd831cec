"""Scalar expression trees over problem variables.

Trees are immutable. Evaluation walks the tree directly; gradients come from
a reverse-mode adjoint program that is generated once per tree and compiled
to Python bytecode, which keeps the solver inner loops cheap.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CONST = "const"
VAR = "var"
SUM = "sum"
PROD = "prod"
POW = "pow"
NEG = "neg"
EXP = "exp"
LOG = "log"
SQRT = "sqrt"

KINDS = (CONST, VAR, SUM, PROD, POW, NEG, EXP, LOG, SQRT)
UNARY_FUNCS = (EXP, LOG, SQRT)


class DomainError(ValueError):
    """An expression was evaluated outside the domain of log, sqrt or pow."""


@dataclass(frozen=True)
class Expr:
    kind: str
    args: tuple = ()
    # constant value, variable index, or power exponent
    value: float | int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown expression kind {self.kind!r}")
        if self.kind == POW and not isinstance(self.value, (int, float)):
            raise ValueError("power exponent must be a numeric constant")

    # operator sugar, used by the generator and tests
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return const(float(x))


def const(v: float) -> Expr:
    return Expr(CONST, (), float(v))


def var(i: int) -> Expr:
    return Expr(VAR, (), int(i))


def add(*terms: Expr) -> Expr:
    if len(terms) == 1:
        return terms[0]
    return Expr(SUM, tuple(terms))


def mul(*factors: Expr) -> Expr:
    if len(factors) == 1:
        return factors[0]
    return Expr(PROD, tuple(factors))


def power(base: Expr, p: float) -> Expr:
    p = float(p)
    return Expr(POW, (base,), int(p) if p.is_integer() else p)


def neg(x: Expr) -> Expr:
    return Expr(NEG, (x,))


def exp(x: Expr) -> Expr:
    return Expr(EXP, (x,))


def log(x: Expr) -> Expr:
    return Expr(LOG, (x,))


def sqrt(x: Expr) -> Expr:
    return Expr(SQRT, (x,))


def variables(expr: Expr) -> list[int]:
    """Sorted distinct variable indices referenced by ``expr``."""
    found = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if e.kind == VAR:
            found.add(e.value)
        else:
            stack.extend(e.args)
    return sorted(found)


def is_constant(expr: Expr) -> bool:
    return not variables(expr)


def polynomial_degree(expr: Expr) -> float:
    """Degree as a polynomial; ``inf`` when transcendental or fractional."""
    k = expr.kind
    if k == CONST or is_constant(expr):
        return 0
    if k == VAR:
        return 1
    if k in (SUM, NEG):
        return max(polynomial_degree(a) for a in expr.args)
    if k == PROD:
        return sum(polynomial_degree(a) for a in expr.args)
    if k == POW and float(expr.value).is_integer() and expr.value >= 0:
        return int(expr.value) * polynomial_degree(expr.args[0])
    return math.inf


def node_count(expr: Expr) -> int:
    return 1 + sum(node_count(a) for a in expr.args)


def depth(expr: Expr) -> int:
    return 1 + max((depth(a) for a in expr.args), default=0)


# -- evaluation ---------------------------------------------------------------

def _pow_value(base: float, p: float) -> float:
    try:
        if isinstance(p, int) or float(p).is_integer():
            return float(base ** int(p))
        return math.pow(base, p)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise DomainError(f"pow({base!r}, {p!r}) undefined") from exc


def evaluate(expr: Expr, point: Sequence[float]) -> float:
    """Evaluate ``expr`` at ``point`` by walking the tree."""
    k = expr.kind
    if k == CONST:
        return expr.value
    if k == VAR:
        return float(point[expr.value])
    vals = [evaluate(a, point) for a in expr.args]
    if k == SUM:
        out = math.fsum(vals)
    elif k == PROD:
        out = math.prod(vals)
    elif k == NEG:
        out = -vals[0]
    elif k == POW:
        out = _pow_value(vals[0], expr.value)
    elif k == EXP:
        try:
            out = math.exp(vals[0])
        except OverflowError as exc:
            raise DomainError(f"exp({vals[0]!r}) overflows") from exc
    elif k == LOG:
        if not vals[0] > 0.0:
            raise DomainError(f"log argument {vals[0]!r} is not positive")
        out = math.log(vals[0])
    else:
        if not vals[0] >= 0.0:
            raise DomainError(f"sqrt argument {vals[0]!r} is negative")
        out = math.sqrt(vals[0])
    if not math.isfinite(out):
        raise DomainError(f"non-finite value in {k} node")
    return out


# -- reverse-mode gradients ---------------------------------------------------

class CompiledExpr:
    """Value-and-gradient program for one expression.

    The program takes the values of the expression's own variables (``vars``,
    global indices in ascending order) and returns the value and the local
    gradient. Affine expressions are detected and short-circuited.
    """

    def __init__(self, expr: Expr):
        self.expr = expr
        self.vars = np.array(variables(expr), dtype=int)
        self.affine = classify_curvature(expr) is Curvature.AFFINE
        src = _adjoint_source(expr, {v: j for j, v in enumerate(self.vars)})
        self.source = src
        ns = {"exp": math.exp, "log": math.log, "sqrt": math.sqrt, "pow": math.pow}
        exec(compile(src, "<adjoint>", "exec"), ns)
        self._fn = ns["_vg"]
        if self.affine:
            try:
                c0, g0 = self._fn(*np.zeros(len(self.vars)))
            except (ValueError, ZeroDivisionError, OverflowError):
                self.affine = False
            else:
                self.coef = np.asarray(g0, dtype=float)
                self.offset = float(c0)

    def raw(self, xs) -> tuple[float, tuple]:
        """Value and local gradient as plain floats."""
        try:
            v, g = self._fn(*xs)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise DomainError(str(exc)) from exc
        if not math.isfinite(v + sum(g)):
            raise DomainError("non-finite value or gradient")
        return v, g

    def local(self, xs) -> tuple[float, np.ndarray]:
        """Value and gradient at local variable values ``xs``."""
        if self.affine:
            return float(np.dot(self.coef, xs) + self.offset), self.coef
        v, g = self.raw(xs)
        return v, np.array(g)

    @functools.cached_property
    def quadratic(self) -> bool:
        return polynomial_degree(self.expr) <= 2

    def value(self, x: np.ndarray) -> float:
        if self.affine:
            return float(np.dot(self.coef, x[self.vars]) + self.offset)
        return evaluate(self.expr, x)

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Value and full-length gradient at global point ``x``."""
        v, g = self.local(x[self.vars])
        full = np.zeros(len(x))
        full[self.vars] = g
        return v, full


def _adjoint_source(expr: Expr, local: dict[int, int]) -> str:
    nvar = len(local)
    fwd: list[str] = []
    order: list[tuple[Expr, str, list[str]]] = []
    counter = [0]

    def emit(e: Expr) -> str:
        if e.kind == CONST:
            return f"({float(e.value)!r})"
        if e.kind == VAR:
            return f"x{local[e.value]}"
        kids = [emit(a) for a in e.args]
        name = f"v{counter[0]}"
        counter[0] += 1
        k = e.kind
        if k == SUM:
            rhs = " + ".join(kids)
        elif k == PROD:
            rhs = " * ".join(kids)
        elif k == NEG:
            rhs = f"-{kids[0]}"
        elif k == POW:
            p = e.value
            rhs = f"{kids[0]} ** {int(p)}" if float(p).is_integer() else f"pow({kids[0]}, {p!r})"
        else:
            rhs = f"{k}({kids[0]})"
        fwd.append(f"    {name} = {rhs}")
        order.append((e, name, kids))
        return name

    root = emit(expr)
    back = []
    grads = {j: [] for j in range(nvar)}
    adj = {}
    if order:
        adj[root] = "1.0"

    def route(kid_expr: Expr, kid_name: str, contrib: str):
        if kid_expr.kind == CONST:
            return
        if kid_expr.kind == VAR:
            grads[local[kid_expr.value]].append(contrib)
            return
        adj[kid_name] = contrib

    if not order and expr.kind == VAR:
        grads[local[expr.value]].append("1.0")
    aid = 0
    for e, name, kids in reversed(order):
        d = adj.get(name)
        if d is None:
            continue
        # bind the adjoint once so fan-out does not re-evaluate it
        dn = f"d{aid}"
        aid += 1
        back.append(f"    {dn} = {d}")
        k = e.kind
        if k == SUM:
            for ke, kn in zip(e.args, kids):
                route(ke, kn, dn)
        elif k == PROD:
            for i, (ke, kn) in enumerate(zip(e.args, kids)):
                others = [kids[j] for j in range(len(kids)) if j != i]
                route(ke, kn, f"{dn} * " + " * ".join(others))
        elif k == NEG:
            route(e.args[0], kids[0], f"-{dn}")
        elif k == POW:
            p = e.value
            if p == 0:
                continue
            if p == 1:
                route(e.args[0], kids[0], dn)
            elif float(p).is_integer():
                route(e.args[0], kids[0], f"{dn} * {float(p)!r} * {kids[0]} ** {int(p) - 1}")
            else:
                route(e.args[0], kids[0], f"{dn} * {p!r} * pow({kids[0]}, {p - 1!r})")
        elif k == EXP:
            route(e.args[0], kids[0], f"{dn} * {name}")
        elif k == LOG:
            route(e.args[0], kids[0], f"{dn} / {kids[0]}")
        elif k == SQRT:
            route(e.args[0], kids[0], f"{dn} * 0.5 / {name}")

    args = ", ".join(f"x{j}" for j in range(nvar))
    gl = ", ".join(" + ".join(grads[j]) if grads[j] else "0.0" for j in range(nvar))
    lines = [f"def _vg({args}):", *fwd, *back]
    lines.append(f"    return {root}, ({gl}{',' if nvar == 1 else ''})")
    return "\n".join(lines) + "\n"


@functools.lru_cache(maxsize=4096)
def compile_expr(expr: Expr) -> CompiledExpr:
    return CompiledExpr(expr)


def gradient(expr: Expr, point: Sequence[float]) -> np.ndarray:
    """Reverse-mode gradient of ``expr`` at ``point`` (one entry per variable)."""
    x = np.asarray(point, dtype=float)
    ce = compile_expr(expr)
    if len(ce.vars) and ce.vars[-1] >= len(x):
        raise IndexError("point is shorter than the largest variable index")
    _, g = ce.value_and_grad(x)
    return g


# -- curvature ----------------------------------------------------------------

class Curvature(enum.Enum):
    AFFINE = "affine"
    CONVEX = "convex"
    CONCAVE = "concave"
    UNKNOWN = "unknown"

    @property
    def is_convex(self) -> bool:
        return self in (Curvature.AFFINE, Curvature.CONVEX)

    @property
    def is_concave(self) -> bool:
        return self in (Curvature.AFFINE, Curvature.CONCAVE)

    def flipped(self) -> "Curvature":
        return {Curvature.CONVEX: Curvature.CONCAVE, Curvature.CONCAVE: Curvature.CONVEX}.get(self, self)


def _combine_sum(parts: Iterable[Curvature]) -> Curvature:
    parts = list(parts)
    if all(p is Curvature.AFFINE for p in parts):
        return Curvature.AFFINE
    if all(p.is_convex for p in parts):
        return Curvature.CONVEX
    if all(p.is_concave for p in parts):
        return Curvature.CONCAVE
    return Curvature.UNKNOWN


def classify_curvature(expr: Expr) -> Curvature:
    """Conservative composition-rule curvature of ``expr``.

    Never reports convex (or concave) for a tree that is not; anything the
    rules cannot certify is UNKNOWN.
    """
    if is_constant(expr):
        return Curvature.AFFINE
    k = expr.kind
    if k == VAR:
        return Curvature.AFFINE
    if k == SUM:
        return _combine_sum(classify_curvature(a) for a in expr.args)
    if k == NEG:
        return classify_curvature(expr.args[0]).flipped()
    if k == PROD:
        varying = [a for a in expr.args if not is_constant(a)]
        if len(varying) != 1:
            return Curvature.UNKNOWN
        try:
            scale = math.prod(evaluate(a, ()) for a in expr.args if is_constant(a))
        except DomainError:
            return Curvature.UNKNOWN
        inner = classify_curvature(varying[0])
        if scale == 0.0:
            return Curvature.AFFINE
        return inner if scale > 0 else inner.flipped()
    inner = classify_curvature(expr.args[0])
    if k == POW:
        p = expr.value
        if p == 0:
            return Curvature.AFFINE
        if p == 1:
            return inner
        if inner is Curvature.AFFINE and float(p).is_integer() and p > 0 and int(p) % 2 == 0:
            return Curvature.CONVEX
        return Curvature.UNKNOWN
    if k == EXP:
        return Curvature.CONVEX if inner.is_convex else Curvature.UNKNOWN
    # log and sqrt are concave and nondecreasing
    return Curvature.CONCAVE if inner.is_concave else Curvature.UNKNOWN
