"""Random convex MINLP instances.

Bodies are nonnegative combinations of convex atoms (squares and exponentials
of affine forms) plus affine terms, so every generated body is convex by
construction. Right-hand sides are set from a sampled mixed-integer point plus
positive slack, which makes that point strictly feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import expr as E
from .model import BINARY, CONTINUOUS, INTEGER, Constraint, Problem, VariableMeta


@dataclass(frozen=True)
class GeneratorSpec:
    n_binary: int = 3
    n_integer: int = 0
    n_continuous: int = 2
    n_constraints: int = 4
    # relative frequency of (affine, square, exp) atoms in nonlinear slots
    atom_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    continuous_range: tuple[float, float] = (-5.0, 5.0)
    integer_range: tuple[int, int] = (0, 4)
    max_support: int = 4
    # share of continuous variables that keep only one bound
    half_bounded: float = 0.0
    seed: int = 0

    def __post_init__(self):
        counts = (self.n_binary, self.n_integer, self.n_continuous, self.n_constraints)
        if min(counts) < 0:
            raise ValueError("generator counts must be nonnegative")
        if self.n_binary + self.n_integer < 1:
            raise ValueError("generated instances need at least one discrete variable")
        if min(self.atom_weights) < 0 or sum(self.atom_weights) <= 0:
            raise ValueError("atom weights must be nonnegative and not all zero")
        if self.continuous_range[0] >= 0 or self.continuous_range[1] <= 1:
            raise ValueError("continuous_range must straddle [0, 1]")
        if self.integer_range[1] <= self.integer_range[0] or self.max_support < 1:
            raise ValueError("invalid integer_range or max_support")
        if self.seed < 0:
            raise ValueError("seed must be an unsigned integer")


def _r(v: float, nd: int = 3) -> float:
    return round(float(v), nd)


def _linear(coefs: dict[int, float], constant: float = 0.0) -> E.Expr:
    """Affine form written the way the parser reads ``a*x - b*y + c``."""
    terms = []
    for j, a in coefs.items():
        if a == 0.0:
            continue
        if not terms or a > 0:
            terms.append(E.mul(E.const(a), E.var(j)))
        else:
            terms.append(E.neg(E.mul(E.const(-a), E.var(j))))
    if constant != 0.0:
        if terms and constant < 0:
            terms.append(E.neg(E.const(-constant)))
        else:
            terms.append(E.const(constant))
    if not terms:
        return E.const(0.0)
    return E.add(*terms)


def _join(parts: list[E.Expr]) -> E.Expr:
    head = parts[0]
    terms = list(head.args) if head.kind == E.SUM else [head]
    return E.add(*terms, *parts[1:])


class _Builder:
    def __init__(self, spec: GeneratorSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.variables: list[VariableMeta] = []
        self.span: list[float] = []
        self.ref: list[float] = []

    def build_variables(self):
        s, rng = self.spec, self.rng
        c_lo, c_hi = s.continuous_range
        for k in range(s.n_continuous):
            lo = _r(rng.uniform(c_lo, 0.0), 1)
            hi = _r(rng.uniform(1.0, c_hi), 1)
            x0 = rng.uniform(lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo))
            if rng.random() < s.half_bounded:
                if rng.random() < 0.5:
                    hi = None
                else:
                    lo = None
            self.variables.append(VariableMeta(f"x{k + 1}", CONTINUOUS, lo, hi))
            self.span.append(c_hi - c_lo if lo is None or hi is None else hi - lo)
            self.ref.append(x0)
        for k in range(s.n_binary):
            self.variables.append(VariableMeta(f"y{k + 1}", BINARY))
            self.span.append(1.0)
            self.ref.append(float(rng.integers(0, 2)))
        i_lo, i_hi = s.integer_range
        for k in range(s.n_integer):
            hi = int(rng.integers(i_lo + 1, i_hi + 1))
            self.variables.append(VariableMeta(f"z{k + 1}", INTEGER, float(i_lo), float(hi)))
            self.span.append(float(hi - i_lo))
            self.ref.append(float(rng.integers(i_lo, hi + 1)))

    def support(self) -> list[int]:
        n = len(self.variables)
        k = int(self.rng.integers(1, min(self.spec.max_support, n) + 1))
        return sorted(int(j) for j in self.rng.choice(n, size=k, replace=False))

    def coefs(self, support, scale: float = 1.0) -> dict[int, float]:
        out = {}
        for j in support:
            a = self.rng.uniform(-1.0, 1.0) * scale / max(1.0, self.span[j])
            out[j] = _r(a) or 0.001
        return out

    def atom(self, kind: str) -> E.Expr:
        sup = self.support()
        if kind == "affine":
            return _linear(self.coefs(sup))
        w = _r(self.rng.uniform(0.2, 1.0))
        if kind == "square":
            inner = _linear(self.coefs(sup, 2.0), _r(self.rng.uniform(-1.0, 1.0)))
            return E.mul(E.const(w), E.power(inner, 2))
        inner = _linear(self.coefs(sup, 1.5), _r(self.rng.uniform(-0.5, 0.5)))
        return E.mul(E.const(w), E.exp(inner))

    def pick(self) -> str:
        w = np.asarray(self.spec.atom_weights, dtype=float)
        return ("affine", "square", "exp")[int(self.rng.choice(3, p=w / w.sum()))]

    def constraint(self) -> Constraint:
        sup = self.support()
        parts = [_linear({j: _r(self.rng.uniform(-2.0, 2.0)) or 0.5 for j in sup})]
        for _ in range(int(self.rng.integers(0, 3))):
            parts.append(self.atom(self.pick()))
        body = _join(parts)
        at_ref = E.evaluate(body, self.ref)
        slack = self.rng.uniform(0.2, 1.0) * (1.0 + 0.1 * abs(at_ref))
        rhs = math.ceil((at_ref + slack) * 1000.0) / 1000.0
        return Constraint(body, rhs)

    def objective(self) -> E.Expr:
        n = len(self.variables)
        parts = [_linear({j: _r(self.rng.uniform(-1.0, 1.0)) or 0.1 for j in range(n)})]
        for j, v in enumerate(self.variables):
            # keep half-bounded directions coercive
            if v.domain == CONTINUOUS and (v.lower is None or v.upper is None):
                w = _r(self.rng.uniform(0.2, 1.0))
                parts.append(E.mul(E.const(w), E.power(_linear({j: 1.0}, _r(self.rng.normal())), 2)))
        for _ in range(1 + int(self.rng.integers(0, max(1, n // 2) + 1))):
            kind = self.pick()
            parts.append(self.atom("square" if kind == "affine" else kind))
        return _join(parts)


def generate_instance(spec: GeneratorSpec, name: str | None = None) -> Problem:
    """Deterministic convex instance for ``spec`` (including its seed)."""
    b = _Builder(spec)
    b.build_variables()
    constraints = [b.constraint() for _ in range(spec.n_constraints)]
    objective = b.objective()
    return Problem(b.variables, objective, constraints, name or f"gen-{spec.seed}")


def sample_spec(rng: np.random.Generator, seed: int, *, binary=(1, 6), integer=(0, 0),
                continuous=(1, 5), constraints=(1, 6), **extra) -> GeneratorSpec:
    """Draw instance sizes uniformly from inclusive ranges."""
    def draw(r):
        return int(rng.integers(r[0], r[1] + 1))

    nb, ni = draw(binary), draw(integer)
    if nb + ni == 0:
        nb = 1
    return GeneratorSpec(n_binary=nb, n_integer=ni, n_continuous=draw(continuous),
                         n_constraints=draw(constraints), seed=seed, **extra)


def generate_corpus(count: int, seed: int = 0, **ranges) -> list[Problem]:
    """``count`` instances with sizes drawn from ``ranges``; instance i uses seed ``seed + i``."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        spec = sample_spec(rng, seed + i, **ranges)
        out.append(generate_instance(spec, name=f"gen-{seed + i:05d}"))
    return out


def with_seed(spec: GeneratorSpec, seed: int) -> GeneratorSpec:
    return replace(spec, seed=seed)
