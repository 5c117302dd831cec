"""Shared oracles and fixtures for the test suite."""

from __future__ import annotations

import math

import numpy as np

from minlpsel import expr as E
from minlpsel.generator import generate_corpus
from minlpsel.model import BINARY, CONTINUOUS, VariableMeta, make_problem

# sizes of the cross-agreement corpus; well inside 10 binaries / 10 continuous / 12 rows
CORPUS_RANGES = dict(binary=(1, 6), continuous=(1, 5), constraints=(1, 6))


# criterion number -> one PASS/FAIL line, printed in the pytest terminal summary
ACCEPTANCE: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def agreement_corpus(count: int = 50, seed: int = 0):
    return generate_corpus(count, seed=seed, **CORPUS_RANGES)


def toy_problem():
    """min (x-1)^2 + 2y  s.t.  1 - y - x <= 0,  x in [0, 4],  y binary."""
    return make_problem([VariableMeta("x", CONTINUOUS, 0, 4), VariableMeta("y", BINARY)],
                        "(x-1)^2 + 2*y", [("1 - y - x", 0)], name="toy")


# ---------------------------------------------------------------- random expressions

def random_expr(rng: np.random.Generator, n_vars: int, depth: int) -> E.Expr:
    """Random tree over every node kind, at most ``depth`` levels deep."""
    if depth <= 1 or rng.random() < 0.25:
        if rng.random() < 0.3:
            return E.const(float(np.round(rng.uniform(-3, 3), 2)))
        return E.var(int(rng.integers(n_vars)))
    kind = rng.choice(["sum", "prod", "pow", "neg", "exp", "log", "sqrt"])
    sub = lambda: random_expr(rng, n_vars, depth - 1)  # noqa: E731
    if kind == "sum":
        return E.add(*[sub() for _ in range(int(rng.integers(2, 4)))])
    if kind == "prod":
        return E.mul(*[sub() for _ in range(int(rng.integers(2, 3)))])
    if kind == "pow":
        return E.power(sub(), float(rng.choice([2, 3, 0.5, -1, 1.5])))
    if kind == "neg":
        return E.neg(sub())
    if kind == "exp":
        # keep magnitudes finite
        return E.exp(E.mul(E.const(0.3), sub()))
    if kind == "log":
        return E.log(E.add(E.power(sub(), 2), E.const(0.5)))
    return E.sqrt(E.add(E.power(sub(), 2), E.const(0.1)))


def fd_gradient(f, x: np.ndarray, h: float, points: int = 2) -> np.ndarray:
    """Central differences with a 2- or 4-point stencil per coordinate."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.size):
        def at(s):
            y = x.copy()
            y[j] += s
            return f(y)
        if points == 2:
            g[j] = (at(h) - at(-h)) / (2 * h)
        else:
            g[j] = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
    return g


def rel_err(a, b) -> float:
    """Largest componentwise error relative to max(|a|, |b|, 1)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0


def ad_vs_fd_trial(rng: np.random.Generator, n_vars: int = 4, max_depth: int = 6):
    """One random expression and interior point; None when the point is outside the domain.

    Returns the relative error between reverse-mode and a 4-point central stencil.
    """
    e = random_expr(rng, n_vars, int(rng.integers(1, max_depth + 1)))
    x = rng.uniform(-2, 2, size=n_vars)
    h = 1e-3
    try:
        g = E.gradient(e, x)
        f = lambda y: E.evaluate(e, y)  # noqa: E731
        fd = fd_gradient(f, x, h, points=4)
    except E.DomainError:
        return None
    if not np.all(np.isfinite(fd)) or np.max(np.abs(g), initial=0.0) > 1e6:
        return None
    return rel_err(g, fd)


def finite(v) -> bool:
    return v is not None and math.isfinite(v)


# ---------------------------------------------------------------- classifier oracles

def loop_forward(n_nodes, edges, features, layers, head, bias):
    """Classifier probabilities with plain Python loops, no matrix products."""
    nbrs = [{i} for i in range(n_nodes)]
    for i, j in edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    deg = [len(s) for s in nbrs]
    H = [list(map(float, row)) for row in features]
    for W in layers:
        rows, cols = len(W), len(W[0])
        agg = [[sum(H[j][k] / math.sqrt(deg[i] * deg[j]) for j in nbrs[i]) for k in range(rows)]
               for i in range(n_nodes)]
        H = [[math.tanh(sum(agg[i][k] * W[k][c] for k in range(rows))) for c in range(cols)]
             for i in range(n_nodes)]
    r = [sum(H[i][c] for i in range(n_nodes)) / n_nodes for c in range(len(H[0]))]
    y = [sum(t * rc for t, rc in zip(row, r)) + b for row, b in zip(head, bias)]
    top = max(y)
    ex = [math.exp(v - top) for v in y]
    return [v / sum(ex) for v in ex]


def tensor_rel_err(a, b) -> float:
    """||a - b|| / max(||a||, ||b||), zero when both vanish."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0.0 else float(np.linalg.norm(a - b) / scale)


def gradient_check(graphs, labels, weights, params, masks=None, step=1e-5):
    """Per-tensor relative error between analytic and central-difference gradients."""
    from minlpsel.gnn import loss_and_grads

    _, grads = loss_and_grads(graphs, labels, weights, params, masks)
    errors = []
    for T, G in zip(params.tensors(), grads):
        fd = np.zeros_like(T)
        for idx in np.ndindex(T.shape):
            old = T[idx]
            T[idx] = old + step
            up = loss_and_grads(graphs, labels, weights, params, masks)[0]
            T[idx] = old - step
            down = loss_and_grads(graphs, labels, weights, params, masks)[0]
            T[idx] = old
            fd[idx] = (up - down) / (2 * step)
        errors.append(tensor_rel_err(G, fd))
    return errors
