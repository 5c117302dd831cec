"""Variable graph, bipartite variable-constraint graph, and node features."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import expr as E
from .model import BINARY, CONTINUOUS, INTEGER, Problem, VariableMeta

N_FEATURES = 5


@dataclass(frozen=True)
class VariableGraph:
    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    features: np.ndarray  # n_nodes x 5, entries 0/1

    def __post_init__(self):
        for i, j in self.edges:
            if not (0 <= i < j < self.n_nodes):
                raise ValueError(f"edge {(i, j)} is not an ordered pair of distinct nodes")
        if len(set(self.edges)) != len(self.edges):
            raise ValueError("duplicate edges")
        if self.features.shape != (self.n_nodes, N_FEATURES):
            raise ValueError("feature matrix must be n_nodes x 5")

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n_nodes, self.n_nodes))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def permuted(self, perm) -> "VariableGraph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        edges = sorted(tuple(sorted((int(perm[i]), int(perm[j])))) for i, j in self.edges)
        F = np.empty_like(self.features)
        F[perm] = self.features
        return VariableGraph(self.n_nodes, tuple(edges), F)

    def to_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "edges": [list(e) for e in self.edges],
            "features": self.features.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VariableGraph":
        F = np.asarray(d["features"], dtype=float).reshape(int(d["n_nodes"]), N_FEATURES)
        return cls(int(d["n_nodes"]), tuple(sorted(tuple(int(v) for v in e) for e in d["edges"])), F)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class BipartiteGraph:
    n_variables: int
    n_constraints: int  # including the objective node, which comes last
    edges: tuple[tuple[int, int], ...]  # (variable, constraint)

    def biadjacency(self) -> np.ndarray:
        B = np.zeros((self.n_variables, self.n_constraints))
        for i, j in self.edges:
            B[i, j] = 1.0
        return B


def variable_features(v: VariableMeta) -> np.ndarray:
    """[continuous, binary, integer, has upper bound, has lower bound].

    Discrete domains always count as bounded on both sides.
    """
    phi = np.zeros(N_FEATURES)
    if v.domain == CONTINUOUS:
        phi[0] = 1.0
        lo, hi = v.bounds
        phi[3] = float(not math.isinf(hi))
        phi[4] = float(not math.isinf(lo))
    elif v.domain == BINARY:
        phi[1] = phi[3] = phi[4] = 1.0
    elif v.domain == INTEGER:
        phi[2] = phi[3] = phi[4] = 1.0
    return phi


def _bodies(p: Problem) -> list[E.Expr]:
    return [c.body for c in p.constraints] + [p.objective]


def build_variable_graph(p: Problem) -> VariableGraph:
    """Nodes are variables; i~j when both appear in one constraint body or the objective."""
    edges = set()
    for body in _bodies(p):
        for i, j in combinations(E.variables(body), 2):
            edges.add((i, j))
    F = np.array([variable_features(v) for v in p.variables]).reshape(p.n, N_FEATURES)
    return VariableGraph(p.n, tuple(sorted(edges)), F)


def build_bipartite_graph(p: Problem) -> BipartiteGraph:
    edges = []
    for j, body in enumerate(_bodies(p)):
        edges.extend((i, j) for i in E.variables(body))
    return BipartiteGraph(p.n, p.m + 1, tuple(sorted(edges)))
