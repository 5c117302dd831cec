"""Random variable graphs with a known labeling rule, for classifier checks."""

from __future__ import annotations

import numpy as np

from .graph import N_FEATURES, VariableGraph


def random_graph(rng: np.random.Generator, n_nodes: int, binary_fraction: float,
                 edge_prob: float = 0.3) -> VariableGraph:
    """Erdos-Renyi graph whose node features mark ``binary_fraction`` of the nodes binary."""
    n_bin = int(round(binary_fraction * n_nodes))
    kinds = np.array([1] * n_bin + [0] * (n_nodes - n_bin))
    rng.shuffle(kinds)
    F = np.zeros((n_nodes, N_FEATURES))
    for i, k in enumerate(kinds):
        if k == 1:
            F[i] = (0, 1, 0, 1, 1)
        elif rng.random() < 0.25:
            F[i] = (0, 0, 1, 1, 1)
        else:
            F[i, 0] = 1
            F[i, 3] = float(rng.random() < 0.7)
            F[i, 4] = float(rng.random() < 0.7)
    upper = np.triu(rng.random((n_nodes, n_nodes)) < edge_prob, k=1)
    edges = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(upper)))
    return VariableGraph(n_nodes, edges, F)


def binary_fraction(g: VariableGraph) -> float:
    return float(g.features[:, 1].mean())


def separable_dataset(n_graphs: int = 200, seed: int = 0, nodes: tuple[int, int] = (4, 16),
                      margin: float = 0.1) -> tuple[list[VariableGraph], np.ndarray]:
    """Label 1 (BB) iff more than half the nodes are binary.

    Fractions are drawn at least ``margin`` away from one half, so the rule
    is never decided by a single node.
    """
    rng = np.random.default_rng(seed)
    graphs, labels = [], []
    while len(graphs) < n_graphs:
        n = int(rng.integers(nodes[0], nodes[1] + 1))
        target = 1 if rng.random() < 0.5 else 0
        f = rng.uniform(0.5 + margin, 0.95) if target else rng.uniform(0.05, 0.5 - margin)
        g = random_graph(rng, n, f)
        frac = binary_fraction(g)
        if abs(frac - 0.5) < margin / 2:
            continue
        graphs.append(g)
        labels.append(int(frac > 0.5))
    return graphs, np.array(labels)
