"""Graph convolutional classifier in plain numpy.

Forward pass for one graph with normalized adjacency ``Â`` and features ``F``::

    H0 = F,  H_l = tanh(Â H_{l-1} W_l)  (l = 1..L-1)
    r  = mean over nodes of H_{L-1}
    p  = softmax(Θ r + b)

Index 0 is OA and index 1 is branch and bound. Training minimizes the
class-weighted cross-entropy with Adam; all gradients are written out by hand.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import WeightsError
from .graph import N_FEATURES, VariableGraph

LABEL_NAMES = ("OA", "BB")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    n_layers: int = 4  # L; the network has L-1 weight layers
    hidden: int = 12
    learning_rate: float = 0.005
    batch_size: int = 10
    epochs: int = 50
    dropout: float = 0.5
    seed: int = 0
    n_features: int = N_FEATURES
    n_classes: int = 2

    def __post_init__(self):
        if self.n_layers < 2 or self.hidden < 1 or self.batch_size < 1 or self.n_classes < 2:
            raise ValueError("n_layers >= 2, hidden >= 1, batch_size >= 1 and n_classes >= 2 required")
        if self.learning_rate <= 0 or self.epochs < 0 or not (0.0 <= self.dropout < 1.0):
            raise ValueError("learning_rate > 0, epochs >= 0 and dropout in [0, 1) required")


@dataclass
class GcnParams:
    layers: list[np.ndarray]  # W^1: n_features x hidden, then hidden x hidden
    head: np.ndarray  # n_classes x hidden
    bias: np.ndarray  # n_classes
    activation: str = "tanh"

    def __post_init__(self):
        if not self.layers:
            raise ValueError("at least one weight layer is needed")
        h = self.layers[0].shape[1]
        for W in self.layers[1:]:
            if W.shape != (h, h):
                raise ValueError("hidden layers must be hidden x hidden")
        if self.head.shape[1] != h or self.bias.shape != (self.head.shape[0],):
            raise ValueError("head must be n_classes x hidden with a matching bias")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layers) + 1

    @property
    def hidden(self) -> int:
        return self.layers[0].shape[1]

    @property
    def n_features(self) -> int:
        return self.layers[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.head.shape[0]

    def tensors(self) -> list[np.ndarray]:
        return [*self.layers, self.head, self.bias]

    def copy(self) -> "GcnParams":
        return GcnParams([W.copy() for W in self.layers], self.head.copy(), self.bias.copy(), self.activation)


def init_params(hp: Hyperparams, rng: np.random.Generator | None = None) -> GcnParams:
    """Glorot-uniform matrices, zero bias."""
    rng = rng or np.random.default_rng(hp.seed)

    def glorot(fan_in, fan_out, shape):
        s = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=shape)

    layers = [glorot(hp.n_features, hp.hidden, (hp.n_features, hp.hidden))]
    for _ in range(hp.n_layers - 2):
        layers.append(glorot(hp.hidden, hp.hidden, (hp.hidden, hp.hidden)))
    head = glorot(hp.hidden, hp.n_classes, (hp.n_classes, hp.hidden))
    return GcnParams(layers, head, np.zeros(hp.n_classes))


# ---------------------------------------------------------------- building blocks

def normalize_adjacency(g: VariableGraph | np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the row sums of A + I."""
    A = g.adjacency() if isinstance(g, VariableGraph) else np.asarray(g, dtype=float)
    Ah = A + np.eye(A.shape[0])
    d = 1.0 / np.sqrt(Ah.sum(axis=1))
    return Ah * d[:, None] * d[None, :]


def gcn_layer(A_norm: np.ndarray, H: np.ndarray, W: np.ndarray) -> np.ndarray:
    return np.tanh(A_norm @ H @ W)


def mean_pool(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.shape[0] < 1:
        raise ValueError("cannot pool an empty node set")
    return H.mean(axis=0)


def softmax(y: np.ndarray) -> np.ndarray:
    z = np.exp(y - np.max(y, axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


@dataclass
class _Graph:
    """Normalized adjacency and features, prepared once per graph."""
    A: np.ndarray
    F: np.ndarray

    @classmethod
    def of(cls, g) -> "_Graph":
        if isinstance(g, _Graph):
            return g
        return cls(normalize_adjacency(g), np.asarray(g.features, dtype=float))


def _forward(G: _Graph, params: GcnParams, mask: np.ndarray | None):
    if G.F.shape[1] != params.n_features:
        raise ValueError(f"graph has {G.F.shape[1]} features, parameters expect {params.n_features}")
    hs = [G.F]
    for W in params.layers:
        hs.append(gcn_layer(G.A, hs[-1], W))
    r = mean_pool(hs[-1])
    rd = r if mask is None else r * mask
    y = params.head @ rd + params.bias
    return hs, r, rd, y


def forward(g: VariableGraph, params: GcnParams, training: bool = False,
            rng: np.random.Generator | None = None, dropout: float = 0.5) -> np.ndarray:
    """Class probabilities; dropout on the pooled vector only when ``training``."""
    mask = _dropout_mask(rng or np.random.default_rng(), params.hidden, dropout) if training else None
    return softmax(_forward(_Graph.of(g), params, mask)[3])


def logits(g: VariableGraph, params: GcnParams) -> np.ndarray:
    return _forward(_Graph.of(g), params, None)[3]


def _dropout_mask(rng: np.random.Generator, size: int, rate: float) -> np.ndarray | None:
    if rate <= 0.0:
        return None
    return (rng.random(size) >= rate) / (1.0 - rate)


# ---------------------------------------------------------------- loss and gradients

def class_weights(labels: Sequence[int], n_classes: int = 2) -> np.ndarray:
    """Inverse-frequency weights ``N / (n_classes * count_c)``."""
    labels = np.asarray(labels, dtype=int)
    counts = np.bincount(labels, minlength=n_classes)[:n_classes]
    if np.any(counts == 0):
        raise ValueError("class weights need every class present in the labels")
    return labels.size / (n_classes * counts.astype(float))


def weighted_cross_entropy(logit_batch, labels, weights) -> float:
    """Weighted mean of ``-log softmax(y)[z]``, normalized by the applied weights."""
    Y = np.atleast_2d(np.asarray(logit_batch, dtype=float))
    z = np.asarray(labels, dtype=int)
    if Y.shape[0] == 0:
        raise ValueError("empty batch")
    w = np.asarray(weights, dtype=float)[z]
    shifted = Y - Y.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-(w * logp[np.arange(z.size), z]).sum() / w.sum())


def loss_and_grads(graphs: Sequence, labels: Sequence[int], weights: np.ndarray, params: GcnParams,
                   masks: Sequence[np.ndarray | None] | None = None) -> tuple[float, list[np.ndarray]]:
    """Batch loss and its gradient for every tensor in ``params.tensors()`` order."""
    Gs = [_Graph.of(g) for g in graphs]
    z = np.asarray(labels, dtype=int)
    masks = masks if masks is not None else [None] * len(Gs)
    wz = np.asarray(weights, dtype=float)[z]
    total_w = wz.sum()
    dW = [np.zeros_like(W) for W in params.layers]
    dhead = np.zeros_like(params.head)
    dbias = np.zeros_like(params.bias)
    ys = []
    for G, zk, ck, mask in zip(Gs, z, wz / total_w, masks):
        hs, r, rd, y = _forward(G, params, mask)
        ys.append(y)
        dy = softmax(y)
        dy[zk] -= 1.0
        dy *= ck
        dhead += np.outer(dy, rd)
        dbias += dy
        dr = params.head.T @ dy
        if mask is not None:
            dr = dr * mask
        dH = np.broadcast_to(dr / hs[-1].shape[0], hs[-1].shape)
        for li in range(len(params.layers) - 1, -1, -1):
            dZ = dH * (1.0 - hs[li + 1] ** 2)
            AH = G.A @ hs[li]
            dW[li] += AH.T @ dZ
            if li:
                dH = G.A @ dZ @ params.layers[li].T
    loss = weighted_cross_entropy(np.array(ys), z, weights)
    return loss, [*dW, dhead, dbias]


# ---------------------------------------------------------------- training

@dataclass
class EpochLog:
    epoch: int
    loss: float
    train_accuracy: float


@dataclass
class TrainResult:
    params: GcnParams
    log: list[EpochLog] = field(default_factory=list)
    weights: tuple[float, ...] = ()


class Adam:
    def __init__(self, tensors: list[np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(t) for t in tensors]
        self.v = [np.zeros_like(t) for t in tensors]
        self.t = 0

    def step(self, tensors: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(tensors, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def predict_proba(graphs: Sequence, params: GcnParams) -> np.ndarray:
    return np.array([softmax(_forward(_Graph.of(g), params, None)[3]) for g in graphs])


def evaluate(graphs: Sequence, labels: Sequence[int], params: GcnParams,
             weights: np.ndarray | None = None) -> tuple[float, float]:
    """(weighted loss, accuracy) in inference mode."""
    Gs = [_Graph.of(g) for g in graphs]
    z = np.asarray(labels, dtype=int)
    Y = np.array([_forward(G, params, None)[3] for G in Gs])
    w = np.ones(params.n_classes) if weights is None else weights
    acc = float(np.mean(np.argmax(Y, axis=1) == z))
    return weighted_cross_entropy(Y, z, w), acc


def train(graphs: Sequence, labels: Sequence[int], hp: Hyperparams = Hyperparams(),
          init: GcnParams | None = None) -> TrainResult:
    """Mini-batch Adam on the class-weighted cross-entropy.

    The log starts with the untrained network as epoch 0; every later row
    is measured in inference mode after that epoch's updates.
    """
    if len(graphs) == 0:
        raise ValueError("empty training set")
    z = np.asarray(labels, dtype=int)
    weights = class_weights(z, hp.n_classes)
    rng = np.random.default_rng(hp.seed)
    params = init.copy() if init is not None else init_params(hp, rng)
    Gs = [_Graph.of(g) for g in graphs]
    loss, acc = evaluate(Gs, z, params, weights)
    log = [EpochLog(0, loss, acc)]
    tensors = params.tensors()
    opt = Adam(tensors, hp.learning_rate)
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(len(Gs))
        for s in range(0, len(order), hp.batch_size):
            idx = order[s:s + hp.batch_size]
            masks = [_dropout_mask(rng, params.hidden, hp.dropout) for _ in idx]
            _, grads = loss_and_grads([Gs[i] for i in idx], z[idx], weights, params, masks)
            opt.step(tensors, grads)
        loss, acc = evaluate(Gs, z, params, weights)
        log.append(EpochLog(epoch, loss, acc))
    return TrainResult(params, log, tuple(float(w) for w in weights))


def balanced_split(labels: Sequence[int], per_class: int = 15, seed: int = 0) -> tuple[list[int], list[int]]:
    """Hold out ``per_class`` random indices of every class; the rest trains."""
    z = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(seed)
    test = []
    for c in np.unique(z):
        idx = np.flatnonzero(z == c)
        if idx.size <= per_class:
            raise ValueError(f"class {c} has {idx.size} records, need more than {per_class} to hold out")
        test.extend(int(i) for i in rng.choice(idx, size=per_class, replace=False))
    test_set = set(test)
    return [i for i in range(z.size) if i not in test_set], sorted(test)


# ---------------------------------------------------------------- persistence

def params_to_dict(params: GcnParams, hp: Hyperparams | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "hyperparams": asdict(hp) if hp is not None else {},
        "activation": params.activation,
        "layers": [W.tolist() for W in params.layers],
        "head": params.head.tolist(),
        "bias": params.bias.tolist(),
        "label_names": list(LABEL_NAMES),
    }


def save_weights(params: GcnParams, path: str | Path, hp: Hyperparams | None = None) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params, hp), indent=2) + "\n", encoding="utf-8")


def params_from_dict(doc) -> GcnParams:
    if not isinstance(doc, dict):
        raise WeightsError("weights document must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise WeightsError(f"unsupported weights format_version {doc.get('format_version')!r}")
    if doc.get("label_names") != list(LABEL_NAMES):
        raise WeightsError("label_names must be ['OA', 'BB']")
    try:
        layers = [np.array(W, dtype=float) for W in doc["layers"]]
        head = np.array(doc["head"], dtype=float)
        bias = np.array(doc["bias"], dtype=float)
        if any(W.ndim != 2 for W in layers) or head.ndim != 2:
            raise WeightsError("layers and head must be matrices")
        for t in (*layers, head, bias):
            if not np.all(np.isfinite(t)):
                raise WeightsError("weights contain non-finite entries")
        return GcnParams(layers, head, bias, doc.get("activation", "tanh"))
    except WeightsError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightsError(f"malformed weights: {exc}") from None


def load_weights(path: str | Path) -> GcnParams:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise WeightsError(f"weights file is not valid JSON: {exc.msg}") from None
    return params_from_dict(doc)


def write_training_log(log: Sequence[EpochLog], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "train_accuracy"])
        for row in log:
            w.writerow([row.epoch, repr(row.loss), repr(row.train_accuracy)])
