"""The edge-featured GraphSAGE model.

Each layer computes, for every node v,

    h_v^k = relu(W^k . [h_v^{k-1} ; mean of the incident edge messages])

starting from all-ones node vectors.  The edge embedding of flow u->v is
[z_u ; z_v] with z = h^K, and a linear head followed by log-softmax turns
it into class log-probabilities.  No layer has a bias term.

By default the incident-edge message at every layer is the raw edge
feature vector.  ``neighbor_messages="node"`` switches layers k > 1 to
averaging the far endpoint's h^{k-1} instead.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .errors import DimensionError
from .graph_builder import FlowGraph
from .numeric_core import Tape, log_softmax

FULL = None


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    hidden: int = 128
    dropout_rate: float = 0.2
    num_classes: int = 2
    neighbor_sample_size: int | None = FULL
    activation: str = "relu"
    neighbor_messages: str = "edge"   # "edge" | "node"

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers (K) must be >= 1")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.neighbor_sample_size is not None and self.neighbor_sample_size < 1:
            raise ValueError("neighbor_sample_size must be positive or FULL (None)")
        if self.activation != "relu":
            raise ValueError("only relu activation is supported")
        if self.neighbor_messages not in ("edge", "node"):
            raise ValueError("neighbor_messages must be 'edge' or 'node'")

    def to_dict(self):
        return asdict(self)


@dataclass
class ModelParams:
    layers: list        # W^k, shape (hidden, in_self + in_neigh)
    head: np.ndarray    # (num_classes, 2 * hidden)

    def named(self):
        out = {f"W{k + 1}": w for k, w in enumerate(self.layers)}
        out["head"] = self.head
        return out

    @classmethod
    def from_named(cls, named):
        k = sum(1 for name in named if name.startswith("W"))
        return cls([np.array(named[f"W{i + 1}"]) for i in range(k)], np.array(named["head"]))

    def copy(self):
        return ModelParams([w.copy() for w in self.layers], self.head.copy())

    @property
    def dim(self):
        """Edge-feature dimension d the first layer expects."""
        return self.layers[0].shape[1] // 2


def param_shapes(config: ModelConfig, dim: int):
    shapes = {}
    for k in range(config.layers):
        in_self = dim if k == 0 else config.hidden
        in_neigh = dim if (k == 0 or config.neighbor_messages == "edge") else config.hidden
        shapes[f"W{k + 1}"] = (config.hidden, in_self + in_neigh)
    shapes["head"] = (config.num_classes, 2 * config.hidden)
    return shapes


def init_params(config: ModelConfig, dim: int, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, seeded."""
    rng = np.random.default_rng(seed)
    named = {}
    for name, (fan_out, fan_in) in param_shapes(config, dim).items():
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        named[name] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    return ModelParams.from_named(named)


@dataclass
class Embeddings:
    layers: list        # h^k for k = 1..K, each (N, hidden)
    nodes: np.ndarray   # z_v = h^K
    edges: np.ndarray   # z_uv, (E, 2 * hidden)


def aggregate_neighborhood(graph: FlowGraph, v: int, messages: np.ndarray,
                           sample_size=FULL, rng=None) -> np.ndarray:
    """Mean of the incident-edge messages of node ``v`` (zero if isolated).

    ``messages`` holds one row per edge.  When ``sample_size`` is below the
    degree, a uniform sample without replacement is averaged.
    """
    inc = graph.incident(v)
    if sample_size is not None and len(inc) > sample_size:
        rng = rng if rng is not None else np.random.default_rng(0)
        inc = rng.choice(inc, size=sample_size, replace=False)
    if len(inc) == 0:
        return np.zeros(messages.shape[1])
    return messages[inc].sum(axis=0) / len(inc)


def layer_forward(graph: FlowGraph, k: int, params: ModelParams, h_prev: np.ndarray,
                  config: ModelConfig, rng=None) -> np.ndarray:
    """h^k from h^{k-1} for layer ``k`` (1-based), without dropout."""
    w = params.layers[k - 1]
    if k > 1 and config.neighbor_messages == "node":
        agg = graph.neighbor_mean_operator(config.neighbor_sample_size, rng) @ h_prev
    else:
        agg = graph.edge_mean_operator(config.neighbor_sample_size, rng) @ graph.features
    x = np.concatenate([h_prev, np.asarray(agg)], axis=1)
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"layer {k}: input width {x.shape[1]} does not match W{k} {w.shape}")
    return np.maximum(x @ w.T, 0.0)


def _check(graph, params, config):
    shapes = param_shapes(config, graph.dim)
    for name, w in params.named().items():
        if name not in shapes:
            raise DimensionError(f"unexpected parameter {name} for a {config.layers}-layer model")
        if w.shape != shapes[name]:
            raise DimensionError(f"parameter {name} has shape {w.shape}, expected "
                                 f"{shapes[name]} for edge-feature dimension {graph.dim}")
    if len(params.layers) != config.layers:
        raise DimensionError(f"{len(params.layers)} layer matrices for K={config.layers}")


def build_forward(tape: Tape, graph: FlowGraph, leaves: dict, config: ModelConfig,
                  train: bool = False, rng=None):
    """Record the forward pass on ``tape``.

    ``leaves`` maps ``W1..WK`` and ``head`` to tape variables.  Returns the
    (E, C) log-probability variable and the list of node-embedding
    variables h^1..h^K plus the edge-embedding variable.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    sample = config.neighbor_sample_size
    # Under FULL sampling the edge-message average is the same at every layer.
    edge_feats = tape.const(graph.features, "e_uv")
    fixed_agg = None
    h = tape.const(graph.node_features(), "x_v")
    hs = []
    for k in range(config.layers):
        if k > 0 and config.neighbor_messages == "node":
            op = tape.const(graph.neighbor_mean_operator(sample, rng), f"N{k + 1}")
            agg = tape.mean_scatter(op, h)
        elif sample is None and fixed_agg is not None:
            agg = fixed_agg
        else:
            op = tape.const(graph.edge_mean_operator(sample, rng), f"A{k + 1}")
            agg = tape.mean_scatter(op, edge_feats)
            if sample is None:
                fixed_agg = agg
        h = tape.relu(tape.matmul_t(tape.concat_cols(h, agg), leaves[f"W{k + 1}"]))
        hs.append(h)
        if train and k == 0 and config.layers > 1:
            h = tape.dropout(h, config.dropout_rate, rng)
    z_uv = tape.concat_cols(tape.gather_rows(hs[-1], graph.src),
                            tape.gather_rows(hs[-1], graph.dst))
    logits = tape.matmul_t(z_uv, leaves["head"])
    return tape.log_softmax(logits), hs, z_uv


def forward(graph: FlowGraph, params: ModelParams, config: ModelConfig,
            mode: str = "eval", rng=None):
    """Run the model; returns ``(edge log-probs, Embeddings)``."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    _check(graph, params, config)
    tape = Tape()
    leaves = {name: tape.const(w, name) for name, w in params.named().items()}
    logp, hs, z_uv = build_forward(tape, graph, leaves, config, mode == "train", rng)
    emb = Embeddings([x.value for x in hs], hs[-1].value, z_uv.value)
    return logp.value, emb


def edge_embeddings(graph: FlowGraph, z: np.ndarray) -> np.ndarray:
    """[z_src ; z_dst] per flow, in flow order."""
    return np.concatenate([z[graph.src], z[graph.dst]], axis=1)


def classify_edges(z_uv: np.ndarray, head: np.ndarray) -> np.ndarray:
    if head.shape[1] != z_uv.shape[1]:
        raise DimensionError(f"head shape {head.shape} does not fit embeddings {z_uv.shape}")
    return log_softmax(z_uv @ head.T)


def predict(graph: FlowGraph, params: ModelParams, config: ModelConfig) -> np.ndarray:
    logp, _ = forward(graph, params, config, "eval")
    return logp.argmax(axis=1)
