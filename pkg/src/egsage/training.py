"""Full-graph supervised training with cross-entropy and Adam."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .egraphsage import ModelConfig, ModelParams, build_forward, init_params, _check
from .errors import NumericError
from .graph_builder import FlowGraph, NodeId, _assemble
from .numeric_core import Tape, finite_difference_check

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 200
    seed: int = 0
    class_weights: tuple | str | None = None   # per-class weights, "balanced", or None
    preflight: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        for b in (self.beta1, self.beta2):
            if not 0.0 < b < 1.0:
                raise ValueError("betas must lie in (0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def to_dict(self):
        d = asdict(self)
        if isinstance(self.class_weights, tuple):
            d["class_weights"] = list(self.class_weights)
        return d


def nll_loss(logp: np.ndarray, labels, class_weights=None) -> float:
    """Class-weighted mean negative log-likelihood of integer ``labels``."""
    tape = Tape()
    return float(tape.nll_loss(tape.const(logp), labels, class_weights).value[0, 0])


def balanced_weights(labels, num_classes):
    """Inverse-frequency weights; classes absent from ``labels`` get weight 0."""
    counts = np.bincount(np.asarray(labels), minlength=num_classes).astype(np.float64)
    w = np.zeros(num_classes)
    present = counts > 0
    w[present] = counts.sum() / (present.sum() * counts[present])
    return w


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, named):
        return cls({k: np.zeros_like(p) for k, p in named.items()},
                   {k: np.zeros_like(p) for k, p in named.items()}, 0)


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update; returns new params and state."""
    t = state.t + 1
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.epsilon
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name}")
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * (g * g)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(new_m, new_v, t)


def edge_labels(graph: FlowGraph, task: str, class_names=None) -> np.ndarray:
    """Integer targets per edge: binary (0 benign / 1 attack) or class index."""
    if task == "binary":
        return np.asarray(graph.binary_label, dtype=np.int64)
    lookup = {c: i for i, c in enumerate(class_names)}
    missing = sorted({c for c in graph.attack_class if c not in lookup})
    if missing:
        raise ValueError(f"attack classes {missing} are not in the class list")
    return np.array([lookup[c] for c in graph.attack_class], dtype=np.int64)


@dataclass
class TrainResult:
    params: ModelParams
    history: list = field(default_factory=list)   # (epoch, loss, train_accuracy)
    preflight: object = None

    def loss_log_csv(self, header_comment: str | None = None) -> str:
        lines = [f"# {header_comment}"] if header_comment else []
        lines.append("epoch,loss,train_accuracy")
        lines += [f"{e},{loss:.17g},{acc:.17g}" for e, loss, acc in self.history]
        return "\n".join(lines) + "\n"


def desk_graph(num_edges=20, dim=4, seed=0) -> FlowGraph:
    """A small random multigraph used for gradient pre-flight checks."""
    rng = np.random.default_rng(seed)
    n = max(2, num_edges // 2)
    nodes = [NodeId(f"10.0.0.{i + 1}", 1000 + i) for i in range(n)]
    src = rng.integers(0, n, num_edges)
    dst = rng.integers(0, n, num_edges)
    labels = rng.integers(0, 2, num_edges).astype(np.int8)
    classes = ["Attack" if b else "Benign" for b in labels]
    return _assemble(nodes, src, dst, rng.normal(size=(num_edges, dim)), labels, classes,
                     np.arange(num_edges))


def gradient_check(graph: FlowGraph, config: ModelConfig, labels, seed=0,
                   tolerance=1e-4, class_weights=None):
    """Finite-difference check of the full model with dropout disabled."""
    from dataclasses import replace
    cfg = replace(config, dropout_rate=0.0)
    params = init_params(cfg, graph.dim, seed).named()

    def loss_fn(tape, leaves):
        logp, _, _ = build_forward(tape, graph, leaves, cfg, train=False)
        return tape.nll_loss(logp, labels, class_weights)
    return finite_difference_check(loss_fn, params, tolerance)


def preflight_check(config: ModelConfig, seed=0):
    """Gradient check on the 20-edge desk model (d=4, hidden=8, this K and mode)."""
    from dataclasses import replace
    g = desk_graph(20, 4, seed)
    cfg = replace(config, hidden=8, num_classes=2, neighbor_sample_size=None)
    return gradient_check(g, cfg, g.binary_label.astype(np.int64), seed)


def train(graph: FlowGraph, config: TrainConfig, model_config: ModelConfig,
          labels=None, edge_mask=None, params: ModelParams | None = None) -> TrainResult:
    """Train on every edge of ``graph`` (or those selected by ``edge_mask``).

    ``labels`` defaults to the binary labels.  Deterministic given
    ``config.seed``: initialization and dropout masks come from it.
    """
    if graph.num_edges == 0:
        raise ValueError("cannot train on an empty graph")
    labels = graph.binary_label.astype(np.int64) if labels is None else np.asarray(labels)
    pre = None
    if config.preflight:
        pre = preflight_check(model_config, config.seed)
        if not pre.passed:
            raise NumericError(f"gradient pre-flight failed: {pre}")
    if params is None:
        params = init_params(model_config, graph.dim, config.seed)
    _check(graph, params, model_config)
    named = {k: v.copy() for k, v in params.named().items()}

    if edge_mask is not None:
        idx = np.flatnonzero(edge_mask)
    else:
        idx = None
    y = labels if idx is None else labels[idx]
    weights = config.class_weights
    if isinstance(weights, str):
        if weights != "balanced":
            raise ValueError(f"unknown class_weights {weights!r}")
        weights = balanced_weights(y, model_config.num_classes)
    elif weights is not None:
        weights = np.asarray(weights, dtype=np.float64)

    rng = np.random.default_rng([config.seed, 1])
    state = AdamState.zeros_like(named)
    history = []
    for epoch in range(1, config.epochs + 1):
        tape = Tape()
        leaves = {k: tape.param(v, k) for k, v in named.items()}
        logp, _, _ = build_forward(tape, graph, leaves, model_config, train=True, rng=rng)
        if idx is not None:
            logp = tape.gather_rows(logp, idx)
        loss = tape.nll_loss(logp, y, weights)
        value = float(loss.value[0, 0])
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        acc = float((logp.value.argmax(axis=1) == y).mean())
        grads = tape.backward(loss)
        named, state = adam_step(named, grads, state, config)
        history.append((epoch, value, acc))
        if epoch == 1 or epoch % 50 == 0:
            log.info("epoch %d loss %.6f acc %.4f", epoch, value, acc)
    return TrainResult(ModelParams.from_named(named), history, pre)
