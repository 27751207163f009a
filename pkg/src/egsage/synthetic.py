"""Desk-scale labeled flow generators and a features-only baseline.

Traffic model: client hosts open flows from ephemeral source ports to a
pool of service endpoints (fixed IP:port).  Scenarios differ in where the
class signal lives:

``feature_separable``
    attack flows come from ordinary clients; their features are shifted by
    ``signal`` per coordinate relative to benign flows.
``topology_only``
    every flow draws features from the same distribution; attack flows
    originate from a few fixed attacker endpoints that each open many flows.
``mixed``
    attacker endpoints *and* shifted features.
"""

from __future__ import annotations

import csv
import ipaddress
from dataclasses import dataclass

import numpy as np

from .flow_ingest import ATTACK, BENIGN, FlowRecord
from .numeric_core import Tape

SCENARIOS = ("feature_separable", "topology_only", "mixed")
CLIP = 6.0

_SERVER_BASE = int(ipaddress.IPv4Address("192.168.0.10"))
_CLIENT_BASE = int(ipaddress.IPv4Address("10.1.0.10"))
_ATTACKER_BASE = int(ipaddress.IPv4Address("10.66.0.10"))
_SERVICE_PORTS = (22, 25, 53, 80, 123, 443, 445, 3389, 8080, 8443)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str = "feature_separable"
    num_endpoints: int = 200      # service endpoints (and client hosts)
    num_flows: int = 10_000
    feature_dim: int = 8
    classes: tuple = (("Benign", 0.8), ("Attack", 0.2))
    signal: float = 2.0
    num_attackers: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.num_flows < 1:
            raise ValueError("num_flows must be >= 1")
        if self.num_endpoints < 1 or self.feature_dim < 1 or self.num_attackers < 1:
            raise ValueError("num_endpoints, feature_dim and num_attackers must be >= 1")
        priors = [p for _, p in self.classes]
        if len(self.classes) < 2 or abs(sum(priors) - 1.0) > 1e-9 or min(priors) < 0:
            raise ValueError("class priors must be non-negative and sum to 1")

    @property
    def class_names(self):
        return [c for c, _ in self.classes]


def _ip(base, k):
    return str(ipaddress.IPv4Address(base + int(k)))


def _class_means(spec, rng):
    """Benign mean -signal/2 everywhere; attack classes get +-signal/2 patterns."""
    d, half = spec.feature_dim, spec.signal / 2.0
    means = [np.full(d, -half)]
    seen = {tuple(np.sign(means[0]))}
    for k in range(1, len(spec.classes)):
        pattern = np.ones(d) if k == 1 else rng.choice([-1.0, 1.0], size=d)
        tries = 0
        while tuple(pattern) in seen and tries < 64:
            pattern = rng.choice([-1.0, 1.0], size=d)
            tries += 1
        seen.add(tuple(pattern))
        means.append(half * pattern)
    return np.array(means)


def generate(spec: ScenarioSpec) -> list:
    """Labeled flow records for ``spec``; identical specs give identical lists.

    The first class in ``spec.classes`` is the benign class.
    """
    rng = np.random.default_rng(spec.seed)
    n, d = spec.num_flows, spec.feature_dim
    names = spec.class_names
    priors = np.array([p for _, p in spec.classes])
    cls = rng.choice(len(names), size=n, p=priors)

    shift = spec.scenario in ("feature_separable", "mixed")
    means = _class_means(spec, rng) if shift else np.zeros((len(names), d))
    feats = np.clip(rng.standard_normal((n, d)), -CLIP, CLIP) + means[cls]

    servers = [(_ip(_SERVER_BASE, k), _SERVICE_PORTS[k % len(_SERVICE_PORTS)])
               for k in range(spec.num_endpoints)]
    server_pick = rng.integers(0, spec.num_endpoints, size=n)
    client_host = rng.integers(0, spec.num_endpoints, size=n)
    client_port = rng.integers(1024, 65536, size=n)
    attackers = [(_ip(_ATTACKER_BASE, k), int(p)) for k, p in
                 enumerate(rng.integers(1024, 65536, size=spec.num_attackers))]
    # attacker a launches class 1 + a % (C - 1); with fewer attackers than
    # attack classes some attackers serve several classes
    n_attack = len(names) - 1
    by_class = {c: [a for a in range(spec.num_attackers) if 1 + a % n_attack == c]
                or [(c - 1) % spec.num_attackers]
                for c in range(1, len(names))}
    attacker_pick = rng.integers(0, 1 << 30, size=n)

    use_attackers = spec.scenario in ("topology_only", "mixed")
    records = []
    for i in range(n):
        c = int(cls[i])
        if c > 0 and use_attackers:
            pool = by_class[c]
            src_ip, src_port = attackers[pool[attacker_pick[i] % len(pool)]]
        else:
            src_ip, src_port = _ip(_CLIENT_BASE, client_host[i]), int(client_port[i])
        dst_ip, dst_port = servers[server_pick[i]]
        records.append(FlowRecord(src_ip, src_port, dst_ip, dst_port,
                                  tuple(float(x) for x in feats[i]),
                                  BENIGN if c == 0 else ATTACK, names[c]))
    return records


def write_csv(records, path, feature_prefix="FEAT_"):
    """Write records in the NetFlow-style column layout ``parse_csv`` reads by default."""
    d = len(records[0].features) if records else 0
    header = (["IPV4_SRC_ADDR", "L4_SRC_PORT", "IPV4_DST_ADDR", "L4_DST_PORT"]
              + [f"{feature_prefix}{j}" for j in range(d)] + ["Label", "Attack"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            w.writerow([r.src_ip, r.src_port, r.dst_ip, r.dst_port]
                       + [repr(x) for x in r.features]
                       + [1 if r.binary_label == ATTACK else 0, r.attack_class])


# --------------------------------------------------------------------------
# baseline


@dataclass
class BaselineModel:
    """Multinomial logistic regression on edge features alone."""

    weights: np.ndarray   # (num_classes, d)
    bias: np.ndarray      # (num_classes,)
    epochs_run: int = 0
    grad_norm: float = 0.0

    def log_proba(self, features):
        from .numeric_core import log_softmax
        return log_softmax(np.asarray(features) @ self.weights.T + self.bias)

    def predict(self, features):
        return self.log_proba(features).argmax(axis=1)


def train_baseline(features, labels, num_classes=2, learning_rate=0.05,
                   max_epochs=1000, tol=1e-6, seed=0) -> BaselineModel:
    """Full-batch Adam on the cross-entropy, stopping when the gradient norm < ``tol``."""
    from .training import AdamState, TrainConfig, adam_step
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, d = X.shape
    rng = np.random.default_rng(seed)
    named = {"W": rng.normal(scale=0.01, size=(num_classes, d)),
             "b": np.zeros((1, num_classes))}
    cfg = TrainConfig(learning_rate=learning_rate, preflight=False)
    state = AdamState.zeros_like(named)
    ones = np.ones((n, 1))
    gnorm = np.inf
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        tape = Tape()
        W, b = tape.param(named["W"], "W"), tape.param(named["b"], "b")
        logits = tape.add(tape.matmul_t(tape.const(X), W), tape.matmul(tape.const(ones), b))
        loss = tape.nll_loss(tape.log_softmax(logits), y)
        grads = tape.backward(loss)
        gnorm = float(np.sqrt(sum((g * g).sum() for g in grads.values())))
        if gnorm < tol:
            break
        named, state = adam_step(named, grads, state, cfg)
    return BaselineModel(named["W"], named["b"].reshape(-1), epoch, gnorm)
