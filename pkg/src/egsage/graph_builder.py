"""Endpoint graphs: nodes are (IP, port) tuples, edges are flows.

Message passing treats a flow as incident to both of its endpoints; the
flow's direction survives only in the (source, destination) order used
when edge embeddings are concatenated.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .flow_ingest import EncodedDataset

ANON_FIRST = int(ipaddress.IPv4Address("172.16.0.1"))
ANON_LAST = int(ipaddress.IPv4Address("172.31.0.1"))
ANON_POOL = ANON_LAST - ANON_FIRST + 1  # 983041 addresses


class NodeId(NamedTuple):
    ip: str
    port: int

    def __str__(self):
        return f"{self.ip}:{self.port}"


@dataclass(frozen=True)
class AnonymizationMap:
    seed: int
    mapping: dict  # original source IP -> replacement

    def __len__(self):
        return len(self.mapping)


def anonymize_sources(data: EncodedDataset, seed: int):
    """Remap every distinct source IP to a random address in 172.16.0.1-172.31.0.1.

    Destination addresses are left alone.  Returns the remapped dataset and
    the mapping; the same seed and input always give the same mapping.
    """
    distinct = list(dict.fromkeys(data.src_ip))
    if len(distinct) > ANON_POOL:
        raise ValueError(f"{len(distinct)} distinct source IPs exceed the "
                         f"{ANON_POOL}-address anonymization range")
    rng = np.random.default_rng(seed)
    picks = rng.choice(ANON_POOL, size=len(distinct), replace=False) if distinct else []
    mapping = {ip: str(ipaddress.IPv4Address(ANON_FIRST + int(k)))
               for ip, k in zip(distinct, picks)}
    out = EncodedDataset([mapping[ip] for ip in data.src_ip], data.src_port.copy(),
                         list(data.dst_ip), data.dst_port.copy(), data.features.copy(),
                         data.binary_label.copy(), list(data.attack_class),
                         data.flow_index.copy(), data.nonfinite)
    return out, AnonymizationMap(seed, mapping)


@dataclass(eq=False)
class FlowGraph:
    """An immutable multigraph of flows between endpoints.

    Node features are implicit: every node carries the all-ones vector of
    length :attr:`dim`.  ``incidence_ptr``/``incidence`` is a CSR layout of
    the incident edge indices of each node (a self-loop appears once).
    """

    nodes: list                 # NodeId, in first-appearance order
    src: np.ndarray             # (E,) node index of each flow's source
    dst: np.ndarray             # (E,) node index of each flow's destination
    features: np.ndarray        # (E, d) edge features e_uv
    binary_label: np.ndarray    # (E,) int8
    attack_class: list          # (E,) str
    flow_index: np.ndarray      # (E,) original record order
    incidence_ptr: np.ndarray
    incidence: np.ndarray

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return len(self.src)

    @property
    def dim(self):
        return self.features.shape[1]

    def node_features(self):
        return np.ones((self.num_nodes, self.dim))

    def incident(self, v: int) -> np.ndarray:
        return self.incidence[self.incidence_ptr[v]:self.incidence_ptr[v + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.incidence_ptr)

    def node_index(self):
        return {n: i for i, n in enumerate(self.nodes)}

    def equals(self, other: "FlowGraph") -> bool:
        return (self.nodes == other.nodes
                and np.array_equal(self.src, other.src)
                and np.array_equal(self.dst, other.dst)
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.binary_label, other.binary_label)
                and self.attack_class == other.attack_class
                and np.array_equal(self.flow_index, other.flow_index)
                and np.array_equal(self.incidence_ptr, other.incidence_ptr)
                and np.array_equal(self.incidence, other.incidence))

    # aggregation operators ------------------------------------------------

    def edge_mean_operator(self, sample_size=None, rng=None) -> sp.csr_matrix:
        """Sparse (N x E) operator averaging incident-edge rows per node.

        With ``sample_size`` below a node's degree, a uniform sample of its
        incident edges (without replacement) is averaged instead.  Isolated
        nodes get an all-zero row.
        """
        rows, cols, vals = self._sampled_incidence(sample_size, rng)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.num_nodes, self.num_edges))

    def neighbor_mean_operator(self, sample_size=None, rng=None) -> sp.csr_matrix:
        """Sparse (N x N) operator averaging the far endpoint over incident edges."""
        rows, cols, vals = self._sampled_incidence(sample_size, rng)
        other = np.where(self.src[cols] == rows, self.dst[cols], self.src[cols])
        return sp.csr_matrix((vals, (rows, other)), shape=(self.num_nodes, self.num_nodes))

    def _sampled_incidence(self, sample_size, rng):
        deg = self.degree()
        if sample_size is None or (deg <= sample_size).all():
            rows = np.repeat(np.arange(self.num_nodes), deg)
            cols = self.incidence
            counts = deg
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            rparts, cparts = [], []
            for v in range(self.num_nodes):
                inc = self.incident(v)
                if len(inc) > sample_size:
                    inc = rng.choice(inc, size=sample_size, replace=False)
                rparts.append(np.full(len(inc), v))
                cparts.append(inc)
            rows = np.concatenate(rparts) if rparts else np.zeros(0, dtype=np.int64)
            cols = np.concatenate(cparts) if cparts else np.zeros(0, dtype=np.int64)
            counts = np.minimum(deg, sample_size)
        vals = 1.0 / counts[rows] if len(rows) else np.zeros(0)
        return rows, cols.astype(np.int64), vals


def _incidence(num_nodes, src, dst):
    loops = src == dst
    ends = np.concatenate([src, dst[~loops]])
    eids = np.concatenate([np.arange(len(src)), np.flatnonzero(~loops)])
    order = np.lexsort((eids, ends))
    ptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(ptr, ends + 1, 1)
    return np.cumsum(ptr), eids[order].astype(np.int64)


def _assemble(nodes, src, dst, features, binary, classes, flow_index):
    ptr, inc = _incidence(len(nodes), src, dst)
    return FlowGraph(nodes, src, dst, features, binary, classes, flow_index, ptr, inc)


def build_graph(data: EncodedDataset) -> FlowGraph:
    """One node per distinct (IP, port) tuple, one edge per flow (parallel flows kept)."""
    index, nodes = {}, []
    n = len(data)
    src = np.empty(n, dtype=np.int64)
    dst = np.empty(n, dtype=np.int64)
    for i in range(n):
        for arr, ip, port in ((src, data.src_ip[i], data.src_port[i]),
                              (dst, data.dst_ip[i], data.dst_port[i])):
            key = NodeId(ip, int(port))
            j = index.get(key)
            if j is None:
                j = index[key] = len(nodes)
                nodes.append(key)
            arr[i] = j
    return _assemble(nodes, src, dst, np.array(data.features, dtype=np.float64),
                     np.asarray(data.binary_label, dtype=np.int8).copy(),
                     list(data.attack_class), np.asarray(data.flow_index).copy())


def subgraph(graph: FlowGraph, edges) -> FlowGraph:
    """Keep only ``edges`` (in the given order) and the endpoints they touch."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1)
    remap = {}
    nodes = []
    src = np.empty(len(edges), dtype=np.int64)
    dst = np.empty(len(edges), dtype=np.int64)
    for k, e in enumerate(edges):
        for arr, old in ((src, graph.src[e]), (dst, graph.dst[e])):
            j = remap.get(old)
            if j is None:
                j = remap[old] = len(nodes)
                nodes.append(graph.nodes[old])
            arr[k] = j
    return _assemble(nodes, src, dst, graph.features[edges].reshape(len(edges), graph.dim),
                     graph.binary_label[edges], [graph.attack_class[e] for e in edges],
                     graph.flow_index[edges])
