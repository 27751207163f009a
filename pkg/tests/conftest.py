import numpy as np
import pytest

from egsage.flow_ingest import EncodedDataset, FlowRecord
from egsage.graph_builder import NodeId, _assemble, build_graph

_RESULTS = []


def record_criterion(number, name, passed, detail=""):
    _RESULTS.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_RESULTS, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {name}: {detail}")


def random_graph(rng, num_nodes, num_edges, dim, self_loops=True, classes=("Benign", "Attack")):
    nodes = [NodeId(f"10.{i // 250}.{i % 250}.1", 1000 + i) for i in range(num_nodes)]
    src = rng.integers(0, num_nodes, num_edges)
    dst = rng.integers(0, num_nodes, num_edges)
    if not self_loops and num_nodes > 1:
        clash = src == dst
        dst[clash] = (dst[clash] + 1) % num_nodes
    labels = rng.integers(0, len(classes), num_edges)
    return _assemble(nodes, src, dst, rng.normal(size=(num_edges, dim)),
                     (labels > 0).astype(np.int8), [classes[k] for k in labels],
                     np.arange(num_edges))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def flows(pairs, dim=2, rng=None):
    """EncodedDataset from ((src_ip, src_port), (dst_ip, dst_port)) pairs."""
    rng = rng or np.random.default_rng(0)
    recs = [FlowRecord(s[0], s[1], d[0], d[1], tuple(rng.normal(size=dim)), "benign", "Benign")
            for s, d in pairs]
    return EncodedDataset.from_records(recs)


@pytest.fixture
def two_flow_graph():
    """Two flows sharing the server endpoint 192.168.1.152:80."""
    data = flows([(("192.168.1.152", 80), ("172.29.96.53", 35866)),
                  (("172.26.185.48", 52962), ("192.168.1.152", 80))])
    return build_graph(data)


def scenario_graphs(scenario, seed, num_flows=10_000, **kwargs):
    """Train/test graphs for a synthetic scenario, split 70/30 stratified."""
    from egsage.flow_ingest import split
    from egsage.synthetic import ScenarioSpec, generate
    spec = ScenarioSpec(scenario, num_flows=num_flows, seed=seed, **kwargs)
    data = EncodedDataset.from_records(generate(spec))
    assignment = split(data.attack_class, seed)
    return (build_graph(data.take(assignment.train_idx)),
            build_graph(data.take(assignment.test_idx)))
