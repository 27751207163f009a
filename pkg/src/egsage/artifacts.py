"""Versioned binary artifacts: encoded datasets (EGSD), graphs (EGSG), models (EGSM).

Every file is ``magic | u16 version | payload | u32 crc32`` with all
integers and floats little-endian.  Payloads open with a length-prefixed
JSON block that records the resolved run configuration and tool version.
"""

from __future__ import annotations

import ipaddress
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .egraphsage import ModelConfig, ModelParams
from .errors import ArtifactError
from .flow_ingest import EncodedDataset, FeatureSchema
from .graph_builder import FlowGraph, NodeId, _assemble

VERSION = 1


def _ip2int(ips):
    return np.array([int(ipaddress.IPv4Address(ip)) for ip in ips], dtype="<u4")


def _int2ip(arr):
    return [str(ipaddress.IPv4Address(int(x))) for x in arr]


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


class _Writer:
    def __init__(self, magic):
        self.parts = [magic, struct.pack("<H", VERSION)]

    def u32(self, x):
        self.parts.append(struct.pack("<I", x))

    def header(self, obj):
        blob = _json(obj)
        self.u32(len(blob))
        self.parts.append(blob)

    def array(self, arr, dtype):
        self.parts.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())

    def save(self, path):
        body = b"".join(self.parts)
        Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, path, magic):
        data = Path(path).read_bytes()
        if len(data) < 10 or data[:4] != magic:
            found = data[:4]
            raise ArtifactError(f"{path}: not a {magic.decode()} file (magic {found!r})")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) != crc:
            raise ArtifactError(f"{path}: checksum mismatch (file corrupt or truncated)")
        (version,) = struct.unpack("<H", body[4:6])
        if version != VERSION:
            raise ArtifactError(f"{path}: format version {version}, this tool reads {VERSION}")
        self.buf, self.pos, self.path = body, 6, path

    def u32(self):
        (x,) = struct.unpack_from("<I", self.buf, self.pos)
        self.pos += 4
        return x

    def header(self):
        n = self.u32()
        blob = self.buf[self.pos:self.pos + n]
        self.pos += n
        return json.loads(blob)

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        end = self.pos + dt.itemsize * count
        if end > len(self.buf):
            raise ArtifactError(f"{self.path}: truncated payload")
        out = np.frombuffer(self.buf, dtype=dt, count=count, offset=self.pos).copy()
        self.pos = end
        return out


def _class_codes(names, classes):
    lookup = {c: i for i, c in enumerate(classes)}
    return np.array([lookup[c] for c in names], dtype="<u2")


def ordered_classes(attack_class, benign_name="Benign"):
    """Benign first, the rest sorted."""
    names = sorted(set(attack_class))
    benign = [c for c in names if c.lower() == benign_name.lower()]
    return benign + [c for c in names if c not in benign]


# --------------------------------------------------------------------------
# EGSD


@dataclass
class DatasetFile:
    data: EncodedDataset
    is_train: np.ndarray
    schema: FeatureSchema
    class_names: list
    meta: dict = field(default_factory=dict)

    def train(self):
        return self.data.take(np.flatnonzero(self.is_train))

    def test(self):
        return self.data.take(np.flatnonzero(~self.is_train))


def save_dataset(path, df: DatasetFile):
    d = df.data
    n, dim = len(d), d.dim
    w = _Writer(b"EGSD")
    w.header({"tool_version": __version__, "n": n, "d": dim, "class_names": df.class_names,
              "schema": df.schema.to_dict(), "meta": df.meta})
    w.array(_ip2int(d.src_ip), "<u4")
    w.array(d.src_port, "<u2")
    w.array(_ip2int(d.dst_ip), "<u4")
    w.array(d.dst_port, "<u2")
    w.array(d.features, "<f8")
    w.array(d.binary_label, "u1")
    w.array(_class_codes(d.attack_class, df.class_names), "<u2")
    w.array(df.is_train, "u1")
    w.array(d.flow_index, "<i8")
    w.save(path)


def load_dataset(path) -> DatasetFile:
    r = _Reader(path, b"EGSD")
    h = r.header()
    n, dim, classes = h["n"], h["d"], h["class_names"]
    src_ip = _int2ip(r.array("<u4", n))
    src_port = r.array("<u2", n).astype(np.int64)
    dst_ip = _int2ip(r.array("<u4", n))
    dst_port = r.array("<u2", n).astype(np.int64)
    feats = r.array("<f8", n * dim).reshape(n, dim)
    binary = r.array("u1", n).astype(np.int8)
    codes = r.array("<u2", n)
    is_train = r.array("u1", n).astype(bool)
    flow_index = r.array("<i8", n)
    data = EncodedDataset(src_ip, src_port, dst_ip, dst_port, feats, binary,
                          [classes[c] for c in codes], flow_index)
    return DatasetFile(data, is_train, FeatureSchema.from_dict(h["schema"]), classes, h["meta"])


# --------------------------------------------------------------------------
# EGSG


def save_graph(path, graph: FlowGraph, class_names=None, meta=None):
    class_names = class_names or ordered_classes(graph.attack_class)
    w = _Writer(b"EGSG")
    w.u32(graph.dim)
    w.header({"tool_version": __version__, "num_nodes": graph.num_nodes,
              "num_edges": graph.num_edges, "class_names": class_names, "meta": meta or {}})
    w.array(_ip2int([n.ip for n in graph.nodes]), "<u4")
    w.array([n.port for n in graph.nodes], "<u2")
    w.array(graph.src, "<u4")
    w.array(graph.dst, "<u4")
    w.array(graph.features, "<f8")
    w.array(graph.binary_label, "u1")
    w.array(_class_codes(graph.attack_class, class_names), "<u2")
    w.array(graph.flow_index, "<i8")
    w.save(path)


def load_graph(path) -> FlowGraph:
    r = _Reader(path, b"EGSG")
    dim = r.u32()
    h = r.header()
    nn, ne, classes = h["num_nodes"], h["num_edges"], h["class_names"]
    ips = _int2ip(r.array("<u4", nn))
    ports = r.array("<u2", nn)
    nodes = [NodeId(ip, int(p)) for ip, p in zip(ips, ports)]
    src = r.array("<u4", ne).astype(np.int64)
    dst = r.array("<u4", ne).astype(np.int64)
    feats = r.array("<f8", ne * dim).reshape(ne, dim)
    binary = r.array("u1", ne).astype(np.int8)
    codes = r.array("<u2", ne)
    flow_index = r.array("<i8", ne)
    return _assemble(nodes, src, dst, feats, binary, [classes[c] for c in codes], flow_index)


# --------------------------------------------------------------------------
# EGSM


@dataclass
class ModelFile:
    params: ModelParams
    config: ModelConfig
    class_names: list
    task: str
    schema: FeatureSchema | None = None
    meta: dict = field(default_factory=dict)


def save_model(path, mf: ModelFile):
    w = _Writer(b"EGSM")
    w.header({"tool_version": __version__, "model_config": mf.config.to_dict(),
              "class_names": mf.class_names, "task": mf.task,
              "schema": mf.schema.to_dict() if mf.schema else None, "meta": mf.meta})
    mats = list(mf.params.layers) + [mf.params.head]
    w.u32(len(mats))
    for m in mats:
        w.u32(m.shape[0])
        w.u32(m.shape[1])
        w.array(m, "<f8")
    w.save(path)


def load_model(path) -> ModelFile:
    r = _Reader(path, b"EGSM")
    h = r.header()
    mats = []
    for _ in range(r.u32()):
        rows, cols = r.u32(), r.u32()
        mats.append(r.array("<f8", rows * cols).reshape(rows, cols))
    schema = FeatureSchema.from_dict(h["schema"]) if h.get("schema") else None
    return ModelFile(ModelParams(mats[:-1], mats[-1]), ModelConfig(**h["model_config"]),
                     h["class_names"], h["task"], schema, h.get("meta", {}))
