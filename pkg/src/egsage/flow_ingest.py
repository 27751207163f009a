"""Flow-record CSV parsing, feature encoding and train/test splitting.

The CSV must carry the four flow-key columns (source/destination address
and L4 port) and two label columns (binary benign/attack, attack family).
Every other column is a candidate feature.  Columns whose values all parse
as floats are numeric (z-scored with training-split statistics); anything
else is categorical (one-hot when the cardinality is small, dropped
otherwise).
"""

from __future__ import annotations

import csv
import ipaddress
import logging
import math
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import RowError, SchemaError

log = logging.getLogger(__name__)

BENIGN = "benign"
ATTACK = "attack"
MAX_ONEHOT = 32


@dataclass(frozen=True)
class ColumnMap:
    """Which CSV columns play which role.

    ``categorical`` forces numeric-looking columns (e.g. protocol numbers)
    to be treated as categories; ``categorical_mode="drop"`` discards every
    categorical column instead of one-hot encoding it.
    """

    src_ip: str = "IPV4_SRC_ADDR"
    src_port: str = "L4_SRC_PORT"
    dst_ip: str = "IPV4_DST_ADDR"
    dst_port: str = "L4_DST_PORT"
    label: str = "Label"
    attack: str = "Attack"
    benign_name: str = "Benign"
    categorical: tuple = ()
    drop: tuple = ()
    categorical_mode: str = "onehot"

    def key_columns(self):
        return (self.src_ip, self.src_port, self.dst_ip, self.dst_port)

    def required(self):
        return self.key_columns() + (self.label, self.attack)

    def to_dict(self):
        d = asdict(self)
        d["categorical"] = list(self.categorical)
        d["drop"] = list(self.drop)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("categorical", "drop"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


class RawRecord(NamedTuple):
    line: int
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    values: tuple          # raw text of each feature column, in RawTable.columns order
    binary_label: str      # BENIGN | ATTACK
    attack_class: str


@dataclass(frozen=True)
class FlowRecord:
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    features: tuple
    binary_label: str
    attack_class: str


@dataclass
class RawTable:
    columns: list                     # candidate feature columns
    kinds: dict                       # column -> "numeric" | "categorical"
    records: list
    errors: list = field(default_factory=list)   # RowError instances
    total_rows: int = 0

    def __len__(self):
        return len(self.records)


def _parse_port(text, line, column):
    try:
        port = int(text.strip())
    except ValueError:
        raise RowError(line, f"unparseable port {text!r} in column {column!r}") from None
    if not 0 <= port <= 65535:
        raise RowError(line, f"port {port} out of range 0-65535 in column {column!r}")
    return port


def _parse_ip(text, line, column):
    try:
        return str(ipaddress.IPv4Address(text.strip()))
    except ValueError:
        raise RowError(line, f"unparseable IPv4 address {text!r} in column {column!r}") from None


_BENIGN_TOKENS = {"0", "0.0", "false", "benign", "normal"}
_ATTACK_TOKENS = {"1", "1.0", "true", "attack", "malicious", "anomaly"}


def _parse_label(text, line):
    t = text.strip().lower()
    if t in _BENIGN_TOKENS:
        return BENIGN
    if t in _ATTACK_TOKENS:
        return ATTACK
    raise RowError(line, f"unrecognised binary label {text!r}")


def _is_float(text):
    if text.strip() == "":
        return True  # empty numeric cell -> NaN
    try:
        float(text)
    except ValueError:
        return False
    return True


def parse_csv(path, column_map: ColumnMap | None = None, labels: bool = True) -> RawTable:
    """Read a flow CSV into raw records.

    Bad rows are skipped and collected in ``RawTable.errors`` (each carries
    its 1-based file line number).  A missing mapped column raises
    :class:`SchemaError`.  With ``labels=False`` the two label columns are
    optional; unlabeled rows get the benign placeholder labels.
    """
    cm = column_map or ColumnMap()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: no header row") from None
        required = cm.required() if labels else cm.key_columns()
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"missing mapped column {missing[0]!r}" +
                              (f" (and {missing[1:]})" if len(missing) > 1 else ""))
        pos = {h: i for i, h in enumerate(header)}
        role_cols = set(cm.required())
        feature_cols = [h for h in header if h not in role_cols and h not in cm.drop]
        fpos = [pos[c] for c in feature_cols]
        benign_name = cm.benign_name.strip().lower()

        records, errors, total = [], [], 0
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            total += 1
            try:
                if len(row) != len(header):
                    raise RowError(lineno, f"expected {len(header)} fields, got {len(row)}")
                if cm.label in pos and cm.attack in pos:
                    binary = _parse_label(row[pos[cm.label]], lineno)
                    attack_class = row[pos[cm.attack]].strip()
                else:
                    binary, attack_class = BENIGN, cm.benign_name
                if (attack_class.lower() == benign_name) != (binary == BENIGN):
                    raise RowError(lineno, f"label {row[pos[cm.label]]!r} disagrees "
                                           f"with attack class {attack_class!r}")
                rec = RawRecord(
                    lineno,
                    _parse_ip(row[pos[cm.src_ip]], lineno, cm.src_ip),
                    _parse_port(row[pos[cm.src_port]], lineno, cm.src_port),
                    _parse_ip(row[pos[cm.dst_ip]], lineno, cm.dst_ip),
                    _parse_port(row[pos[cm.dst_port]], lineno, cm.dst_port),
                    tuple(row[i].strip() for i in fpos),
                    binary,
                    attack_class,
                )
            except RowError as exc:
                errors.append(exc)
                continue
            records.append(rec)

    kinds = {}
    for j, c in enumerate(feature_cols):
        if c in cm.categorical:
            kinds[c] = "categorical"
        else:
            kinds[c] = ("numeric" if all(_is_float(r.values[j]) for r in records)
                        else "categorical")
    if errors:
        log.warning("%s: %d malformed rows skipped", path, len(errors))
    return RawTable(feature_cols, kinds, records, errors, total)


# --------------------------------------------------------------------------
# schema


@dataclass
class ColumnEncoding:
    name: str
    kind: str                  # "numeric" | "onehot" | "dropped"
    mean: float = 0.0
    std: float = 0.0
    fill_max: float = 0.0      # +inf replacement (train max)
    fill_min: float = 0.0      # -inf replacement (train min)
    categories: list = field(default_factory=list)
    reason: str = ""

    @property
    def width(self):
        if self.kind == "numeric":
            return 1
        if self.kind == "onehot":
            return len(self.categories)
        return 0


@dataclass
class FeatureSchema:
    columns: list              # ColumnEncoding, in raw column order
    column_map: ColumnMap = field(default_factory=ColumnMap)

    @property
    def dim(self):
        return sum(c.width for c in self.columns)

    @property
    def feature_names(self):
        names = []
        for c in self.columns:
            if c.kind == "numeric":
                names.append(c.name)
            elif c.kind == "onehot":
                names.extend(f"{c.name}={v}" for v in c.categories)
        return names

    def block(self, name):
        """Column slice occupied by encoded column ``name``."""
        start = 0
        for c in self.columns:
            if c.name == name:
                return slice(start, start + c.width)
            start += c.width
        raise KeyError(name)

    def to_dict(self):
        return {"columns": [asdict(c) for c in self.columns],
                "column_map": self.column_map.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls([ColumnEncoding(**c) for c in d["columns"]],
                   ColumnMap.from_dict(d["column_map"]))


def _to_float(text, column=None):
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"non-numeric value {text!r} in numeric column {column!r}") from None


def fit_schema(train_records: Sequence[RawRecord], table: RawTable,
               column_map: ColumnMap | None = None) -> FeatureSchema:
    """Fit encodings on training rows only."""
    cm = column_map or ColumnMap()
    if not train_records:
        raise SchemaError("cannot fit a feature schema on zero training records")
    cols = []
    for j, name in enumerate(table.columns):
        kind = table.kinds[name]
        if kind == "numeric":
            x = np.array([_to_float(r.values[j]) for r in train_records], dtype=np.float64)
            finite = x[np.isfinite(x)]
            fmax = float(finite.max()) if finite.size else 0.0
            fmin = float(finite.min()) if finite.size else 0.0
            x = _clean(x, fmax, fmin)
            mean = float(x.mean())
            std = float(x.std())
            cols.append(ColumnEncoding(name, "numeric", mean, std, fmax, fmin))
        elif cm.categorical_mode == "drop":
            cols.append(ColumnEncoding(name, "dropped", reason="categorical_mode=drop"))
        else:
            cats = sorted({r.values[j] for r in train_records})
            if len(cats) > MAX_ONEHOT:
                warnings.warn(f"dropping categorical column {name!r}: "
                              f"{len(cats)} distinct values > {MAX_ONEHOT}", stacklevel=2)
                cols.append(ColumnEncoding(name, "dropped",
                                           reason=f"cardinality {len(cats)} > {MAX_ONEHOT}"))
            else:
                cols.append(ColumnEncoding(name, "onehot", categories=cats))
    schema = FeatureSchema(cols, cm)
    if schema.dim == 0:
        raise SchemaError("every feature column was dropped; nothing left to encode")
    return schema


def _clean(x, fmax, fmin):
    x = np.where(np.isnan(x), 0.0, x)
    x = np.where(np.isposinf(x), fmax, x)
    return np.where(np.isneginf(x), fmin, x)


@dataclass
class EncodedDataset:
    """Column-oriented encoded flows; row ``i`` is flow ``flow_index[i]``."""

    src_ip: list
    src_port: np.ndarray
    dst_ip: list
    dst_port: np.ndarray
    features: np.ndarray       # (n, d) float64
    binary_label: np.ndarray   # (n,) int8, 1 = attack
    attack_class: list
    flow_index: np.ndarray
    nonfinite: int = 0         # NaN/inf cells replaced during encoding

    def __len__(self):
        return len(self.src_ip)

    @property
    def dim(self):
        return self.features.shape[1]

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return EncodedDataset(
            [self.src_ip[i] for i in idx], self.src_port[idx],
            [self.dst_ip[i] for i in idx], self.dst_port[idx],
            self.features[idx], self.binary_label[idx],
            [self.attack_class[i] for i in idx], self.flow_index[idx])

    def records(self):
        for i in range(len(self)):
            yield FlowRecord(self.src_ip[i], int(self.src_port[i]), self.dst_ip[i],
                             int(self.dst_port[i]), tuple(self.features[i].tolist()),
                             ATTACK if self.binary_label[i] else BENIGN,
                             self.attack_class[i])

    @classmethod
    def from_records(cls, records: Sequence[FlowRecord]):
        n = len(records)
        d = len(records[0].features) if n else 0
        feats = np.array([r.features for r in records], dtype=np.float64).reshape(n, d)
        return cls([r.src_ip for r in records],
                   np.array([r.src_port for r in records], dtype=np.int64),
                   [r.dst_ip for r in records],
                   np.array([r.dst_port for r in records], dtype=np.int64),
                   feats,
                   np.array([r.binary_label == ATTACK for r in records], dtype=np.int8),
                   [r.attack_class for r in records],
                   np.arange(n, dtype=np.int64))


def encode(records: Sequence[RawRecord], table: RawTable, schema: FeatureSchema,
           flow_index=None) -> EncodedDataset:
    """Apply ``schema`` to raw records.  Pure: same inputs, same arrays."""
    n = len(records)
    out = np.zeros((n, schema.dim), dtype=np.float64)
    colpos = {c: j for j, c in enumerate(table.columns)}
    nonfinite = 0
    start = 0
    for enc in schema.columns:
        if enc.kind == "dropped":
            continue
        j = colpos[enc.name]
        if enc.kind == "numeric":
            x = np.array([_to_float(r.values[j], enc.name) for r in records], dtype=np.float64)
            nonfinite += int((~np.isfinite(x)).sum())
            x = _clean(x, enc.fill_max, enc.fill_min)
            out[:, start] = (x - enc.mean) / enc.std if enc.std > 0 else 0.0
        else:
            lookup = {v: k for k, v in enumerate(enc.categories)}
            for i, r in enumerate(records):
                k = lookup.get(r.values[j])
                if k is not None:  # unseen category -> all-zero block
                    out[i, start + k] = 1.0
        start += enc.width
    if flow_index is None:
        flow_index = np.arange(n, dtype=np.int64)
    return EncodedDataset(
        [r.src_ip for r in records], np.array([r.src_port for r in records], dtype=np.int64),
        [r.dst_ip for r in records], np.array([r.dst_port for r in records], dtype=np.int64),
        out, np.array([r.binary_label == ATTACK for r in records], dtype=np.int8),
        [r.attack_class for r in records], np.asarray(flow_index, dtype=np.int64), nonfinite)


def decode_category(schema: FeatureSchema, vector, column: str):
    """Recover the category a one-hot block encodes (``None`` for all-zero)."""
    enc = next(c for c in schema.columns if c.name == column)
    if enc.kind != "onehot":
        raise ValueError(f"column {column!r} is not one-hot encoded")
    block = np.asarray(vector)[schema.block(column)]
    if not block.any():
        return None
    return enc.categories[int(np.argmax(block))]


# --------------------------------------------------------------------------
# splitting


@dataclass
class SplitAssignment:
    seed: int
    train_fraction: float
    subsample_fraction: float
    retained: np.ndarray       # indices (into the input) kept after subsampling, sorted
    is_train: np.ndarray       # bool per retained record
    total: int = 0             # records before subsampling

    @property
    def train_idx(self):
        return self.retained[self.is_train]

    @property
    def test_idx(self):
        return self.retained[~self.is_train]


def _apportion(counts, total):
    """Largest-remainder integer apportionment of ``total`` over ``counts``."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.sum() == 0:
        return np.zeros(len(counts), dtype=np.int64)
    quota = counts * (total / counts.sum())
    base = np.floor(quota).astype(np.int64)
    rem = total - base.sum()
    order = np.argsort(-(quota - base), kind="stable")
    base[order[:rem]] += 1
    return np.minimum(base, counts.astype(np.int64))


def split(classes: Sequence[str], seed: int, train_fraction: float = 0.7,
          subsample_fraction: float = 1.0, stratify: bool = True) -> SplitAssignment:
    """Deterministic (optionally stratified) subsample + train/test split.

    ``classes`` holds one attack-class label per record.  The overall train
    count is exactly ``round(n * train_fraction)``; with stratification every
    class's train share is within one record of its quota.
    """
    for name, f in (("train_fraction", train_fraction), ("subsample_fraction", subsample_fraction)):
        if not 0.0 < f <= 1.0:
            raise ValueError(f"{name} must be in (0, 1], got {f}")
    n = len(classes)
    rng = np.random.default_rng(seed)
    if subsample_fraction < 1.0:
        keep = int(round(n * subsample_fraction))
        retained = np.sort(rng.choice(n, size=keep, replace=False))
    else:
        retained = np.arange(n)
    m = len(retained)
    is_train = np.zeros(m, dtype=bool)
    n_train = int(round(m * train_fraction))
    if not stratify:
        is_train[rng.permutation(m)[:n_train]] = True
        return SplitAssignment(seed, train_fraction, subsample_fraction, retained, is_train, n)

    labels = np.array([classes[i] for i in retained], dtype=object)
    names = sorted(set(labels.tolist()))
    groups = [np.flatnonzero(labels == c) for c in names]
    singles = [g for g in groups if len(g) == 1]
    for c, g in zip(names, groups):
        if len(g) == 1:
            warnings.warn(f"class {c!r} has a single record; placing it in train", stacklevel=2)
    multi = [g for g in groups if len(g) > 1]
    quota = _apportion([len(g) for g in multi], max(0, n_train - len(singles)))
    for g in singles:
        is_train[g] = True
    for g, q in zip(multi, quota):
        is_train[g[rng.permutation(len(g))[:q]]] = True
    return SplitAssignment(seed, train_fraction, subsample_fraction, retained, is_train, n)
