"""``egsage`` command line: encode, train, eval, predict, export-embeddings, synth.

Settings resolve as: built-in default < ``EGS_SEED`` (seed only) <
``--config`` file (``key = value`` lines, ``#`` comments) < command-line
flags.  Exit codes: 0 ok, 2 usage/schema error, 3 artifact mismatch,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (DatasetFile, ModelFile, load_dataset, load_model, ordered_classes,
                        save_dataset, save_graph, save_model)
from .egraphsage import ModelConfig, forward
from .errors import ArtifactError, DimensionError, NumericError, SchemaError
from .evaluation import binary_metrics, confusion, multiclass_metrics, time_classification
from .flow_ingest import ColumnMap, EncodedDataset, encode, fit_schema, parse_csv, split
from .graph_builder import anonymize_sources, build_graph, subgraph
from .synthetic import SCENARIOS, ScenarioSpec, generate, write_csv
from .training import TrainConfig, edge_labels, train

log = logging.getLogger("egsage")

EXIT_OK, EXIT_USAGE, EXIT_ARTIFACT, EXIT_NUMERIC = 0, 2, 3, 4

# Published GPU µs/flow of the original model (binary, multiclass); reported, never gated.
REFERENCE_GPU_US = {
    "UNSW-NB15": (0.16, 0.16), "NF-UNSW-NB15": (0.13, 0.09),
    "BoT-IoT": (0.24, 0.51), "NF-BoT-IoT": (0.16, 0.14),
    "ToN-IoT": (0.14, 0.14), "NF-ToN-IoT": (0.14, 0.21),
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    train_fraction: float = 0.7
    subsample: float = 1.0
    stratify: bool = True
    anonymize: bool = True
    classes: str = "binary"
    graph_mode: str = "separate"
    epochs: int = 200
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    class_weights: str = "none"
    preflight: bool = True
    layers: int = 2
    hidden: int = 128
    dropout: float = 0.2
    sample_size: str = "full"
    neighbor_messages: str = "edge"
    src_ip_col: str = "IPV4_SRC_ADDR"
    src_port_col: str = "L4_SRC_PORT"
    dst_ip_col: str = "IPV4_DST_ADDR"
    dst_port_col: str = "L4_DST_PORT"
    label_col: str = "Label"
    attack_col: str = "Attack"
    benign_name: str = "Benign"
    categorical: str = ""
    drop: str = ""
    categorical_mode: str = "onehot"

    def column_map(self) -> ColumnMap:
        split_list = lambda s: tuple(x.strip() for x in s.split(",") if x.strip())
        return ColumnMap(self.src_ip_col, self.src_port_col, self.dst_ip_col, self.dst_port_col,
                         self.label_col, self.attack_col, self.benign_name,
                         split_list(self.categorical), split_list(self.drop),
                         self.categorical_mode)

    def model_config(self, num_classes) -> ModelConfig:
        sample = None if self.sample_size.lower() == "full" else int(self.sample_size)
        return ModelConfig(self.layers, self.hidden, self.dropout, num_classes, sample,
                           "relu", self.neighbor_messages)

    def train_config(self) -> TrainConfig:
        cw = self.class_weights.strip().lower()
        if cw in ("", "none"):
            weights = None
        elif cw == "balanced":
            weights = "balanced"
        else:
            weights = tuple(float(x) for x in cw.split(","))
        return TrainConfig(self.lr, self.beta1, self.beta2, self.epsilon, self.epochs,
                           self.seed, weights, self.preflight)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _FIELD_TYPES[key]
    if isinstance(value, str):
        value = value.strip()
        if kind == "bool":
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise UsageError(f"{key}: expected a boolean, got {value!r}")
        try:
            return {"int": int, "float": float}.get(kind, str)(value)
        except ValueError:
            raise UsageError(f"{key}: cannot parse {value!r} as {kind}") from None
    return value


def read_config_file(path) -> dict:
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise UsageError(f"{path}:{n}: unknown setting {key!r}")
        out[key] = value
    return out


def resolve_config(args, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values = {}
    if environ.get("EGS_SEED", "").strip():
        values["seed"] = environ["EGS_SEED"]
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key in _FIELD_TYPES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    if cfg.classes not in ("binary", "multi"):
        raise UsageError("classes must be 'binary' or 'multi'")
    if cfg.graph_mode not in ("separate", "shared"):
        raise UsageError("graph_mode must be 'separate' or 'shared'")
    return cfg


def _provenance(cfg: RunConfig, command, **inputs):
    return {"tool": "egsage", "tool_version": __version__, "command": command,
            "config": cfg.to_dict(), "inputs": {k: Path(v).name for k, v in inputs.items()}}


def _comment(prov):
    return f"egsage {__version__} config=" + json.dumps(prov, sort_keys=True)


# --------------------------------------------------------------------------
# commands


def cmd_encode(args, cfg: RunConfig):
    cm = cfg.column_map()
    table = parse_csv(args.input, cm)
    classes = [r.attack_class for r in table.records]
    sa = split(classes, cfg.seed, cfg.train_fraction, cfg.subsample, cfg.stratify)
    train_recs = [table.records[i] for i in sa.train_idx]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        schema = fit_schema(train_recs, table, cm)
    retained = [table.records[i] for i in sa.retained]
    data = encode(retained, table, schema, flow_index=sa.retained)
    if cfg.anonymize:
        data, amap = anonymize_sources(data, cfg.seed)
    class_names = ordered_classes(data.attack_class, cm.benign_name)
    prov = _provenance(cfg, "encode", input=args.input)
    save_dataset(args.data_out, DatasetFile(data, sa.is_train, schema, class_names, prov))
    if args.graph_out:
        save_graph(args.graph_out, build_graph(data), class_names, prov)

    n_train = int(sa.is_train.sum())
    lines = [f"# {_comment(prov)}", "",
             f"input: {Path(args.input).name}",
             f"rows read: {table.total_rows}",
             f"row errors: {len(table.errors)}"]
    lines += [f"  {e}" for e in table.errors[:20]]
    if len(table.errors) > 20:
        lines.append(f"  ... {len(table.errors) - 20} more")
    lines += [
        f"records parsed: {len(table.records)}",
        f"retained: {len(sa.retained)} of {len(table.records)} records "
        f"({100.0 * len(sa.retained) / max(1, len(table.records)):.2f}%) "
        f"subsample_fraction={cfg.subsample}",
        f"split: train {n_train}, test {len(sa.retained) - n_train} "
        f"(train_fraction={cfg.train_fraction}, stratify={cfg.stratify}, seed={cfg.seed})",
        f"non-finite feature cells replaced: {data.nonfinite}",
        f"anonymized source addresses: {len(amap) if cfg.anonymize else 'off'}",
        f"feature dimension d: {schema.dim}",
        "", "columns:"]
    for c in schema.columns:
        if c.kind == "numeric":
            lines.append(f"  {c.name}: numeric z-score mean={c.mean:.6g} std={c.std:.6g}")
        elif c.kind == "onehot":
            lines.append(f"  {c.name}: one-hot {c.categories}")
        else:
            lines.append(f"  {c.name}: dropped ({c.reason})")
    lines += ["", "classes:"]
    counts = {c: 0 for c in class_names}
    for c in data.attack_class:
        counts[c] += 1
    lines += [f"  {c}: {counts[c]}" for c in class_names]
    for w in caught:
        lines.append(f"warning: {w.message}")
    Path(args.schema_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"encoded {len(data)} flows (d={schema.dim}) -> {args.data_out}")
    return EXIT_OK


def _task_classes(cfg_classes, class_names, benign_name="Benign"):
    if cfg_classes == "binary":
        return "binary", [benign_name, "Attack"]
    return "multiclass", list(class_names)


def _graphs(df: DatasetFile, mode: str):
    """(train graph, train mask, eval graph, eval mask) for a graph mode."""
    if mode == "shared":
        g = build_graph(df.data)
        return g, df.is_train, g, ~df.is_train
    return (build_graph(df.train()), None, build_graph(df.test()), None)


def cmd_train(args, cfg: RunConfig):
    df = load_dataset(args.data)
    task, names = _task_classes(cfg.classes, df.class_names, cfg.benign_name)
    mcfg = cfg.model_config(len(names))
    g_train, mask, _, _ = _graphs(df, cfg.graph_mode)
    if g_train.num_edges == 0 or (mask is not None and not mask.any()):
        raise UsageError("training split is empty")
    labels = edge_labels(g_train, task, names)
    result = train(g_train, cfg.train_config(), mcfg, labels, edge_mask=mask)
    prov = _provenance(cfg, "train", data=args.data)
    prov["graph_mode"] = cfg.graph_mode
    save_model(args.model_out, ModelFile(result.params, mcfg, names, task, df.schema, prov))
    log_path = args.loss_log or str(args.model_out) + ".loss.csv"
    Path(log_path).write_text(result.loss_log_csv(_comment(prov)), encoding="utf-8")
    if result.history:
        print(f"trained {len(result.history)} epochs: loss {result.history[0][1]:.6f} -> "
              f"{result.history[-1][1]:.6f}; model -> {args.model_out}")
    else:
        print(f"0 epochs; initial parameters -> {args.model_out}")
    return EXIT_OK


def _check_dims(mf: ModelFile, dim):
    if mf.params.dim != dim:
        raise DimensionError(f"model expects edge-feature dimension {mf.params.dim}, "
                             f"data has dimension {dim}")


def _select(df: DatasetFile, split_name, graph_mode):
    if split_name == "all":
        return build_graph(df.data), None
    if graph_mode == "shared":
        g = build_graph(df.data)
        return g, (df.is_train if split_name == "train" else ~df.is_train)
    return build_graph(df.train() if split_name == "train" else df.test()), None


def cmd_eval(args, cfg: RunConfig):
    df = load_dataset(args.data)
    mf = load_model(args.model)
    _check_dims(mf, df.data.dim)
    mode = mf.meta.get("graph_mode", "separate") if args.graph_mode is None else cfg.graph_mode
    g, mask = _select(df, args.split, mode)
    if g.num_edges == 0:
        raise UsageError(f"{args.split} split is empty")
    logp, _ = forward(g, mf.params, mf.config, "eval")
    pred = logp.argmax(axis=1)
    y = edge_labels(g, mf.task, mf.class_names)
    if mask is not None:
        pred, y = pred[mask], y[mask]
    cm = confusion(y, pred, len(mf.class_names))
    if mf.task == "binary":
        report = binary_metrics(cm, mf.class_names)
    else:
        report = multiclass_metrics(cm, mf.class_names)
    prov = _provenance(cfg, "eval", data=args.data, model=args.model)
    prov["split"] = args.split
    text = f"# {_comment(prov)}\n\n" + report.to_table(
        f"E-GraphSAGE {mf.task} classification ({args.split} split, {cm.total} flows)")
    if args.timing:
        t = time_classification(mf.params, mf.config, g, args.timing)
        col = 0 if mf.task == "binary" else 1
        ref = ", ".join(f"{k} {v[col]}" for k, v in REFERENCE_GPU_US.items())
        text += f"\nclassification time: {t}\nreference GPU us/flow (not a target): {ref}\n"
    report_out = Path(args.report_out)
    report_out.write_text(text, encoding="utf-8")
    csv_out = Path(args.csv_out) if args.csv_out else report_out.with_suffix(".csv")
    if csv_out == report_out:
        csv_out = report_out.with_suffix(report_out.suffix + ".csv")
    csv_out.write_text(report.to_csv(_comment(prov)), encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _load_input(path, mf: ModelFile, cfg: RunConfig):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"EGSD":
        return load_dataset(path).data
    if mf.schema is None:
        raise ArtifactError("model file carries no feature schema; encode the input first")
    table = parse_csv(path, mf.schema.column_map, labels=False)
    data = encode(table.records, table, mf.schema)
    if table.errors:
        log.warning("%d malformed rows skipped", len(table.errors))
    if cfg.anonymize:
        data, _ = anonymize_sources(data, cfg.seed)
    return data


def cmd_predict(args, cfg: RunConfig):
    mf = load_model(args.model)
    data = _load_input(args.input, mf, cfg)
    _check_dims(mf, data.dim)
    g = build_graph(data)
    logp, _ = forward(g, mf.params, mf.config, "eval") if g.num_edges else (
        np.zeros((0, len(mf.class_names))), None)
    prov = _provenance(cfg, "predict", input=args.input, model=args.model)
    with open(args.predictions_out, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {_comment(prov)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["flow_index", "src", "dst", "predicted"]
                   + [f"logp_{c}" for c in mf.class_names])
        for e in range(g.num_edges):
            w.writerow([int(g.flow_index[e]), str(g.nodes[g.src[e]]), str(g.nodes[g.dst[e]]),
                        mf.class_names[int(logp[e].argmax())]]
                       + [repr(float(x)) for x in logp[e]])
    print(f"{g.num_edges} predictions -> {args.predictions_out}")
    return EXIT_OK


def cmd_export_embeddings(args, cfg: RunConfig):
    df = load_dataset(args.data)
    mf = load_model(args.model)
    _check_dims(mf, df.data.dim)
    g, mask = _select(df, args.split, mf.meta.get("graph_mode", "separate"))
    _, emb = forward(g, mf.params, mf.config, "eval")
    keep = np.arange(g.num_edges) if mask is None else np.flatnonzero(mask)
    prov = _provenance(cfg, "export-embeddings", data=args.data, model=args.model)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {_comment(prov)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["flow_index"] + [f"z{j}" for j in range(emb.edges.shape[1])] + ["label"])
        for e in keep:
            w.writerow([int(g.flow_index[e])] + [repr(float(x)) for x in emb.edges[e]]
                       + [g.attack_class[e]])
    print(f"{len(keep)} edge embeddings ({emb.edges.shape[1]} dims) -> {args.out}")
    return EXIT_OK


def _parse_priors(text):
    out = []
    for part in text.split(","):
        name, _, p = part.partition(":")
        if not p:
            raise UsageError(f"--priors: expected name:probability, got {part!r}")
        out.append((name.strip(), float(p)))
    return tuple(out)


def cmd_synth(args, cfg: RunConfig):
    if args.flows is not None and args.flows < 1:
        raise UsageError("--flows must be >= 1")
    kw = {"scenario": args.scenario, "seed": cfg.seed}
    for key, attr in (("num_flows", "flows"), ("num_endpoints", "endpoints"),
                      ("signal", "signal"), ("feature_dim", "dim"),
                      ("num_attackers", "attackers")):
        if getattr(args, attr) is not None:
            kw[key] = getattr(args, attr)
    if args.priors:
        kw["classes"] = _parse_priors(args.priors)
    try:
        spec = ScenarioSpec(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    records = generate(spec)
    write_csv(records, args.out)
    print(f"{len(records)} {spec.scenario} flows -> {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _add_run_options(p, *groups):
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--seed", type=int)
    if "split" in groups:
        p.add_argument("--train-fraction", dest="train_fraction", type=float)
        p.add_argument("--subsample", type=float)
        p.add_argument("--no-stratify", dest="stratify", action="store_const", const=False)
    if "columns" in groups:
        for name in ("src_ip_col", "src_port_col", "dst_ip_col", "dst_port_col",
                     "label_col", "attack_col", "benign_name", "categorical", "drop"):
            p.add_argument("--" + name.replace("_", "-"), dest=name)
        p.add_argument("--categorical-mode", dest="categorical_mode", choices=("onehot", "drop"))
    if "anon" in groups:
        p.add_argument("--no-anonymize", dest="anonymize", action="store_const", const=False)
    if "model" in groups:
        p.add_argument("--classes", choices=("binary", "multi"))
        p.add_argument("--graph-mode", dest="graph_mode", choices=("separate", "shared"))
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--class-weights", dest="class_weights")
        p.add_argument("--layers", type=int)
        p.add_argument("--hidden", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--sample-size", dest="sample_size")
        p.add_argument("--neighbor-messages", dest="neighbor_messages", choices=("edge", "node"))
        p.add_argument("--no-preflight", dest="preflight", action="store_const", const=False)


def build_parser():
    ap = argparse.ArgumentParser(prog="egsage", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"egsage {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="parse + encode a flow CSV into a dataset file")
    p.add_argument("--input", required=True)
    p.add_argument("--schema-out", dest="schema_out", required=True)
    p.add_argument("--data-out", dest="data_out", required=True)
    p.add_argument("--graph-out", dest="graph_out")
    _add_run_options(p, "split", "columns", "anon")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train a model on the dataset's training split")
    p.add_argument("--data", required=True)
    p.add_argument("--model-out", dest="model_out", required=True)
    p.add_argument("--loss-log", dest="loss_log")
    _add_run_options(p, "model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metric report for a trained model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report-out", dest="report_out", required=True)
    p.add_argument("--csv-out", dest="csv_out")
    p.add_argument("--split", choices=("test", "train", "all"), default="test")
    p.add_argument("--graph-mode", dest="graph_mode", choices=("separate", "shared"))
    p.add_argument("--timing", type=int, nargs="?", const=5, default=0,
                   help="also time classification over N repetitions (default 5)")
    _add_run_options(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify flows from a CSV or dataset file")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--predictions-out", dest="predictions_out", required=True)
    _add_run_options(p, "anon")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-embeddings", help="write per-flow edge embeddings as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=("test", "train", "all"), default="all")
    _add_run_options(p)
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("synth", help="generate a synthetic labeled flow CSV")
    p.add_argument("--scenario", choices=SCENARIOS, default="feature_separable")
    p.add_argument("--flows", type=int)
    p.add_argument("--endpoints", type=int)
    p.add_argument("--signal", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--attackers", type=int)
    p.add_argument("--priors", help="e.g. Benign:0.8,DoS:0.1,Scan:0.1")
    p.add_argument("--out", required=True)
    _add_run_options(p)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None, environ=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args, environ)
        return args.func(args, cfg)
    except (UsageError, SchemaError) as exc:
        print(f"egsage: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArtifactError, DimensionError) as exc:
        print(f"egsage: artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except NumericError as exc:
        print(f"egsage: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"egsage: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
