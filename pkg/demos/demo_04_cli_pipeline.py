"""
The command-line pipeline
=========================

``egsage`` chains the whole workflow: synthesise or supply a flow CSV,
encode it into a dataset file, train, evaluate, predict and export edge
embeddings.  The same steps are driven here through ``main`` so the script
runs anywhere the package is installed.
"""

import tempfile
from pathlib import Path

from egsage.cli import main


def egsage(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"exit {code}"


with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    egsage("synth", "--scenario", "mixed", "--flows", 3000, "--seed", 2,
           "--priors", "Benign:0.7,DoS:0.2,Scan:0.1", "--out", d / "flows.csv")

    # 70/30 stratified split; normalization statistics come from the train part.
    egsage("encode", "--input", d / "flows.csv", "--schema-out", d / "schema.txt",
           "--data-out", d / "data.egsd", "--seed", 2)
    print((d / "schema.txt").read_text().split("\n", 2)[2])

    # %%
    # Multiclass training on the separate train graph.
    egsage("train", "--data", d / "data.egsd", "--model-out", d / "model.egsm",
           "--classes", "multi", "--epochs", 100, "--seed", 2)

    # %%
    # Evaluation on the held-out graph, with per-flow timing.
    egsage("eval", "--data", d / "data.egsd", "--model", d / "model.egsm",
           "--report-out", d / "report.txt", "--timing", 5)

    # %%
    # Per-flow predictions and 256-dimensional edge embeddings.
    egsage("predict", "--input", d / "flows.csv", "--model", d / "model.egsm",
           "--predictions-out", d / "pred.csv")
    print("\n".join((d / "pred.csv").read_text().splitlines()[1:4]))
    egsage("export-embeddings", "--data", d / "data.egsd", "--model", d / "model.egsm",
           "--out", d / "emb.csv", "--split", "test")
