"""
Checking gradients of the edge classifier
=========================================

The training loop relies on a small reverse-mode tape.  Before trusting
it, compare its gradients with central finite differences on a toy model
and on the full two-layer edge classifier.
"""

import numpy as np

from egsage.egraphsage import ModelConfig
from egsage.numeric_core import Tape, finite_difference_check
from egsage.training import desk_graph, gradient_check

rng = np.random.default_rng(0)

# A linear model with squared error has the closed-form gradient 2 (Wx - t) x^T.
W, x, t = rng.normal(size=(3, 4)), rng.normal(size=(4, 1)), rng.normal(size=(3, 1))


def loss_fn(tape, leaves):
    r = tape.sub(tape.matmul(leaves["W"], tape.const(x)), tape.const(t))
    return tape.sum(tape.mul(r, r))


tape = Tape()
grads = tape.backward(loss_fn(tape, {"W": tape.param(W, "W")}))
print("tape vs closed form:", np.abs(grads["W"] - 2 * (W @ x - t) @ x.T).max())
print("finite differences: ", finite_difference_check(loss_fn, {"W": W}))

# %%
# The same check on a 20-edge random graph with d=4, hidden=8 and K=2.
# Dropout is switched off so the loss is a deterministic function.
g = desk_graph(num_edges=20, dim=4, seed=0)
for mode in ("edge", "node"):
    report = gradient_check(g, ModelConfig(hidden=8, neighbor_messages=mode),
                            g.binary_label.astype(np.int64))
    print(f"{mode:>4} messages:", report)
