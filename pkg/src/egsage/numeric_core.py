"""Dense float64 kernels and a small reverse-mode tape.

Matrices are plain 2-D ``numpy.float64`` arrays.  The tape records a fixed
set of primitives (matmul, add, concat, mean-scatter, gather, relu, dropout,
log-softmax, nll) eagerly: values are computed as ops are recorded, and
:meth:`Tape.backward` replays the record in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, NumericError, StateError

__all__ = [
    "as_matrix", "matmul", "add", "concat_cols", "relu", "log_softmax",
    "Var", "Tape", "FDReport", "finite_difference_check",
]


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {a.shape}")
    return a


def _shape(x):
    return tuple(x.shape)


def matmul(a: np.ndarray, b) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {_shape(a)} @ {_shape(b)}")
    return a @ b


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise DimensionError(f"add shape mismatch: {_shape(a)} + {_shape(b)}")
    return a + b


def concat_cols(*blocks: np.ndarray) -> np.ndarray:
    rows = {b.shape[0] for b in blocks}
    if len(rows) != 1:
        raise DimensionError(
            "concat_cols row mismatch: " + ", ".join(str(_shape(b)) for b in blocks))
    return np.concatenate(blocks, axis=1)


def relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


def log_softmax(a: np.ndarray) -> np.ndarray:
    shifted = a - a.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class Var:
    """A value slot on a tape, with an accumulated gradient."""

    __slots__ = ("value", "grad", "name", "requires_grad", "is_param", "tape")

    def __init__(self, value, tape, name=None, requires_grad=False, is_param=False):
        self.value = value
        self.grad = None
        self.name = name
        self.requires_grad = requires_grad
        self.is_param = is_param
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.name or '?'}, shape={self.shape})"


@dataclass
class _Op:
    kind: str
    inputs: tuple
    output: Var
    backward: object


class Tape:
    """Records primitive operations for one forward pass.

    A tape is single-use: build it, call :meth:`backward` once on a scalar
    output, read ``param.grad``.
    """

    def __init__(self):
        self.ops: list[_Op] = []
        self.params: dict[str, Var] = {}
        self.leaves: list[Var] = []

    # leaves -----------------------------------------------------------

    def param(self, value, name: str) -> Var:
        if name in self.params:
            raise StateError(f"duplicate parameter name {name!r}")
        v = Var(np.array(value, dtype=np.float64), self, name, True, True)
        self.params[name] = v
        self.leaves.append(v)
        return v

    def const(self, value, name=None) -> Var:
        if sp.issparse(value):
            v = Var(value, self, name)
        else:
            v = Var(np.asarray(value, dtype=np.float64), self, name)
        self.leaves.append(v)
        return v

    # recording --------------------------------------------------------

    def _record(self, kind, inputs, value, backward) -> Var:
        for x in inputs:
            if x.tape is not self:
                raise StateError(f"{kind}: operand {x!r} belongs to another tape")
        out = Var(value, self, requires_grad=any(x.requires_grad for x in inputs))
        self.ops.append(_Op(kind, tuple(inputs), out, backward))
        return out

    def matmul(self, a: Var, b: Var) -> Var:
        def bw(g):
            return (g @ b.value.T if a.requires_grad else None,
                    a.value.T @ g if b.requires_grad else None)
        return self._record("matmul", (a, b), matmul(a.value, b.value), bw)

    def matmul_t(self, a: Var, w: Var) -> Var:
        """``a @ w.T``; layer weights are stored as (out, in)."""
        if a.shape[1] != w.shape[1]:
            raise DimensionError(
                f"matmul shape mismatch: {_shape(a.value)} @ {_shape(w.value)}^T")

        def bw(g):
            return (g @ w.value if a.requires_grad else None,
                    g.T @ a.value if w.requires_grad else None)
        return self._record("matmul", (a, w), a.value @ w.value.T, bw)

    def add(self, a: Var, b: Var) -> Var:
        return self._record("add", (a, b), add(a.value, b.value), lambda g: (g, g))

    def sub(self, a: Var, b: Var) -> Var:
        if a.shape != b.shape:
            raise DimensionError(f"sub shape mismatch: {_shape(a.value)} - {_shape(b.value)}")
        return self._record("sub", (a, b), a.value - b.value, lambda g: (g, -g))

    def mul(self, a: Var, b: Var) -> Var:
        if a.shape != b.shape:
            raise DimensionError(f"mul shape mismatch: {_shape(a.value)} * {_shape(b.value)}")
        return self._record("mul", (a, b), a.value * b.value,
                            lambda g: (g * b.value, g * a.value))

    def scale(self, a: Var, c: float) -> Var:
        c = float(c)
        return self._record("scale", (a,), a.value * c, lambda g: (g * c,))

    def sum(self, a: Var) -> Var:
        shape = a.shape

        def bw(g):
            return (np.full(shape, g[0, 0]),)
        return self._record("sum", (a,), np.array([[a.value.sum()]]), bw)

    def concat_cols(self, *blocks: Var) -> Var:
        widths = np.cumsum([0] + [b.shape[1] for b in blocks])

        def bw(g):
            return tuple(g[:, widths[i]:widths[i + 1]] for i in range(len(blocks)))
        return self._record("concat", blocks, concat_cols(*(b.value for b in blocks)), bw)

    def mean_scatter(self, op: Var, x: Var) -> Var:
        """Apply a constant sparse row-mean operator: ``op @ x``.

        ``op`` has one row per output node; each row averages the rows of
        ``x`` it selects.  Only ``x`` receives a gradient.
        """
        S = op.value
        if S.shape[1] != x.shape[0]:
            raise DimensionError(
                f"mean_scatter shape mismatch: {_shape(S)} @ {_shape(x.value)}")

        def bw(g):
            return None, np.asarray(S.T @ g)
        return self._record("mean_scatter", (op, x), np.asarray(S @ x.value), bw)

    def gather_rows(self, x: Var, index) -> Var:
        index = np.asarray(index, dtype=np.intp)
        n = x.shape[0]

        def bw(g):
            scatter = sp.csr_matrix((np.ones(len(index)), (index, np.arange(len(index)))),
                                    shape=(n, len(index)))
            return (np.asarray(scatter @ g),)
        return self._record("gather", (x,), x.value[index], bw)

    def relu(self, a: Var) -> Var:
        mask = a.value > 0.0
        return self._record("relu", (a,), a.value * mask, lambda g: (g * mask,))

    def dropout(self, a: Var, rate: float, rng: np.random.Generator) -> Var:
        """Inverted dropout; the caller only invokes this at train time."""
        if rate <= 0.0:
            return a
        keep = rng.random(a.shape) >= rate
        mask = keep / (1.0 - rate)
        return self._record("dropout", (a,), a.value * mask, lambda g: (g * mask,))

    def log_softmax(self, a: Var) -> Var:
        out = log_softmax(a.value)
        p = np.exp(out)

        def bw(g):
            return (g - p * g.sum(axis=1, keepdims=True),)
        return self._record("log_softmax", (a,), out, bw)

    def nll_loss(self, logp: Var, labels, weights=None) -> Var:
        """Weighted mean of ``-logp[i, labels[i]]``."""
        labels = np.asarray(labels, dtype=np.intp)
        n, c = logp.shape
        if labels.shape != (n,):
            raise DimensionError(f"nll_loss: {n} rows but {labels.shape} labels")
        bad = np.flatnonzero((labels < 0) | (labels >= c))
        if bad.size:
            raise ValueError(f"label {labels[bad[0]]} out of range [0, {c}) at edge {bad[0]}")
        w = np.ones(c) if weights is None else np.asarray(weights, dtype=np.float64)
        wi = w[labels]
        total = wi.sum()
        if total <= 0:
            raise NumericError("nll_loss: applied weights sum to zero")
        rows = np.arange(n)
        loss = -(wi * logp.value[rows, labels]).sum() / total

        def bw(g):
            out = np.zeros((n, c))
            out[rows, labels] = -wi * (g[0, 0] / total)
            return (out,)
        return self._record("nll", (logp,), np.array([[loss]]), bw)

    # backward ---------------------------------------------------------

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        if not self.ops:
            raise StateError("backward called before any forward op was recorded")
        if loss.tape is not self or not any(op.output is loss for op in self.ops):
            raise StateError("loss was not produced by this tape")
        if loss.value.shape != (1, 1):
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        for v in self.leaves:
            v.grad = np.zeros(v.value.shape) if v.requires_grad else None
        for op in self.ops:
            op.output.grad = None
        loss.grad = np.ones((1, 1))
        for op in reversed(self.ops):
            g = op.output.grad
            if g is None or not op.output.requires_grad:
                continue
            for x, gx in zip(op.inputs, op.backward(g)):
                if gx is None or not x.requires_grad:
                    continue
                # no in-place updates anywhere, so sharing gx is safe
                x.grad = gx if x.grad is None else x.grad + gx
        return {name: v.grad for name, v in self.params.items()}


@dataclass
class FDReport:
    passed: bool
    max_rel_error: float
    worst: tuple | None = None  # (param name, flat index)
    checked: int = 0
    message: str = ""
    errors: dict = field(default_factory=dict)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        where = f" at {self.worst[0]}[{self.worst[1]}]" if self.worst else ""
        return (f"{status}: max rel error {self.max_rel_error:.3e}{where} "
                f"over {self.checked} coordinates {self.message}").rstrip()


def finite_difference_check(loss_fn, params: dict, tolerance: float = 1e-4,
                            h: float = 1e-5) -> FDReport:
    """Compare tape gradients of ``loss_fn`` against central differences.

    ``loss_fn(tape, leaves)`` must build a deterministic forward on ``tape``
    from the parameter ``Var`` dict ``leaves`` and return a scalar ``Var``.
    The error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def evaluate(values):
        tape = Tape()
        leaves = {k: tape.param(v, k) for k, v in values.items()}
        return tape, loss_fn(tape, leaves)

    tape, loss = evaluate(params)
    if not np.isfinite(loss.value).all():
        return FDReport(False, float("inf"), message="(non-finite loss, aborted)")
    if not params or all(v.size == 0 for v in params.values()):
        return FDReport(True, 0.0, message="(no parameters)")
    grads = tape.backward(loss)

    worst_err, worst, checked, per_param = 0.0, None, 0, {}
    for name, base in params.items():
        flat = base.reshape(-1)
        g = grads[name].reshape(-1)
        pmax = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = evaluate(params)[1].value[0, 0]
            flat[i] = orig - h
            fm = evaluate(params)[1].value[0, 0]
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                return FDReport(False, float("inf"), (name, i), checked,
                                "(non-finite loss, aborted)")
            numeric = (fp - fm) / (2 * h)
            err = abs(g[i] - numeric) / max(1.0, abs(numeric))
            checked += 1
            pmax = max(pmax, err)
            if err > worst_err or worst is None:
                worst_err, worst = err, (name, i)
        per_param[name] = pmax
    return FDReport(worst_err < tolerance, worst_err, worst, checked, errors=per_param)
