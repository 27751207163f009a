"""Confusion matrices, detection metrics and per-flow classification timing."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .egraphsage import ModelConfig, ModelParams, forward


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray   # rows = true class, cols = predicted

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())


def confusion(labels, predictions, num_classes=None) -> ConfusionMatrix:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    if y.shape != p.shape:
        raise ValueError(f"{len(y)} labels but {len(p)} predictions")
    if num_classes is None:
        num_classes = int(max(y.max(initial=1), p.max(initial=1))) + 1
    if y.size and (min(y.min(), p.min()) < 0 or max(y.max(), p.max()) >= num_classes):
        raise ValueError(f"class index outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y, p), 1)
    return ConfusionMatrix(counts)


def _ratio(num, den):
    """num/den with 0/0 -> (0.0, degenerate=True)."""
    if den == 0:
        return 0.0, True
    return num / den, False


@dataclass
class ClassMetrics:
    name: str
    dr: float            # recall
    precision: float
    f1: float
    support: int
    degenerate: bool = False


@dataclass
class MetricsReport:
    classes: list
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    # binary-only (attack = positive class); None for multiclass reports
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    far: float | None = None
    degenerate: list = field(default_factory=list)

    def by_name(self, name) -> ClassMetrics:
        return next(c for c in self.classes if c.name == name)

    def to_table(self, title="") -> str:
        out = [title] if title else []
        if self.far is not None:
            out.append(f"{'Accuracy':<10}{'Precision':>11}{'F1-Score':>10}"
                       f"{'Recall(DR)':>12}{'FAR':>9}")
            out.append(f"{self.accuracy * 100:>9.2f}%{self.precision:>11.2f}{self.f1:>10.2f}"
                       f"{self.recall * 100:>11.2f}%{self.far * 100:>8.2f}%")
            out.append("")
        width = max([16] + [len(c.name) + 2 for c in self.classes])
        out.append(f"{'Class Name':<{width}}{'DR':>9}{'Precision':>11}{'F1-Score':>10}{'Support':>9}")
        for c in self.classes:
            flag = " *" if c.degenerate else ""
            out.append(f"{c.name:<{width}}{c.dr * 100:>8.2f}%{c.precision:>11.2f}"
                       f"{c.f1:>10.2f}{c.support:>9d}{flag}")
        out.append(f"{'Weighted Average':<{width}}{self.weighted_recall * 100:>8.2f}%"
                   f"{self.weighted_precision:>11.2f}{self.weighted_f1:>10.2f}"
                   f"{sum(c.support for c in self.classes):>9d}")
        out.append(f"Accuracy: {self.accuracy * 100:.2f}%")
        if any(c.degenerate for c in self.classes):
            out.append("* 0/0 in a rate; reported as 0")
        return "\n".join(out) + "\n"

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "dr", "precision", "f1", "support", "degenerate"])
        for c in self.classes:
            w.writerow([c.name, repr(c.dr), repr(c.precision), repr(c.f1), c.support,
                        int(c.degenerate)])
        w.writerow(["weighted_average", repr(self.weighted_recall),
                    repr(self.weighted_precision), repr(self.weighted_f1),
                    sum(c.support for c in self.classes), 0])
        w.writerow(["accuracy", repr(self.accuracy), "", "", "", 0])
        if self.far is not None:
            w.writerow(["binary_attack", repr(self.recall), repr(self.precision),
                        repr(self.f1), "", 0])
            w.writerow(["far", repr(self.far), "", "", "", 0])
        return buf.getvalue()


def _per_class(counts, names):
    total = counts.sum()
    out = []
    for c, name in enumerate(names):
        tp = counts[c, c]
        support = int(counts[c].sum())
        predicted = counts[:, c].sum()
        r, dr_deg = _ratio(tp, support)
        p, p_deg = _ratio(tp, predicted)
        f, f_deg = _ratio(2 * (r * p), r + p)
        out.append(ClassMetrics(name, float(r), float(p), float(f), support,
                                dr_deg or p_deg or f_deg))
    return out, total


def multiclass_metrics(cm: ConfusionMatrix, class_names) -> MetricsReport:
    """One-vs-rest DR/precision/F1 per class plus support-weighted averages."""
    counts = cm.counts
    if counts.shape[0] != counts.shape[1]:
        raise ValueError("confusion matrix must be square")
    classes, total = _per_class(counts, list(class_names))
    acc, acc_deg = _ratio(np.trace(counts), total)
    sup = np.array([c.support for c in classes], dtype=np.float64)
    wsum = sup.sum()

    def weighted(attr):
        if wsum == 0:
            return 0.0
        return float(sum(s * getattr(c, attr) for s, c in zip(sup, classes) if s > 0) / wsum)

    degenerate = [c.name for c in classes if c.degenerate]
    if acc_deg:
        degenerate.append("accuracy")
    return MetricsReport(classes, float(acc), weighted("precision"), weighted("dr"),
                         weighted("f1"), degenerate=degenerate)


def binary_metrics(cm: ConfusionMatrix, class_names=("Benign", "Attack")) -> MetricsReport:
    """Recall, precision, F1, accuracy and FAR with attack (index 1) as positive."""
    if cm.counts.shape != (2, 2):
        raise ValueError("binary_metrics needs a 2x2 confusion matrix")
    (tn, fp), (fn, tp) = cm.counts.tolist()
    report = multiclass_metrics(cm, class_names)
    recall, r_deg = _ratio(tp, tp + fn)
    precision, p_deg = _ratio(tp, tp + fp)
    f1, f_deg = _ratio(2 * (recall * precision), recall + precision)
    accuracy, a_deg = _ratio(tp + tn, tp + fp + tn + fn)
    far, far_deg = _ratio(fp, fp + tn)
    report.precision, report.recall, report.f1 = float(precision), float(recall), float(f1)
    report.accuracy, report.far = float(accuracy), float(far)
    for name, flag in (("recall", r_deg), ("precision", p_deg), ("f1", f_deg),
                       ("far", far_deg)):
        if flag:
            report.degenerate.append(name)
    return report


@dataclass
class TimingReport:
    mean_us: float
    std_us: float
    repetitions: int
    per_rep_us: list
    num_edges: int

    def __str__(self):
        return (f"{self.mean_us:.3f} +- {self.std_us:.3f} us/flow over "
                f"{self.repetitions} reps ({self.num_edges} flows)")


def time_classification(params: ModelParams, config: ModelConfig, graph,
                        repetitions: int = 5) -> TimingReport:
    """Wall-clock eval-mode forward per flow, after one warm-up run."""
    if graph.num_edges == 0:
        raise ValueError("cannot time classification on an empty graph")
    repetitions = max(5, int(repetitions))
    forward(graph, params, config, "eval")
    per = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        logp, _ = forward(graph, params, config, "eval")
        logp.argmax(axis=1)
        per.append((time.perf_counter() - t0) * 1e6 / graph.num_edges)
    per = np.array(per)
    return TimingReport(float(per.mean()), float(per.std()), repetitions, per.tolist(),
                        graph.num_edges)
