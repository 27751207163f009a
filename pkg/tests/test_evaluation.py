import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_graph
from egsage.egraphsage import ModelConfig, init_params
from egsage.evaluation import (ConfusionMatrix, binary_metrics, confusion, multiclass_metrics,
                               time_classification)


def cm_from(tn, fp, fn, tp):
    return ConfusionMatrix(np.array([[tn, fp], [fn, tp]]))


def test_table_formulas_exact():
    r = binary_metrics(cm_from(tn=89, fp=1, fn=1, tp=9))
    assert r.precision == 0.9 and r.recall == 0.9 and r.f1 == 0.9
    assert r.accuracy == 0.98
    assert r.far == 1 / 90
    assert r.degenerate == []


def test_all_benign_predictions():
    r = binary_metrics(confusion([0, 0, 1, 1, 0], [0, 0, 0, 0, 0], 2))
    assert r.recall == 0.0 and r.far == 0.0
    assert "precision" in r.degenerate


def test_no_positives_anywhere_is_degenerate():
    r = binary_metrics(confusion([0, 0, 0], [0, 0, 0], 2))
    assert (r.precision, r.recall, r.f1, r.accuracy) == (0.0, 0.0, 0.0, 1.0)
    assert {"precision", "recall", "f1"} <= set(r.degenerate)


def test_confusion_diagonal_and_empty():
    cm = confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert (cm.counts == np.diag([1, 1, 2])).all()
    assert confusion([], [], 3).counts.sum() == 0


def test_confusion_matches_loop(rng):
    y, p = rng.integers(0, 4, 100), rng.integers(0, 4, 100)
    expected = np.zeros((4, 4), dtype=int)
    for t, q in zip(y, p):
        expected[t][q] += 1
    np.testing.assert_array_equal(confusion(y, p, 4).counts, expected)
    assert confusion(y, p, 4).total == 100


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion([0, 1], [0], 2)
    with pytest.raises(ValueError):
        confusion([0, 3], [0, 1], 2)


def test_multiclass_perfect():
    r = multiclass_metrics(confusion([0, 1, 2, 1], [0, 1, 2, 1], 3), ["a", "b", "c"])
    assert all(c.dr == 1.0 for c in r.classes)
    assert r.weighted_f1 == 1.0 and r.accuracy == 1.0


def test_zero_support_class_excluded_from_average():
    r = multiclass_metrics(confusion([0, 0, 1, 1], [0, 1, 1, 1], 3), ["a", "b", "c"])
    c = r.by_name("c")
    assert c.support == 0 and c.degenerate
    b = r.by_name("b")
    a = r.by_name("a")
    assert r.weighted_f1 == pytest.approx((2 * a.f1 + 2 * b.f1) / 4, abs=1e-15)


def oracle(counts):
    """Independent per-class and weighted metrics from the raw matrix."""
    k = len(counts)
    total = sum(sum(row) for row in counts)
    per = []
    for c in range(k):
        tp = counts[c][c]
        fn = sum(counts[c][j] for j in range(k) if j != c)
        fp = sum(counts[i][c] for i in range(k) if i != c)
        rec = tp / (tp + fn) if tp + fn else 0.0
        prec = tp / (tp + fp) if tp + fp else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per.append((rec, prec, f1, tp + fn))
    support = sum(s for *_, s in per)
    weighted = [sum(m[i] * m[3] for m in per) / support for i in range(3)]
    acc = sum(counts[c][c] for c in range(k)) / total
    return per, weighted, acc


def test_multiclass_matches_oracle(rng):
    for _ in range(20):
        counts = rng.integers(0, 50, size=(4, 4))
        r = multiclass_metrics(ConfusionMatrix(counts), list("abcd"))
        per, (wr, wp, wf), acc = oracle(counts.tolist())
        for c, (rec, prec, f1, s) in zip(r.classes, per):
            assert abs(c.dr - rec) <= 1e-12 and abs(c.precision - prec) <= 1e-12
            assert abs(c.f1 - f1) <= 1e-12 and c.support == s
        assert abs(r.weighted_recall - wr) <= 1e-12
        assert abs(r.weighted_precision - wp) <= 1e-12
        assert abs(r.weighted_f1 - wf) <= 1e-12
        assert abs(r.accuracy - acc) <= 1e-12


counts_2x2 = st.lists(st.integers(0, 200), min_size=4, max_size=4)


@given(counts_2x2)
def test_binary_equals_multiclass_attack_row(c):
    cm = ConfusionMatrix(np.array(c).reshape(2, 2))
    b = binary_metrics(cm)
    m = multiclass_metrics(cm, ["Benign", "Attack"])
    attack = m.by_name("Attack")
    assert (b.precision, b.recall, b.f1) == (attack.precision, attack.dr, attack.f1)
    if cm.total:
        assert b.accuracy == m.accuracy
    assert b.weighted_f1 == m.weighted_f1


@given(st.lists(st.integers(0, 30), min_size=16, max_size=16), st.permutations(range(4)))
def test_accuracy_permutation_invariant(c, perm):
    counts = np.array(c).reshape(4, 4)
    perm = np.array(perm)
    a = multiclass_metrics(ConfusionMatrix(counts), list("abcd")).accuracy
    b = multiclass_metrics(ConfusionMatrix(counts[np.ix_(perm, perm)]), list("abcd")).accuracy
    assert a == b


@given(st.lists(st.integers(0, 30), min_size=9, max_size=9))
def test_f1_between_precision_and_recall(c):
    r = multiclass_metrics(ConfusionMatrix(np.array(c).reshape(3, 3)), list("abc"))
    for m in r.classes:
        if not m.degenerate:
            lo, hi = min(m.precision, m.dr), max(m.precision, m.dr)
            assert lo - 1e-15 <= m.f1 <= hi + 1e-15
        assert 0.0 <= m.f1 <= 1.0


def test_report_rendering():
    r = binary_metrics(cm_from(89, 1, 1, 9))
    table = r.to_table("binary")
    assert "FAR" in table and "Weighted Average" in table and "98.00%" in table
    csv_text = r.to_csv("header")
    assert csv_text.startswith("# header\n")
    assert "far,0.011111111111111112" in csv_text


def test_timing_reports_positive(rng):
    g = random_graph(rng, 50, 1000, 4)
    cfg = ModelConfig(hidden=16)
    params = init_params(cfg, 4, seed=0)
    t5 = time_classification(params, cfg, g, repetitions=5)
    assert t5.mean_us > 0 and t5.repetitions == 5 and len(t5.per_rep_us) == 5
    t10 = time_classification(params, cfg, g, repetitions=10)
    spread = 3 * max(t5.std_us, t10.std_us, 0.05 * t5.mean_us)
    assert abs(t10.mean_us - t5.mean_us) <= spread
    assert time_classification(params, cfg, g, repetitions=2).repetitions == 5


def test_timing_empty_graph(rng):
    g = random_graph(rng, 5, 0, 4)
    cfg = ModelConfig(hidden=4)
    with pytest.raises(ValueError):
        time_classification(init_params(cfg, 4), cfg, g)
