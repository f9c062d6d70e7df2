import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chd import metrics as mt
from chd.errors import ShapeError

from oracles import count_metrics, pair_auc

RATIOS = ("accuracy", "precision", "recall", "f_measure", "specificity", "npv")


def test_confusion_hand_count():
    assert mt.confusion([1, 0, 1, 0], [1, 1, 0, 0]) == mt.ConfusionMatrix(1, 1, 1, 1)


def test_perfect_predictions_have_no_errors():
    cm = mt.confusion([1, 0, 0, 1, 1], [1, 0, 0, 1, 1])
    assert cm.fp == cm.fn == 0


def test_empty_sequences():
    assert mt.confusion([], []) == mt.ConfusionMatrix(0, 0, 0, 0)


def test_length_mismatch():
    with pytest.raises(ShapeError):
        mt.confusion([1, 0], [1])


def test_non_binary_labels():
    with pytest.raises(ShapeError):
        mt.confusion([2], [1])


def test_hand_arithmetic():
    cm = mt.ConfusionMatrix(tp=90, tn=80, fp=10, fn=20)
    assert mt.accuracy(cm) == 0.85
    assert mt.precision(cm) == 0.9
    assert mt.recall(cm) == pytest.approx(90 / 110, abs=1e-15)
    assert mt.f_measure(cm) == pytest.approx(0.8571428571428571, abs=1e-12)
    assert mt.specificity(cm) == pytest.approx(80 / 90, abs=1e-15)
    assert mt.npv(cm) == pytest.approx(0.8, abs=1e-15)


def test_f_of_equal_precision_and_recall():
    cm = mt.ConfusionMatrix(tp=6, tn=3, fp=2, fn=2)
    assert mt.precision(cm) == mt.recall(cm)
    assert mt.f_measure(cm) == pytest.approx(mt.precision(cm), abs=1e-15)


def test_zero_denominators_are_undefined():
    cm = mt.ConfusionMatrix(tp=0, tn=5, fp=0, fn=3)
    assert mt.precision(cm) is None
    assert mt.f_measure(cm) is None
    cm = mt.ConfusionMatrix(tp=0, tn=5, fp=2, fn=0)
    assert mt.recall(cm) is None
    assert mt.accuracy(mt.ConfusionMatrix()) is None


def test_matches_counting_oracle_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(0, 12))
        t, p = rng.integers(0, 2, n), rng.integers(0, 2, n)
        cm = mt.confusion(t, p)
        ref = count_metrics(t.tolist(), p.tolist())
        for name in RATIOS:
            got = getattr(mt, name)(cm)
            if ref[name] is None:
                assert got is None
            else:
                assert abs(got - float(ref[name])) <= 1e-15


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), max_size=40))
def test_harmonic_mean_bound(pairs):
    cm = mt.confusion([t for t, _ in pairs], [p for _, p in pairs])
    p, r, f = mt.precision(cm), mt.recall(cm), mt.f_measure(cm)
    if None not in (p, r, f):
        assert min(p, r) <= f <= max(p, r)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), max_size=40))
def test_label_swap_symmetry(pairs):
    t = [a for a, _ in pairs]
    p = [b for _, b in pairs]
    cm = mt.confusion(t, p)
    sw = mt.confusion([1 - a for a in t], [1 - b for b in p])
    assert mt.precision(cm) == mt.npv(sw)
    assert mt.recall(cm) == mt.specificity(sw)


def test_auc_all_ties():
    assert mt.roc_auc([0, 1, 0, 1], [0.3] * 4) == 0.5


def test_auc_perfect_order():
    assert mt.roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0


def test_auc_three_records_with_tie():
    # pairs (pos, neg): (0.5 vs 0.5) tie, (0.5 vs 0.2) win -> 1.5 / 2
    assert mt.roc_auc([1, 0, 0], [0.5, 0.5, 0.2]) == 0.75


def test_auc_single_class_undefined():
    assert mt.roc_auc([1, 1], [0.2, 0.4]) is None


def test_auc_matches_pair_count():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        t = rng.integers(0, 2, n)
        s = rng.integers(0, 5, n) / 4.0  # plenty of ties
        ref = pair_auc(t.tolist(), s.tolist())
        got = mt.roc_auc(t, s)
        assert (got is None) == (ref is None)
        if ref is not None:
            assert abs(got - float(ref)) <= 1e-15


def test_auc_monotone_transform_invariant():
    rng = np.random.default_rng(2)
    t = rng.integers(0, 2, 50)
    s = rng.normal(size=50)
    assert mt.roc_auc(t, s) == mt.roc_auc(t, np.exp(3 * s) + 1)


def test_csv_row_format():
    rep = mt.MetricsReport(0.9646, 0.9338, 0.9657, None, 1.0, 0.5, None)
    row = mt.table_row("Random Forest", rep)
    assert row[:5] == ["Random Forest", "96.46", "0.9338", "0.9657", mt.UNDEFINED_TEXT]
    assert row[-1] == mt.UNDEFINED_TEXT


def test_csv_header_only_for_no_rows():
    text = mt.metrics_csv([])
    assert text.splitlines() == [",".join(mt.TABLE_COLUMNS)]
    assert mt.TABLE_COLUMNS[:5] == ("Classifier", "Accuracy %", "Precision", "Recall", "F-Measure")


def test_evaluate_collects_everything():
    rep = mt.evaluate([1, 0, 1, 0], [1, 0, 0, 0], [0.9, 0.1, 0.4, 0.3])
    assert rep.accuracy == 0.75 and rep.roc_auc == 1.0
    assert mt.evaluate([1, 0], [1, 0]).roc_auc is None
