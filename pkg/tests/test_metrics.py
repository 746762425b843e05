import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import average_precision_score, f1_score, roc_auc_score

from argnn.metrics import average_precision, binary_auroc, evaluate


def test_perfect_predictions():
    labels = np.array([0, 1, 2, 1, 0])
    out = evaluate(np.eye(3)[labels], labels)
    assert out == {"accuracy": 1.0, "macro_f1": 1.0, "auroc": 1.0, "auprc": 1.0}


def test_binary_auroc_example():
    scores = [0.1, 0.4, 0.35, 0.8]
    assert binary_auroc(scores, [0, 0, 1, 1]) == 0.75
    pos = [s for s, y in zip(scores, [0, 0, 1, 1]) if y]
    neg = [s for s, y in zip(scores, [0, 0, 1, 1]) if not y]
    brute = np.mean([(p > n) + 0.5 * (p == n) for p in pos for n in neg])
    assert brute == 0.75


def test_single_class_marks_auc_not_applicable():
    out = evaluate(np.array([[0.9, 0.1], [0.4, 0.6]]), [0, 0])
    assert out["accuracy"] == 0.5
    assert out["auroc"] is None and out["auprc"] is None


def test_empty_index_rejected():
    with pytest.raises(ValueError):
        evaluate(np.ones((3, 2)), [0, 1, 0], [])


def test_absent_classes_skipped_in_f1():
    probs = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1]])
    assert evaluate(probs, [0, 1])["macro_f1"] == 1.0


def test_index_subset():
    probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]])
    assert evaluate(probs, [0, 1, 1], idx=[0, 1])["accuracy"] == 1.0


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auroc_and_ap_match_sklearn_with_ties(rows):
    scores = np.array([r[0] for r in rows], dtype=float) / 6
    y = np.array([r[1] for r in rows])
    if y.all() or not y.any():
        return
    assert binary_auroc(scores, y) == pytest.approx(roc_auc_score(y, scores), abs=1e-12)
    assert average_precision(scores, y) == pytest.approx(average_precision_score(y, scores),
                                                         abs=1e-12)


@given(st.integers(0, 10_000))
def test_multiclass_bundle_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 4, 30)
    labels[:4] = np.arange(4)
    probs = rng.dirichlet(np.ones(4), 30)
    out = evaluate(probs, labels)
    pred = probs.argmax(1)
    assert out["accuracy"] == pytest.approx(np.mean(pred == labels))
    assert out["macro_f1"] == pytest.approx(
        f1_score(labels, pred, average="macro", labels=np.unique(labels), zero_division=0))
    assert out["auroc"] == pytest.approx(
        roc_auc_score(labels, probs, multi_class="ovr", average="macro"), abs=1e-12)
    onehot = np.eye(4)[labels]
    assert out["auprc"] == pytest.approx(
        average_precision_score(onehot, probs, average="macro"), abs=1e-12)
