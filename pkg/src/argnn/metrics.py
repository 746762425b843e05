"""Classification metrics: accuracy, macro-F1, macro one-vs-rest AUROC and AUPRC."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _as_prob_matrix(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim == 1:  # binary: probability of the positive class
        return np.stack([1.0 - s, s], axis=1)
    return s


def binary_auroc(scores, positive) -> float:
    """Mann-Whitney statistic with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos, n_neg = positive.sum(), (~positive).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes")
    ranks = rankdata(scores, method="average")
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores, positive) -> float:
    """Area under the precision-recall step curve, one step per distinct threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = positive.sum()
    if n_pos == 0:
        raise ValueError("average precision needs a positive")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], positive[order]
    tp = np.cumsum(y)
    last = np.r_[s[1:] != s[:-1], True]  # end of each tie group
    tp, k = tp[last], np.flatnonzero(last) + 1
    precision, recall = tp / k, tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def evaluate(scores, labels, idx=None) -> dict:
    """Metric bundle over ``idx``; AUROC/AUPRC are ``None`` when only one class is present."""
    probs = _as_prob_matrix(scores)
    labels = np.asarray(labels, dtype=np.int64)
    if idx is not None:
        idx = np.asarray(idx, dtype=np.int64)
        probs, labels = probs[idx], labels[idx]
    if len(labels) == 0:
        raise ValueError("cannot evaluate an empty index set")
    pred = probs.argmax(axis=1)
    present = np.unique(labels)

    f1s = []
    for c in present:
        tp = np.sum((pred == c) & (labels == c))
        fp = np.sum((pred == c) & (labels != c))
        fn = np.sum((pred != c) & (labels == c))
        f1s.append(2 * tp / (2 * tp + fp + fn))

    aurocs, auprcs = [], []
    if len(present) > 1:
        for c in present:
            pos = labels == c
            aurocs.append(binary_auroc(probs[:, c], pos))
            auprcs.append(average_precision(probs[:, c], pos))
    return {
        "accuracy": float(np.mean(pred == labels)),
        "macro_f1": float(np.mean(f1s)),
        "auroc": float(np.mean(aurocs)) if aurocs else None,
        "auprc": float(np.mean(auprcs)) if auprcs else None,
    }
