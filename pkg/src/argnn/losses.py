"""Task losses, geometric regularisers and theory-guided loss weights.

Task losses are means over the supervised set rather than sums, so the
regulariser weights keep the same meaning across dataset sizes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .geometry import ricci_curvature
from .graph import Graph
from .metric import MetricField


def cross_entropy_node(logits, labels, train_idx) -> ad.Value:
    """Mean of ``-log softmax(logits)[label]`` over ``train_idx``."""
    idx = np.asarray(train_idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cross entropy over an empty index set")
    labels = np.asarray(labels, dtype=np.int64)
    rows = ad.gather_rows(logits, idx)
    lse = ad.logsumexp_rows(rows)
    onehot = np.zeros(rows.shape)
    onehot[np.arange(len(idx)), labels[idx]] = 1.0
    picked = ad.vsum(rows * onehot, axis=1)
    return ad.vmean(lse - picked)


def bce_edge(scores, labels) -> ad.Value:
    """Mean binary negative log-likelihood, scores clamped to ``[1e-12, 1 - 1e-12]``."""
    y = np.asarray(labels, dtype=np.float64).ravel()
    p = ad.clip(ad.reshape(ad.as_value(scores), (-1,)), 1e-12, 1.0 - 1e-12)
    ll = ad.log(p) * y + ad.log(1.0 - p) * (1.0 - y)
    return -ad.vmean(ll)


def _field(mf):
    return mf.values if isinstance(mf, MetricField) else mf


def ricci_loss(mf, g: Graph) -> ad.Value:
    """Sum of squared discrete Ricci curvatures over nodes and axes."""
    ric = ad.as_value(ricci_curvature(_field(mf), g))
    return ad.vsum(ric * ric)


def smooth_loss(mf, g: Graph) -> ad.Value:
    """Sum over undirected edges of ``||g_i - g_j||^2``."""
    G = ad.as_value(_field(mf))
    diff = ad.gather_rows(G, g.edges[:, 0]) - ad.gather_rows(G, g.edges[:, 1])
    return ad.vsum(diff * diff)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.0
    beta: float = 0.0
    source: str = "manual"  # or "theory"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


def total_loss(task, metric_fields: Sequence, g: Graph, w: LossWeights) -> ad.Value:
    """``task + alpha * sum_l ricci(g^l) + beta * sum_l smooth(g^l)``."""
    total = ad.as_value(task)
    if w.alpha:
        for mf in metric_fields:
            total = total + ricci_loss(mf, g) * w.alpha
    if w.beta:
        for mf in metric_fields:
            total = total + smooth_loss(mf, g) * w.beta
    return total


@dataclass(frozen=True)
class HyperparamInputs:
    homophily: float
    num_layers: int
    hidden: int
    num_nodes: int
    num_edges: int
    c1: float | None = None
    c2: float | None = None

    def __post_init__(self):
        if not 0 < self.homophily <= 1:
            raise ValueError("homophily must lie in (0, 1]")
        for name in ("num_layers", "hidden", "num_nodes", "num_edges"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TheoryHyperparams:
    c1: float
    c2: float
    alpha: float
    beta: float

    def as_dict(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "alpha": self.alpha, "beta": self.beta}


def theory_hyperparams(h: HyperparamInputs) -> TheoryHyperparams:
    """Homophily-aware regulariser weights.

    ``c1 = (1 - H) + 0.1``, ``c2 = 0.1 (1 + H)`` unless overridden, then
    ``alpha = c1 / L * min(1, d / |E|)`` and ``beta = c2 * sqrt(d) / |V|``.
    """
    c1 = (1.0 - h.homophily) + 0.1 if h.c1 is None else float(h.c1)
    c2 = 0.1 * (1.0 + h.homophily) if h.c2 is None else float(h.c2)
    alpha = c1 / h.num_layers * min(1.0, h.hidden / h.num_edges)
    beta = c2 * math.sqrt(h.hidden) / h.num_nodes
    return TheoryHyperparams(c1, c2, alpha, beta)
