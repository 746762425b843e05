"""Full-graph training: Adam, metric-floor checks, early stopping, evaluation."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .geometry import curvature_field, nrmd
from .graph import Graph, homophily_ratio
from .losses import (HyperparamInputs, LossWeights, bce_edge, cross_entropy_node,
                     theory_hyperparams, total_loss)
from .metric import MetricField
from .metrics import evaluate
from .model import (GeometryMode, ModelConfig, ModelParams, edge_scores, init_params,
                    model_forward)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    task: str = "node"
    mode: str = "adaptive"
    num_layers: int = 3
    hidden: int = 128
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    dropout: float = 0.3
    epochs_max: int = 200
    patience: int = 100
    loss_weights: str = "theory"
    alpha: float = 0.0
    beta: float = 0.0
    c1: float | None = None
    c2: float | None = None
    seed: int = 0
    eps: float = 1e-6
    baseline: float = 0.0
    regularize_all_layers: bool = True
    estimator_hidden: int | None = None
    decoder: str = "dot"
    metric_jitter: bool = True

    def __post_init__(self):
        GeometryMode.parse(self.mode)
        if self.task not in ("node", "edge"):
            raise ValueError(f"task must be 'node' or 'edge', got {self.task!r}")
        if self.loss_weights not in ("theory", "manual"):
            raise ValueError("loss_weights must be 'theory' or 'manual'")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.patience > self.epochs_max:
            raise ValueError("patience cannot exceed epochs_max")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 <= self.baseline < 1:
            raise ValueError("baseline must lie in [0, 1)")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def model_config(self, g: Graph) -> ModelConfig:
        return ModelConfig(
            num_features=g.num_features, num_classes=g.num_classes, hidden=self.hidden,
            num_layers=self.num_layers, mode=GeometryMode.parse(self.mode), eps=self.eps,
            baseline=self.baseline, estimator_hidden=self.estimator_hidden, task=self.task,
            decoder=self.decoder, metric_jitter=self.metric_jitter)


# optimiser --------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              weight_decay: float = 0.0, t: int | None = None, no_decay=()) -> dict:
    """Bias-corrected Adam with decoupled weight decay applied before the Adam delta.

    Returns the new parameter dict; ``state`` is updated in place.
    """
    t = state.t + 1 if t is None else t
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    state.t = t
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ad.ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new = p * (1 - lr * weight_decay) if weight_decay and name not in no_decay else p
        out[name] = new - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def enforce_metric_floor(fields, floor: float) -> float:
    """Assert every emitted metric entry is at least ``floor``; return the minimum seen."""
    lo = np.inf
    for l, f in enumerate(fields):
        vals = f.data if isinstance(f, ad.Value) else np.asarray(getattr(f, "values", f))
        MetricField(vals, floor).check_floor(f"layer {l}")
        lo = min(lo, float(vals.min()))
    return lo


def sample_negative_edges(g: Graph, positives, count: int, rng: np.random.Generator,
                          exclude=None) -> np.ndarray:
    """Uniformly sample ``count`` distinct non-self pairs that are not in ``positives``
    (nor in ``exclude``)."""
    n = g.num_nodes
    banned = {tuple(sorted(map(int, e))) for e in np.asarray(positives).reshape(-1, 2)}
    if exclude is not None:
        banned |= {tuple(sorted(map(int, e))) for e in np.asarray(exclude).reshape(-1, 2)}
    available = n * (n - 1) // 2 - len(banned)
    if count > available:
        raise ValueError(f"graph too dense: {count} negatives requested, {available} available")
    if count <= 0:
        return np.zeros((0, 2), dtype=np.int64)
    if count > available // 2:
        pool = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in banned]
        pick = rng.choice(len(pool), size=count, replace=False)
        return np.asarray([pool[k] for k in np.sort(pick)], dtype=np.int64)
    chosen: list[tuple[int, int]] = []
    seen = set(banned)
    while len(chosen) < count:
        draw = rng.integers(0, n, size=(2 * (count - len(chosen)) + 8, 2))
        for a, b in draw:
            if a == b:
                continue
            e = (int(min(a, b)), int(max(a, b)))
            if e in seen:
                continue
            seen.add(e)
            chosen.append(e)
            if len(chosen) == count:
                break
    return np.asarray(chosen, dtype=np.int64)


# training loop ----------------------------------------------------------------

@dataclass
class RunReport:
    config: dict
    alpha: float
    beta: float
    homophily: float | None
    train_loss: list = field(default_factory=list)
    train_task_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    epoch_time: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    epochs_run: int = 0
    final_train_loss: float | None = None
    min_metric_entry: float | None = None
    train_metrics: dict = field(default_factory=dict)
    val_metrics: dict = field(default_factory=dict)
    test_metrics: dict = field(default_factory=dict)
    kappa_mean: list = field(default_factory=list)
    nrmd: list = field(default_factory=list)
    # not serialised
    params: ModelParams | None = field(default=None, repr=False)
    final_params: ModelParams | None = field(default=None, repr=False)
    metric_fields: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        skip = {"params", "final_params", "metric_fields"}
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in skip}


def resolve_loss_weights(cfg: TrainConfig, g: Graph) -> tuple[LossWeights, float | None]:
    if cfg.loss_weights == "manual":
        return LossWeights(cfg.alpha, cfg.beta, "manual"), None
    H = homophily_ratio(g)
    hp = theory_hyperparams(HyperparamInputs(H, cfg.num_layers, cfg.hidden, g.num_nodes,
                                             g.num_edges, cfg.c1, cfg.c2))
    return LossWeights(hp.alpha, hp.beta, "theory"), H


class _Task:
    """Binds the loss and evaluation of one task to a graph."""

    def __init__(self, cfg: TrainConfig, g: Graph, rng: np.random.Generator):
        self.cfg, self.full = cfg, g
        if cfg.task == "node":
            for k in ("train", "val", "test"):
                if k not in g.splits or len(g.splits[k]) == 0:
                    raise ValueError(f"node task needs a non-empty {k!r} split")
            self.graph = g
            return
        for k in ("train_pos", "val_pos", "test_pos"):
            if k not in g.splits:
                raise ValueError(f"edge task needs a {k!r} split")
        # message passing only sees training edges
        self.graph = g.with_edges(g.splits["train_pos"])
        taken = np.concatenate([g.edges] + [g.splits[k] for k in ("train_pos", "val_pos", "test_pos")])
        self.positives = taken
        # evaluation negatives are drawn once and kept disjoint across splits
        self.fixed_neg = {}
        for k in ("val_pos", "test_pos", "train_pos"):
            neg = sample_negative_edges(g, taken, len(g.splits[k]), rng)
            self.fixed_neg[k] = neg
            taken = np.concatenate([taken, neg])

    def _pairs(self, split: str, rng=None):
        key = split + "_pos"
        pos = self.full.splits[key]
        if rng is not None:  # fresh training negatives every epoch
            neg = sample_negative_edges(self.full, self.positives, len(pos), rng)
        else:
            neg = self.fixed_neg[key]
        return np.concatenate([pos, neg]), np.r_[np.ones(len(pos)), np.zeros(len(neg))]

    def loss(self, art, split: str, rng=None) -> ad.Value:
        if self.cfg.task == "node":
            return cross_entropy_node(art.output, self.full.labels, self.full.splits[split])
        pairs, y = self._pairs(split, rng)
        return bce_edge(edge_scores(art, pairs, self.cfg.decoder), y)

    def metrics(self, art, split: str) -> dict:
        if self.cfg.task == "node":
            z = art.output.data
            p = np.exp(z - z.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            return evaluate(p, self.full.labels, self.full.splits[split])
        pairs, y = self._pairs(split)
        return evaluate(edge_scores(art, pairs, self.cfg.decoder).data, y.astype(np.int64))


def train(cfg: TrainConfig, g: Graph) -> RunReport:
    """Train from a seeded initialisation and evaluate the best-validation checkpoint."""
    init_rng, drop_rng, neg_rng = _seed_streams(cfg.seed)

    task = _Task(cfg, g, neg_rng)
    mp_graph = task.graph
    weights, H = resolve_loss_weights(cfg, g)
    mcfg = cfg.model_config(g)
    params = init_params(mcfg, init_rng)
    no_decay = {n for n in params.names() if n.endswith("metric.b2")}
    state = AdamState()
    report = RunReport(config=cfg.to_dict(), alpha=weights.alpha, beta=weights.beta, homophily=H)
    X = g.features

    best = params.copy()
    min_entry = np.inf
    since_best = 0
    for epoch in range(cfg.epochs_max):
        t0 = time.perf_counter()
        leaves = params.leaves()
        with ad.Tape() as tape:
            art = model_forward(X, mp_graph, leaves, mcfg, cfg.dropout, True, drop_rng)
            task_loss = task.loss(art, "train", neg_rng)
            fields = art.metrics if cfg.regularize_all_layers else art.metrics[-1:]
            loss = total_loss(task_loss, fields, mp_graph, weights)
        if not np.isfinite(loss.data):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        min_entry = min(min_entry, enforce_metric_floor(art.metrics, cfg.eps))
        tape.backward(loss)
        grads = {k: v.grad for k, v in leaves.items() if v.grad is not None}
        params = ModelParams(adam_step(params.arrays, grads, state, cfg.lr, cfg.beta1, cfg.beta2,
                                       cfg.adam_eps, cfg.weight_decay, epoch + 1, no_decay))

        art_eval = model_forward(X, mp_graph, params, mcfg)
        min_entry = min(min_entry, enforce_metric_floor(art_eval.metrics, cfg.eps))
        val = float(task.loss(art_eval, "val").data)
        report.epoch_time.append(time.perf_counter() - t0)
        report.train_loss.append(float(loss.data))
        report.train_task_loss.append(float(task_loss.data))
        report.val_loss.append(val)
        report.epochs_run = epoch + 1
        if val < report.best_val_loss:
            report.best_val_loss, report.best_epoch = val, epoch
            best = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                log.info("early stop at epoch %d (best %d)", epoch, report.best_epoch)
                break

    report.final_params = params
    final_art = model_forward(X, mp_graph, params, mcfg)
    report.final_train_loss = float(task.loss(final_art, "train").data)
    report.min_metric_entry = float(min_entry) if np.isfinite(min_entry) else None

    report.params = best
    art = model_forward(X, mp_graph, best, mcfg)
    for split, dest in (("train", report.train_metrics), ("val", report.val_metrics),
                        ("test", report.test_metrics)):
        dest.update(task.metrics(art, split))
    report.metric_fields = art.metric_fields(cfg.eps)
    for mf in report.metric_fields:
        report.kappa_mean.append(curvature_field(mf, mp_graph).kappa_mean)
        report.nrmd.append(nrmd(mf, mp_graph) if mp_graph.num_edges else None)
    return report


def _seed_streams(seed: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def message_passing_graph(cfg: TrainConfig, g: Graph) -> Graph:
    """The graph the model propagates over: all edges, or training positives for link prediction."""
    if cfg.task == "edge":
        if "train_pos" not in g.splits:
            raise ValueError("edge task needs a 'train_pos' split")
        return g.with_edges(g.splits["train_pos"])
    return g


def evaluate_params(cfg: TrainConfig, g: Graph, params: ModelParams) -> dict:
    """Metrics of ``params`` on every split, with the same evaluation negatives as :func:`train`."""
    task = _Task(cfg, g, _seed_streams(cfg.seed)[2])
    art = model_forward(g.features, task.graph, params, cfg.model_config(g))
    return {split: task.metrics(art, split) for split in ("train", "val", "test")}
