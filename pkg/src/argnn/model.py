"""Geometry-modulated message passing layers and the stacked node/edge model."""
from __future__ import annotations

import hashlib
import json
import math
import struct
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .graph import Graph
from .metric import DEFAULT_FLOOR, MetricEstimatorParams, MetricField, estimate_metrics


@dataclass(frozen=True)
class GeometryMode:
    """``adaptive`` learns g per node; ``fixed`` pins every entry to ``c``."""

    kind: str = "adaptive"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("adaptive", "fixed"):
            raise ValueError(f"unknown geometry mode {self.kind!r}")
        if self.kind == "fixed" and not self.c > 0:
            raise ValueError("fixed geometry needs c > 0")

    @property
    def adaptive(self) -> bool:
        return self.kind == "adaptive"

    @classmethod
    def parse(cls, text: str) -> "GeometryMode":
        """``"adaptive"`` or ``"fixed:<c>"``."""
        text = text.strip().lower()
        if text == "adaptive":
            return cls()
        if text.startswith("fixed"):
            _, _, c = text.partition(":")
            return cls("fixed", float(c) if c else 1.0)
        raise ValueError(f"cannot parse geometry mode {text!r}")

    def __str__(self) -> str:
        return "adaptive" if self.adaptive else f"fixed:{self.c:g}"


ADAPTIVE = GeometryMode()


@dataclass(frozen=True)
class ModelConfig:
    num_features: int
    num_classes: int
    hidden: int = 128
    num_layers: int = 3
    mode: GeometryMode = ADAPTIVE
    eps: float = DEFAULT_FLOOR
    baseline: float = 0.0
    estimator_hidden: int | None = None
    task: str = "node"
    decoder: str = "dot"
    metric_jitter: bool = True

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.num_features] + [self.hidden] * self.num_layers
        return list(zip(dims[:-1], dims[1:]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = str(self.mode)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        d = dict(d)
        d["mode"] = GeometryMode.parse(d["mode"]) if isinstance(d.get("mode"), str) else d.get("mode", ADAPTIVE)
        return cls(**d)


@dataclass
class ModelParams:
    """Named float64 arrays in a fixed order."""

    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def flatten(self) -> np.ndarray:
        if not self.arrays:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self.arrays.values()])

    def unflatten(self, flat) -> dict:
        """Split a flat vector (array or ``Value``) back into named pieces."""
        out, offset = {}, 0
        for name, arr in self.arrays.items():
            n = arr.size
            if isinstance(flat, ad.Value):
                out[name] = ad.reshape(flat[offset:offset + n], arr.shape)
            else:
                out[name] = np.asarray(flat[offset:offset + n]).reshape(arr.shape)
            offset += n
        return out

    def leaves(self) -> dict[str, ad.Value]:
        return {k: ad.Value(v, requires_grad=True) for k, v in self.arrays.items()}


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    arrays: dict[str, np.ndarray] = {}
    eh = cfg.estimator_hidden or cfg.hidden
    for l, (d_in, d_out) in enumerate(cfg.layer_dims()):
        arrays[f"layers.{l}.W_s"] = _glorot(rng, d_in, d_out)
        arrays[f"layers.{l}.W_m"] = _glorot(rng, d_in, d_out)
        est = MetricEstimatorParams.init(d_in, eh, rng, jitter=cfg.metric_jitter)
        for part in ("W1", "b1", "W2", "b2"):
            arrays[f"layers.{l}.metric.{part}"] = getattr(est, part)
    if cfg.task == "node":
        arrays["head.W"] = _glorot(rng, cfg.hidden, cfg.num_classes)
        arrays["head.b"] = np.zeros(cfg.num_classes)
    return ModelParams(arrays)


# forward ----------------------------------------------------------------------

_BROKEN: set[str] = set()


@contextmanager
def broken_gradient(name: str):
    """Test hook: corrupt the backward pass of one named quantity (``tau``, ``alpha``)."""
    _BROKEN.add(name)
    try:
        yield
    finally:
        _BROKEN.discard(name)


@dataclass
class EdgeGeometry:
    direction: np.ndarray  # (2m, d) unit vectors, receiver-major order of Graph.directed
    tau: np.ndarray  # (2m,)
    alpha: np.ndarray  # (2m,)


@dataclass
class ForwardArtifacts:
    states: list  # H^(0..L) as Values
    metrics: list  # per-layer metric Values
    output: ad.Value  # logits (node task) or final states (edge task)
    edge_geometry: list

    def metric_fields(self, floor: float = DEFAULT_FLOOR) -> list[MetricField]:
        return [MetricField(m.data, floor) for m in self.metrics]


def layer_forward(H_in, graph: Graph, lp: Mapping, mode: GeometryMode = ADAPTIVE,
                  eps: float = DEFAULT_FLOOR, baseline: float = 0.0,
                  dropout_rate: float = 0.0, training: bool = False,
                  rng: np.random.Generator | None = None):
    """One layer: metric estimation, modulated messages, update.

    ``lp`` maps ``W_s``, ``W_m`` and ``metric`` (a mapping or
    :class:`MetricEstimatorParams`) to arrays or tracked values.
    Returns ``(H_out, metric Value, EdgeGeometry)``.
    """
    H = ad.as_value(H_in)
    n, d_in = H.shape
    if mode.adaptive:
        G = estimate_metrics(H, graph, lp["metric"], eps)
    else:
        G = ad.Value(np.full((n, d_in), float(mode.c)))

    dst, src = graph.directed
    H_i, H_j = ad.gather_rows(H, dst), ad.gather_rows(H, src)

    u = H_j - H_i
    norm = ad.reshape(ad.sqrt(ad.vsum(u * u, axis=1)), (-1, 1))
    direction = u / (norm + eps)

    switch = ad.tanh(-ad.log(G))  # per node, gathered by receiver
    tau = ad.reshape(ad.vsum(direction * direction * ad.gather_rows(switch, dst), axis=1), (-1, 1))
    if baseline:
        tau = tau * (1.0 - baseline) + baseline
    if "tau" in _BROKEN:
        tau = ad.scale_grad(tau, 1.5)

    num = ad.reshape(ad.vsum(ad.gather_rows(G, dst) * H_i * H_j, axis=1), (-1, 1))
    own_norm = ad.reshape(ad.sqrt(ad.vsum(G * H * H, axis=1)), (-1, 1))
    alpha = num / (ad.gather_rows(own_norm, dst) * ad.gather_rows(own_norm, src) + eps)
    if "alpha" in _BROKEN:
        alpha = ad.scale_grad(alpha, 1.5)

    coef = tau * ad.sigmoid(alpha)
    messages = coef * ad.gather_rows(ad.matmul(H, lp["W_m"]), src)
    pre = ad.matmul(H, lp["W_s"]) + ad.scatter_add(messages, dst, n)
    H_out = ad.relu(pre)
    if training and dropout_rate > 0:
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        H_out = ad.dropout(H_out, dropout_rate, rng)
    geom = EdgeGeometry(direction.data, tau.data[:, 0], alpha.data[:, 0])
    return H_out, G, geom


def _layer_params(params: Mapping, l: int) -> dict:
    p = f"layers.{l}."
    return {
        "W_s": params[p + "W_s"],
        "W_m": params[p + "W_m"],
        "metric": {k: params[p + "metric." + k] for k in ("W1", "b1", "W2", "b2")},
    }


def model_forward(X, graph: Graph, params, cfg: ModelConfig, dropout_rate: float = 0.0,
                  training: bool = False, rng: np.random.Generator | None = None) -> ForwardArtifacts:
    """Stack ``cfg.num_layers`` layers over raw features, then apply the task head."""
    if isinstance(params, ModelParams):
        params = params.arrays
    H = ad.as_value(X)
    if H.shape != (graph.num_nodes, cfg.num_features):
        raise ad.ShapeError(f"features {H.shape} do not match ({graph.num_nodes}, {cfg.num_features})")
    states, metrics, geoms = [H], [], []
    for l in range(cfg.num_layers):
        H, G, geom = layer_forward(H, graph, _layer_params(params, l), cfg.mode, cfg.eps,
                                   cfg.baseline, dropout_rate, training, rng)
        states.append(H)
        metrics.append(G)
        geoms.append(geom)
    if cfg.task == "node":
        output = ad.matmul(H, params["head.W"]) + params["head.b"]
    else:
        output = H
    return ForwardArtifacts(states, metrics, output, geoms)


def edge_scores(art: ForwardArtifacts, pairs, decoder: str = "dot") -> ad.Value:
    """Link probability ``sigmoid(<h_i, h_j>)``; ``decoder="metric"`` weights the
    product by the mean of the two endpoints' last-layer metrics."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    H = art.states[-1]
    hi, hj = ad.gather_rows(H, pairs[:, 0]), ad.gather_rows(H, pairs[:, 1])
    prod = hi * hj
    if decoder == "metric":
        G = art.metrics[-1]
        if G.shape != H.shape:
            raise ad.ShapeError("metric decoder needs metric and state widths to agree")
        prod = prod * ((ad.gather_rows(G, pairs[:, 0]) + ad.gather_rows(G, pairs[:, 1])) * 0.5)
    elif decoder != "dot":
        raise ValueError(f"unknown decoder {decoder!r}")
    return ad.sigmoid(ad.vsum(prod, axis=1))


# checkpoints --------------------------------------------------------------------

_MAGIC = b"ARGNNCK1"


def config_hash(cfg: Mapping) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, params: ModelParams, meta: Mapping) -> Path:
    """Header (magic, u64 length, JSON) followed by little-endian float64 blocks."""
    manifest, offset = [], 0
    for name, arr in params.arrays.items():
        manifest.append({"name": name, "offset": offset, "shape": list(arr.shape)})
        offset += arr.size * 8
    header = json.dumps({"meta": dict(meta), "manifest": manifest}, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for arr in params.arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen])
    body = raw[16 + hlen:]
    arrays = {}
    for entry in header["manifest"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        arr = np.frombuffer(body[start:start + count * 8], dtype="<f8").astype(np.float64)
        arrays[entry["name"]] = arr.reshape(entry["shape"])
    return ModelParams(arrays), header["meta"]
